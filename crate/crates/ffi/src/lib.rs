//! C ABI over `atlas-core`.
//!
//! Every function returns an [`AtlasStatus`]; on failure a message is kept per
//! thread and can be read with [`atlas_last_error`]. Objects created by the
//! library are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use atlas_core::atlas::raster::RasterLayer;
use atlas_core::atlas::stats::spearman;
use atlas_core::conformal::{calibrate, error_rate, predict_set};
use atlas_core::domain::{Assemblage, ProbabilityVector, SpeciesId, SpeciesStatuses, StatusCategory};
use atlas_core::indicators::{evaluate, shannon, IndicatorValue};
use atlas_core::model::{ProbabilityEstimator, SoftmaxModel};
use atlas_core::AtlasError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtlasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    Empty = 6,
    ModelFormat = 7,
    Undefined = 8,
    Panic = 9,
}

impl From<&AtlasError> for AtlasStatus {
    fn from(e: &AtlasError) -> Self {
        match e {
            AtlasError::Io { .. } => AtlasStatus::Io,
            AtlasError::Parse { .. } | AtlasError::CoordinateRange { .. } => AtlasStatus::Parse,
            AtlasError::DimensionMismatch { .. } | AtlasError::GridMismatch(_) => AtlasStatus::DimensionMismatch,
            AtlasError::Empty(_) => AtlasStatus::Empty,
            AtlasError::ModelFormat(_) => AtlasStatus::ModelFormat,
            AtlasError::UndefinedCorrelation(_) => AtlasStatus::Undefined,
            _ => AtlasStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: AtlasStatus, msg: impl Into<String>) -> AtlasStatus {
    set_error(msg);
    status
}

fn from_error(e: AtlasError) -> AtlasStatus {
    let status = AtlasStatus::from(&e);
    fail(status, e.to_string())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), AtlasStatus>) -> AtlasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AtlasStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(AtlasStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, AtlasStatus>;
}

impl<T> OrStatus<T> for Result<T, AtlasError> {
    fn or_status(self) -> Result<T, AtlasStatus> {
        self.map_err(from_error)
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], AtlasStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(AtlasStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], AtlasStatus> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(AtlasStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, AtlasStatus> {
    p.as_mut()
        .ok_or_else(|| fail(AtlasStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, AtlasStatus> {
    if p.is_null() {
        return Err(fail(AtlasStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(AtlasStatus::InvalidArgument, "path is not UTF-8"))
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn atlas_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn atlas_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Opaque trained classifier.
pub struct AtlasModel {
    inner: SoftmaxModel,
}

/// Loads a model file written by `atlas train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_model_load(path: *const c_char, out_model: *mut *mut AtlasModel) -> AtlasStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let model = SoftmaxModel::load(path_arg(path)?).or_status()?;
        *slot = Box::into_raw(Box::new(AtlasModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`atlas_model_load`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn atlas_model_free(model: *mut AtlasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_model_dims(
    model: *const AtlasModel,
    n_features: *mut usize,
    n_classes: *mut usize,
) -> AtlasStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(AtlasStatus::NullPointer, "model is NULL"))?;
        *out(n_features, "n_features")? = m.inner.n_features();
        *out(n_classes, "n_classes")? = m.inner.n_classes();
        Ok(())
    })
}

/// Writes the `n_classes` class probabilities for one feature vector.
///
/// # Safety
/// `x` must hold `n_features` values and `probs` room for `n_classes`.
#[no_mangle]
pub unsafe extern "C" fn atlas_model_predict_proba(
    model: *const AtlasModel,
    x: *const f64,
    n_features: usize,
    probs: *mut f64,
    n_classes: usize,
) -> AtlasStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(AtlasStatus::NullPointer, "model is NULL"))?;
        if n_classes != m.inner.n_classes() {
            return Err(from_error(AtlasError::DimensionMismatch {
                expected: m.inner.n_classes(),
                actual: n_classes,
                context: "output length",
            }));
        }
        let x = slice(x, n_features, "x")?;
        let p = m.inner.predict_proba(x).or_status()?;
        slice_mut(probs, n_classes, "probs")?.copy_from_slice(p.values());
        Ok(())
    })
}

/// Fraction of `true_probs` strictly below `lambda`.
///
/// # Safety
/// `true_probs` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn atlas_error_rate(true_probs: *const f64, n: usize, lambda: f64, rate: *mut f64) -> AtlasStatus {
    guard(|| {
        let p = slice(true_probs, n, "true_probs")?;
        *out(rate, "rate")? = error_rate(p, lambda).or_status()?;
        Ok(())
    })
}

/// Largest threshold whose empirical miss rate stays within `epsilon`.
///
/// # Safety
/// `true_probs` must hold `n` values; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_calibrate(
    true_probs: *const f64,
    n: usize,
    epsilon: f64,
    lambda: *mut f64,
    empirical_error: *mut f64,
) -> AtlasStatus {
    guard(|| {
        let p = slice(true_probs, n, "true_probs")?;
        let r = calibrate(p, epsilon).or_status()?;
        *out(lambda, "lambda")? = r.lambda;
        *out(empirical_error, "empirical_error")? = r.empirical_error;
        Ok(())
    })
}

/// Thresholds a probability vector. `weights[k]` receives `eta[k]` for kept
/// species and 0 otherwise; `size` the number kept.
///
/// # Safety
/// `eta` and `weights` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn atlas_predict_set(
    eta: *const f64,
    n: usize,
    lambda: f64,
    weights: *mut f64,
    size: *mut usize,
) -> AtlasStatus {
    guard(|| {
        let eta = ProbabilityVector::new(slice(eta, n, "eta")?.to_vec()).or_status()?;
        let set = predict_set(&eta, lambda);
        let w = slice_mut(weights, n, "weights")?;
        w.fill(0.0);
        for (id, v) in set.iter() {
            w[id.index()] = v;
        }
        *out(size, "size")? = set.len();
        Ok(())
    })
}

/// Indicator values of one assemblage. Missing values are NaN (reals) or -1
/// (`most_critical`).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtlasIndicators {
    /// Rank 0..4 of the most critical status (LC..CR).
    pub most_critical: i32,
    /// Status-weighted proportions indexed by rank.
    pub proportions: [f64; 5],
    pub threat: f64,
    pub shannon: f64,
    /// Members without a status.
    pub missing_status: usize,
}

fn assemblage_from(weights: &[f64]) -> Result<Assemblage, AtlasStatus> {
    Assemblage::from_weighted(weights.iter().enumerate().map(|(i, &w)| (SpeciesId(i as u32), w))).or_status()
}

/// Indicators over an assemblage given as one weight per species (0 = absent)
/// and one status rank per species (-1 = no status). Weights are used as given;
/// pass a renormalized assemblage.
///
/// # Safety
/// `weights` and `status_ranks` must hold `n` values; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_indicators(
    weights: *const f64,
    status_ranks: *const i32,
    n: usize,
    result: *mut AtlasIndicators,
) -> AtlasStatus {
    guard(|| {
        let a = assemblage_from(slice(weights, n, "weights")?)?;
        let statuses = slice(status_ranks, n, "status_ranks")?
            .iter()
            .map(|&r| match r {
                -1 => Ok(None),
                0..=4 => Ok(StatusCategory::from_rank(r as u8)),
                _ => Err(fail(AtlasStatus::InvalidArgument, format!("status rank {r} outside -1..4"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let set = evaluate(&a, &SpeciesStatuses::from_categories(statuses));
        let real = |v: IndicatorValue| v.as_f64().unwrap_or(f64::NAN);
        *out(result, "result")? = AtlasIndicators {
            most_critical: set.most_critical.as_f64().map_or(-1, |v| v as i32),
            proportions: set.proportions.unwrap_or([f64::NAN; 5]),
            threat: set.threat.unwrap_or(f64::NAN),
            shannon: real(set.shannon),
            missing_status: set.missing_status,
        };
        Ok(())
    })
}

/// Shannon entropy (natural log) of the weights; NaN for an empty assemblage.
///
/// # Safety
/// `weights` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn atlas_shannon(weights: *const f64, n: usize, h: *mut f64) -> AtlasStatus {
    guard(|| {
        let a = assemblage_from(slice(weights, n, "weights")?)?;
        *out(h, "h")? = shannon(&a).as_f64().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Spearman rank correlation with a two-sided p-value.
///
/// # Safety
/// `x` and `y` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn atlas_spearman(
    x: *const f64,
    y: *const f64,
    n: usize,
    rho: *mut f64,
    p_value: *mut f64,
) -> AtlasStatus {
    guard(|| {
        let s = spearman(slice(x, n, "x")?, slice(y, n, "y")?).or_status()?;
        *out(rho, "rho")? = s.rho;
        *out(p_value, "p_value")? = s.p_value;
        Ok(())
    })
}

/// Opaque ESRI ASCII raster.
pub struct AtlasRaster {
    inner: RasterLayer,
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_raster` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_raster_read(path: *const c_char, out_raster: *mut *mut AtlasRaster) -> AtlasStatus {
    guard(|| {
        let slot = out(out_raster, "out_raster")?;
        *slot = ptr::null_mut();
        let layer = RasterLayer::read_ascii(path_arg(path)?).or_status()?;
        *slot = Box::into_raw(Box::new(AtlasRaster { inner: layer }));
        Ok(())
    })
}

/// Rows, columns and nodata value.
///
/// # Safety
/// `raster` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_raster_dims(
    raster: *const AtlasRaster,
    nrows: *mut usize,
    ncols: *mut usize,
    nodata: *mut f64,
) -> AtlasStatus {
    guard(|| {
        let r = raster
            .as_ref()
            .ok_or_else(|| fail(AtlasStatus::NullPointer, "raster is NULL"))?;
        *out(nrows, "nrows")? = r.inner.nrows();
        *out(ncols, "ncols")? = r.inner.ncols();
        *out(nodata, "nodata")? = r.inner.nodata;
        Ok(())
    })
}

/// Row-major cell values, north row first; valid while the handle lives.
///
/// # Safety
/// `raster` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn atlas_raster_data(raster: *const AtlasRaster) -> *const f64 {
    raster.as_ref().map_or(ptr::null(), |r| r.inner.values.as_ptr())
}

/// # Safety
/// `raster` must come from [`atlas_raster_read`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn atlas_raster_free(raster: *mut AtlasRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}
