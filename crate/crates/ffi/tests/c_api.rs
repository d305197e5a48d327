use std::ffi::{CStr, CString};
use std::ptr;

use atlas_core::atlas::grid::GridSpec;
use atlas_core::atlas::raster::{RasterLayer, ValueKind};
use atlas_core::model::SoftmaxModel;
use atlas_ffi::*;

fn last_error() -> String {
    let p = atlas_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn calibrate_and_error_rate() {
    let probs = [0.9, 0.1, 0.5, 0.7, 0.3, 0.8, 0.6, 0.2, 0.4, 0.05];
    let (mut lambda, mut err) = (0.0, 0.0);
    let s = unsafe { atlas_calibrate(probs.as_ptr(), probs.len(), 0.2, &mut lambda, &mut err) };
    assert_eq!(s, AtlasStatus::Ok);
    // two misses allowed out of ten: the third smallest value
    assert_eq!(lambda, 0.2);
    assert_eq!(err, 0.2);
    let mut rate = 0.0;
    assert_eq!(unsafe { atlas_error_rate(probs.as_ptr(), probs.len(), lambda, &mut rate) }, AtlasStatus::Ok);
    assert_eq!(rate, err);
}

#[test]
fn empty_calibration_is_reported() {
    let mut lambda = 0.0;
    let mut err = 0.0;
    let s = unsafe { atlas_calibrate(ptr::null(), 0, 0.1, &mut lambda, &mut err) };
    assert_eq!(s, AtlasStatus::Empty);
    assert!(last_error().contains("empty"));
    atlas_clear_error();
    assert!(atlas_last_error().is_null());
}

#[test]
fn null_pointers_rejected() {
    let mut rate = 0.0;
    let s = unsafe { atlas_error_rate(ptr::null(), 3, 0.5, &mut rate) };
    assert_eq!(s, AtlasStatus::NullPointer);
    let probs = [0.5];
    let s = unsafe { atlas_error_rate(probs.as_ptr(), 1, 0.5, ptr::null_mut()) };
    assert_eq!(s, AtlasStatus::NullPointer);
}

#[test]
fn predict_set_keeps_entries_at_threshold() {
    let eta = [0.5, 0.3, 0.2];
    let mut w = [9.0; 3];
    let mut size = 0;
    let s = unsafe { atlas_predict_set(eta.as_ptr(), 3, 0.3, w.as_mut_ptr(), &mut size) };
    assert_eq!(s, AtlasStatus::Ok);
    assert_eq!(size, 2);
    assert_eq!(w, [0.5, 0.3, 0.0]);
}

#[test]
fn indicators_match_hand_values() {
    // weights 0.5 (CR), 0.3 (LC), 0.2 (no status)
    let weights = [0.5, 0.3, 0.2];
    let ranks = [4, 0, -1];
    let mut r = AtlasIndicators {
        most_critical: 0,
        proportions: [0.0; 5],
        threat: 0.0,
        shannon: 0.0,
        missing_status: 0,
    };
    let s = unsafe { atlas_indicators(weights.as_ptr(), ranks.as_ptr(), 3, &mut r) };
    assert_eq!(s, AtlasStatus::Ok);
    assert_eq!(r.most_critical, 4);
    assert_eq!(r.missing_status, 1);
    assert!((r.proportions[4] - 0.625).abs() < 1e-12);
    assert!((r.proportions[0] - 0.375).abs() < 1e-12);
    assert_eq!(r.threat, r.proportions[2] + r.proportions[3] + r.proportions[4]);
    let h = -(0.5f64 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln());
    assert!((r.shannon - h).abs() < 1e-12);

    let bad = [7, 0, 0];
    assert_eq!(
        unsafe { atlas_indicators(weights.as_ptr(), bad.as_ptr(), 3, &mut r) },
        AtlasStatus::InvalidArgument
    );
}

#[test]
fn shannon_of_uniform() {
    let w = [0.25; 4];
    let mut h = 0.0;
    assert_eq!(unsafe { atlas_shannon(w.as_ptr(), 4, &mut h) }, AtlasStatus::Ok);
    assert!((h - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn spearman_errors_and_values() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [2.0, 1.0, 4.0, 3.0];
    let (mut rho, mut p) = (0.0, 0.0);
    assert_eq!(unsafe { atlas_spearman(x.as_ptr(), y.as_ptr(), 4, &mut rho, &mut p) }, AtlasStatus::Ok);
    assert!((rho - 0.6).abs() < 1e-12);
    let c = [1.0; 4];
    assert_eq!(
        unsafe { atlas_spearman(x.as_ptr(), c.as_ptr(), 4, &mut rho, &mut p) },
        AtlasStatus::Undefined
    );
}

#[test]
fn model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let mut m = SoftmaxModel::zeros(2, 3);
    m.weights_mut()[0] = 1.0;
    m.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { atlas_model_load(c_path.as_ptr(), &mut handle) }, AtlasStatus::Ok);
    let (mut d, mut c) = (0, 0);
    assert_eq!(unsafe { atlas_model_dims(handle, &mut d, &mut c) }, AtlasStatus::Ok);
    assert_eq!((d, c), (2, 3));

    let x = [0.5, -1.0];
    let mut probs = [0.0; 3];
    assert_eq!(
        unsafe { atlas_model_predict_proba(handle, x.as_ptr(), 2, probs.as_mut_ptr(), 3) },
        AtlasStatus::Ok
    );
    let expected = atlas_core::model::ProbabilityEstimator::predict_proba(&m, &x).unwrap();
    assert_eq!(&probs[..], expected.values());

    assert_eq!(
        unsafe { atlas_model_predict_proba(handle, x.as_ptr(), 1, probs.as_mut_ptr(), 3) },
        AtlasStatus::DimensionMismatch
    );
    unsafe { atlas_model_free(handle) };

    let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { atlas_model_load(missing.as_ptr(), &mut h2) }, AtlasStatus::Io);
    assert!(h2.is_null());
}

#[test]
fn raster_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.asc");
    let grid = GridSpec::new(0.0, 1.0, 0.0, 2.0, 1.0).unwrap();
    let layer = RasterLayer::from_values(grid, vec![1.0, 2.0, 3.0, -9999.0, 5.0, 6.0], -9999.0, ValueKind::Real).unwrap();
    layer.write_ascii(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { atlas_raster_read(c_path.as_ptr(), &mut r) }, AtlasStatus::Ok);
    let (mut rows, mut cols, mut nodata) = (0, 0, 0.0);
    assert_eq!(unsafe { atlas_raster_dims(r, &mut rows, &mut cols, &mut nodata) }, AtlasStatus::Ok);
    assert_eq!((rows, cols, nodata), (3, 2, -9999.0));
    let data = unsafe { std::slice::from_raw_parts(atlas_raster_data(r), rows * cols) };
    assert_eq!(data, &layer.values[..]);
    unsafe { atlas_raster_free(r) };
    unsafe { atlas_raster_free(ptr::null_mut()) };
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/atlas.h")).unwrap();
    for name in [
        "atlas_last_error",
        "atlas_model_load",
        "atlas_model_predict_proba",
        "atlas_calibrate",
        "atlas_predict_set",
        "atlas_indicators",
        "atlas_spearman",
        "atlas_raster_read",
        "ATLAS_STATUS_OK",
        "typedef struct AtlasModel AtlasModel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles a C (and C++) translation unit against the generated header.
#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let source = format!("{dir}/tests/c/smoke.c");
    let include = format!("-I{dir}/include");
    for (compiler, lang) in [("cc", "-xc"), ("c++", "-xc++")] {
        let Ok(out) = std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Wextra", "-Werror", lang, &include, &source])
            .output()
        else {
            eprintln!("{compiler} not available; skipped");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
