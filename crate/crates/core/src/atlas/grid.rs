use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

use super::raster::RasterLayer;

/// 30 arc-seconds in degrees.
pub const DEFAULT_STEP: f64 = 30.0 / 3600.0;

/// Regular lon/lat sampling with inclusive endpoints. Row 0 is the northern edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Drop the last column when it repeats the first meridian (global runs).
    #[serde(default)]
    pub drop_antimeridian: bool,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

impl GridSpec {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64, step: f64) -> Result<Self> {
        let g = GridSpec {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
            step,
            drop_antimeridian: false,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn global(step: f64) -> Self {
        GridSpec {
            lon_min: -180.0,
            lon_max: 180.0,
            lat_min: -90.0,
            lat_max: 90.0,
            step,
            drop_antimeridian: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lon_min, self.lon_max, self.lat_min, self.lat_max, self.step];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(AtlasError::NonFinite("grid spec"));
        }
        if !(self.lon_max > self.lon_min && self.lat_max > self.lat_min && self.step > 0.0) {
            return Err(AtlasError::InvalidArgument(format!(
                "grid needs lon_max > lon_min, lat_max > lat_min and step > 0: {self:?}"
            )));
        }
        Ok(())
    }

    fn axis_count(lo: f64, hi: f64, step: f64) -> usize {
        ((hi - lo) / step).round() as usize + 1
    }

    fn repeats_meridian(&self) -> bool {
        let last = self.lon_min + (Self::axis_count(self.lon_min, self.lon_max, self.step) - 1) as f64 * self.step;
        ((last - self.lon_min) - 360.0).abs() < self.step * 1e-6
    }

    pub fn ncols(&self) -> usize {
        let n = Self::axis_count(self.lon_min, self.lon_max, self.step);
        if self.drop_antimeridian && self.repeats_meridian() {
            n - 1
        } else {
            n
        }
    }

    pub fn nrows(&self) -> usize {
        Self::axis_count(self.lat_min, self.lat_max, self.step)
    }

    pub fn len(&self) -> usize {
        self.nrows() * self.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lon(&self, col: usize) -> f64 {
        self.lon_min + col as f64 * self.step
    }

    pub fn lat(&self, row: usize) -> f64 {
        self.lat_max - row as f64 * self.step
    }

    /// Nearest `(row, col)` to a coordinate, or `None` outside the grid.
    pub fn locate(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let col = ((lon - self.lon_min) / self.step).round();
        let row = ((self.lat_max - lat) / self.step).round();
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let (row, col) = (row as usize, col as usize);
        (row < self.nrows() && col < self.ncols()).then_some((row, col))
    }

    /// Same sampling within a small fraction of a step.
    pub fn same_as(&self, other: &GridSpec) -> bool {
        let tol = self.step.min(other.step) * 1e-6;
        (self.step - other.step).abs() < tol
            && (self.lon_min - other.lon_min).abs() < tol
            && (self.lat_max - other.lat_max).abs() < tol
            && self.nrows() == other.nrows()
            && self.ncols() == other.ncols()
    }

    pub fn overlaps(&self, other: &GridSpec) -> bool {
        self.lon_min <= other.lon_max
            && other.lon_min <= self.lon_max
            && self.lat_min <= other.lat_max
            && other.lat_min <= self.lat_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub lon: f64,
    pub lat: f64,
}

/// Whether the mask marks `(lon, lat)` as land: inside the mask grid, not nodata
/// and non-zero.
pub fn is_land(mask: &RasterLayer, lon: f64, lat: f64) -> bool {
    mask.sample(lon, lat).is_some_and(|v| v != 0.0)
}

/// Land points of `spec` in row-major order.
pub fn build_grid(spec: &GridSpec, land_mask: &RasterLayer) -> Result<Vec<GridPoint>> {
    spec.validate()?;
    let mut points = Vec::new();
    for row in 0..spec.nrows() {
        let lat = spec.lat(row);
        for col in 0..spec.ncols() {
            let lon = spec.lon(col);
            if is_land(land_mask, lon, lat) {
                points.push(GridPoint { row, col, lon, lat });
            }
        }
    }
    if points.is_empty() {
        log::warn!("no land cell in grid {spec:?}");
    } else {
        log::info!("{} land points out of {}", points.len(), spec.len());
    }
    Ok(points)
}
