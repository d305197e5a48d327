//! Covariate rasters sharing one grid, described by a JSON manifest.
//!
//! ```json
//! {
//!   "bands": [
//!     {"name": "bio1", "kind": "continuous", "file": "bio1.asc", "group": "WorldClim2"},
//!     {"name": "ecoregion", "kind": "categorical", "file": "eco.asc", "group": "Ecoregions"}
//!   ],
//!   "land_mask": "land.asc",
//!   "continent": "continent.asc",
//!   "continent_labels": {"2": "AF"}
//! }
//! ```
//!
//! File paths are relative to the manifest. Continent cells hold integer codes;
//! `continent_labels` maps them to the identifiers used in occurrence files, and
//! codes without a label are used as-is.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

use super::grid::GridSpec;
use super::raster::{RasterLayer, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub kind: BandKind,
    pub file: String,
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub bands: Vec<BandSpec>,
    pub land_mask: String,
    pub continent: String,
    #[serde(default)]
    pub continent_labels: BTreeMap<String, String>,
}

impl StackManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtlasError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AtlasError::parse(path, e.line() as u64, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| AtlasError::io(path, e))
    }
}

/// How point features are read from the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Half-width in cells of the square window averaged for continuous bands;
    /// 0 reads the nearest cell only.
    pub patch_radius: usize,
    /// Append longitude and latitude as the last two covariates.
    pub append_location: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            patch_radius: 0,
            append_location: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Band {
    pub spec: BandSpec,
    pub layer: RasterLayer,
}

#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub bands: Vec<Band>,
    pub land_mask: RasterLayer,
    pub continent: RasterLayer,
    pub continent_labels: BTreeMap<String, String>,
}

impl FeatureStack {
    /// Loads every raster named by the manifest at `path` and checks they share a grid.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest = StackManifest::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let bands = manifest
            .bands
            .iter()
            .map(|spec| {
                Ok(Band {
                    spec: spec.clone(),
                    layer: RasterLayer::read_ascii(base.join(&spec.file))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let land_mask = RasterLayer::read_ascii(base.join(&manifest.land_mask))?;
        let continent = RasterLayer::read_ascii(base.join(&manifest.continent))?;
        Self::new(bands, land_mask, continent, manifest.continent_labels)
    }

    pub fn new(
        bands: Vec<Band>,
        land_mask: RasterLayer,
        continent: RasterLayer,
        continent_labels: BTreeMap<String, String>,
    ) -> Result<Self> {
        let grid = land_mask.grid;
        for (name, layer) in bands
            .iter()
            .map(|b| (b.spec.name.as_str(), &b.layer))
            .chain(std::iter::once(("continent", &continent)))
        {
            if !layer.grid.same_as(&grid) {
                return Err(AtlasError::GridMismatch(format!(
                    "band `{name}` does not share the land-mask grid"
                )));
            }
        }
        Ok(FeatureStack {
            bands,
            land_mask,
            continent,
            continent_labels,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.land_mask.grid
    }

    pub fn n_features(&self, opts: &FeatureOptions) -> usize {
        self.bands.len() + if opts.append_location { 2 } else { 0 }
    }

    pub fn band_names(&self, opts: &FeatureOptions) -> Vec<String> {
        let mut names: Vec<String> = self.bands.iter().map(|b| b.spec.name.clone()).collect();
        if opts.append_location {
            names.push("lon".into());
            names.push("lat".into());
        }
        names
    }

    /// Covariates at a coordinate. Nodata cells and points outside the stack come
    /// back as NaN so callers can tally them.
    pub fn features_at(&self, lon: f64, lat: f64, opts: &FeatureOptions) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_features(opts));
        let cell = self.grid().locate(lon, lat);
        for band in &self.bands {
            let v = match cell {
                None => f64::NAN,
                Some((row, col)) => match (band.spec.kind, opts.patch_radius) {
                    (BandKind::Categorical, _) | (_, 0) => band.layer.value(row, col).unwrap_or(f64::NAN),
                    (BandKind::Continuous, r) => patch_mean(&band.layer, row, col, r),
                },
            };
            out.push(v);
        }
        if opts.append_location {
            out.push(lon);
            out.push(lat);
        }
        out
    }

    /// Continent identifier at a coordinate, if the continent band has one.
    pub fn continent_at(&self, lon: f64, lat: f64) -> Option<String> {
        let code = self.continent.sample(lon, lat)?;
        let key = format!("{}", code.round() as i64);
        Some(self.continent_labels.get(&key).cloned().unwrap_or(key))
    }
}

/// Mean of valid cells in the `(2r+1)²` window; the centre must be valid.
fn patch_mean(layer: &RasterLayer, row: usize, col: usize, radius: usize) -> f64 {
    if layer.value(row, col).is_none() {
        return f64::NAN;
    }
    let r0 = row.saturating_sub(radius);
    let c0 = col.saturating_sub(radius);
    let r1 = (row + radius).min(layer.nrows() - 1);
    let c1 = (col + radius).min(layer.ncols() - 1);
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in r0..=r1 {
        for c in c0..=c1 {
            if let Some(v) = layer.value(r, c) {
                sum += v;
                n += 1;
            }
        }
    }
    sum / n as f64
}

pub(crate) fn layer_from_fn(grid: GridSpec, kind: ValueKind, f: impl Fn(f64, f64) -> f64) -> RasterLayer {
    let mut values = Vec::with_capacity(grid.len());
    for r in 0..grid.nrows() {
        for c in 0..grid.ncols() {
            values.push(f(grid.lon(c), grid.lat(r)));
        }
    }
    RasterLayer {
        grid,
        values,
        nodata: super::raster::DEFAULT_NODATA,
        kind,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_stack() -> FeatureStack {
        let grid = GridSpec::new(0.0, 2.0, 0.0, 2.0, 1.0).unwrap();
        let temp = layer_from_fn(grid, ValueKind::Real, |lon, lat| lon * 10.0 + lat);
        let mut eco = layer_from_fn(grid, ValueKind::Real, |lon, _| if lon < 1.0 { 1.0 } else { 2.0 });
        eco.set(0, 0, eco.nodata);
        let land = layer_from_fn(grid, ValueKind::Real, |_, _| 1.0);
        let continent = layer_from_fn(grid, ValueKind::Real, |lon, _| if lon < 1.5 { 2.0 } else { 7.0 });
        let bands = vec![
            Band {
                spec: BandSpec {
                    name: "temp".into(),
                    kind: BandKind::Continuous,
                    file: String::new(),
                    group: None,
                },
                layer: temp,
            },
            Band {
                spec: BandSpec {
                    name: "eco".into(),
                    kind: BandKind::Categorical,
                    file: String::new(),
                    group: None,
                },
                layer: eco,
            },
        ];
        let labels = BTreeMap::from([("2".to_string(), "AF".to_string())]);
        FeatureStack::new(bands, land, continent, labels).unwrap()
    }

    #[test]
    fn point_features_and_location() {
        let s = small_stack();
        let opts = FeatureOptions::default();
        assert_eq!(s.n_features(&opts), 4);
        assert_eq!(s.features_at(1.0, 1.0, &opts), vec![11.0, 2.0, 1.0, 1.0]);
        let f = s.features_at(0.0, 2.0, &opts);
        assert!(f[1].is_nan());
        assert!(s.features_at(5.0, 5.0, &opts)[0].is_nan());
    }

    #[test]
    fn patch_mean_window() {
        let s = small_stack();
        let opts = FeatureOptions {
            patch_radius: 1,
            append_location: false,
        };
        // full 3x3 window around the centre: mean of lon*10+lat over {0,1,2}^2 = 10 + 1
        assert_eq!(s.features_at(1.0, 1.0, &opts)[0], 11.0);
        // corner window (0..=1, 0..=1 in row/col) at lon 0, lat 2: lon∈{0,1}, lat∈{2,1}
        assert_eq!(s.features_at(0.0, 2.0, &opts)[0], (2.0 + 1.0 + 12.0 + 11.0) / 4.0);
    }

    #[test]
    fn continent_labels() {
        let s = small_stack();
        assert_eq!(s.continent_at(0.0, 0.0).as_deref(), Some("AF"));
        assert_eq!(s.continent_at(2.0, 0.0).as_deref(), Some("7"));
        assert_eq!(s.continent_at(9.0, 0.0), None);
    }

    #[test]
    fn mismatched_band_rejected() {
        let s = small_stack();
        let other = GridSpec::new(0.0, 3.0, 0.0, 2.0, 1.0).unwrap();
        let mut bands = s.bands.clone();
        bands[0].layer = layer_from_fn(other, ValueKind::Real, |_, _| 0.0);
        assert!(matches!(
            FeatureStack::new(bands, s.land_mask.clone(), s.continent.clone(), BTreeMap::new()),
            Err(AtlasError::GridMismatch(_))
        ));
    }
}
