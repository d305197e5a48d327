//! Run configuration: one TOML document plus dotted `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atlas::grid::GridSpec;
use crate::atlas::inference::MapOptions;
use crate::atlas::stack::FeatureOptions;
use crate::atlas::zonal::DEFAULT_MIN_AREA_KM2;
use crate::conformal::DEFAULT_EPSILON;
use crate::domain::StatusPrecedence;
use crate::error::{AtlasError, Result};
use crate::indicators::IndicatorKind;
use crate::model::TrainConfig;
use crate::split::{SplitRatios, DEFAULT_BLOCK_SIZE};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub occurrences: Option<PathBuf>,
    pub statuses: Option<PathBuf>,
    /// Feature-stack manifest.
    pub stack: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub region_catalog: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub block_size: f64,
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitConfig {
            block_size: DEFAULT_BLOCK_SIZE,
            train: r.train,
            validation: r.validation,
            test: r.test,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

// `deny_unknown_fields` does not combine with `flatten`; unknown keys are
// caught by `check_train_keys` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainStage {
    #[serde(flatten)]
    pub model: TrainConfig,
    /// Also fit a second model on every occurrence with the same schedule.
    pub retrain_full: bool,
    /// `k` of the per-epoch top-k curves (clipped to the number of species).
    pub curve_k: usize,
}

impl Default for TrainStage {
    fn default() -> Self {
        TrainStage {
            model: TrainConfig::default(),
            retrain_full: false,
            curve_k: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub epsilon: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Defaults to the feature-stack grid.
    pub grid: Option<GridSpec>,
    /// Drop the repeated +180° column of global grids.
    pub drop_antimeridian: bool,
    pub indicators: Vec<String>,
    /// Overrides the calibrated threshold.
    pub lambda: Option<f64>,
    pub batch_size: usize,
    pub buffer_cells: usize,
    pub workers: usize,
    pub precedence: StatusPrecedence,
}

impl Default for MapConfig {
    fn default() -> Self {
        let o = MapOptions::default();
        MapConfig {
            grid: None,
            drop_antimeridian: false,
            indicators: IndicatorKind::all().iter().map(ToString::to_string).collect(),
            lambda: None,
            batch_size: o.batch_size,
            buffer_cells: o.buffer_cells,
            workers: o.workers,
            precedence: StatusPrecedence::default(),
        }
    }
}

impl MapConfig {
    pub fn options(&self) -> MapOptions {
        MapOptions {
            batch_size: self.batch_size,
            workers: self.workers,
            buffer_cells: self.buffer_cells,
        }
    }

    pub fn kinds(&self) -> Result<Vec<IndicatorKind>> {
        self.indicators
            .iter()
            .map(|s| s.parse().map_err(|_| AtlasError::Config(format!("map.indicators: unknown indicator `{s}`"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZonalConfig {
    pub min_area_km2: f64,
    pub top_k: usize,
}

impl Default for ZonalConfig {
    fn default() -> Self {
        ZonalConfig {
            min_area_km2: DEFAULT_MIN_AREA_KM2,
            top_k: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { k: vec![1, 5, 10, 30] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub split: SplitConfig,
    pub train: TrainStage,
    pub features: FeatureOptions,
    pub calibration: CalibrationConfig,
    pub map: MapConfig,
    pub zonal: ZonalConfig,
    pub eval: EvalConfig,
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_override(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn check_train_keys(root: &toml::Table) -> Result<()> {
    let Some(train) = root.get("train").and_then(toml::Value::as_table) else {
        return Ok(());
    };
    let known = toml::Table::try_from(TrainStage::default()).expect("train config serializes");
    for key in train.keys() {
        if !known.contains_key(key) && key != "reweight_start" {
            return Err(AtlasError::Config(format!("unknown field `train.{key}`")));
        }
    }
    Ok(())
}

/// Applies `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| AtlasError::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(AtlasError::Config(format!("bad override key `{key}`")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| AtlasError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_owned(), parse_override(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies overrides and resolves relative paths against `base`.
    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| AtlasError::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        check_train_keys(&table)?;
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| AtlasError::Config(e.message().to_owned()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AtlasError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, overrides, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.occurrences,
            &mut p.statuses,
            &mut p.stack,
            &mut p.regions,
            &mut p.region_catalog,
            &mut p.out,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Checks values that do not depend on which stage runs.
    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, e: AtlasError| AtlasError::Config(format!("{field}: {e}"));
        self.split.ratios().validate().map_err(|e| cfg("split", e))?;
        if !(self.split.block_size > 0.0 && self.split.block_size.is_finite()) {
            return Err(AtlasError::Config("split.block_size must be positive".into()));
        }
        self.train.model.validate().map_err(|e| cfg("train", e))?;
        if !(0.0..=1.0).contains(&self.calibration.epsilon) {
            return Err(AtlasError::Config("calibration.epsilon must lie in [0, 1]".into()));
        }
        self.map.kinds()?;
        if let Some(g) = &self.map.grid {
            g.validate().map_err(|e| cfg("map.grid", e))?;
        }
        if let Some(l) = self.map.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(AtlasError::Config("map.lambda must lie in [0, 1]".into()));
            }
        }
        if self.map.batch_size == 0 || self.map.buffer_cells == 0 || self.map.workers == 0 {
            return Err(AtlasError::Config(
                "map.batch_size, map.buffer_cells and map.workers must be >= 1".into(),
            ));
        }
        if self.zonal.top_k == 0 {
            return Err(AtlasError::Config("zonal.top_k must be >= 1".into()));
        }
        if self.eval.k.is_empty() || self.eval.k.contains(&0) {
            return Err(AtlasError::Config("eval.k must be a non-empty list of positive integers".into()));
        }
        Ok(())
    }

    /// A path the current stage needs: set and existing.
    pub fn input_path(&self, field: &'static str) -> Result<&Path> {
        let p = &self.paths;
        let slot = match field {
            "occurrences" => &p.occurrences,
            "statuses" => &p.statuses,
            "stack" => &p.stack,
            "regions" => &p.regions,
            "region_catalog" => &p.region_catalog,
            other => return Err(AtlasError::Config(format!("unknown path field `{other}`"))),
        };
        let path = slot
            .as_deref()
            .ok_or_else(|| AtlasError::Config(format!("paths.{field} is not set")))?;
        if !path.exists() {
            return Err(AtlasError::Config(format!(
                "paths.{field} = {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Single-line JSON form embedded in output headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
