//! Batched map inference: for every land cell, predict `η̂`, threshold it, apply
//! the continent prior, renormalize, and evaluate the requested indicators.
//!
//! Rows are processed in buffers of at least `buffer_cells` cells. Each buffer is
//! cut into row strips handled by a dedicated rayon pool and reassembled in row
//! order before being handed to the sink, so the output does not depend on batch
//! size or worker count.

use rayon::prelude::*;

use crate::conformal::predict_set;
use crate::domain::{ProbabilityVector, SpeciesStatuses};
use crate::error::{AtlasError, Result};
use crate::indicators::{evaluate, IndicatorKind, IndicatorSet};
use crate::model::ProbabilityEstimator;
use crate::prior::{filter_by_prior, renormalize, ContinentPrior, Renormalized};

use super::grid::{is_land, GridSpec};
use super::raster::{RasterLayer, ValueKind, DEFAULT_NODATA};
use super::stack::{FeatureOptions, FeatureStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapOptions {
    /// Cells per model call.
    pub batch_size: usize,
    pub workers: usize,
    /// Cells accumulated before rows are flushed to the sink.
    pub buffer_cells: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            batch_size: 512,
            workers: 1,
            buffer_cells: 50_000,
        }
    }
}

/// Read-only inputs shared by all workers.
pub struct MapContext<'a> {
    pub model: &'a dyn ProbabilityEstimator,
    pub stack: &'a FeatureStack,
    pub features: FeatureOptions,
    pub lambda: f64,
    pub prior: &'a ContinentPrior,
    pub statuses: &'a SpeciesStatuses,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MapTally {
    pub land_cells: usize,
    pub water_cells: usize,
    /// Land cells with a nodata or non-finite covariate.
    pub nodata_features: usize,
    /// Land cells outside every continent of the continent band.
    pub no_continent: usize,
    /// Land cells whose filtered assemblage is empty.
    pub empty_assemblages: usize,
    /// Assemblage members skipped for lack of a status, summed over cells.
    pub missing_status_members: usize,
}

impl MapTally {
    fn merge(&mut self, o: &MapTally) {
        self.land_cells += o.land_cells;
        self.water_cells += o.water_cells;
        self.nodata_features += o.nodata_features;
        self.no_continent += o.no_continent;
        self.empty_assemblages += o.empty_assemblages;
        self.missing_status_members += o.missing_status_members;
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum CellOutcome {
    Water,
    NoFeatures,
    NoContinent,
    Empty,
    Indicators {
        all: IndicatorSet,
        assessed: IndicatorSet,
    },
}

impl CellOutcome {
    pub fn value(&self, kind: IndicatorKind) -> Option<f64> {
        match self {
            CellOutcome::Indicators { all, assessed } => {
                let set = if kind.assessed_only { assessed } else { all };
                set.value(kind).as_f64()
            }
            _ => None,
        }
    }
}

/// Everything after the model call for one cell.
pub fn assess_prediction(ctx: &MapContext<'_>, eta_hat: &ProbabilityVector, continent: &str) -> Result<CellOutcome> {
    let raw = predict_set(eta_hat, ctx.lambda);
    let filtered = filter_by_prior(&raw, continent, ctx.prior)?;
    let Renormalized::Assemblage(a) = renormalize(&filtered) else {
        return Ok(CellOutcome::Empty);
    };
    let all = evaluate(&a, ctx.statuses);
    let assessed_statuses = ctx.statuses.assessed_only();
    let assessed = evaluate(&a, &assessed_statuses);
    Ok(CellOutcome::Indicators { all, assessed })
}

/// One cell end to end.
pub fn assess_point(ctx: &MapContext<'_>, lon: f64, lat: f64) -> Result<CellOutcome> {
    if !is_land(&ctx.stack.land_mask, lon, lat) {
        return Ok(CellOutcome::Water);
    }
    let x = ctx.stack.features_at(lon, lat, &ctx.features);
    if x.iter().any(|v| !v.is_finite()) {
        return Ok(CellOutcome::NoFeatures);
    }
    let Some(continent) = ctx.stack.continent_at(lon, lat) else {
        return Ok(CellOutcome::NoContinent);
    };
    let eta_hat = ctx.model.predict_proba(&x)?;
    assess_prediction(ctx, &eta_hat, &continent)
}

/// Checks that the inputs fit together before any output is produced.
pub fn check_map_inputs(ctx: &MapContext<'_>, grid: &GridSpec, kinds: &[IndicatorKind], opts: &MapOptions) -> Result<()> {
    grid.validate()?;
    let d = ctx.stack.n_features(&ctx.features);
    if ctx.model.n_features() != d {
        return Err(AtlasError::DimensionMismatch {
            expected: ctx.model.n_features(),
            actual: d,
            context: "model features vs feature stack",
        });
    }
    let c = ctx.model.n_classes();
    if ctx.prior.len() != c {
        return Err(AtlasError::DimensionMismatch {
            expected: c,
            actual: ctx.prior.len(),
            context: "model classes vs continent prior",
        });
    }
    if ctx.statuses.len() != c {
        return Err(AtlasError::DimensionMismatch {
            expected: c,
            actual: ctx.statuses.len(),
            context: "model classes vs status lookup",
        });
    }
    if !grid.overlaps(&ctx.stack.grid()) {
        return Err(AtlasError::GridMismatch("map grid lies outside the feature stack".into()));
    }
    if !(0.0..=1.0).contains(&ctx.lambda) {
        return Err(AtlasError::InvalidArgument(format!("lambda {} outside [0, 1]", ctx.lambda)));
    }
    if kinds.is_empty() {
        return Err(AtlasError::Empty("indicator list"));
    }
    if opts.batch_size == 0 || opts.workers == 0 || opts.buffer_cells == 0 {
        return Err(AtlasError::InvalidArgument(
            "batch_size, workers and buffer_cells must be >= 1".into(),
        ));
    }
    Ok(())
}

/// One output row: values per requested layer.
pub type RowValues = Vec<Vec<f64>>;

struct PendingCell {
    row_offset: usize,
    col: usize,
    features: Vec<f64>,
    continent: String,
}

fn compute_strip(
    ctx: &MapContext<'_>,
    grid: &GridSpec,
    kinds: &[IndicatorKind],
    rows: std::ops::Range<usize>,
    batch_size: usize,
) -> Result<(Vec<RowValues>, MapTally)> {
    let ncols = grid.ncols();
    let mut out: Vec<RowValues> = rows.clone().map(|_| vec![vec![DEFAULT_NODATA; ncols]; kinds.len()]).collect();
    let mut tally = MapTally::default();
    let mut pending: Vec<PendingCell> = Vec::with_capacity(batch_size);

    let flush = |pending: &mut Vec<PendingCell>, out: &mut Vec<RowValues>, tally: &mut MapTally| -> Result<()> {
        for cell in pending.drain(..) {
            let eta_hat = ctx.model.predict_proba(&cell.features)?;
            let outcome = assess_prediction(ctx, &eta_hat, &cell.continent)?;
            match &outcome {
                CellOutcome::Empty => tally.empty_assemblages += 1,
                CellOutcome::Indicators { all, .. } => tally.missing_status_members += all.missing_status,
                _ => {}
            }
            for (k, kind) in kinds.iter().enumerate() {
                if let Some(v) = outcome.value(*kind) {
                    out[cell.row_offset][k][cell.col] = v;
                }
            }
        }
        Ok(())
    };

    for (offset, row) in rows.enumerate() {
        let lat = grid.lat(row);
        for col in 0..ncols {
            let lon = grid.lon(col);
            if !is_land(&ctx.stack.land_mask, lon, lat) {
                tally.water_cells += 1;
                continue;
            }
            tally.land_cells += 1;
            let features = ctx.stack.features_at(lon, lat, &ctx.features);
            if features.iter().any(|v| !v.is_finite()) {
                tally.nodata_features += 1;
                continue;
            }
            let Some(continent) = ctx.stack.continent_at(lon, lat) else {
                tally.no_continent += 1;
                continue;
            };
            pending.push(PendingCell {
                row_offset: offset,
                col,
                features,
                continent,
            });
            if pending.len() == batch_size {
                flush(&mut pending, &mut out, &mut tally)?;
            }
        }
    }
    flush(&mut pending, &mut out, &mut tally)?;
    Ok((out, tally))
}

/// Runs the map stage, handing completed rows to `sink` in north-to-south order
/// as `(first_row, rows)`.
pub fn run_map<F>(
    ctx: &MapContext<'_>,
    grid: &GridSpec,
    kinds: &[IndicatorKind],
    opts: &MapOptions,
    mut sink: F,
) -> Result<MapTally>
where
    F: FnMut(usize, Vec<RowValues>) -> Result<()>,
{
    check_map_inputs(ctx, grid, kinds, opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| AtlasError::InvalidArgument(format!("thread pool: {e}")))?;

    let nrows = grid.nrows();
    let rows_per_buffer = (opts.buffer_cells / grid.ncols()).max(1);
    let mut tally = MapTally::default();
    let mut start = 0;
    while start < nrows {
        let end = (start + rows_per_buffer).min(nrows);
        let strip_len = (end - start).div_ceil(opts.workers);
        let strips: Vec<std::ops::Range<usize>> = (start..end)
            .step_by(strip_len)
            .map(|s| s..(s + strip_len).min(end))
            .collect();
        let results: Vec<Result<(Vec<RowValues>, MapTally)>> = pool.install(|| {
            strips
                .into_par_iter()
                .map(|rows| compute_strip(ctx, grid, kinds, rows, opts.batch_size))
                .collect()
        });
        let mut rows = Vec::with_capacity(end - start);
        for r in results {
            let (strip_rows, strip_tally) = r?;
            tally.merge(&strip_tally);
            rows.extend(strip_rows);
        }
        sink(start, rows)?;
        start = end;
    }
    Ok(tally)
}

#[derive(Debug, Clone)]
pub struct MapOutput {
    pub layers: Vec<(IndicatorKind, RasterLayer)>,
    pub tally: MapTally,
}

impl MapOutput {
    pub fn layer(&self, kind: IndicatorKind) -> Option<&RasterLayer> {
        self.layers.iter().find(|(k, _)| *k == kind).map(|(_, l)| l)
    }
}

pub fn layer_kind(kind: IndicatorKind) -> ValueKind {
    if kind.is_categorical() {
        ValueKind::StatusCode
    } else {
        ValueKind::Real
    }
}

/// In-memory variant of [`run_map`].
pub fn batch_predict_map(
    ctx: &MapContext<'_>,
    grid: &GridSpec,
    kinds: &[IndicatorKind],
    opts: &MapOptions,
) -> Result<MapOutput> {
    let mut layers: Vec<(IndicatorKind, RasterLayer)> = kinds
        .iter()
        .map(|&k| (k, RasterLayer::filled(*grid, DEFAULT_NODATA, DEFAULT_NODATA, layer_kind(k))))
        .collect();
    let ncols = grid.ncols();
    let tally = run_map(ctx, grid, kinds, opts, |first_row, rows| {
        for (offset, row) in rows.into_iter().enumerate() {
            let r = first_row + offset;
            for ((_, layer), values) in layers.iter_mut().zip(row) {
                layer.values[r * ncols..(r + 1) * ncols].copy_from_slice(&values);
            }
        }
        Ok(())
    })?;
    Ok(MapOutput { layers, tally })
}
