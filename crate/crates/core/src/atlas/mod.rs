//! Gridded inference, raster I/O and regional summaries.

pub mod grid;
pub mod inference;
pub mod raster;
pub mod stack;
pub mod stats;
pub mod zonal;

pub use grid::{build_grid, is_land, GridPoint, GridSpec, DEFAULT_STEP};
pub use inference::{
    assess_point, assess_prediction, batch_predict_map, check_map_inputs, run_map, CellOutcome, MapContext, MapOptions, MapOutput,
    MapTally,
};
pub use raster::{format_sig6, AsciiGridWriter, RasterLayer, ValueKind, DEFAULT_NODATA};
pub use stack::{BandKind, BandSpec, FeatureOptions, FeatureStack, StackManifest};
pub use stats::{spearman, Spearman};
pub use zonal::{
    rank_regions, zonal_area_pct, zonal_area_pct_all, zonal_mean, Direction, RankedRegion, RegionCatalog,
    RegionRaster,
};
