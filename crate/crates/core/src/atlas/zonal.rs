//! Zonal aggregation of indicator rasters over rasterized regions.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::domain::StatusCategory;
use crate::error::{AtlasError, Result};

use super::grid::GridSpec;
use super::raster::RasterLayer;

/// Mean Earth radius used for cell areas.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Minimum region area kept in zonal tables.
pub const DEFAULT_MIN_AREA_KM2: f64 = 2000.0;

pub type RegionId = i64;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionInfo {
    pub name: String,
    pub area_km2: Option<f64>,
}

/// Region ids → names and optional areas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionCatalog {
    pub regions: BTreeMap<RegionId, RegionInfo>,
}

impl RegionCatalog {
    /// Reads `id,name,area_km2` (area may be empty).
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| AtlasError::parse(path, 0, e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| AtlasError::parse(path, 1, e.to_string()))?
            .clone();
        if headers.iter().ne(["id", "name", "area_km2"]) {
            return Err(AtlasError::parse(path, 1, "header must be `id,name,area_km2`"));
        }
        let mut regions = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| AtlasError::parse(path, 0, e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let id: RegionId = record[0]
                .parse()
                .map_err(|_| AtlasError::parse(path, line, format!("bad region id `{}`", &record[0])))?;
            let area = match &record[2] {
                "" => None,
                s => Some(
                    s.parse::<f64>()
                        .map_err(|_| AtlasError::parse(path, line, format!("bad area `{s}`")))?,
                ),
            };
            regions.insert(
                id,
                RegionInfo {
                    name: record[1].to_owned(),
                    area_km2: area,
                },
            );
        }
        Ok(RegionCatalog { regions })
    }

    pub fn name(&self, id: RegionId) -> String {
        self.regions
            .get(&id)
            .map(|r| r.name.clone())
            .unwrap_or_else(|| id.to_string())
    }
}

/// Region id per cell; nodata cells belong to no region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub layer: RasterLayer,
}

impl RegionRaster {
    pub fn new(layer: RasterLayer) -> Self {
        RegionRaster { layer }
    }

    pub fn region(&self, idx: usize) -> Option<RegionId> {
        let v = self.layer.values[idx];
        (!self.layer.is_nodata(v)).then(|| v.round() as RegionId)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.layer.grid
    }

    /// Area of each region summed over its cells, treating every grid point as
    /// the centre of a `step × step` spherical cell.
    pub fn cell_areas(&self) -> BTreeMap<RegionId, f64> {
        let g = self.layer.grid;
        let dlon = g.step.to_radians();
        let mut areas = BTreeMap::new();
        for row in 0..g.nrows() {
            let lat = g.lat(row);
            let north = (lat + g.step / 2.0).min(90.0).to_radians();
            let south = (lat - g.step / 2.0).max(-90.0).to_radians();
            let cell = EARTH_RADIUS_KM * EARTH_RADIUS_KM * dlon * (north.sin() - south.sin());
            for col in 0..g.ncols() {
                if let Some(id) = self.region(row * g.ncols() + col) {
                    *areas.entry(id).or_insert(0.0) += cell;
                }
            }
        }
        areas
    }

    /// Regions whose area reaches `min_area_km2`. Catalog areas take precedence
    /// over areas estimated from cells.
    pub fn eligible(&self, catalog: &RegionCatalog, min_area_km2: f64) -> Vec<RegionId> {
        let estimated = self.cell_areas();
        estimated
            .iter()
            .filter(|(id, est)| {
                let area = catalog
                    .regions
                    .get(id)
                    .and_then(|r| r.area_km2)
                    .unwrap_or(**est);
                area >= min_area_km2
            })
            .map(|(id, _)| *id)
            .collect()
    }
}

fn check_grid(a: &RasterLayer, regions: &RegionRaster) -> Result<()> {
    if !a.grid.same_as(regions.grid()) {
        return Err(AtlasError::GridMismatch(format!(
            "raster grid {:?} differs from region grid {:?}",
            a.grid,
            regions.grid()
        )));
    }
    Ok(())
}

/// Per region, the percentage of valid cells whose most-critical status is each
/// category, indexed by status rank. Regions without a valid cell are omitted.
pub fn zonal_area_pct_all(io_raster: &RasterLayer, regions: &RegionRaster) -> Result<BTreeMap<RegionId, [f64; 5]>> {
    check_grid(io_raster, regions)?;
    let mut counts: BTreeMap<RegionId, ([usize; 5], usize)> = BTreeMap::new();
    let mut seen: BTreeMap<RegionId, ()> = BTreeMap::new();
    for (idx, &v) in io_raster.values.iter().enumerate() {
        let Some(region) = regions.region(idx) else { continue };
        seen.insert(region, ());
        if io_raster.is_nodata(v) {
            continue;
        }
        let rank = v.round();
        if !(0.0..=4.0).contains(&rank) {
            return Err(AtlasError::InvalidArgument(format!("status raster holds {v}")));
        }
        let entry = counts.entry(region).or_insert(([0; 5], 0));
        entry.0[rank as usize] += 1;
        entry.1 += 1;
    }
    for region in seen.keys().filter(|r| !counts.contains_key(r)) {
        log::warn!("region {region} has no valid cell; omitted");
    }
    Ok(counts
        .into_iter()
        .map(|(r, (per, total))| {
            let pct = per.map(|n| 100.0 * n as f64 / total as f64);
            (r, pct)
        })
        .collect())
}

/// `Area_%` of status `c` per region.
pub fn zonal_area_pct(io_raster: &RasterLayer, regions: &RegionRaster, c: StatusCategory) -> Result<BTreeMap<RegionId, f64>> {
    Ok(zonal_area_pct_all(io_raster, regions)?
        .into_iter()
        .map(|(r, pct)| (r, pct[c.rank() as usize]))
        .collect())
}

/// Mean of valid cells per region; all-nodata regions are omitted.
pub fn zonal_mean(raster: &RasterLayer, regions: &RegionRaster) -> Result<BTreeMap<RegionId, f64>> {
    check_grid(raster, regions)?;
    let mut acc: BTreeMap<RegionId, (f64, usize)> = BTreeMap::new();
    for (idx, &v) in raster.values.iter().enumerate() {
        let Some(region) = regions.region(idx) else { continue };
        if raster.is_nodata(v) {
            continue;
        }
        let e = acc.entry(region).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(r, (s, n))| (r, s / n as f64)).collect())
}

/// Keeps only the given regions.
pub fn restrict<V: Clone>(stat: &BTreeMap<RegionId, V>, keep: &[RegionId]) -> BTreeMap<RegionId, V> {
    keep.iter()
        .filter_map(|r| stat.get(r).map(|v| (*r, v.clone())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Descending,
    Ascending,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRegion {
    pub rank: usize,
    pub region: String,
    pub value: f64,
}

impl RankedRegion {
    /// Two-decimal display form; `value` keeps full precision.
    pub fn display_value(&self) -> String {
        format!("{:.2}", self.value)
    }
}

/// Top `k` regions by value, ties broken by region name.
pub fn rank_regions(stat: &BTreeMap<String, f64>, k: usize, direction: Direction) -> Result<Vec<RankedRegion>> {
    if k == 0 {
        return Err(AtlasError::InvalidArgument("k must be >= 1".into()));
    }
    if stat.is_empty() {
        return Err(AtlasError::Empty("region statistic"));
    }
    let mut rows: Vec<(&String, f64)> = stat.iter().map(|(n, v)| (n, *v)).collect();
    rows.sort_by(|a, b| {
        let by_value = match direction {
            Direction::Descending => b.1.total_cmp(&a.1),
            Direction::Ascending => a.1.total_cmp(&b.1),
        };
        match by_value {
            Ordering::Equal => a.0.cmp(b.0),
            o => o,
        }
    });
    Ok(rows
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (name, value))| RankedRegion {
            rank: i + 1,
            region: name.clone(),
            value,
        })
        .collect())
}

/// Renames region ids through the catalog.
pub fn by_name(stat: &BTreeMap<RegionId, f64>, catalog: &RegionCatalog) -> BTreeMap<String, f64> {
    stat.iter().map(|(id, v)| (catalog.name(*id), *v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::raster::{ValueKind, DEFAULT_NODATA};

    const ND: f64 = DEFAULT_NODATA;

    fn grid_2x4() -> GridSpec {
        GridSpec::new(0.0, 3.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn layer(values: Vec<f64>, kind: ValueKind) -> RasterLayer {
        RasterLayer::from_values(grid_2x4(), values, ND, kind).unwrap()
    }

    #[test]
    fn area_pct_counts() {
        // region 1: [CR, CR, EN, LC] ; region 2: [VU, VU, nodata, nodata]
        let io = layer(vec![4.0, 4.0, 3.0, 0.0, 2.0, 2.0, ND, ND], ValueKind::StatusCode);
        let regions = RegionRaster::new(layer(vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0], ValueKind::Real));
        let cr = zonal_area_pct(&io, &regions, StatusCategory::CR).unwrap();
        assert_eq!(cr[&1], 50.0);
        let all = zonal_area_pct_all(&io, &regions).unwrap();
        assert_eq!(all[&2], [0.0, 0.0, 100.0, 0.0, 0.0]);
        for pct in all.values() {
            assert!((pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn region_without_valid_cells_is_omitted() {
        let io = layer(vec![4.0, 4.0, 3.0, 0.0, ND, ND, ND, ND], ValueKind::StatusCode);
        let regions = RegionRaster::new(layer(vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0], ValueKind::Real));
        let all = zonal_area_pct_all(&io, &regions).unwrap();
        assert!(!all.contains_key(&2));
        assert!(!zonal_mean(&io, &regions).unwrap().contains_key(&2));
    }

    #[test]
    fn mean_examples() {
        let v = layer(vec![0.1, 0.3, 0.4, ND, ND, ND, ND, ND], ValueKind::Real);
        let regions = RegionRaster::new(layer(vec![1.0, 1.0, 2.0, 2.0, ND, ND, ND, ND], ValueKind::Real));
        let m = zonal_mean(&v, &regions).unwrap();
        assert!((m[&1] - 0.2).abs() < 1e-15);
        assert_eq!(m[&2], 0.4);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let v = layer(vec![0.0; 8], ValueKind::Real);
        let other = GridSpec::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let regions = RegionRaster::new(RasterLayer::filled(other, 1.0, ND, ValueKind::Real));
        assert!(matches!(zonal_mean(&v, &regions), Err(AtlasError::GridMismatch(_))));
    }

    #[test]
    fn ranking_examples() {
        let stat = BTreeMap::from([("A".to_string(), 0.6), ("B".to_string(), 0.63), ("C".to_string(), 0.55)]);
        let top = rank_regions(&stat, 2, Direction::Descending).unwrap();
        assert_eq!(top.iter().map(|r| r.region.as_str()).collect::<Vec<_>>(), ["B", "A"]);
        assert_eq!(top[0].display_value(), "0.63");

        let ties = BTreeMap::from([("B".to_string(), 0.5), ("A".to_string(), 0.5)]);
        let t = rank_regions(&ties, 2, Direction::Descending).unwrap();
        assert_eq!(t[0].region, "A");
        assert_eq!(t[1].region, "B");

        assert_eq!(rank_regions(&stat, 10, Direction::Ascending).unwrap().len(), 3);
        assert_eq!(rank_regions(&stat, 1, Direction::Ascending).unwrap()[0].region, "C");
        assert!(rank_regions(&stat, 0, Direction::Ascending).is_err());
    }

    #[test]
    fn areas_and_eligibility() {
        // one-degree cells at the equator are ~12,364 km²
        let g = GridSpec::new(0.0, 1.0, -0.5, 0.5, 1.0).unwrap();
        let regions = RegionRaster::new(RasterLayer::from_values(g, vec![1.0, 2.0, 1.0, ND], ND, ValueKind::Real).unwrap());
        let areas = regions.cell_areas();
        assert!((areas[&1] / 2.0 - 12_364.0).abs() < 50.0, "{areas:?}");
        let mut catalog = RegionCatalog::default();
        catalog.regions.insert(
            2,
            RegionInfo {
                name: "tiny".into(),
                area_km2: Some(1500.0),
            },
        );
        assert_eq!(regions.eligible(&catalog, DEFAULT_MIN_AREA_KM2), vec![1]);
        assert_eq!(catalog.name(2), "tiny");
        assert_eq!(catalog.name(1), "1");
    }
}
