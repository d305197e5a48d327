//! Synthetic worlds with known ground truth, used by tests, the acceptance
//! suite and the `atlas synth` fixture generator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atlas::grid::GridSpec;
use crate::atlas::raster::{RasterLayer, ValueKind, DEFAULT_NODATA};
use crate::atlas::stack::{layer_from_fn, Band, BandKind, BandSpec, FeatureStack, StackManifest};
use crate::atlas::zonal::{RegionCatalog, RegionInfo, RegionRaster};
use crate::domain::{
    save_occurrences, save_status_table, OccurrenceDataset, SpeciesId, StatusCategory, StatusSource, StatusTable,
};
use crate::error::{AtlasError, Result};
use crate::model::Samples;

/// Draws an index from unnormalized non-negative weights.
fn draw_categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Species with isotropic Gaussian niches in covariate space. The true class
/// distribution is `η_k(x) ∝ a_k · exp(-‖x - μ_k‖² / 2σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NicheWorld {
    pub centers: Vec<Vec<f64>>,
    pub log_abundance: Vec<f64>,
    pub sigma: f64,
    /// Covariates are drawn uniformly from `[-extent, extent]^d`.
    pub extent: f64,
}

impl NicheWorld {
    pub fn random(n_species: usize, n_covariates: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extent = 2.0;
        let centers = (0..n_species)
            .map(|_| (0..n_covariates).map(|_| rng.random_range(-extent..extent)).collect())
            .collect();
        let log_abundance = (0..n_species).map(|_| rng.random_range(-1.0..1.0)).collect();
        NicheWorld {
            centers,
            log_abundance,
            sigma: 0.75,
            extent,
        }
    }

    pub fn n_species(&self) -> usize {
        self.centers.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// True conditional class distribution at `x`.
    pub fn eta(&self, x: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.log_abundance)
            .map(|(mu, la)| {
                let d2: f64 = mu.iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
                la - d2 / (2.0 * self.sigma * self.sigma)
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    pub fn draw_label<R: Rng>(&self, x: &[f64], rng: &mut R) -> SpeciesId {
        SpeciesId(draw_categorical(&self.eta(x), rng) as u32)
    }

    /// `n` i.i.d. pairs with covariates uniform on the cube.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Samples {
        let d = self.n_covariates();
        let mut out = Samples::new(d);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-self.extent..self.extent)).collect();
            let y = self.draw_label(&x, rng);
            out.push(&x, y).expect("dimension fixed");
        }
        out
    }
}

/// How occurrence labels relate to covariates.
#[derive(Debug, Clone, PartialEq)]
pub enum Niches {
    Gaussian(NicheWorld),
    /// Two species separated at `c0 = 0`: `SpeciesId(0)` below, `SpeciesId(1)` above.
    Disjoint,
}

impl Niches {
    pub fn n_species(&self) -> usize {
        match self {
            Niches::Gaussian(w) => w.n_species(),
            Niches::Disjoint => 2,
        }
    }

    fn draw<R: Rng>(&self, x: &[f64], rng: &mut R) -> SpeciesId {
        match self {
            Niches::Gaussian(w) => w.draw_label(x, rng),
            Niches::Disjoint => disjoint_truth(x[0]),
        }
    }
}

pub fn disjoint_truth(c0: f64) -> SpeciesId {
    SpeciesId(u32::from(c0 >= 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub lon0: f64,
    pub lat0: f64,
    pub step: f64,
    /// Cells per side of the square grid.
    pub side: usize,
    pub n_occurrences: usize,
    /// Regions per side; regions form a `k × k` checkerboard.
    pub regions_per_side: usize,
    /// Fraction of species without any status.
    pub missing_status: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            lon0: 10.0,
            lat0: -1.0,
            step: 0.02,
            side: 100,
            n_occurrences: 6000,
            regions_per_side: 3,
            missing_status: 0.1,
            seed: 0,
        }
    }
}

pub const N_BANDS: usize = 4;
pub const CONTINENT_LABELS: [(&str, &str); 2] = [("1", "AFR"), ("2", "ASI")];

/// Everything a pipeline run consumes.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub grid: GridSpec,
    pub stack: FeatureStack,
    pub regions: RegionRaster,
    pub region_catalog: RegionCatalog,
    pub occurrences: OccurrenceDataset,
    pub statuses: StatusTable,
}

fn species_name(i: usize) -> String {
    format!("sp{i:03}")
}

impl SyntheticWorld {
    pub fn generate(spec: &WorldSpec, niches: &Niches) -> Result<Self> {
        if spec.side < 2 || spec.regions_per_side == 0 {
            return Err(AtlasError::InvalidArgument("world needs side >= 2 and regions".into()));
        }
        let extent_deg = (spec.side - 1) as f64 * spec.step;
        let grid = GridSpec::new(spec.lon0, spec.lon0 + extent_deg, spec.lat0, spec.lat0 + extent_deg, spec.step)?;
        let (lon0, lat0) = (spec.lon0, spec.lat0);
        let u = move |lon: f64| (lon - lon0) / extent_deg;
        let v = move |lat: f64| (lat - lat0) / extent_deg;
        let tau = std::f64::consts::TAU;

        let band_fns: [Box<dyn Fn(f64, f64) -> f64>; N_BANDS] = [
            Box::new(move |lon, _| -2.0 + 4.0 * u(lon)),
            Box::new(move |_, lat| -2.0 + 4.0 * v(lat)),
            Box::new(move |lon, lat| 2.0 * (tau * (u(lon) + 0.5 * v(lat))).sin()),
            Box::new(move |lon, lat| 2.0 * (tau * (v(lat) - 0.3 * u(lon))).cos()),
        ];
        let bands = band_fns
            .iter()
            .enumerate()
            .map(|(i, f)| Band {
                spec: BandSpec {
                    name: format!("c{i}"),
                    kind: BandKind::Continuous,
                    file: format!("c{i}.asc"),
                    group: Some("synthetic".into()),
                },
                layer: layer_from_fn(grid, ValueKind::Real, f),
            })
            .collect();

        // a round lake in the lower-left quadrant
        let land = layer_from_fn(grid, ValueKind::Real, |lon, lat| {
            let (du, dv) = (u(lon) - 0.25, v(lat) - 0.3);
            if du * du + dv * dv < 0.12 * 0.12 {
                0.0
            } else {
                1.0
            }
        });
        let continent = layer_from_fn(grid, ValueKind::Real, |lon, _| if u(lon) < 0.5 { 1.0 } else { 2.0 });
        let k = spec.regions_per_side;
        let region_layer = layer_from_fn(grid, ValueKind::Real, |lon, lat| {
            let col = ((u(lon) * k as f64) as usize).min(k - 1);
            let row = ((v(lat) * k as f64) as usize).min(k - 1);
            (row * k + col + 1) as f64
        });
        let regions = RegionRaster::new(region_layer);
        let region_catalog = RegionCatalog {
            regions: (1..=k * k)
                .map(|id| {
                    (
                        id as i64,
                        RegionInfo {
                            name: format!("R{id}"),
                            area_km2: None,
                        },
                    )
                })
                .collect(),
        };
        let labels: BTreeMap<String, String> = CONTINENT_LABELS
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let stack = FeatureStack::new(bands, land, continent, labels)?;

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n_species = niches.n_species();
        let mut occurrences = OccurrenceDataset::default();
        // fix the species order so ids follow names
        for i in 0..n_species {
            occurrences.catalog.intern(&species_name(i));
        }
        let opts = crate::atlas::stack::FeatureOptions {
            patch_radius: 0,
            append_location: false,
        };
        let mut drawn = 0;
        while drawn < spec.n_occurrences {
            let row = rng.random_range(0..grid.nrows());
            let col = rng.random_range(0..grid.ncols());
            let (lon, lat) = (grid.lon(col), grid.lat(row));
            if !crate::atlas::grid::is_land(&stack.land_mask, lon, lat) {
                continue;
            }
            // jitter inside the cell so coordinates look like observations
            let lon_j = lon + rng.random_range(-0.4..0.4) * spec.step;
            let lat_j = lat + rng.random_range(-0.4..0.4) * spec.step;
            let x = stack.features_at(lon, lat, &opts);
            let species = niches.draw(&x, &mut rng);
            let region = regions.region(row * grid.ncols() + col).expect("every cell has a region");
            let continent = stack.continent_at(lon, lat).expect("every cell has a continent");
            occurrences.push(
                &species_name(species.index()),
                lon_j,
                lat_j,
                &region_catalog.name(region),
                &continent,
            )?;
            drawn += 1;
        }

        let mut statuses = StatusTable::new();
        for i in 0..n_species {
            if n_species > 2 && rng.random::<f64>() < spec.missing_status {
                continue;
            }
            let category = match niches {
                Niches::Disjoint => [StatusCategory::LC, StatusCategory::CR][i],
                Niches::Gaussian(_) => StatusCategory::ALL[rng.random_range(0..5)],
            };
            let source = if i % 3 == 2 {
                StatusSource::Predicted
            } else {
                StatusSource::Assessed
            };
            statuses.insert(&species_name(i), category, source)?;
        }

        Ok(SyntheticWorld {
            grid,
            stack,
            regions,
            region_catalog,
            occurrences,
            statuses,
        })
    }

    /// Writes the world as input files under `dir`, plus a ready-to-run
    /// `config.toml`.
    pub fn write_fixture(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let stack_dir = dir.join("stack");
        std::fs::create_dir_all(&stack_dir).map_err(|e| AtlasError::io(&stack_dir, e))?;
        save_occurrences(&self.occurrences, dir.join("occurrences.csv"))?;
        save_status_table(&self.statuses, dir.join("statuses.csv"))?;
        for band in &self.stack.bands {
            band.layer.write_ascii(stack_dir.join(&band.spec.file))?;
        }
        self.stack.land_mask.write_ascii(stack_dir.join("land.asc"))?;
        self.stack.continent.write_ascii(stack_dir.join("continent.asc"))?;
        StackManifest {
            bands: self.stack.bands.iter().map(|b| b.spec.clone()).collect(),
            land_mask: "land.asc".into(),
            continent: "continent.asc".into(),
            continent_labels: self.stack.continent_labels.clone(),
        }
        .save(stack_dir.join("manifest.json"))?;
        self.regions.layer.write_ascii(dir.join("regions.asc"))?;

        let mut catalog = String::from("id,name,area_km2\n");
        for (id, info) in &self.region_catalog.regions {
            let area = info.area_km2.map(|a| a.to_string()).unwrap_or_default();
            writeln!(catalog, "{id},{},{area}", info.name).expect("string write");
        }
        let path = dir.join("regions.csv");
        std::fs::write(&path, catalog).map_err(|e| AtlasError::io(&path, e))?;

        let path = dir.join("config.toml");
        std::fs::write(&path, FIXTURE_CONFIG).map_err(|e| AtlasError::io(&path, e))
    }
}

const FIXTURE_CONFIG: &str = r#"[paths]
occurrences = "occurrences.csv"
statuses = "statuses.csv"
stack = "stack/manifest.json"
regions = "regions.asc"
region_catalog = "regions.csv"
out = "out"

[split]
block_size = 0.025
seed = 0

[train]
epochs = 8
batch_size = 64
learning_rate = 0.1
seed = 0

[map]
indicators = ["I_O", "I_LC", "I_NT", "I_VU", "I_EN", "I_CR", "I_THREAT", "I_H", "I_O_IUCN", "I_CR_IUCN", "I_THREAT_IUCN"]

[zonal]
min_area_km2 = 2000.0
top_k = 5
"#;

/// Ground-truth I_O raster of the disjoint world: LC below `c0 = 0`, CR above,
/// nodata on water.
pub fn disjoint_io_truth(world: &SyntheticWorld) -> RasterLayer {
    let c0 = &world.stack.bands[0].layer;
    let mut out = RasterLayer::filled(world.grid, DEFAULT_NODATA, DEFAULT_NODATA, ValueKind::StatusCode);
    for row in 0..world.grid.nrows() {
        for col in 0..world.grid.ncols() {
            if world.stack.land_mask.get(row, col) == 0.0 {
                continue;
            }
            let status = match disjoint_truth(c0.get(row, col)) {
                SpeciesId(0) => StatusCategory::LC,
                _ => StatusCategory::CR,
            };
            out.set(row, col, f64::from(status.rank()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_is_a_distribution() {
        let w = NicheWorld::random(10, 4, 3);
        let p = w.eta(&[0.1, -0.5, 1.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn same_seed_same_world() {
        let spec = WorldSpec {
            n_occurrences: 200,
            side: 20,
            ..WorldSpec::default()
        };
        let niches = Niches::Gaussian(NicheWorld::random(5, N_BANDS, 1));
        let a = SyntheticWorld::generate(&spec, &niches).unwrap();
        let b = SyntheticWorld::generate(&spec, &niches).unwrap();
        assert_eq!(a.occurrences, b.occurrences);
        assert_eq!(a.occurrences.len(), 200);
    }

    #[test]
    fn disjoint_labels_follow_c0() {
        let spec = WorldSpec {
            n_occurrences: 300,
            side: 20,
            ..WorldSpec::default()
        };
        let w = SyntheticWorld::generate(&spec, &Niches::Disjoint).unwrap();
        let opts = crate::atlas::stack::FeatureOptions {
            patch_radius: 0,
            append_location: false,
        };
        for occ in &w.occurrences.occurrences {
            let (row, col) = w.grid.locate(occ.lon, occ.lat).unwrap();
            let x = w.stack.features_at(w.grid.lon(col), w.grid.lat(row), &opts);
            assert_eq!(occ.species, disjoint_truth(x[0]));
        }
    }

    #[test]
    fn categorical_draw_respects_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_ne!(draw_categorical(&[0.5, 0.0, 0.5], &mut rng), 1);
        }
    }
}
