mod common;

use atlas_core::atlas::grid::GridSpec;
use atlas_core::atlas::inference::{assess_point, batch_predict_map, check_map_inputs, CellOutcome, MapOptions};
use atlas_core::conformal::predict_set;
use atlas_core::indicators::{evaluate, IndicatorKind};
use atlas_core::model::{ProbabilityEstimator, TrainConfig};
use atlas_core::prior::{filter_by_prior, renormalize, Renormalized};
use atlas_core::synth::{NicheWorld, Niches, SyntheticWorld, WorldSpec, N_BANDS};
use atlas_core::AtlasError;

fn small_world(side: usize) -> common::Fitted {
    let spec = WorldSpec {
        side,
        n_occurrences: 3000,
        seed: 11,
        ..WorldSpec::default()
    };
    let world = SyntheticWorld::generate(&spec, &Niches::Gaussian(NicheWorld::random(15, N_BANDS, 11))).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        seed: 11,
        ..TrainConfig::default()
    };
    common::fit(world, &cfg, 0.05)
}

#[test]
fn one_cell_map_is_the_composition_of_the_stages() {
    let fitted = small_world(60);
    let ctx = fitted.context();
    let grid = fitted.world.grid;
    // a land cell in the eastern half
    let (row, col) = (10, 45);
    let (lon, lat) = (grid.lon(col), grid.lat(row));
    let one = GridSpec::new(lon - 1e-9, lon + 1e-9, lat - 1e-9, lat + 1e-9, grid.step).unwrap();
    assert_eq!(one.len(), 1);

    let kinds = IndicatorKind::all();
    let out = batch_predict_map(&ctx, &one, &kinds, &MapOptions::default()).unwrap();
    assert_eq!(out.tally.land_cells, 1);

    // the stages by hand
    let x = fitted.world.stack.features_at(lon, lat, &fitted.features);
    let eta = fitted.model.predict_proba(&x).unwrap();
    let raw = predict_set(&eta, fitted.lambda);
    let continent = fitted.world.stack.continent_at(lon, lat).unwrap();
    let filtered = filter_by_prior(&raw, &continent, &fitted.prior).unwrap();
    let Renormalized::Assemblage(a) = renormalize(&filtered) else {
        panic!("empty assemblage at the probe cell");
    };
    let all = evaluate(&a, &fitted.statuses);
    let assessed = evaluate(&a, &fitted.statuses.assessed_only());

    let point = assess_point(&ctx, lon, lat).unwrap();
    assert_eq!(point, CellOutcome::Indicators { all, assessed });
    for kind in kinds {
        let layer = out.layer(kind).unwrap();
        let set = if kind.assessed_only { &assessed } else { &all };
        match set.value(kind).as_f64() {
            Some(v) => assert_eq!(layer.values[0], v, "{kind}"),
            None => assert!(layer.is_nodata(layer.values[0]), "{kind}"),
        }
    }
}

#[test]
fn batch_size_does_not_change_rasters() {
    let fitted = small_world(10);
    let ctx = fitted.context();
    let kinds = IndicatorKind::all();
    let grid = fitted.world.grid;
    assert_eq!(grid.len(), 100);
    let run = |batch_size, workers| {
        let opts = MapOptions {
            batch_size,
            workers,
            buffer_cells: 13,
        };
        batch_predict_map(&ctx, &grid, &kinds, &opts).unwrap()
    };
    let a = run(1, 1);
    let b = run(512, 1);
    let c = run(3, 4);
    assert_eq!(a.tally, b.tally);
    for ((ka, la), ((_, lb), (_, lc))) in a.layers.iter().zip(b.layers.iter().zip(&c.layers)) {
        let bits = |l: &atlas_core::atlas::raster::RasterLayer| l.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(la), bits(lb), "{ka}");
        assert_eq!(bits(la), bits(lc), "{ka}");
    }
}

#[test]
fn cells_without_features_are_nodata_and_counted() {
    let mut fitted = small_world(20);
    let grid = fitted.world.grid;
    // knock out one covariate at a land cell
    let (row, col) = (2, 17);
    let band = &mut fitted.world.stack.bands[1].layer;
    let nodata = band.nodata;
    band.set(row, col, nodata);

    let ctx = fitted.context();
    let kind = IndicatorKind::shannon();
    let out = batch_predict_map(&ctx, &grid, &[kind], &MapOptions::default()).unwrap();
    assert_eq!(out.tally.nodata_features, 1);
    let layer = out.layer(kind).unwrap();
    assert!(layer.is_nodata(layer.get(row, col)));
    assert_eq!(
        assess_point(&ctx, grid.lon(col), grid.lat(row)).unwrap(),
        CellOutcome::NoFeatures
    );
    assert_eq!(out.tally.land_cells + out.tally.water_cells, grid.len());
}

#[test]
fn mismatched_inputs_are_rejected_up_front() {
    let fitted = small_world(10);
    let grid = fitted.world.grid;
    let kinds = IndicatorKind::all();
    let mut ctx = fitted.context();
    check_map_inputs(&ctx, &grid, &kinds, &MapOptions::default()).unwrap();

    ctx.features.append_location = false;
    let err = batch_predict_map(&ctx, &grid, &kinds, &MapOptions::default()).unwrap_err();
    assert!(matches!(err, AtlasError::DimensionMismatch { .. }), "{err}");
    ctx.features.append_location = true;

    let far = GridSpec::new(100.0, 101.0, 40.0, 41.0, 0.5).unwrap();
    let err = batch_predict_map(&ctx, &far, &kinds, &MapOptions::default()).unwrap_err();
    assert!(matches!(err, AtlasError::GridMismatch(_)), "{err}");

    assert!(batch_predict_map(&ctx, &grid, &[], &MapOptions::default()).is_err());
    let zero = MapOptions {
        workers: 0,
        ..MapOptions::default()
    };
    assert!(batch_predict_map(&ctx, &grid, &kinds, &zero).is_err());
    ctx.lambda = 1.5;
    assert!(batch_predict_map(&ctx, &grid, &kinds, &MapOptions::default()).is_err());
}
