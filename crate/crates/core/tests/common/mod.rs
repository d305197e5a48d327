#![allow(dead_code)]

use atlas_core::atlas::stack::FeatureOptions;
use atlas_core::conformal::calibrate;
use atlas_core::domain::{SpeciesStatuses, StatusPrecedence};
use atlas_core::model::{train, ProbabilityEstimator, Samples, SoftmaxModel, TrainConfig};
use atlas_core::prior::{build_continent_prior, ContinentPrior};
use atlas_core::split::{HoldOut, Split, SplitRatios, DEFAULT_BLOCK_SIZE};
use atlas_core::synth::SyntheticWorld;
use atlas_core::atlas::inference::MapContext;

/// A synthetic world with a trained, calibrated model.
pub struct Fitted {
    pub world: SyntheticWorld,
    pub model: SoftmaxModel,
    pub lambda: f64,
    pub prior: ContinentPrior,
    pub statuses: SpeciesStatuses,
    pub features: FeatureOptions,
}

impl Fitted {
    pub fn context(&self) -> MapContext<'_> {
        MapContext {
            model: &self.model,
            stack: &self.world.stack,
            features: self.features,
            lambda: self.lambda,
            prior: &self.prior,
            statuses: &self.statuses,
        }
    }
}

pub fn samples_of(world: &SyntheticWorld, opts: &FeatureOptions, indices: &[usize]) -> Samples {
    let mut s = Samples::new(world.stack.n_features(opts));
    for &i in indices {
        let occ = &world.occurrences.occurrences[i];
        let x = world.stack.features_at(occ.lon, occ.lat, opts);
        if x.iter().all(|v| v.is_finite()) {
            s.push(&x, occ.species).unwrap();
        }
    }
    s
}

/// Block split, training on the train split and calibration on validation.
pub fn fit(world: SyntheticWorld, cfg: &TrainConfig, epsilon: f64) -> Fitted {
    let features = FeatureOptions::default();
    let holdout = HoldOut::build(&world.occurrences, DEFAULT_BLOCK_SIZE, SplitRatios::default(), cfg.seed).unwrap();
    let train_set = samples_of(&world, &features, &holdout.indices(Split::Train));
    let val_set = samples_of(&world, &features, &holdout.indices(Split::Validation));
    let c = world.occurrences.n_species();
    let model = train(&train_set, c, cfg).unwrap().model;
    let true_probs: Vec<f64> = val_set
        .iter()
        .map(|(x, y)| model.predict_proba(x).unwrap().get(y))
        .collect();
    let lambda = calibrate(&true_probs, epsilon).unwrap().lambda;
    let prior = build_continent_prior(&world.occurrences).unwrap();
    let statuses = world
        .statuses
        .resolve(&world.occurrences.catalog, StatusPrecedence::AssessedFirst);
    Fitted {
        world,
        model,
        lambda,
        prior,
        statuses,
        features,
    }
}
