//! Micro- and macro-averaged top-k accuracy.
//!
//! A sample is a hit when its true-class probability is at least the k-th largest
//! entry of the predicted vector, so a tie at rank k counts as a hit. The macro
//! score averages per-species hit rates over the species present in the sample set.

use serde::Serialize;

use crate::domain::{ProbabilityVector, SpeciesId};
use crate::error::{AtlasError, Result};
use crate::model::{ProbabilityEstimator, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopKScores {
    pub k: usize,
    pub micro: f64,
    pub macro_: f64,
}

/// Whether `label` is within the top `k` of `eta_hat` (ties at rank k included).
pub fn top_k_hit(eta_hat: &ProbabilityVector, label: SpeciesId, k: usize) -> bool {
    let p = eta_hat.get(label);
    let strictly_greater = eta_hat.values().iter().filter(|&&v| v > p).count();
    strictly_greater < k
}

/// Accumulates hits per species.
#[derive(Debug, Clone)]
pub struct TopKAccumulator {
    k: usize,
    hits: Vec<usize>,
    totals: Vec<usize>,
}

impl TopKAccumulator {
    pub fn new(k: usize, n_classes: usize) -> Result<Self> {
        if k == 0 {
            return Err(AtlasError::InvalidArgument("k must be >= 1".into()));
        }
        if k > n_classes {
            return Err(AtlasError::InvalidArgument(format!(
                "k = {k} exceeds the number of species ({n_classes})"
            )));
        }
        Ok(Self {
            k,
            hits: vec![0; n_classes],
            totals: vec![0; n_classes],
        })
    }

    pub fn add(&mut self, eta_hat: &ProbabilityVector, label: SpeciesId) {
        self.totals[label.index()] += 1;
        if top_k_hit(eta_hat, label, self.k) {
            self.hits[label.index()] += 1;
        }
    }

    /// Hit and sample counts per species id.
    pub fn per_species(&self) -> impl Iterator<Item = (SpeciesId, usize, usize)> + '_ {
        self.hits
            .iter()
            .zip(&self.totals)
            .enumerate()
            .map(|(i, (&h, &t))| (SpeciesId(i as u32), h, t))
    }

    pub fn finish(&self) -> Result<TopKScores> {
        let total: usize = self.totals.iter().sum();
        if total == 0 {
            return Err(AtlasError::Empty("evaluation samples"));
        }
        let hits: usize = self.hits.iter().sum();
        let (sum, present) = self
            .hits
            .iter()
            .zip(&self.totals)
            .filter(|(_, &t)| t > 0)
            .fold((0.0, 0usize), |(s, n), (&h, &t)| (s + h as f64 / t as f64, n + 1));
        Ok(TopKScores {
            k: self.k,
            micro: hits as f64 / total as f64,
            macro_: sum / present as f64,
        })
    }
}

/// Both scores over precomputed probability vectors.
pub fn top_k_scores(
    predictions: &[ProbabilityVector],
    labels: &[SpeciesId],
    k: usize,
    n_classes: usize,
) -> Result<TopKScores> {
    if predictions.len() != labels.len() {
        return Err(AtlasError::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
            context: "predictions vs labels",
        });
    }
    let mut acc = TopKAccumulator::new(k, n_classes)?;
    for (p, &y) in predictions.iter().zip(labels) {
        acc.add(p, y);
    }
    acc.finish()
}

pub fn evaluate_top_k<M: ProbabilityEstimator + ?Sized>(model: &M, samples: &Samples, k: usize) -> Result<TopKScores> {
    let mut acc = TopKAccumulator::new(k, model.n_classes())?;
    for (x, y) in samples.iter() {
        acc.add(&model.predict_proba(x)?, y);
    }
    acc.finish()
}

/// Sample-averaged top-k accuracy.
pub fn top_k_accuracy<M: ProbabilityEstimator + ?Sized>(model: &M, samples: &Samples, k: usize) -> Result<f64> {
    Ok(evaluate_top_k(model, samples, k)?.micro)
}

/// Species-averaged top-k accuracy; species without samples are left out.
pub fn macro_top_k_accuracy<M: ProbabilityEstimator + ?Sized>(model: &M, samples: &Samples, k: usize) -> Result<f64> {
    Ok(evaluate_top_k(model, samples, k)?.macro_)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn second_place_is_a_top_two_hit() {
        let p = pv(&[0.5, 0.3, 0.2]);
        assert!(top_k_hit(&p, SpeciesId(1), 2));
        assert!(!top_k_hit(&p, SpeciesId(1), 1));
        assert!(!top_k_hit(&p, SpeciesId(2), 2));
    }

    #[test]
    fn tie_at_rank_k_is_a_hit() {
        let p = pv(&[0.4, 0.3, 0.3]);
        assert!(top_k_hit(&p, SpeciesId(2), 2));
        assert!(top_k_hit(&p, SpeciesId(1), 2));
    }

    #[test]
    fn k_equal_c_is_perfect() {
        let preds = vec![pv(&[0.7, 0.2, 0.1]), pv(&[0.1, 0.1, 0.8])];
        let s = top_k_scores(&preds, &[SpeciesId(2), SpeciesId(0)], 3, 3).unwrap();
        assert_eq!(s.micro, 1.0);
        assert_eq!(s.macro_, 1.0);
    }

    #[test]
    fn bad_k_rejected() {
        assert!(TopKAccumulator::new(0, 3).is_err());
        assert!(TopKAccumulator::new(4, 3).is_err());
        assert!(TopKAccumulator::new(1, 3).unwrap().finish().is_err());
    }

    #[test]
    fn micro_and_macro_differ_on_imbalanced_set() {
        // Species 0: four samples, all ranked first (4/4).
        // Species 1: one sample ranked third (0/1).
        // Species 2: two samples, one ranked first, one ranked second (1/2 at k = 1).
        // Hand enumeration at k = 1: micro = (4 + 0 + 1) / 7, macro = (1 + 0 + 0.5) / 3.
        let a = pv(&[0.6, 0.3, 0.1]);
        let preds = vec![
            a.clone(),
            a.clone(),
            a.clone(),
            a.clone(),
            pv(&[0.5, 0.2, 0.3]),
            pv(&[0.1, 0.2, 0.7]),
            pv(&[0.5, 0.1, 0.4]),
        ];
        let labels = [0, 0, 0, 0, 1, 2, 2].map(SpeciesId);
        let s = top_k_scores(&preds, &labels, 1, 3).unwrap();
        assert!((s.micro - 5.0 / 7.0).abs() < 1e-15);
        assert!((s.macro_ - 0.5).abs() < 1e-15);
        // k = 2: species 1 sample ranked 3rd still misses; species 2 both hit.
        let s = top_k_scores(&preds, &labels, 2, 3).unwrap();
        assert!((s.micro - 6.0 / 7.0).abs() < 1e-15);
        assert!((s.macro_ - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn one_sample_per_species_gives_equal_scores() {
        let preds = vec![pv(&[0.6, 0.3, 0.1]), pv(&[0.5, 0.2, 0.3]), pv(&[0.1, 0.2, 0.7])];
        let s = top_k_scores(&preds, &[0, 1, 2].map(SpeciesId), 1, 3).unwrap();
        assert_eq!(s.micro, s.macro_);
    }
}
