//! Threshold calibration under an average-error budget, and thresholded
//! prediction sets.
//!
//! Membership is `η̂_k ≥ λ`. The calibration error at `λ` is the fraction of
//! calibration samples whose true-class probability falls strictly below `λ`;
//! calibration returns the largest `λ` whose error stays within `ε`. The error is
//! a step function that only changes at observed probabilities, so the search
//! over `{p_1, …, p_n, 1}` is exhaustive.

use serde::{Deserialize, Serialize};

use crate::domain::{Assemblage, ProbabilityVector, SpeciesId};
use crate::error::{AtlasError, Result};

/// Default error budget.
pub const DEFAULT_EPSILON: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub lambda: f64,
    pub epsilon: f64,
    pub empirical_error: f64,
    pub mean_set_size: Option<f64>,
    pub n_calibration: usize,
}

fn check_probs(true_probs: &[f64]) -> Result<()> {
    if true_probs.is_empty() {
        return Err(AtlasError::Empty("calibration probabilities"));
    }
    if true_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(AtlasError::InvalidArgument(
            "true-class probabilities must lie in [0, 1]".into(),
        ));
    }
    Ok(())
}

/// Fraction of entries strictly below `lambda`.
pub fn error_rate(true_probs: &[f64], lambda: f64) -> Result<f64> {
    check_probs(true_probs)?;
    let misses = true_probs.iter().filter(|&&p| p < lambda).count();
    Ok(misses as f64 / true_probs.len() as f64)
}

/// Largest `λ ∈ {p_1, …, p_n, 1}` with `error_rate(λ) ≤ ε`.
///
/// With `p_(1) ≤ … ≤ p_(n)` sorted and `m` the largest count with `m / n ≤ ε`,
/// this is `p_(m+1)` when `m < n` and `1` otherwise.
pub fn calibrate(true_probs: &[f64], epsilon: f64) -> Result<CalibrationResult> {
    check_probs(true_probs)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(AtlasError::InvalidArgument(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let n = true_probs.len();
    let mut sorted = true_probs.to_vec();
    sorted.sort_by(f64::total_cmp);

    let m = max_allowed_misses(n, epsilon);
    let lambda = if m < n { sorted[m] } else { 1.0 };
    let misses = sorted.partition_point(|&p| p < lambda);
    Ok(CalibrationResult {
        lambda,
        epsilon,
        empirical_error: misses as f64 / n as f64,
        mean_set_size: None,
        n_calibration: n,
    })
}

/// Largest `m ≤ n` with `m / n ≤ ε`, evaluated in the same floating-point form
/// used by [`error_rate`] so that the two agree exactly.
fn max_allowed_misses(n: usize, epsilon: f64) -> usize {
    let nf = n as f64;
    let mut m = ((epsilon * nf).floor() as usize).min(n);
    while m < n && ((m + 1) as f64 / nf) <= epsilon {
        m += 1;
    }
    while m > 0 && (m as f64 / nf) > epsilon {
        m -= 1;
    }
    m
}

/// `{k : η̂_k ≥ λ}` with the raw probabilities as weights. May be empty.
pub fn predict_set(eta_hat: &ProbabilityVector, lambda: f64) -> Assemblage {
    let mut members = Vec::new();
    let mut weights = Vec::new();
    for (k, &p) in eta_hat.values().iter().enumerate() {
        if p >= lambda && p > 0.0 {
            members.push(SpeciesId(k as u32));
            weights.push(p);
        }
    }
    let normalized = eta_hat.is_normalized() && members.len() == eta_hat.len();
    Assemblage::from_sorted_parts(members, weights, normalized)
}

/// Number of entries that `predict_set` would keep.
pub fn set_size(eta_hat: &ProbabilityVector, lambda: f64) -> usize {
    eta_hat.values().iter().filter(|&&p| p >= lambda && p > 0.0).count()
}

/// Summary of set sizes: mean, sample standard deviation, min, quartiles, max.
/// Quartiles interpolate linearly between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSizeSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl SetSizeSummary {
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(AtlasError::Empty("set sizes"));
        }
        let mut sorted: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            count: n,
            mean,
            std,
            min: sorted[0],
            q25: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
            max: sorted[n - 1],
        })
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean set size over `predictions`, with the full summary.
pub fn mean_set_size(predictions: &[ProbabilityVector], lambda: f64) -> Result<SetSizeSummary> {
    let sizes: Vec<usize> = predictions.iter().map(|p| set_size(p, lambda)).collect();
    SetSizeSummary::from_sizes(&sizes)
}

/// Sample-level and species-averaged coverage of `S_λ` (fraction of samples whose
/// true species is in the set).
pub fn set_coverage(predictions: &[ProbabilityVector], labels: &[SpeciesId], lambda: f64) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(AtlasError::Empty("coverage samples"));
    }
    let n_classes = predictions[0].len();
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (p, &y) in predictions.iter().zip(labels) {
        totals[y.index()] += 1;
        if p.get(y) >= lambda {
            hits[y.index()] += 1;
        }
    }
    let micro = hits.iter().sum::<usize>() as f64 / predictions.len() as f64;
    let (sum, present) = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .fold((0.0, 0usize), |(s, c), (&h, &t)| (s + h as f64 / t as f64, c + 1));
    Ok((micro, sum / present as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn error_rate_examples() {
        let p = [0.9, 0.8, 0.5, 0.05];
        assert_eq!(error_rate(&p, 0.5).unwrap(), 0.25);
        assert_eq!(error_rate(&p, 0.0).unwrap(), 0.0);
        assert_eq!(error_rate(&[1.0, 0.3], 1.0 + f64::EPSILON).unwrap(), 1.0);
        assert!(error_rate(&[], 0.5).is_err());
        assert!(error_rate(&[1.2], 0.5).is_err());
    }

    #[test]
    fn calibrate_examples() {
        let p = [0.9, 0.8, 0.5, 0.05];
        let r = calibrate(&p, 0.25).unwrap();
        assert_eq!(r.lambda, 0.5);
        assert_eq!(r.empirical_error, 0.25);

        let r = calibrate(&p, 0.0).unwrap();
        assert_eq!(r.lambda, 0.05);
        assert_eq!(r.empirical_error, 0.0);

        let r = calibrate(&p, 1.0).unwrap();
        assert_eq!(r.lambda, 1.0);
        assert!(calibrate(&[], 0.1).is_err());
        assert!(calibrate(&p, 1.5).is_err());
    }

    #[test]
    fn epsilon_times_n_rounding_is_exact() {
        // 0.29 * 100 = 28.999999999999996 in binary floating point, but 29/100 ≤ 0.29.
        let probs: Vec<f64> = (1..=100).map(|i| i as f64 / 101.0).collect();
        let r = calibrate(&probs, 0.29).unwrap();
        assert_eq!(r.empirical_error, 0.29);
        assert_eq!(r.lambda, probs[29]);
    }

    #[test]
    fn ties_keep_error_within_budget() {
        let p = [0.2, 0.2, 0.2, 0.9];
        let r = calibrate(&p, 0.25).unwrap();
        // p(2) = 0.2 ties with p(1); nothing is strictly below it.
        assert_eq!(r.lambda, 0.2);
        assert_eq!(r.empirical_error, 0.0);
        assert_eq!(error_rate(&p, r.lambda).unwrap(), r.empirical_error);
    }

    #[test]
    fn predict_set_examples() {
        let p = pv(&[0.6, 0.3, 0.1]);
        assert_eq!(predict_set(&p, 0.25).members(), &[SpeciesId(0), SpeciesId(1)]);
        assert_eq!(predict_set(&p, 0.0).len(), 3);
        assert!(predict_set(&p, 0.95).is_empty());
        assert_eq!(predict_set(&p, 0.25).weights(), &[0.6, 0.3]);
    }

    #[test]
    fn set_size_examples() {
        let preds = vec![pv(&[0.6, 0.3, 0.1]), pv(&[0.2, 0.7, 0.1])];
        assert_eq!(mean_set_size(&preds, 0.0).unwrap().mean, 3.0);
        assert_eq!(mean_set_size(&preds, 0.5).unwrap().mean, 1.0);
    }

    #[test]
    fn ten_point_set_sizes_match_brute_force() {
        let raw: [[f64; 4]; 10] = [
            [0.40, 0.30, 0.20, 0.10],
            [0.05, 0.05, 0.45, 0.45],
            [0.91, 0.03, 0.03, 0.03],
            [0.25, 0.25, 0.25, 0.25],
            [0.10, 0.10, 0.10, 0.70],
            [0.55, 0.09, 0.11, 0.25],
            [0.02, 0.08, 0.60, 0.30],
            [0.33, 0.33, 0.33, 0.01],
            [0.12, 0.18, 0.30, 0.40],
            [0.99, 0.004, 0.003, 0.003],
        ];
        let preds: Vec<_> = raw.iter().map(|r| pv(r)).collect();
        let s = mean_set_size(&preds, 0.1).unwrap();
        // brute force: per-point counts of entries >= 0.1
        let counts = [4, 2, 1, 4, 4, 3, 2, 3, 4, 1];
        let mean = counts.iter().sum::<usize>() as f64 / 10.0;
        assert_eq!(s.mean, mean);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        // sorted: 1 1 2 2 3 3 4 4 4 4 ; q25 at position 2.25 -> 2, median at 4.5 -> 3, q75 at 6.75 -> 4
        assert_eq!(s.q25, 2.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q75, 4.0);
    }

    #[test]
    fn coverage_counts() {
        let preds = vec![pv(&[0.6, 0.3, 0.1]), pv(&[0.2, 0.7, 0.1]), pv(&[0.2, 0.7, 0.1])];
        let (micro, macro_) = set_coverage(&preds, &[SpeciesId(0), SpeciesId(1), SpeciesId(2)], 0.15).unwrap();
        assert!((micro - 2.0 / 3.0).abs() < 1e-15);
        assert!((macro_ - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn calibration_is_self_consistent(
            probs in prop::collection::vec(0.0f64..=1.0, 1..200),
            eps in 0.0f64..=1.0,
        ) {
            let r = calibrate(&probs, eps).unwrap();
            prop_assert_eq!(error_rate(&probs, r.lambda).unwrap(), r.empirical_error);
            prop_assert!(r.empirical_error <= eps);
        }

        #[test]
        fn sets_nest_as_lambda_grows(
            raw in prop::collection::vec(0.001f64..1.0, 2..30),
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let s: f64 = raw.iter().sum();
            let p = ProbabilityVector::new(raw.iter().map(|v| v / s).collect()).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = predict_set(&p, hi);
            let big = predict_set(&p, lo);
            prop_assert!(small.members().iter().all(|m| big.contains(*m)));
        }
    }
}
