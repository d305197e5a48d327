//! Spearman rank correlation between regional indicator summaries.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{AtlasError, Result};

/// Largest `n` for which the p-value is computed by full permutation.
pub const EXACT_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    ExactPermutation,
    TApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

/// 1-based ranks; ties receive the average of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Heap's algorithm over all permutations of `b`, counting those whose
/// correlation with `a` is at least as extreme as `observed`.
fn exact_p_value(a: &[f64], b: &[f64], observed: f64) -> f64 {
    let n = b.len();
    let mut perm = b.to_vec();
    let mut c = vec![0usize; n];
    let target = observed.abs() - 1e-12;
    let mut extreme = u64::from(pearson(a, &perm).abs() >= target);
    let mut total = 1u64;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += 1;
            if pearson(a, &perm).abs() >= target {
                extreme += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(AtlasError::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
            context: "spearman inputs",
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(AtlasError::InvalidArgument(format!(
            "spearman needs at least 3 pairs, got {n}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AtlasError::NonFinite("spearman input"));
    }
    let constant = |v: &[f64]| v.iter().all(|e| *e == v[0]);
    if constant(x) || constant(y) {
        return Err(AtlasError::UndefinedCorrelation("constant input"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry);
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p_value(&rx, &ry, rho), PValueMethod::ExactPermutation)
    } else {
        let p = if (1.0 - rho.abs()) < 1e-15 {
            0.0
        } else {
            let df = (n - 2) as f64;
            let t = rho * (df / (1.0 - rho * rho)).sqrt();
            let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
            (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
        };
        (p, PValueMethod::TApproximation)
    };
    Ok(Spearman {
        rho,
        p_value,
        n,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn perfect_monotone() {
        let s = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 100.0]).unwrap();
        assert_eq!(s.rho, 1.0);
        // identity and reversal are the only permutations with |rho| = 1
        assert!((s.p_value - 2.0 / 120.0).abs() < 1e-12);
        assert_eq!(s.method, PValueMethod::ExactPermutation);
    }

    #[test]
    fn hand_computed_rho() {
        // ranks x: 1 2 3 4, ranks y: 2 1 4 3 -> d² sum = 4 -> rho = 1 - 6*4/(4*15) = 0.6
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((s.rho - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(AtlasError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn large_sample_uses_t() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = (0..30).map(|i| f64::from((i * 7) % 30)).collect();
        let s = spearman(&x, &y).unwrap();
        assert_eq!(s.method, PValueMethod::TApproximation);
        assert!(s.p_value > 0.0 && s.p_value <= 1.0);
        let perfect = spearman(&x, &x).unwrap();
        assert_eq!(perfect.p_value, 0.0);
    }

    /// Brute-force oracle: sum of squared rank differences on tie-free data.
    fn rho_by_d2(x: &[f64], y: &[f64]) -> f64 {
        let rx = average_ranks(x);
        let ry = average_ranks(y);
        let n = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    proptest! {
        #[test]
        fn matches_d2_formula_without_ties(perm in Just((0..8).collect::<Vec<u32>>()).prop_shuffle()) {
            let x: Vec<f64> = (0..8).map(f64::from).collect();
            let y: Vec<f64> = perm.iter().map(|&v| f64::from(v)).collect();
            let s = spearman(&x, &y).unwrap();
            prop_assert!((s.rho - rho_by_d2(&x, &y)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.p_value));
        }

        #[test]
        fn symmetric_and_bounded(x in prop::collection::vec(-5i32..5, 12), y in prop::collection::vec(-5i32..5, 12)) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&y, &x)) {
                prop_assert!((a.rho - b.rho).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&a.rho));
            }
        }
    }
}
