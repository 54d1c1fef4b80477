//! Global Moran's I with analytic (normality) and permutation significance tests.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::models::ols::{least_squares, OlsError};
use crate::rng;

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const MIN_PERMUTATIONS: usize = 99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoranError {
    #[error("variable is constant; Moran's I is undefined")]
    ConstantVector,
    #[error("spatial weights sum to zero")]
    EmptyWeights,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("weight matrix is {rows}x{cols} but the variable has {len} entries")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
    #[error("at least {MIN_PERMUTATIONS} permutations required, got {0}")]
    TooFewPermutations(usize),
    #[error("residual regression failed: {0}")]
    SingularDesign(#[from] OlsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Upper tail: positive spatial autocorrelation (clustering).
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoranMethod {
    Analytic,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub statistic: f64,
    pub expected: f64,
    /// Normality-assumption variance for the analytic test, empirical variance
    /// of the reference distribution for the permutation test.
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
    pub method: MoranMethod,
    pub alternative: Alternative,
    pub permutations: usize,
}

struct Centered {
    dev: Vec<f64>,
    sum_sq: f64,
    s0: f64,
}

fn center(weights: &DMatrix<f64>, x: &[f64], min_n: usize) -> Result<Centered, MoranError> {
    let n = x.len();
    if weights.nrows() != n || weights.ncols() != n {
        return Err(MoranError::DimensionMismatch {
            rows: weights.nrows(),
            cols: weights.ncols(),
            len: n,
        });
    }
    if n < min_n {
        return Err(MoranError::TooFewObservations { needed: min_n, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sum_sq: f64 = dev.iter().map(|d| d * d).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = 4.0 * f64::EPSILON * scale;
    if sum_sq <= n as f64 * noise * noise {
        return Err(MoranError::ConstantVector);
    }
    let s0 = weights.sum();
    if s0 == 0.0 {
        return Err(MoranError::EmptyWeights);
    }
    Ok(Centered { dev, sum_sq, s0 })
}

fn cross_product(weights: &DMatrix<f64>, dev: &[f64]) -> f64 {
    let n = dev.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += weights[(i, j)] * dev[j];
        }
        total += dev[i] * row;
    }
    total
}

fn statistic(weights: &DMatrix<f64>, c: &Centered, dev: &[f64]) -> f64 {
    let n = dev.len() as f64;
    (n / c.s0) * cross_product(weights, dev) / c.sum_sq
}

/// Moran's I of `x` under weights `weights` (both indexed the same way).
pub fn morans_i(weights: &DMatrix<f64>, x: &[f64]) -> Result<f64, MoranError> {
    let c = center(weights, x, 2)?;
    Ok(statistic(weights, &c, &c.dev))
}

fn upper_tail(z: f64) -> f64 {
    Normal::standard().sf(z)
}

fn p_from_z(z: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Greater => upper_tail(z),
        Alternative::TwoSided => (2.0 * upper_tail(z.abs())).min(1.0),
    }
}

/// Analytic test under the normality assumption.
pub fn morans_test_analytic(
    weights: &DMatrix<f64>,
    x: &[f64],
    alternative: Alternative,
) -> Result<MoranResult, MoranError> {
    let c = center(weights, x, 3)?;
    let n = x.len();
    let nf = n as f64;
    let observed = statistic(weights, &c, &c.dev);

    let s0 = c.s0;
    let mut s1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = weights[(i, j)] + weights[(j, i)];
            s1 += s * s;
        }
    }
    s1 *= 0.5;
    let s2: f64 = (0..n)
        .map(|i| {
            let t = weights.row(i).sum() + weights.column(i).sum();
            t * t
        })
        .sum();

    let expected = -1.0 / (nf - 1.0);
    let variance = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf - 1.0) * (nf + 1.0) * s0 * s0) - expected * expected;
    let z = (observed - expected) / variance.sqrt();
    Ok(MoranResult {
        statistic: observed,
        expected,
        variance,
        z,
        p_value: p_from_z(z, alternative),
        method: MoranMethod::Analytic,
        alternative,
        permutations: 0,
    })
}

/// Permutation test: `x` is relabeled across sites `permutations` times.
///
/// One-sided p is `(1 + #{I_perm >= I_obs}) / (1 + permutations)`. Permutation
/// `k` always draws from stream `k` of the seed, so the result does not depend
/// on evaluation order.
pub fn morans_test_permutation(
    weights: &DMatrix<f64>,
    x: &[f64],
    permutations: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<MoranResult, MoranError> {
    if permutations < MIN_PERMUTATIONS {
        return Err(MoranError::TooFewPermutations(permutations));
    }
    let c = center(weights, x, 2)?;
    let n = x.len() as f64;
    let observed = statistic(weights, &c, &c.dev);
    let reference: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut dev = c.dev.clone();
            dev.shuffle(&mut rng::substream(seed, rng::PERMUTATION, &[k as u64]));
            statistic(weights, &c, &dev)
        })
        .collect();

    let expected = -1.0 / (n - 1.0);
    let mean = reference.iter().sum::<f64>() / permutations as f64;
    let variance = reference.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (permutations as f64 - 1.0);
    let z = if variance > 0.0 {
        (observed - mean) / variance.sqrt()
    } else {
        0.0
    };
    // Relabelings that reproduce the observed arrangement must count as ties.
    let slack = 1e-12 * observed.abs().max(1e-300);
    let extreme = match alternative {
        Alternative::Greater => reference.iter().filter(|&&v| v >= observed - slack).count(),
        Alternative::TwoSided => {
            let gap = (observed - mean).abs();
            reference.iter().filter(|&&v| (v - mean).abs() >= gap - slack).count()
        }
    };
    let p_value = (1 + extreme) as f64 / (1 + permutations) as f64;
    Ok(MoranResult {
        statistic: observed,
        expected,
        variance,
        z,
        p_value,
        method: MoranMethod::Permutation,
        alternative,
        permutations,
    })
}

/// Moran permutation test on the residuals of an OLS fit (with intercept) of `y`
/// on the columns of `x`.
pub fn residual_moran(
    weights: &DMatrix<f64>,
    y: &[f64],
    x: &DMatrix<f64>,
    permutations: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<MoranResult, MoranError> {
    let fit = least_squares(x, y)?;
    let residuals = fit.residuals(x, y);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    if rss <= 1e-20 * total || total == 0.0 {
        return Err(MoranError::ConstantVector);
    }
    morans_test_permutation(weights, &residuals, permutations, seed, alternative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                1.0 / ((pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1))
            }
        })
    }

    #[test]
    fn two_sites_give_minus_one() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]);
        assert_eq!(morans_i(&w, &[3.0, 11.0]).unwrap(), -1.0);
        let r = morans_test_permutation(&w, &[3.0, 11.0], 99, 1, Alternative::Greater).unwrap();
        assert_eq!(r.statistic, -1.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_weights(7, &mut rng);
        let mut x = vec![4.0; 7];
        x[2] = 10.0;
        let mean = x.iter().sum::<f64>() / 7.0;
        let mut num = 0.0;
        let mut s0 = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                num += w[(i, j)] * (x[i] - mean) * (x[j] - mean);
                s0 += w[(i, j)];
            }
        }
        let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        assert_relative_eq!(morans_i(&w, &x).unwrap(), 7.0 / s0 * num / den, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let w = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(morans_i(&w, &[2.0, 2.0, 2.0]), Err(MoranError::ConstantVector));
        let zero = DMatrix::zeros(3, 3);
        assert_eq!(morans_i(&zero, &[1.0, 2.0, 3.0]), Err(MoranError::EmptyWeights));
        assert!(matches!(
            morans_i(&w, &[1.0, 2.0]),
            Err(MoranError::DimensionMismatch { .. })
        ));
        assert_eq!(
            morans_test_permutation(&w, &[1.0, 2.0, 3.0], 10, 0, Alternative::Greater),
            Err(MoranError::TooFewPermutations(10))
        );
    }

    #[test]
    fn analytic_expected_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_weights(10, &mut rng);
        let x: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let r = morans_test_analytic(&w, &x, Alternative::Greater).unwrap();
        assert_relative_eq!(r.expected, -1.0 / 9.0, max_relative = 1e-15);
        assert!(r.variance > 0.0);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn permutation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_weights(20, &mut rng);
        let x: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        let a = morans_test_permutation(&w, &x, 199, 5, Alternative::Greater).unwrap();
        let b = morans_test_permutation(&w, &x, 199, 5, Alternative::Greater).unwrap();
        assert_eq!(a, b);
        let two = morans_test_permutation(&w, &x, 199, 5, Alternative::TwoSided).unwrap();
        assert!((0.0..=1.0).contains(&two.p_value));
    }

    #[test]
    fn residuals_of_exact_fit_are_constant() {
        let w = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { 1.0 / (1.0 + (i + j) as f64) });
        let g = [1.0, 4.0, 2.0, 8.0, 5.0];
        let y: Vec<f64> = g.iter().map(|v| 3.0 * v + 2.0).collect();
        let x = DMatrix::from_column_slice(5, 1, &g);
        assert_eq!(
            residual_moran(&w, &y, &x, 99, 0, Alternative::Greater),
            Err(MoranError::ConstantVector)
        );
        let collinear = DMatrix::from_fn(5, 2, |i, _| g[i]);
        assert!(matches!(
            residual_moran(&w, &y, &collinear, 99, 0, Alternative::Greater),
            Err(MoranError::SingularDesign(_))
        ));
    }

    proptest! {
        #[test]
        fn affine_and_scale_invariance(seed in 0u64..500, a in 0.1f64..50.0, neg in any::<bool>(), b in -100.0f64..100.0, c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_weights(12, &mut rng);
            let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 10.0).collect();
            let a = if neg { -a } else { a };
            let base = morans_i(&w, &x).unwrap();
            let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((morans_i(&w, &moved).unwrap() - base).abs() < 1e-9);
            let scaled = &w * c;
            prop_assert!((morans_i(&scaled, &x).unwrap() - base).abs() < 1e-9);
        }
    }
}
