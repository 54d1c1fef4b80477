//! ε-insensitive support vector regression trained by sequential minimal
//! optimization on the dual.
//!
//! The dual is written over `2n` variables `(α, α*)` with signs `(+1, -1)`:
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  Σ s_t α_t = 0,  0 ≤ α_t ≤ C
//! Q_ts = s_t s_s K(x_t, x_s),  p = (ε - y, ε + y)
//! ```
//!
//! Each step picks the maximal violating pair and solves the two-variable
//! subproblem in closed form. The reported dual coefficients are `β = α - α*`,
//! so predictions are `Σ β_k K(v_k, x) + b`.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::standardize::Standardizer;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Radial { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Radial { gamma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * sq).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub kernel: Kernel,
    /// Box constraint on each dual coefficient.
    pub c: f64,
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SvrParams {
    pub fn new(kernel: Kernel, c: f64, epsilon: f64) -> Self {
        SvrParams {
            kernel,
            c,
            epsilon,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvrError {
    #[error("invalid SVR hyperparameter: {0}")]
    InvalidParameter(String),
    #[error("{rows} training rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("no training rows")]
    Empty,
    #[error("SMO did not reach tolerance within {iterations} pair updates")]
    NonConvergence { iterations: usize, best: Box<SvrModel> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub standardizer: Standardizer,
    /// Non-zero `α - α*`, aligned with `support_vectors`.
    pub dual_coefs: Vec<f64>,
    /// Standardized training rows with non-zero dual coefficient.
    pub support_vectors: Vec<Vec<f64>>,
    /// Training-row index (caller's order) of each support vector.
    pub support_indices: Vec<usize>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvrModel {
    /// Prediction for a standardized input.
    pub fn decision(&self, z: &[f64]) -> f64 {
        self.dual_coefs
            .iter()
            .zip(&self.support_vectors)
            .map(|(b, v)| b * self.kernel.eval(v, z))
            .sum::<f64>()
            + self.intercept
    }

    pub fn predict_raw(&self, row: &[f64]) -> f64 {
        self.decision(&self.standardizer.transform(row))
    }

    /// `w = Σ β_k v_k` in standardized space; only defined for the linear kernel.
    pub fn primal_weights(&self) -> Option<Vec<f64>> {
        if !matches!(self.kernel, Kernel::Linear) {
            return None;
        }
        let mut w = vec![0.0; self.standardizer.dim()];
        for (b, v) in self.dual_coefs.iter().zip(&self.support_vectors) {
            for (wj, vj) in w.iter_mut().zip(v) {
                *wj += b * vj;
            }
        }
        Some(w)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Fits an ε-SVR on `x` (raw features, standardized internally) and `y`.
///
/// Rows are put into a canonical order before solving, so the fitted model is
/// identical for any permutation of the training rows.
pub fn fit_svr(x: &DMatrix<f64>, y: &[f64], params: &SvrParams) -> Result<SvrModel, SvrError> {
    let (n, dim) = x.shape();
    if n != y.len() {
        return Err(SvrError::LengthMismatch {
            rows: n,
            targets: y.len(),
        });
    }
    if n == 0 {
        return Err(SvrError::Empty);
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(SvrError::InvalidParameter(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    if !(params.epsilon >= 0.0 && params.epsilon.is_finite()) {
        return Err(SvrError::InvalidParameter(format!(
            "epsilon must be non-negative, got {}",
            params.epsilon
        )));
    }
    if let Kernel::Radial { gamma } = params.kernel {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SvrError::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
    }
    if !(params.tol > 0.0) {
        return Err(SvrError::InvalidParameter(format!(
            "tol must be positive, got {}",
            params.tol
        )));
    }

    let raw_rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lexicographic(&raw_rows[a], &raw_rows[b]).then(y[a].total_cmp(&y[b])));
    let sorted = DMatrix::from_fn(n, dim, |i, j| raw_rows[order[i]][j]);
    let standardizer = Standardizer::fit(&sorted);
    let z: Vec<Vec<f64>> = (0..n).map(|i| standardizer.transform(&raw_rows[order[i]])).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let kernel = DMatrix::from_fn(n, n, |i, j| params.kernel.eval(&z[i], &z[j]));
    let dual = solve_dual(&kernel, &ys, params.c, params.epsilon, params.tol, params.max_iter);

    let mut dual_coefs = Vec::new();
    let mut support_vectors = Vec::new();
    let mut support_indices = Vec::new();
    for (k, &beta) in dual.beta.iter().enumerate() {
        if beta != 0.0 {
            dual_coefs.push(beta);
            support_vectors.push(z[k].clone());
            support_indices.push(order[k]);
        }
    }
    let model = SvrModel {
        kernel: params.kernel,
        c: params.c,
        epsilon: params.epsilon,
        standardizer,
        dual_coefs,
        support_vectors,
        support_indices,
        intercept: dual.bias,
        iterations: dual.iterations,
        converged: dual.converged,
    };
    if dual.converged {
        Ok(model)
    } else {
        Err(SvrError::NonConvergence {
            iterations: dual.iterations,
            best: Box::new(model),
        })
    }
}

/// Raw solution of the SVR dual for a precomputed kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// `α - α*` per training row.
    pub beta: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn solve_dual(kernel: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let q = |s: usize, t: usize| sign(s) * sign(t) * kernel[(s % n, t % n)];

    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();

    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Maximal violating pair.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            let (a, g) = (alpha[t], grad[t]);
            if a < c && -g > gmax {
                gmax = -g;
                i_sel = t;
            }
            if a > 0.0 && g > gmax2 {
                gmax2 = g;
                j_sel = t;
            }
        }
        for t in n..l {
            let (a, g) = (alpha[t], grad[t]);
            if a > 0.0 && g > gmax {
                gmax = g;
                i_sel = t;
            }
            if a < c && -g > gmax2 {
                gmax2 = -g;
                j_sel = t;
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let old_i = alpha[i];
        let old_j = alpha[j];
        let qii = q(i, i);
        let qjj = q(j, j);
        let qij = q(i, j);
        if sign(i) != sign(j) {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let ci = sign(i) * (alpha[i] - old_i);
        let cj = sign(j) * (alpha[j] - old_j);
        let col_i = kernel.column(i % n);
        let col_j = kernel.column(j % n);
        let (pos, neg) = grad.split_at_mut(n);
        for k in 0..n {
            let v = col_i[k] * ci + col_j[k] * cj;
            pos[k] += v;
            neg[k] -= v;
        }
    }

    // Bias: average over free variables, else the midpoint of the feasible range.
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..l {
        let s = sign(t);
        let yg = s * grad[t];
        if at_upper(alpha[t]) {
            if s < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if s > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    };
    let beta = (0..n).map(|k| alpha[k] - alpha[k + n]).collect();
    DualSolution {
        beta,
        bias: -rho,
        iterations,
        converged,
    }
}
