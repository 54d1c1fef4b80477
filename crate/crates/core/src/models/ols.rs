//! Ordinary least squares with an intercept, solved by Householder QR on a
//! column-equilibrated design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlsError {
    #[error("design matrix is singular (column {0} is linearly dependent)")]
    SingularDesign(usize),
    #[error("need at least {needed} rows for {columns} columns plus intercept, got {rows}")]
    TooFewRows { rows: usize, columns: usize, needed: usize },
    #[error("{rows} design rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
}

/// Fitted `y ≈ intercept + slopes · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl OlsFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn residuals(&self, x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let fitted = self.intercept + self.slopes.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum::<f64>();
                y[i] - fitted
            })
            .collect()
    }
}

const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of `y` on the columns of `x` plus an intercept.
pub fn least_squares(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, OlsError> {
    let (rows, cols) = x.shape();
    if rows != y.len() {
        return Err(OlsError::LengthMismatch { rows, targets: y.len() });
    }
    if rows < cols + 1 {
        return Err(OlsError::TooFewRows {
            rows,
            columns: cols,
            needed: cols + 1,
        });
    }
    let p = cols + 1;
    let mut design = DMatrix::from_fn(rows, p, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let mut norms = vec![1.0; p];
    for (j, norm) in norms.iter_mut().enumerate() {
        let n = design.column(j).norm();
        if n == 0.0 {
            return Err(OlsError::SingularDesign(j));
        }
        *norm = n;
        design.column_mut(j).scale_mut(1.0 / n);
    }
    let qr = design.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..p {
        if r[(j, j)].abs() <= RANK_TOL * max_diag {
            return Err(OlsError::SingularDesign(j));
        }
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r.solve_upper_triangular(&qty).ok_or(OlsError::SingularDesign(0))?;
    let coef: Vec<f64> = beta.iter().zip(&norms).map(|(b, n)| b / n).collect();
    Ok(OlsFit {
        intercept: coef[0],
        slopes: coef[1..].to_vec(),
    })
}
