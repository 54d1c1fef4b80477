//! Demand models for add-on sales: ordinary least squares, linear-kernel SVR and
//! radial-kernel SVR over `(g, [Wg], h, p)`.

pub mod features;
pub mod ols;
pub mod standardize;
pub mod svr;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{build_features, build_features_with_sources, FeatureMatrix, FeatureSpec};
pub use ols::{least_squares, OlsError, OlsFit};
pub use standardize::Standardizer;
pub use svr::{fit_svr, Kernel, SvrError, SvrModel, SvrParams};

use crate::geo::{GeoError, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("site `{site}` is missing {field}")]
    MissingField { site: String, field: &'static str },
    #[error(transparent)]
    Ols(#[from] OlsError),
    #[error(transparent)]
    Svr(#[from] SvrError),
    #[error("model expects {expected} features, got {got}")]
    FeatureDimensionMismatch { expected: usize, got: usize },
    #[error("{family} requires hyperparameter `{name}`")]
    MissingHyperparameter { family: ModelFamily, name: &'static str },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Linear regression.
    Ols,
    LinearSvr,
    RadialSvr,
}

impl ModelFamily {
    /// Ordered from simplest to most complex; used to break ties.
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Ols, ModelFamily::LinearSvr, ModelFamily::RadialSvr];

    pub fn short(self) -> &'static str {
        match self {
            ModelFamily::Ols => "LR",
            ModelFamily::LinearSvr => "LK",
            ModelFamily::RadialSvr => "RK",
        }
    }

    pub fn is_svr(self) -> bool {
        !matches!(self, ModelFamily::Ols)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Ols => "ols",
            ModelFamily::LinearSvr => "linear_svr",
            ModelFamily::RadialSvr => "radial_svr",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ols" | "lr" | "linear_regression" => Ok(ModelFamily::Ols),
            "linear_svr" | "lk" | "linear" => Ok(ModelFamily::LinearSvr),
            "radial_svr" | "rk" | "radial" => Ok(ModelFamily::RadialSvr),
            other => Err(format!("unknown model family `{other}`")),
        }
    }
}

/// SVR hyperparameters. `gamma` is only used by the radial kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Option<f64>,
}

/// Solver knobs shared by every SVR fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: svr::DEFAULT_TOL,
            max_iter: svr::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelKind {
    Ols(OlsFit),
    Svr(SvrModel),
}

/// A fitted add-on demand model plus the feature layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub spec: FeatureSpec,
    pub kind: ModelKind,
}

/// Raw-space affine form `intercept + slopes · x` of a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl DemandModel {
    pub fn family(&self) -> ModelFamily {
        match &self.kind {
            ModelKind::Ols(_) => ModelFamily::Ols,
            ModelKind::Svr(m) => match m.kernel {
                Kernel::Linear => ModelFamily::LinearSvr,
                Kernel::Radial { .. } => ModelFamily::RadialSvr,
            },
        }
    }

    /// Predicted add-on sales for one raw feature row. Negative values are
    /// returned as-is.
    pub fn predict_site(&self, row: &[f64]) -> Result<f64, ModelError> {
        let expected = self.spec.dim();
        if row.len() != expected {
            return Err(ModelError::FeatureDimensionMismatch {
                expected,
                got: row.len(),
            });
        }
        Ok(match &self.kind {
            ModelKind::Ols(fit) => fit.predict(row),
            ModelKind::Svr(m) => m.predict_raw(row),
        })
    }

    /// Per-member predictions when exactly `members` offer the add-on.
    pub fn predict_members(&self, network: &Network, members: &[usize]) -> Result<Vec<f64>, ModelError> {
        let features = build_features(network, members, self.spec)?;
        (0..members.len())
            .map(|k| self.predict_site(&features.row(k)))
            .collect()
    }

    /// Total predicted add-on sales `f̂(members)`. Every optimizer evaluates
    /// candidate sets through this function.
    pub fn predict_network(&self, network: &Network, members: &[usize]) -> Result<f64, ModelError> {
        Ok(self.predict_members(network, members)?.iter().sum())
    }

    /// Raw-space affine coefficients, with SVR standardization folded back in.
    /// `None` for the radial kernel.
    pub fn affine_form(&self) -> Option<AffineForm> {
        match &self.kind {
            ModelKind::Ols(fit) => Some(AffineForm {
                intercept: fit.intercept,
                slopes: fit.slopes.clone(),
            }),
            ModelKind::Svr(m) => {
                let w = m.primal_weights()?;
                let st = &m.standardizer;
                let slopes: Vec<f64> = w.iter().zip(&st.scales).map(|(wj, s)| wj / s).collect();
                let shift: f64 = slopes.iter().zip(&st.means).map(|(a, mu)| a * mu).sum();
                Some(AffineForm {
                    intercept: m.intercept - shift,
                    slopes,
                })
            }
        }
    }

    /// Fits `family` on raw feature rows `x` and targets `y`.
    pub fn fit(
        family: ModelFamily,
        spec: FeatureSpec,
        x: &DMatrix<f64>,
        y: &[f64],
        hyper: Option<&Hyperparams>,
        settings: SolverSettings,
    ) -> Result<DemandModel, ModelError> {
        if x.ncols() != spec.dim() {
            return Err(ModelError::FeatureDimensionMismatch {
                expected: spec.dim(),
                got: x.ncols(),
            });
        }
        let kind = match family {
            ModelFamily::Ols => ModelKind::Ols(least_squares(x, y)?),
            ModelFamily::LinearSvr | ModelFamily::RadialSvr => {
                let h = hyper.ok_or(ModelError::MissingHyperparameter { family, name: "c" })?;
                let kernel = if family == ModelFamily::RadialSvr {
                    let gamma = h
                        .gamma
                        .ok_or(ModelError::MissingHyperparameter { family, name: "gamma" })?;
                    Kernel::Radial { gamma }
                } else {
                    Kernel::Linear
                };
                let params = SvrParams {
                    kernel,
                    c: h.c,
                    epsilon: h.epsilon,
                    tol: settings.tol,
                    max_iter: settings.max_iter,
                };
                ModelKind::Svr(fit_svr(x, y, &params)?)
            }
        };
        Ok(DemandModel { spec, kind })
    }

    /// Convenience: build features over the active sites of `network` and fit.
    pub fn fit_on_active(
        family: ModelFamily,
        spec: FeatureSpec,
        network: &Network,
        hyper: Option<&Hyperparams>,
        settings: SolverSettings,
    ) -> Result<DemandModel, ModelError> {
        let active = network.active();
        let features = build_features(network, &active, spec)?;
        let y = features.required_targets(network)?;
        Self::fit(family, spec, &features.rows, &y, hyper, settings)
    }

    /// Same model with every output multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DemandModel {
        let kind = match &self.kind {
            ModelKind::Ols(fit) => ModelKind::Ols(OlsFit {
                intercept: fit.intercept * factor,
                slopes: fit.slopes.iter().map(|b| b * factor).collect(),
            }),
            ModelKind::Svr(m) => {
                let mut m = m.clone();
                m.intercept *= factor;
                for b in &mut m.dual_coefs {
                    *b *= factor;
                }
                ModelKind::Svr(m)
            }
        };
        DemandModel { spec: self.spec, kind }
    }
}
