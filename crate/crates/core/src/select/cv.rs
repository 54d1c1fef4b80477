//! Repeated k-fold cross-validation over the active sites.
//!
//! Each fold fits on the training sites only. With the lag feature enabled, a
//! training site's lag is taken over the other training sites and a held-out
//! site's lag over the training sites, so held-out sales never leak into any
//! feature.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{mape, rmse, MetricError};
use crate::geo::Network;
use crate::models::{
    build_features, build_features_with_sources, DemandModel, FeatureSpec, Hyperparams, ModelError, ModelFamily,
    SolverSettings,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub repeats: usize,
    pub folds: usize,
    pub seed: u64,
}

impl CvPlan {
    /// 50 repeats of 10-fold CV.
    pub fn full(seed: u64) -> Self {
        CvPlan {
            repeats: 50,
            folds: 10,
            seed,
        }
    }

    /// 5 repeats of 5-fold CV, for quick runs.
    pub fn quick(seed: u64) -> Self {
        CvPlan {
            repeats: 5,
            folds: 5,
            seed,
        }
    }

    /// Test-fold positions (indices into the member list) for one repeat.
    /// Every position lands in exactly one fold and fold sizes differ by at most one.
    pub fn folds_for_repeat(&self, n: usize, repeat: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(self.seed, rng::CV_FOLDS, &[repeat as u64]));
        let mut folds = vec![Vec::with_capacity(n / self.folds + 1); self.folds];
        for (k, pos) in order.into_iter().enumerate() {
            folds[k % self.folds].push(pos);
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        folds
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CvError {
    #[error("invalid CV plan: {0}")]
    InvalidPlan(String),
    #[error("{rows} rows cannot be split into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mean and standard deviation (across repeats) of the fold-averaged metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub mean_mape: f64,
    pub sd_mape: f64,
    pub repeat_rmse: Vec<f64>,
    pub repeat_mape: Vec<f64>,
}

/// What one fold actually used; lets callers audit the no-leakage rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldTrace {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Sites whose sales entered the held-out sites' lag feature.
    pub test_lag_sources: Vec<usize>,
}

/// What to cross-validate.
#[derive(Debug, Clone, Copy)]
pub struct CvTask<'a> {
    pub network: &'a Network,
    pub members: &'a [usize],
    pub family: ModelFamily,
    pub spec: FeatureSpec,
    pub hyper: Option<&'a Hyperparams>,
    pub settings: SolverSettings,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

pub fn cross_validate(task: &CvTask<'_>, plan: &CvPlan) -> Result<CvSummary, CvError> {
    cross_validate_traced(task, plan).map(|(summary, _)| summary)
}

pub fn cross_validate_traced(task: &CvTask<'_>, plan: &CvPlan) -> Result<(CvSummary, Vec<FoldTrace>), CvError> {
    if plan.folds < 2 {
        return Err(CvError::InvalidPlan(format!(
            "need at least 2 folds, got {}",
            plan.folds
        )));
    }
    if plan.repeats == 0 {
        return Err(CvError::InvalidPlan("need at least one repeat".into()));
    }
    let n = task.members.len();
    if n < plan.folds {
        return Err(CvError::TooFewRows {
            rows: n,
            folds: plan.folds,
        });
    }

    let per_repeat: Vec<Result<(f64, f64, Vec<FoldTrace>), CvError>> = (0..plan.repeats)
        .into_par_iter()
        .map(|repeat| run_repeat(task, plan, repeat))
        .collect();

    let mut repeat_rmse = Vec::with_capacity(plan.repeats);
    let mut repeat_mape = Vec::with_capacity(plan.repeats);
    let mut traces = Vec::new();
    for r in per_repeat {
        let (r_rmse, r_mape, t) = r?;
        repeat_rmse.push(r_rmse);
        repeat_mape.push(r_mape);
        traces.extend(t);
    }
    let (mean_rmse, sd_rmse) = mean_sd(&repeat_rmse);
    let (mean_mape, sd_mape) = mean_sd(&repeat_mape);
    Ok((
        CvSummary {
            mean_rmse,
            sd_rmse,
            mean_mape,
            sd_mape,
            repeat_rmse,
            repeat_mape,
        },
        traces,
    ))
}

fn run_repeat(task: &CvTask<'_>, plan: &CvPlan, repeat: usize) -> Result<(f64, f64, Vec<FoldTrace>), CvError> {
    let n = task.members.len();
    let folds = plan.folds_for_repeat(n, repeat);
    let mut fold_rmse = Vec::with_capacity(plan.folds);
    let mut fold_mape = Vec::with_capacity(plan.folds);
    let mut traces = Vec::with_capacity(plan.folds);
    for (fold, test_pos) in folds.iter().enumerate() {
        let mut in_test = vec![false; n];
        for &p in test_pos {
            in_test[p] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&p| !in_test[p]).map(|p| task.members[p]).collect();
        let test: Vec<usize> = test_pos.iter().map(|&p| task.members[p]).collect();
        let wrap = |source: ModelError| CvError::Fold { repeat, fold, source };

        let train_x = build_features(task.network, &train, task.spec).map_err(wrap)?;
        let train_y = train_x.required_targets(task.network).map_err(wrap)?;
        let model = DemandModel::fit(
            task.family,
            task.spec,
            &train_x.rows,
            &train_y,
            task.hyper,
            task.settings,
        )
        .map_err(wrap)?;

        let test_x = build_features_with_sources(task.network, &test, &train, task.spec).map_err(wrap)?;
        let test_y = test_x.required_targets(task.network).map_err(wrap)?;
        let predictions = (0..test.len())
            .map(|k| model.predict_site(&test_x.row(k)))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(wrap)?;
        fold_rmse.push(rmse(&predictions, &test_y)?);
        fold_mape.push(mape(&predictions, &test_y)?);
        traces.push(FoldTrace {
            repeat,
            fold,
            train: train.clone(),
            test,
            test_lag_sources: if task.spec.use_spatial_lag { train } else { Vec::new() },
        });
    }
    let k = plan.folds as f64;
    Ok((
        fold_rmse.iter().sum::<f64>() / k,
        fold_mape.iter().sum::<f64>() / k,
        traces,
    ))
}
