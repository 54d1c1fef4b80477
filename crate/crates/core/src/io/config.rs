//! Run configuration. A TOML file and command-line flags share one flat key
//! space; flags override file values, which override defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::experiment::SimConfig;
use crate::geo::DistanceMetric;
use crate::models::{ModelFamily, SolverSettings};
use crate::moran::DEFAULT_PERMUTATIONS;
use crate::optimize::SolverChoice;
use crate::select::{CvPlan, Grid};

/// Whether demand models include the spatial-lag feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeaturePolicy {
    /// Include the lag iff the base-sales Moran test is significant at `alpha`.
    #[default]
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "force-3")]
    Force3,
    #[serde(rename = "force-4")]
    Force4,
}

impl FromStr for FeaturePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "auto" => Ok(FeaturePolicy::Auto),
            "force-3" | "3" => Ok(FeaturePolicy::Force3),
            "force-4" | "4" => Ok(FeaturePolicy::Force4),
            other => Err(format!("unknown feature policy `{other}` (auto, force-3, force-4)")),
        }
    }
}

impl fmt::Display for FeaturePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeaturePolicy::Auto => "auto",
            FeaturePolicy::Force3 => "force-3",
            FeaturePolicy::Force4 => "force-4",
        })
    }
}

/// Every key is optional; unset keys fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sites: Option<PathBuf>,
    pub region: Option<String>,
    pub metric: Option<DistanceMetric>,
    pub feature_policy: Option<FeaturePolicy>,
    pub alpha: Option<f64>,
    pub permutations: Option<usize>,
    pub cv_repeats: Option<usize>,
    pub cv_folds: Option<usize>,
    pub families: Option<Vec<ModelFamily>>,
    pub c_values: Option<Vec<f64>>,
    pub epsilon_values: Option<Vec<f64>>,
    pub gamma_values: Option<Vec<f64>>,
    pub svr_tol: Option<f64>,
    pub svr_max_iter: Option<usize>,
    pub k: Option<usize>,
    pub solver: Option<SolverChoice>,
    pub solver_time_limit: Option<f64>,
    pub s_values: Option<Vec<f64>>,
    pub draws: Option<usize>,
    pub k_max: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        ConfigFile { $($field: $top.$field.or($base.$field)),* }
    };
}

impl ConfigFile {
    /// Paths inside the file are resolved relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = super::read_text(path)?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| IoError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.sites, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `other`'s set keys win.
    pub fn overlaid_with(self, other: ConfigFile) -> ConfigFile {
        let base = self;
        let top = other;
        overlay!(base, top; sites, region, metric, feature_policy, alpha, permutations, cv_repeats, cv_folds,
            families, c_values, epsilon_values, gamma_values, svr_tol, svr_max_iter, k, solver,
            solver_time_limit, s_values, draws, k_max, out, seed)
    }

    pub fn resolve(self) -> Result<RunConfig, IoError> {
        let grid = Grid::default();
        let sim = SimConfig::standard(0);
        let plan = CvPlan::full(0);
        let settings = SolverSettings::default();
        let cfg = RunConfig {
            sites: self.sites,
            region: self.region.unwrap_or_else(|| "region".into()),
            metric: self.metric.unwrap_or_default(),
            feature_policy: self.feature_policy.unwrap_or_default(),
            alpha: self.alpha.unwrap_or(0.05),
            permutations: self.permutations.unwrap_or(DEFAULT_PERMUTATIONS),
            cv_repeats: self.cv_repeats.unwrap_or(plan.repeats),
            cv_folds: self.cv_folds.unwrap_or(plan.folds),
            families: self.families.unwrap_or_else(|| ModelFamily::ALL.to_vec()),
            c_values: self.c_values.unwrap_or(grid.c_values),
            epsilon_values: self.epsilon_values.unwrap_or(grid.epsilon_values),
            gamma_values: self.gamma_values.unwrap_or(grid.gamma_values),
            svr_tol: self.svr_tol.unwrap_or(settings.tol),
            svr_max_iter: self.svr_max_iter.unwrap_or(settings.max_iter),
            k: self.k.unwrap_or(10),
            solver: self.solver.unwrap_or(SolverChoice::Auto),
            solver_time_limit: self.solver_time_limit.unwrap_or(60.0),
            s_values: self.s_values.unwrap_or(sim.s_values),
            draws: self.draws.unwrap_or(sim.draws),
            k_max: self.k_max.unwrap_or(sim.k_max),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully resolved settings for a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sites: Option<PathBuf>,
    pub region: String,
    pub metric: DistanceMetric,
    pub feature_policy: FeaturePolicy,
    pub alpha: f64,
    pub permutations: usize,
    pub cv_repeats: usize,
    pub cv_folds: usize,
    pub families: Vec<ModelFamily>,
    pub c_values: Vec<f64>,
    pub epsilon_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub svr_tol: f64,
    pub svr_max_iter: usize,
    pub k: usize,
    pub solver: SolverChoice,
    /// Seconds.
    pub solver_time_limit: f64,
    pub s_values: Vec<f64>,
    pub draws: usize,
    pub k_max: usize,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.cv_folds < 2 || self.cv_repeats == 0 {
            return bad("cv_folds must be >= 2 and cv_repeats >= 1".into());
        }
        if self.families.is_empty() {
            return bad("families must not be empty".into());
        }
        if self.k == 0 || self.k_max == 0 || self.draws == 0 {
            return bad("k, k_max and draws must be positive".into());
        }
        if !(self.solver_time_limit > 0.0) {
            return bad("solver_time_limit must be positive".into());
        }
        if let Err(m) = self.grid().validate(ModelFamily::RadialSvr) {
            return bad(m);
        }
        if let Some(p) = &self.sites {
            if !p.is_file() {
                return bad(format!("sites file {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid {
            c_values: self.c_values.clone(),
            epsilon_values: self.epsilon_values.clone(),
            gamma_values: self.gamma_values.clone(),
        }
    }

    pub fn cv_plan(&self, seed: u64) -> CvPlan {
        CvPlan {
            repeats: self.cv_repeats,
            folds: self.cv_folds,
            seed,
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            s_values: self.s_values.clone(),
            draws: self.draws,
            k_max: self.k_max,
            seed,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.svr_tol,
            max_iter: self.svr_max_iter,
        }
    }
}
