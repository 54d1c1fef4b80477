//! Simulated-demand experiments comparing optimized expansions against the
//! top-`K`-by-base-sales baseline.
//!
//! Candidate base sales are drawn from `N(μ, σ²)` with `μ` the mean active-site
//! base sales and `σ = 4^s`, floored at the smallest active-site value. For each
//! draw and budget `K`, the gain is `(z_e − z_b) / (z_b − z⁰) · 100` where `z⁰`
//! is the predicted total of the current network, `z_b` the baseline expansion
//! and `z_e` the optimized one. Every `z` is a `predict_network` call on the
//! simulated network.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, Network};
use crate::models::{DemandModel, ModelError};
use crate::optimize::{
    greedy_order, solve_exact_quadratic, ExactOptions, ExpansionProblem, ModelObjective, Objective, OptimizeError,
    SolverChoice, SolverKind,
};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("network has no active sites")]
    NoActiveSites,
    #[error("network has no candidate sites")]
    NoCandidates,
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Exponents `s`; the draw standard deviation is `4^s`.
    pub s_values: Vec<f64>,
    pub draws: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl SimConfig {
    /// `s ∈ {2, 4, 6}`, 10 draws, `K ∈ 1..=20`.
    pub fn standard(seed: u64) -> Self {
        SimConfig {
            s_values: vec![2.0, 4.0, 6.0],
            draws: 10,
            k_max: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.s_values.is_empty() {
            return Err(ExperimentError::InvalidConfig("no s values".into()));
        }
        if self.s_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ExperimentError::InvalidConfig("s values must be non-negative".into()));
        }
        if self.draws == 0 {
            return Err(ExperimentError::InvalidConfig("need at least one draw".into()));
        }
        if self.k_max == 0 {
            return Err(ExperimentError::InvalidConfig("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn sigma_for(s: f64) -> f64 {
    4f64.powf(s)
}

/// Mean and minimum base sales over the active sites.
pub fn active_base_stats(network: &Network) -> Result<(f64, f64), ExperimentError> {
    let active = network.active();
    if active.is_empty() {
        return Err(ExperimentError::NoActiveSites);
    }
    let g: Vec<f64> = active
        .iter()
        .map(|&i| {
            network.site(i).base_sales.ok_or_else(|| {
                ExperimentError::Model(ModelError::MissingField {
                    site: network.site(i).id.clone(),
                    field: "base_sales",
                })
            })
        })
        .collect::<Result<_, _>>()?;
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((mean, min))
}

/// One normal draw per candidate, in candidate order, floored at the minimum
/// active-site base sales. `stream` selects an independent substream.
pub fn simulate_candidate_demand(
    network: &Network,
    mu: f64,
    sigma: f64,
    seed: u64,
    stream: &[u64],
) -> Result<Vec<(usize, f64)>, ExperimentError> {
    let (_, floor) = active_base_stats(network)?;
    let normal = Normal::new(mu, sigma)
        .map_err(|e| ExperimentError::InvalidConfig(format!("cannot draw from N({mu}, {sigma}²): {e}")))?;
    let mut rng = rng::substream(seed, rng::SIMULATION, stream);
    Ok(network
        .candidates()
        .into_iter()
        .map(|c| (c, normal.sample(&mut rng).max(floor)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub region: String,
    /// Label of the model the totals were evaluated under.
    pub model: String,
    pub s: f64,
    pub draw: usize,
    pub k: usize,
    pub z0: f64,
    pub z_b: f64,
    pub z_e: f64,
    /// `None` when `z_b = z⁰` and the ratio is undefined.
    pub gain: Option<f64>,
    pub solver: SolverKind,
    pub optimal: bool,
}

/// Everything needed to re-evaluate one draw under another model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawData {
    pub s: f64,
    pub draw: usize,
    pub simulated: Vec<(usize, f64)>,
    /// Baseline and optimized candidate sets, ascending, for `K = 1..=k_max`.
    pub baseline_sets: Vec<Vec<usize>>,
    pub optimized_sets: Vec<Vec<usize>>,
    pub solver: Vec<SolverKind>,
    pub optimal: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCell {
    pub s: f64,
    pub k: usize,
    pub mean_gain: f64,
    pub sd_gain: f64,
    pub used: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub region: String,
    pub model: String,
    pub k_max: usize,
    pub records: Vec<GainRecord>,
    pub draws: Vec<DrawData>,
    pub table: Vec<GainCell>,
    pub degenerate: usize,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn cell(&self, s: f64, k: usize) -> Option<&GainCell> {
        self.table.iter().find(|c| c.s == s && c.k == k)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub region: String,
    pub model_label: String,
    pub solver: SolverChoice,
    pub exact: ExactOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            region: "region".into(),
            model_label: "model".into(),
            solver: SolverChoice::Auto,
            exact: ExactOptions::default(),
        }
    }
}

fn sorted_members(fixed: &[usize], chosen: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = fixed.iter().chain(chosen).copied().collect();
    m.sort_unstable();
    m
}

fn gain(z0: f64, z_b: f64, z_e: f64) -> Option<f64> {
    (z_b != z0).then(|| (z_e - z_b) / (z_b - z0) * 100.0)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Baseline and optimized sets for every `K` on one simulated network.
fn expansions(
    network: &Network,
    model: &DemandModel,
    k_max: usize,
    options: &SweepOptions,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<SolverKind>, Vec<bool>), ExperimentError> {
    let data = ModelObjective::from_model(model, network)?;
    let objective = data.as_objective(model, network);
    let problem = ExpansionProblem::for_network(network, 1, objective)?;

    let g = network.base_sales();
    let mut by_g = problem.candidates.clone();
    by_g.sort_by(|&a, &b| {
        g[b].unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&g[a].unwrap_or(f64::NEG_INFINITY))
            .then(problem.ranks[a].cmp(&problem.ranks[b]))
    });
    let baseline: Vec<Vec<usize>> = (1..=k_max).map(|k| sorted(by_g[..k].to_vec())).collect();

    let solver = match (options.solver, objective) {
        (SolverChoice::Auto, Objective::Linear(_)) => SolverChoice::Sort,
        (SolverChoice::Auto, Objective::Quadratic { .. }) => SolverChoice::Exact,
        (SolverChoice::Auto, Objective::BlackBox { .. }) => SolverChoice::Greedy,
        (choice, _) => choice,
    };
    let mut optimized = Vec::with_capacity(k_max);
    let mut kinds = Vec::with_capacity(k_max);
    let mut optimal = Vec::with_capacity(k_max);
    match solver {
        SolverChoice::Sort => {
            let Objective::Linear(l) = objective else {
                return Err(OptimizeError::WrongObjective {
                    solver: SolverKind::SortTopK,
                    expected: "linear",
                }
                .into());
            };
            let mut order = problem.candidates.clone();
            order.sort_by(|&a, &b| l[b].total_cmp(&l[a]).then(problem.ranks[a].cmp(&problem.ranks[b])));
            for k in 1..=k_max {
                optimized.push(sorted(order[..k].to_vec()));
                kinds.push(SolverKind::SortTopK);
                optimal.push(true);
            }
        }
        SolverChoice::Greedy => {
            let order = greedy_order(&problem, k_max)?;
            for k in 1..=k_max {
                optimized.push(sorted(order[..k].to_vec()));
                kinds.push(SolverKind::Greedy);
                optimal.push(k == 1);
            }
        }
        SolverChoice::Exact => {
            for k in 1..=k_max {
                let sol = match solve_exact_quadratic(&problem.with_k(k)?, &options.exact) {
                    Ok(sol) => sol,
                    Err(OptimizeError::TimeLimit { incumbent }) => *incumbent,
                    Err(e) => return Err(e.into()),
                };
                optimized.push(sol.chosen);
                kinds.push(sol.solver);
                optimal.push(sol.optimal);
            }
        }
        SolverChoice::Baseline => {
            optimized = baseline.clone();
            kinds = vec![SolverKind::Baseline; k_max];
            optimal = vec![false; k_max];
        }
        SolverChoice::Auto => unreachable!("resolved above"),
    }
    Ok((baseline, optimized, kinds, optimal))
}

fn evaluate_draw(
    network: &Network,
    model: &DemandModel,
    draw: &DrawData,
    region: &str,
    label: &str,
) -> Result<Vec<GainRecord>, ExperimentError> {
    let simulated = network.with_base_sales(&draw.simulated)?;
    let fixed = simulated.active();
    let z0 = model.predict_network(&simulated, &fixed)?;
    (0..draw.baseline_sets.len())
        .map(|i| {
            let z_b = model.predict_network(&simulated, &sorted_members(&fixed, &draw.baseline_sets[i]))?;
            let z_e = model.predict_network(&simulated, &sorted_members(&fixed, &draw.optimized_sets[i]))?;
            Ok(GainRecord {
                region: region.to_string(),
                model: label.to_string(),
                s: draw.s,
                draw: draw.draw,
                k: i + 1,
                z0,
                z_b,
                z_e,
                gain: gain(z0, z_b, z_e),
                solver: draw.solver[i],
                optimal: draw.optimal[i],
            })
        })
        .collect()
}

fn tabulate(records: &[GainRecord], s_values: &[f64], k_max: usize) -> (Vec<GainCell>, usize) {
    let mut table = Vec::with_capacity(s_values.len() * k_max);
    let mut degenerate_total = 0;
    for &s in s_values {
        for k in 1..=k_max {
            let mut gains = Vec::new();
            let mut degenerate = 0;
            for r in records.iter().filter(|r| r.s == s && r.k == k) {
                match r.gain {
                    Some(g) => gains.push(g),
                    None => degenerate += 1,
                }
            }
            degenerate_total += degenerate;
            let n = gains.len() as f64;
            let mean = if gains.is_empty() {
                f64::NAN
            } else {
                gains.iter().sum::<f64>() / n
            };
            let sd = if gains.len() > 1 {
                (gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            table.push(GainCell {
                s,
                k,
                mean_gain: mean,
                sd_gain: sd,
                used: gains.len(),
                degenerate,
            });
        }
    }
    (table, degenerate_total)
}

/// Runs every `(s, draw)` pair, computing baseline and optimized expansions for
/// `K = 1..=k_max` under `model`. Records are ordered by `(s, draw, K)`.
pub fn run_gain_sweep(
    network: &Network,
    model: &DemandModel,
    sim: &SimConfig,
    options: &SweepOptions,
) -> Result<SweepResult, ExperimentError> {
    sim.validate()?;
    let (mu, _) = active_base_stats(network)?;
    let n_candidates = network.candidates().len();
    if n_candidates == 0 {
        return Err(ExperimentError::NoCandidates);
    }
    let mut warnings = Vec::new();
    let k_max = if sim.k_max > n_candidates {
        warnings.push(format!(
            "k_max {} exceeds the {n_candidates} candidate sites; capped at {n_candidates}",
            sim.k_max
        ));
        n_candidates
    } else {
        sim.k_max
    };

    let jobs: Vec<(usize, usize)> = (0..sim.s_values.len())
        .flat_map(|si| (0..sim.draws).map(move |d| (si, d)))
        .collect();
    let draws: Vec<DrawData> = jobs
        .par_iter()
        .map(|&(si, d)| {
            let s = sim.s_values[si];
            let simulated = simulate_candidate_demand(network, mu, sigma_for(s), sim.seed, &[si as u64, d as u64])?;
            let net = network.with_base_sales(&simulated)?;
            let (baseline_sets, optimized_sets, solver, optimal) = expansions(&net, model, k_max, options)?;
            Ok(DrawData {
                s,
                draw: d,
                simulated,
                baseline_sets,
                optimized_sets,
                solver,
                optimal,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let records: Vec<GainRecord> = draws
        .par_iter()
        .map(|d| evaluate_draw(network, model, d, &options.region, &options.model_label))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let (table, degenerate) = tabulate(&records, &sim.s_values, k_max);
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} records had z_b = z0 and were excluded from the means"
        ));
    }
    Ok(SweepResult {
        region: options.region.clone(),
        model: options.model_label.clone(),
        k_max,
        records,
        draws,
        table,
        degenerate,
        warnings,
    })
}

/// Re-evaluates a sweep's fixed expansions under `model`. Gains may be
/// negative.
pub fn robustness_check(
    network: &Network,
    sweep: &SweepResult,
    model: &DemandModel,
    label: &str,
) -> Result<SweepResult, ExperimentError> {
    let records: Vec<GainRecord> = sweep
        .draws
        .par_iter()
        .map(|d| evaluate_draw(network, model, d, &sweep.region, label))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut s_values: Vec<f64> = Vec::new();
    for d in &sweep.draws {
        if !s_values.contains(&d.s) {
            s_values.push(d.s);
        }
    }
    let (table, degenerate) = tabulate(&records, &s_values, sweep.k_max);
    Ok(SweepResult {
        region: sweep.region.clone(),
        model: label.to_string(),
        k_max: sweep.k_max,
        records,
        draws: sweep.draws.clone(),
        table,
        degenerate,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{DistanceMetric, Site, SiteStatus};
    use crate::models::{FeatureSpec, ModelKind, OlsFit};

    fn network(n_active: usize, n_cand: usize) -> Network {
        let sites = (0..n_active + n_cand)
            .map(|i| {
                let active = i < n_active;
                Site {
                    id: format!("x{i:02}"),
                    lat: 30.0 + 0.05 * (i % 7) as f64,
                    lon: -90.0 + 0.07 * (i / 7) as f64,
                    status: if active {
                        SiteStatus::Active
                    } else {
                        SiteStatus::Candidate
                    },
                    base_sales: active.then_some(500.0 + 10.0 * i as f64),
                    addon_sales: active.then_some(50.0 + i as f64),
                    income: 30_000.0 + 1_000.0 * ((i * 7) % 9) as f64,
                    population: 2_000.0 + 100.0 * ((i * 5) % 11) as f64,
                }
            })
            .collect();
        Network::new(sites, DistanceMetric::Haversine).unwrap()
    }

    #[test]
    fn zero_sigma_gives_mean() {
        let net = network(4, 5);
        let (mu, _) = active_base_stats(&net).unwrap();
        let g = simulate_candidate_demand(&net, mu, 0.0, 3, &[0]).unwrap();
        assert_eq!(g.len(), 5);
        assert!(g.iter().all(|&(_, v)| v == mu));
    }

    #[test]
    fn draws_are_reproducible_and_floored() {
        let net = network(4, 50);
        let (mu, floor) = active_base_stats(&net).unwrap();
        let a = simulate_candidate_demand(&net, mu, 4096.0, 9, &[1, 2]).unwrap();
        assert_eq!(a, simulate_candidate_demand(&net, mu, 4096.0, 9, &[1, 2]).unwrap());
        assert_ne!(a, simulate_candidate_demand(&net, mu, 4096.0, 9, &[1, 3]).unwrap());
        assert!(a.iter().all(|&(_, v)| v >= floor));
        assert!(a.iter().any(|&(_, v)| v == floor));
    }

    #[test]
    fn constant_model_has_zero_gain() {
        let net = network(5, 8);
        let model = DemandModel {
            spec: FeatureSpec::WITHOUT_LAG,
            kind: ModelKind::Ols(OlsFit {
                intercept: 3.0,
                slopes: vec![0.0; 3],
            }),
        };
        let sim = SimConfig {
            s_values: vec![1.0, 3.0],
            draws: 2,
            k_max: 8,
            seed: 5,
        };
        let r = run_gain_sweep(&net, &model, &sim, &SweepOptions::default()).unwrap();
        assert_eq!(r.records.len(), 2 * 2 * 8);
        assert!(r.records.iter().all(|rec| rec.gain == Some(0.0)));
        assert_eq!(r.degenerate, 0);
    }

    #[test]
    fn k_max_is_capped_with_warning() {
        let net = network(3, 4);
        let model = DemandModel {
            spec: FeatureSpec::WITHOUT_LAG,
            kind: ModelKind::Ols(OlsFit {
                intercept: 0.0,
                slopes: vec![0.1, 0.0, 0.0],
            }),
        };
        let sim = SimConfig {
            s_values: vec![2.0],
            draws: 1,
            k_max: 10,
            seed: 0,
        };
        let r = run_gain_sweep(&net, &model, &sim, &SweepOptions::default()).unwrap();
        assert_eq!(r.k_max, 4);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.records.last().unwrap().gain, Some(0.0));
    }
}
