//! Expansion optimization: choose `K` candidate sites that maximize predicted
//! total add-on sales over the network `S ∪ chosen`.
//!
//! Objectives come in three shapes. A 3-feature affine model gives a separable
//! linear objective, solved exactly by sorting. A 4-feature affine model gives a
//! cardinality-constrained binary quadratic program, solved by branch-and-bound
//! (or exhaustive enumeration when small). Anything else is a black box handled
//! by greedy insertion.

mod exact;
mod greedy;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exact::{solve_exact_quadratic, solve_exhaustive, ExactOptions, DEFAULT_EXHAUSTIVE_LIMIT};
pub use greedy::{greedy_order, solve_greedy};

use crate::geo::Network;
use crate::models::{DemandModel, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("model uses the spatial-lag feature or a nonlinear kernel and has no linear objective")]
    SpatialModelNotLinearizable,
    #[error("radial-kernel models are not affine in their features")]
    NotAffineInFeatures,
    #[error("invalid expansion problem: {0}")]
    InvalidProblem(String),
    #[error("{solver} needs a {expected} objective")]
    WrongObjective { solver: SolverKind, expected: &'static str },
    #[error("site `{0}` has no base-product sales")]
    MissingSales(String),
    #[error("time limit reached; best incumbent has objective {}", .incumbent.objective_value)]
    TimeLimit { incumbent: Box<ExpansionSolution> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What a problem maximizes. Coefficients are indexed by site index.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Linear(&'a [f64]),
    /// `Σ lᵢ + Σ_{i≠j} eᵢⱼ` over the member set.
    Quadratic {
        l: &'a [f64],
        e: &'a DMatrix<f64>,
    },
    /// `predict_network` of the model on the member set.
    BlackBox {
        model: &'a DemandModel,
        network: &'a Network,
    },
}

impl Objective<'_> {
    fn size(&self) -> usize {
        match self {
            Objective::Linear(l) => l.len(),
            Objective::Quadratic { l, .. } => l.len(),
            Objective::BlackBox { network, .. } => network.len(),
        }
    }
}

/// Owned objective data extracted from a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelObjective {
    Linear(Vec<f64>),
    Quadratic { l: Vec<f64>, e: DMatrix<f64> },
    BlackBox,
}

impl ModelObjective {
    /// Linear for 3-feature affine models, quadratic for 4-feature affine
    /// models, black box for radial kernels.
    pub fn from_model(model: &DemandModel, network: &Network) -> Result<Self, OptimizeError> {
        if model.affine_form().is_none() {
            return Ok(ModelObjective::BlackBox);
        }
        if model.spec.use_spatial_lag {
            let (l, e) = derive_quadratic_coeffs(model, network)?;
            Ok(ModelObjective::Quadratic { l, e })
        } else {
            Ok(ModelObjective::Linear(derive_linear_coeffs(model, network)?))
        }
    }

    pub fn as_objective<'a>(&'a self, model: &'a DemandModel, network: &'a Network) -> Objective<'a> {
        match self {
            ModelObjective::Linear(l) => Objective::Linear(l),
            ModelObjective::Quadratic { l, e } => Objective::Quadratic { l, e },
            ModelObjective::BlackBox => Objective::BlackBox { model, network },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Baseline,
    SortTopK,
    ExactQuadratic,
    Greedy,
    Exhaustive,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Baseline => "baseline",
            SolverKind::SortTopK => "sort",
            SolverKind::ExactQuadratic => "exact",
            SolverKind::Greedy => "greedy",
            SolverKind::Exhaustive => "exhaustive",
        })
    }
}

/// Solver requested by a caller; `Auto` resolves from the objective shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Baseline,
    Sort,
    Exact,
    Greedy,
    Auto,
}

impl FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(SolverChoice::Baseline),
            "sort" => Ok(SolverChoice::Sort),
            "exact" => Ok(SolverChoice::Exact),
            "greedy" => Ok(SolverChoice::Greedy),
            "auto" => Ok(SolverChoice::Auto),
            other => Err(format!("unknown solver `{other}`")),
        }
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverChoice::Baseline => "baseline",
            SolverChoice::Sort => "sort",
            SolverChoice::Exact => "exact",
            SolverChoice::Greedy => "greedy",
            SolverChoice::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSolution {
    /// Chosen candidate site indices, ascending.
    pub chosen: Vec<usize>,
    /// Predicted total over `S ∪ chosen`.
    pub objective_value: f64,
    pub solver: SolverKind,
    pub optimal: bool,
}

/// Maximize the objective over `fixed ∪ T`, `T ⊆ candidates`, `|T| = k`.
#[derive(Debug, Clone)]
pub struct ExpansionProblem<'a> {
    pub fixed: Vec<usize>,
    pub candidates: Vec<usize>,
    pub k: usize,
    pub objective: Objective<'a>,
    /// Tie-break rank of every site (lower wins).
    pub ranks: Vec<usize>,
}

impl<'a> ExpansionProblem<'a> {
    /// Validates the problem. With `ranks = None`, ties break by site index.
    pub fn new(
        fixed: Vec<usize>,
        candidates: Vec<usize>,
        k: usize,
        objective: Objective<'a>,
        ranks: Option<Vec<usize>>,
    ) -> Result<Self, OptimizeError> {
        let n = objective.size();
        let ranks = ranks.unwrap_or_else(|| (0..n).collect());
        let bad = |msg: String| Err(OptimizeError::InvalidProblem(msg));
        if ranks.len() != n {
            return bad(format!("{} ranks for {n} sites", ranks.len()));
        }
        let mut role = vec![0u8; n];
        for (&i, tag) in fixed
            .iter()
            .map(|i| (i, 1u8))
            .chain(candidates.iter().map(|i| (i, 2u8)))
        {
            if i >= n {
                return bad(format!("site index {i} out of range for {n} sites"));
            }
            if role[i] != 0 {
                return bad(format!(
                    "site index {i} listed twice or in both S and the candidate set"
                ));
            }
            role[i] = tag;
        }
        if k == 0 || k > candidates.len() {
            return bad(format!("K = {k} outside 1..={}", candidates.len()));
        }
        if let Objective::Quadratic { e, .. } = objective {
            if e.shape() != (n, n) {
                return bad(format!("interaction matrix is {:?}, expected {n}x{n}", e.shape()));
            }
            if (0..n).any(|i| e[(i, i)] != 0.0) {
                return bad("interaction matrix has a nonzero diagonal".into());
            }
        }
        Ok(ExpansionProblem {
            fixed,
            candidates,
            k,
            objective,
            ranks,
        })
    }

    /// Active sites fixed, candidates from the network, ties by site id.
    pub fn for_network(network: &Network, k: usize, objective: Objective<'a>) -> Result<Self, OptimizeError> {
        Self::new(
            network.active(),
            network.candidates(),
            k,
            objective,
            Some(network.id_ranks()),
        )
    }

    pub fn with_k(&self, k: usize) -> Result<Self, OptimizeError> {
        Self::new(
            self.fixed.clone(),
            self.candidates.clone(),
            k,
            self.objective,
            Some(self.ranks.clone()),
        )
    }

    /// Objective over `fixed ∪ chosen`, summed in ascending site order.
    pub fn evaluate(&self, chosen: &[usize]) -> Result<f64, OptimizeError> {
        let mut members: Vec<usize> = self.fixed.iter().chain(chosen).copied().collect();
        members.sort_unstable();
        Ok(match self.objective {
            Objective::Linear(l) => members.iter().map(|&i| l[i]).sum(),
            Objective::Quadratic { l, e } => {
                let linear: f64 = members.iter().map(|&i| l[i]).sum();
                let pairs: f64 = members
                    .iter()
                    .map(|&i| members.iter().filter(|&&j| j != i).map(|&j| e[(i, j)]).sum::<f64>())
                    .sum();
                linear + pairs
            }
            Objective::BlackBox { model, network } => model.predict_network(network, &members)?,
        })
    }

    fn solution(
        &self,
        mut chosen: Vec<usize>,
        solver: SolverKind,
        optimal: bool,
    ) -> Result<ExpansionSolution, OptimizeError> {
        chosen.sort_unstable();
        let objective_value = self.evaluate(&chosen)?;
        Ok(ExpansionSolution {
            chosen,
            objective_value,
            solver,
            optimal,
        })
    }

    /// Candidates ordered by descending score, ties by rank.
    fn top_k_by(&self, score: impl Fn(usize) -> f64) -> Vec<usize> {
        let mut order = self.candidates.clone();
        order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(self.ranks[a].cmp(&self.ranks[b])));
        order.truncate(self.k);
        order
    }
}

/// Raw-space `lᵢ = β₀ + β₁gᵢ + β₃hᵢ + β₄pᵢ` for every site of a 3-feature
/// affine model.
pub fn derive_linear_coeffs(model: &DemandModel, network: &Network) -> Result<Vec<f64>, OptimizeError> {
    if model.spec.use_spatial_lag {
        return Err(OptimizeError::SpatialModelNotLinearizable);
    }
    let form = model.affine_form().ok_or(OptimizeError::SpatialModelNotLinearizable)?;
    network
        .sites()
        .iter()
        .map(|s| {
            let g = s.base_sales.ok_or_else(|| OptimizeError::MissingSales(s.id.clone()))?;
            let row = model.spec.row(g, 0.0, s.income, s.population);
            Ok(form.intercept + form.slopes.iter().zip(&row).map(|(b, x)| b * x).sum::<f64>())
        })
        .collect()
}

/// `lᵢ` and `eᵢⱼ = β₂·gⱼ/dᵢⱼ` for an affine model, so that
/// `Σ_{Ñ} lᵢ + Σ_{i≠j∈Ñ} eᵢⱼ = predict_network(Ñ)`. A model without the lag
/// feature yields a zero interaction matrix.
pub fn derive_quadratic_coeffs(
    model: &DemandModel,
    network: &Network,
) -> Result<(Vec<f64>, DMatrix<f64>), OptimizeError> {
    let form = model.affine_form().ok_or(OptimizeError::NotAffineInFeatures)?;
    let spec = model.spec;
    let g: Vec<f64> = network
        .sites()
        .iter()
        .map(|s| s.base_sales.ok_or_else(|| OptimizeError::MissingSales(s.id.clone())))
        .collect::<Result<_, _>>()?;
    let l: Vec<f64> = network
        .sites()
        .iter()
        .zip(&g)
        .map(|(s, &gi)| {
            let row = spec.row(gi, 0.0, s.income, s.population);
            form.intercept + form.slopes.iter().zip(&row).map(|(b, x)| b * x).sum::<f64>()
        })
        .collect();
    let n = network.len();
    let e = match spec.lag_column() {
        Some(col) => {
            let beta = form.slopes[col];
            let w = network.weights();
            DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { beta * w[(i, j)] * g[j] })
        }
        None => DMatrix::zeros(n, n),
    };
    Ok((l, e))
}

/// Top-`K` candidates by `lᵢ`; exact for linear objectives.
pub fn solve_sort_topk(problem: &ExpansionProblem<'_>) -> Result<ExpansionSolution, OptimizeError> {
    let Objective::Linear(l) = problem.objective else {
        return Err(OptimizeError::WrongObjective {
            solver: SolverKind::SortTopK,
            expected: "linear",
        });
    };
    let chosen = problem.top_k_by(|i| l[i]);
    problem.solution(chosen, SolverKind::SortTopK, true)
}

/// Top-`K` candidates by base-product sales `g`, indexed by site; the objective
/// is evaluated under the problem's own objective.
pub fn solve_baseline(
    problem: &ExpansionProblem<'_>,
    base_sales: &[Option<f64>],
) -> Result<ExpansionSolution, OptimizeError> {
    let mut g = vec![f64::NEG_INFINITY; problem.ranks.len()];
    for &c in &problem.candidates {
        g[c] = base_sales
            .get(c)
            .copied()
            .flatten()
            .ok_or_else(|| OptimizeError::MissingSales(format!("#{c}")))?;
    }
    let chosen = problem.top_k_by(|i| g[i]);
    problem.solution(chosen, SolverKind::Baseline, false)
}

/// Dispatches a [`SolverChoice`]. `Auto` sorts linear objectives, runs the exact
/// solver on quadratic ones and greedy on black boxes.
pub fn solve(
    problem: &ExpansionProblem<'_>,
    choice: SolverChoice,
    base_sales: Option<&[Option<f64>]>,
    options: &ExactOptions,
) -> Result<ExpansionSolution, OptimizeError> {
    match choice {
        SolverChoice::Baseline => {
            let g = base_sales.ok_or_else(|| OptimizeError::InvalidProblem("baseline needs base sales".into()))?;
            solve_baseline(problem, g)
        }
        SolverChoice::Sort => solve_sort_topk(problem),
        SolverChoice::Exact => solve_exact_quadratic(problem, options),
        SolverChoice::Greedy => solve_greedy(problem),
        SolverChoice::Auto => match problem.objective {
            Objective::Linear(_) => solve_sort_topk(problem),
            Objective::Quadratic { .. } => solve_exact_quadratic(problem, options),
            Objective::BlackBox { .. } => solve_greedy(problem),
        },
    }
}

/// Change in the objective from toggling each candidate relative to `chosen`:
/// removal loss for chosen sites, insertion gain for the rest.
pub fn marginal_table(
    problem: &ExpansionProblem<'_>,
    chosen: &[usize],
) -> Result<Vec<(usize, bool, f64)>, OptimizeError> {
    let base = problem.evaluate(chosen)?;
    problem
        .candidates
        .iter()
        .map(|&c| {
            let is_chosen = chosen.contains(&c);
            let toggled: Vec<usize> = if is_chosen {
                chosen.iter().copied().filter(|&x| x != c).collect()
            } else {
                chosen.iter().copied().chain([c]).collect()
            };
            let v = problem.evaluate(&toggled)?;
            Ok((c, is_chosen, if is_chosen { base - v } else { v - base }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{DistanceMetric, Site, SiteStatus};
    use crate::models::{FeatureSpec, ModelKind, OlsFit};
    use approx::assert_relative_eq;

    fn site(i: usize, lon: f64, g: f64, status: SiteStatus) -> Site {
        Site {
            id: format!("s{i}"),
            lat: 0.0,
            lon,
            status,
            base_sales: Some(g),
            addon_sales: status.eq(&SiteStatus::Active).then_some(1.0),
            income: 1000.0 + 10.0 * i as f64,
            population: 500.0 + 7.0 * (i * i) as f64,
        }
    }

    fn ols(spec: FeatureSpec, intercept: f64, slopes: Vec<f64>) -> DemandModel {
        DemandModel {
            spec,
            kind: ModelKind::Ols(OlsFit { intercept, slopes }),
        }
    }

    #[test]
    fn two_site_interactions() {
        let miles = 2.0 / crate::geo::MILES_PER_DEGREE;
        let net = Network::new(
            vec![
                site(0, 0.0, 10.0, SiteStatus::Candidate),
                site(1, miles, 30.0, SiteStatus::Candidate),
            ],
            DistanceMetric::EuclideanDegrees,
        )
        .unwrap();
        let m = ols(FeatureSpec::WITH_LAG, 0.0, vec![0.0, 1.0, 0.0, 0.0]);
        let (_, e) = derive_quadratic_coeffs(&m, &net).unwrap();
        assert_relative_eq!(e[(0, 1)], 15.0, max_relative = 1e-12);
        assert_relative_eq!(e[(1, 0)], 5.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_model_linear_coeffs() {
        let net = Network::new(
            (0..4)
                .map(|i| site(i, i as f64, 5.0 + i as f64, SiteStatus::Candidate))
                .collect(),
            DistanceMetric::EuclideanDegrees,
        )
        .unwrap();
        let l = derive_linear_coeffs(&ols(FeatureSpec::WITHOUT_LAG, 3.5, vec![0.0; 3]), &net).unwrap();
        assert_eq!(l, vec![3.5; 4]);
        assert_eq!(
            derive_linear_coeffs(&ols(FeatureSpec::WITH_LAG, 0.0, vec![0.0; 4]), &net),
            Err(OptimizeError::SpatialModelNotLinearizable)
        );
    }

    #[test]
    fn sort_examples() {
        let l = [0.0, 5.0, 3.0, 9.0];
        let p = ExpansionProblem::new(vec![0], vec![1, 2, 3], 2, Objective::Linear(&l), None).unwrap();
        let s = solve_sort_topk(&p).unwrap();
        assert_eq!(s.chosen, vec![1, 3]);
        assert_eq!(s.objective_value, 14.0);
        assert!(s.optimal);
        let all = solve_sort_topk(&p.with_k(3).unwrap()).unwrap();
        assert_eq!(all.chosen, vec![1, 2, 3]);
    }

    #[test]
    fn baseline_ties_follow_rank() {
        let l = [1.0; 5];
        let p = ExpansionProblem::new(
            vec![],
            vec![0, 1, 2, 3, 4],
            2,
            Objective::Linear(&l),
            Some(vec![4, 3, 2, 1, 0]),
        )
        .unwrap();
        let s = solve_baseline(&p, &[Some(7.0); 5]).unwrap();
        assert_eq!(s.chosen, vec![3, 4]);
        let g: Vec<Option<f64>> = (0..5).map(|i| Some(i as f64)).collect();
        assert_eq!(solve_baseline(&p, &g).unwrap().chosen, vec![3, 4]);
        assert!(matches!(
            solve_baseline(&p, &[None; 5]),
            Err(OptimizeError::MissingSales(_))
        ));
    }

    #[test]
    fn problem_validation() {
        let l = [0.0; 3];
        let bad =
            |f: Vec<usize>, c: Vec<usize>, k| ExpansionProblem::new(f, c, k, Objective::Linear(&l), None).is_err();
        assert!(bad(vec![0], vec![0, 1], 1));
        assert!(bad(vec![], vec![0, 1], 3));
        assert!(bad(vec![], vec![0, 1], 0));
        assert!(bad(vec![], vec![0, 5], 1));
        let mut e = DMatrix::zeros(3, 3);
        e[(1, 1)] = 1.0;
        assert!(ExpansionProblem::new(vec![], vec![0, 1], 1, Objective::Quadratic { l: &l, e: &e }, None).is_err());
    }
}
