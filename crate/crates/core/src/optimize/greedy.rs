//! Greedy insertion: start from `S` and repeatedly add the candidate whose
//! inclusion raises the objective most.

use rayon::prelude::*;

use super::exact::Compact;
use super::{ExpansionProblem, ExpansionSolution, Objective, OptimizeError, SolverKind};

/// The first `k_max` candidates in greedy insertion order. Because each round
/// only depends on earlier picks, the greedy solution for any `K ≤ k_max` is
/// the first `K` entries.
pub fn greedy_order(problem: &ExpansionProblem<'_>, k_max: usize) -> Result<Vec<usize>, OptimizeError> {
    if k_max > problem.candidates.len() {
        return Err(OptimizeError::InvalidProblem(format!(
            "K = {k_max} exceeds {} candidates",
            problem.candidates.len()
        )));
    }
    let ranks = &problem.ranks;
    // Larger value wins, then lower rank.
    let pick = |best: Option<(f64, usize)>, (v, site): (f64, usize)| match best {
        Some((bv, bs)) if bv > v || (bv == v && ranks[bs] < ranks[site]) => Some((bv, bs)),
        _ => Some((v, site)),
    };

    if let Objective::BlackBox { .. } = problem.objective {
        let mut remaining = problem.candidates.clone();
        let mut order = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            let scores: Vec<(f64, usize)> = remaining
                .par_iter()
                .map(|&c| {
                    let trial: Vec<usize> = order.iter().copied().chain([c]).collect();
                    problem.evaluate(&trial).map(|v| (v, c))
                })
                .collect::<Result<_, _>>()?;
            let (_, site) = scores.into_iter().fold(None, pick).expect("candidates remain");
            order.push(site);
            remaining.retain(|&c| c != site);
        }
        return Ok(order);
    }

    let compact = Compact::new(problem, SolverKind::Greedy)?;
    let m = compact.sites.len();
    let mut gain = compact.lin.clone();
    let mut taken = vec![false; m];
    let mut order = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        let (_, u) = (0..m)
            .filter(|&u| !taken[u])
            .map(|u| (gain[u], u))
            .fold(None, |best: Option<(f64, usize)>, (v, u)| match best {
                Some((bv, bu)) if bv > v || (bv == v && ranks[compact.sites[bu]] < ranks[compact.sites[u]]) => {
                    Some((bv, bu))
                }
                _ => Some((v, u)),
            })
            .expect("candidates remain");
        taken[u] = true;
        order.push(compact.sites[u]);
        for v in 0..m {
            gain[v] += compact.q[u * m + v];
        }
    }
    Ok(order)
}

/// Greedy solution for `problem.k`. Flagged optimal only for `K = 1`, where a
/// single greedy round is an exhaustive search.
pub fn solve_greedy(problem: &ExpansionProblem<'_>) -> Result<ExpansionSolution, OptimizeError> {
    let order = greedy_order(problem, problem.k)?;
    problem.solution(order, SolverKind::Greedy, problem.k == 1)
}
