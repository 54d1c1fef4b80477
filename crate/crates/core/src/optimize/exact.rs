//! Exact solvers for linear and quadratic objectives: depth-first
//! branch-and-bound, and plain enumeration for small instances.

use std::time::{Duration, Instant};

use super::{ExpansionProblem, ExpansionSolution, Objective, OptimizeError, SolverKind};

/// Instances with at most this many feasible sets are enumerated outright.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 1_000_000;

const CLOCK_CHECK_INTERVAL: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub time_limit: Option<Duration>,
    pub exhaustive_limit: u64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            time_limit: Some(Duration::from_secs(60)),
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }
}

/// `C(n, k)`, saturating just above `cap`.
pub(super) fn binomial_capped(n: usize, k: usize, cap: u64) -> u64 {
    let k = k.min(n - k.min(n));
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > cap as u128 {
            return cap.saturating_add(1);
        }
    }
    c as u64
}

/// The objective restricted to candidates: `value(T) = constant + Σ_{u∈T} lin_u
/// + Σ_{u<v∈T} q_uv`, where `lin` absorbs the interactions with the fixed set.
pub(super) struct Compact {
    pub sites: Vec<usize>,
    pub lin: Vec<f64>,
    /// Row-major `m × m`, symmetric, zero diagonal.
    pub q: Vec<f64>,
}

impl Compact {
    pub fn new(problem: &ExpansionProblem<'_>, solver: SolverKind) -> Result<Self, OptimizeError> {
        let sites = problem.candidates.clone();
        let m = sites.len();
        match problem.objective {
            Objective::Linear(l) => Ok(Compact {
                lin: sites.iter().map(|&c| l[c]).collect(),
                q: vec![0.0; m * m],
                sites,
            }),
            Objective::Quadratic { l, e } => {
                let lin = sites
                    .iter()
                    .map(|&c| l[c] + problem.fixed.iter().map(|&i| e[(i, c)] + e[(c, i)]).sum::<f64>())
                    .collect();
                let mut q = vec![0.0; m * m];
                for u in 0..m {
                    for v in 0..m {
                        if u != v {
                            q[u * m + v] = e[(sites[u], sites[v])] + e[(sites[v], sites[u])];
                        }
                    }
                }
                Ok(Compact { sites, lin, q })
            }
            Objective::BlackBox { .. } => Err(OptimizeError::WrongObjective {
                solver,
                expected: "linear or quadratic",
            }),
        }
    }

    fn len(&self) -> usize {
        self.sites.len()
    }

    /// Reorders local indices by `perm` (new position → old position).
    fn permuted(&self, perm: &[usize]) -> Compact {
        let m = self.len();
        let mut q = vec![0.0; m * m];
        for (a, &u) in perm.iter().enumerate() {
            for (b, &v) in perm.iter().enumerate() {
                q[a * m + b] = self.q[u * m + v];
            }
        }
        Compact {
            sites: perm.iter().map(|&u| self.sites[u]).collect(),
            lin: perm.iter().map(|&u| self.lin[u]).collect(),
            q,
        }
    }
}

struct Search<'c> {
    c: &'c Compact,
    k: usize,
    ranks: Vec<usize>,
    /// Per local index, positive `q_uv` sorted descending.
    positive_q: Vec<Vec<(f64, usize)>>,
    use_bound: bool,
    /// `gains[t][v] = lin_v + Σ_{u chosen} q_uv` at depth `t`.
    gains: Vec<Vec<f64>>,
    chosen: Vec<usize>,
    best_value: f64,
    best: Option<Vec<usize>>,
    best_key: Vec<usize>,
    deadline: Option<Instant>,
    nodes: u64,
    timed_out: bool,
}

impl<'c> Search<'c> {
    fn new(c: &'c Compact, k: usize, ranks: Vec<usize>, use_bound: bool, deadline: Option<Instant>) -> Self {
        let m = c.len();
        let positive_q = if use_bound {
            (0..m)
                .map(|u| {
                    let mut row: Vec<(f64, usize)> = (0..m)
                        .filter(|&v| v != u && c.q[u * m + v] > 0.0)
                        .map(|v| (c.q[u * m + v], v))
                        .collect();
                    row.sort_by(|a, b| b.0.total_cmp(&a.0));
                    row
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut gains = vec![vec![0.0; m]; k + 1];
        gains[0].clone_from(&c.lin);
        Search {
            c,
            k,
            ranks,
            positive_q,
            use_bound,
            gains,
            chosen: Vec::with_capacity(k),
            best_value: f64::NEG_INFINITY,
            best: None,
            best_key: Vec::new(),
            deadline,
            nodes: 0,
            timed_out: false,
        }
    }

    fn key(&self, set: &[usize]) -> Vec<usize> {
        let mut key: Vec<usize> = set.iter().map(|&u| self.ranks[u]).collect();
        key.sort_unstable();
        key
    }

    fn offer(&mut self, set: &[usize], value: f64) {
        if value > self.best_value || (value == self.best_value && self.key(set) < self.best_key) {
            self.best_value = value;
            self.best = Some(set.to_vec());
            self.best_key = self.key(set);
        }
    }

    /// Greedy incumbent: repeatedly add the candidate with the largest gain.
    fn seed_with_greedy(&mut self) {
        let m = self.c.len();
        let mut gain = self.c.lin.clone();
        let mut taken = vec![false; m];
        let mut set = Vec::with_capacity(self.k);
        let mut value = 0.0;
        for _ in 0..self.k {
            let u = (0..m)
                .filter(|&u| !taken[u])
                .max_by(|&a, &b| gain[a].total_cmp(&gain[b]).then(self.ranks[b].cmp(&self.ranks[a])))
                .expect("k <= m");
            taken[u] = true;
            value += gain[u];
            set.push(u);
            for v in 0..m {
                gain[v] += self.c.q[u * m + v];
            }
        }
        self.offer(&set, value);
    }

    /// Upper bound on what `r` more picks from `pos..` can add.
    fn bound(&self, pos: usize, r: usize) -> f64 {
        let m = self.c.len();
        let gain = &self.gains[self.chosen.len()];
        let mut marginals: Vec<f64> = (pos..m)
            .map(|u| {
                let pairs: f64 = self.positive_q[u]
                    .iter()
                    .filter(|&&(_, v)| v >= pos)
                    .take(r - 1)
                    .map(|&(q, _)| q)
                    .sum();
                gain[u] + 0.5 * pairs
            })
            .collect();
        marginals.select_nth_unstable_by(r - 1, |a, b| b.total_cmp(a));
        marginals[..r].iter().sum()
    }

    fn dfs(&mut self, pos: usize, value: f64) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(CLOCK_CHECK_INTERVAL) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                    return;
                }
            }
        }
        let t = self.chosen.len();
        if t == self.k {
            let set = self.chosen.clone();
            self.offer(&set, value);
            return;
        }
        let m = self.c.len();
        let r = self.k - t;
        if m - pos < r {
            return;
        }
        if self.use_bound && self.best.is_some() {
            let slack = 1e-12 * self.best_value.abs().max(1.0);
            if value + self.bound(pos, r) + slack < self.best_value {
                return;
            }
        }

        let gain_here = self.gains[t][pos];
        let (lower, upper) = self.gains.split_at_mut(t + 1);
        let (src, dst) = (&lower[t], &mut upper[0]);
        for v in pos + 1..m {
            dst[v] = src[v] + self.c.q[pos * m + v];
        }
        self.chosen.push(pos);
        self.dfs(pos + 1, value + gain_here);
        self.chosen.pop();

        self.dfs(pos + 1, value);
    }
}

fn run_search(
    problem: &ExpansionProblem<'_>,
    compact: &Compact,
    use_bound: bool,
    deadline: Option<Instant>,
) -> (Option<Vec<usize>>, bool) {
    let ranks: Vec<usize> = compact.sites.iter().map(|&s| problem.ranks[s]).collect();
    let mut search = Search::new(compact, problem.k, ranks, use_bound, deadline);
    search.seed_with_greedy();
    search.dfs(0, 0.0);
    let chosen = search
        .best
        .map(|set| set.into_iter().map(|u| compact.sites[u]).collect());
    (chosen, search.timed_out)
}

/// Maximizes a linear or quadratic objective exactly. Enumerates when
/// `C(|S̃|, K) ≤ options.exhaustive_limit`, otherwise branch-and-bound with the
/// greedy solution as the first incumbent. Hitting the time limit returns
/// [`OptimizeError::TimeLimit`] with the best set found so far.
pub fn solve_exact_quadratic(
    problem: &ExpansionProblem<'_>,
    options: &ExactOptions,
) -> Result<ExpansionSolution, OptimizeError> {
    let compact = Compact::new(problem, SolverKind::ExactQuadratic)?;
    let m = compact.len();
    let enumerate = binomial_capped(m, problem.k, options.exhaustive_limit) <= options.exhaustive_limit;
    let deadline = options.time_limit.map(|d| Instant::now() + d);
    let (kind, (chosen, timed_out)) = if enumerate {
        (SolverKind::Exhaustive, run_search(problem, &compact, false, deadline))
    } else {
        // Promising candidates first tightens the incumbent early.
        let mut perm: Vec<usize> = (0..m).collect();
        perm.sort_by(|&a, &b| {
            compact.lin[b]
                .total_cmp(&compact.lin[a])
                .then(problem.ranks[compact.sites[a]].cmp(&problem.ranks[compact.sites[b]]))
        });
        let sorted = compact.permuted(&perm);
        (SolverKind::ExactQuadratic, run_search(problem, &sorted, true, deadline))
    };
    let chosen = chosen.expect("greedy seeds an incumbent");
    let solution = problem.solution(chosen, kind, !timed_out)?;
    if timed_out {
        return Err(OptimizeError::TimeLimit {
            incumbent: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Enumerates every feasible set. Works for any objective; black-box
/// objectives are evaluated set by set.
pub fn solve_exhaustive(problem: &ExpansionProblem<'_>) -> Result<ExpansionSolution, OptimizeError> {
    if !matches!(problem.objective, Objective::BlackBox { .. }) {
        let compact = Compact::new(problem, SolverKind::Exhaustive)?;
        let (chosen, _) = run_search(problem, &compact, false, None);
        return problem.solution(chosen.expect("non-empty search"), SolverKind::Exhaustive, true);
    }
    let m = problem.candidates.len();
    let k = problem.k;
    if binomial_capped(m, k, DEFAULT_EXHAUSTIVE_LIMIT) > DEFAULT_EXHAUSTIVE_LIMIT {
        return Err(OptimizeError::InvalidProblem(format!(
            "C({m}, {k}) exceeds {DEFAULT_EXHAUSTIVE_LIMIT} black-box evaluations"
        )));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    loop {
        let set: Vec<usize> = idx.iter().map(|&u| problem.candidates[u]).collect();
        let value = problem.evaluate(&set)?;
        let mut key: Vec<usize> = set.iter().map(|&s| problem.ranks[s]).collect();
        key.sort_unstable();
        let replace = match &best {
            None => true,
            Some((bv, _, bk)) => value > *bv || (value == *bv && key < *bk),
        };
        if replace {
            best = Some((value, set, key));
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let (_, chosen, _) = best.expect("at least one combination");
    problem.solution(chosen, SolverKind::Exhaustive, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn binomials() {
        assert_eq!(binomial_capped(18, 4, u64::MAX), 3060);
        assert_eq!(binomial_capped(5, 5, 10), 1);
        assert_eq!(binomial_capped(230, 20, 1_000_000), 1_000_001);
    }

    fn forced_bnb() -> ExactOptions {
        ExactOptions {
            time_limit: None,
            exhaustive_limit: 0,
        }
    }

    #[test]
    fn clustered_pair_beats_single_best() {
        // Site 0 has the largest l, but 1 and 2 reinforce each other.
        let l = [10.0, 6.0, 6.0, 1.0, 1.0];
        let mut e = DMatrix::zeros(5, 5);
        e[(1, 2)] = 3.0;
        e[(2, 1)] = 3.0;
        let p =
            ExpansionProblem::new(vec![], (0..5).collect(), 2, Objective::Quadratic { l: &l, e: &e }, None).unwrap();
        for opts in [forced_bnb(), ExactOptions::default()] {
            let s = solve_exact_quadratic(&p, &opts).unwrap();
            assert_eq!(s.chosen, vec![1, 2]);
            assert_eq!(s.objective_value, 18.0);
            assert!(s.optimal);
        }
        assert_eq!(solve_exhaustive(&p).unwrap().chosen, vec![1, 2]);
    }

    #[test]
    fn zero_interactions_match_sort() {
        let l: Vec<f64> = (0..12).map(|i| ((i * 37) % 11) as f64 + 0.1 * i as f64).collect();
        let e = DMatrix::zeros(12, 12);
        let fixed = vec![0, 1];
        let cands: Vec<usize> = (2..12).collect();
        for k in 1..=10 {
            let q = ExpansionProblem::new(
                fixed.clone(),
                cands.clone(),
                k,
                Objective::Quadratic { l: &l, e: &e },
                None,
            )
            .unwrap();
            let lin = ExpansionProblem::new(fixed.clone(), cands.clone(), k, Objective::Linear(&l), None).unwrap();
            let a = solve_exact_quadratic(&q, &forced_bnb()).unwrap();
            let b = super::super::solve_sort_topk(&lin).unwrap();
            assert_eq!(a.chosen, b.chosen);
        }
    }

    #[test]
    fn time_limit_returns_incumbent() {
        let n = 60;
        let l: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64).collect();
        let e = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (((i * 31 + j * 17) % 23) as f64) - 11.0
            }
        });
        let p = ExpansionProblem::new(
            vec![],
            (0..n).collect(),
            15,
            Objective::Quadratic { l: &l, e: &e },
            None,
        )
        .unwrap();
        let opts = ExactOptions {
            time_limit: Some(Duration::ZERO),
            exhaustive_limit: 0,
        };
        match solve_exact_quadratic(&p, &opts) {
            Err(OptimizeError::TimeLimit { incumbent }) => {
                assert!(!incumbent.optimal);
                assert_eq!(incumbent.chosen.len(), 15);
            }
            other => panic!("expected time limit, got {other:?}"),
        }
    }
}
