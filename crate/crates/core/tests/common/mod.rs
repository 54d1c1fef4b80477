//! Independent reference implementations shared by the integration tests.
//! None of these call into the library's solvers.

#![allow(dead_code)]

use addonsite::geo::{DistanceMetric, Network, Site, SiteStatus};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random cardinality-constrained quadratic instance over `n` sites.
#[derive(Debug, Clone)]
pub struct QpInstance {
    pub l: Vec<f64>,
    pub e: DMatrix<f64>,
    pub fixed: Vec<usize>,
    pub candidates: Vec<usize>,
    pub k: usize,
    pub additive: bool,
}

/// Up to 18 candidates, up to 4 fixed sites, `K ≤ 4`. `lᵢ ~ U(1, 10)` and,
/// unless `additive`, `eᵢⱼ ~ U(-1, 1)` off the diagonal.
pub fn random_qp(rng: &mut ChaCha8Rng, additive: bool) -> QpInstance {
    let m = rng.random_range(4..=18usize);
    let f = rng.random_range(0..=4usize);
    let n = m + f;
    let k = rng.random_range(1..=4usize.min(m));
    let l: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let e = DMatrix::from_fn(n, n, |i, j| {
        if additive || i == j {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let mut sites: Vec<usize> = (0..n).collect();
    // Interleave fixed and candidate sites so indices carry no structure.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        sites.swap(i, j);
    }
    let mut fixed = sites[..f].to_vec();
    let mut candidates = sites[f..].to_vec();
    fixed.sort_unstable();
    candidates.sort_unstable();
    QpInstance {
        l,
        e,
        fixed,
        candidates,
        k,
        additive,
    }
}

pub fn quad_value(l: &[f64], e: &DMatrix<f64>, members: &[usize]) -> f64 {
    let mut v = 0.0;
    for &i in members {
        v += l[i];
        for &j in members {
            if i != j {
                v += e[(i, j)];
            }
        }
    }
    v
}

/// Every `k`-subset of `items`, in lexicographic order.
pub fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Best `(value, set)` by enumeration.
pub fn brute_force(inst: &QpInstance) -> (f64, Vec<usize>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for t in subsets(&inst.candidates, inst.k) {
        let members: Vec<usize> = inst.fixed.iter().chain(&t).copied().collect();
        let v = quad_value(&inst.l, &inst.e, &members);
        if v > best.0 {
            best = (v, t);
        }
    }
    best
}

/// Solves `A x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                if factor != 0.0 {
                    for c in col..=n {
                        m[r][c] -= factor * m[col][c];
                    }
                }
            }
        }
    }
    m.iter().map(|r| r[n]).collect()
}

/// `[intercept, slopes...]` from the normal equations `(XᵀX) β = Xᵀy`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    gauss_jordan_solve(&xtx, &xty)
}

pub fn linear_kernel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn radial_kernel(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

/// `½ βᵀKβ + ε Σ|βᵢ| − yᵀβ`, the ε-SVR dual in minimization form.
pub fn svr_dual_objective(k: &DMatrix<f64>, y: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * k[(i, j)] * beta[j];
        }
    }
    0.5 * quad + beta.iter().map(|b| epsilon * b.abs()).sum::<f64>()
        - beta.iter().zip(y).map(|(b, t)| b * t).sum::<f64>()
}

/// Euclidean projection onto `{x ∈ [0, C]^2n : Σ_{i<n} xᵢ − Σ_{i≥n} xᵢ = 0}`.
fn project(v: &[f64], n: usize, c: f64) -> Vec<f64> {
    let s = |t: usize| if t < n { 1.0 } else { -1.0 };
    let at = |lambda: f64| -> Vec<f64> { (0..2 * n).map(|t| (v[t] - lambda * s(t)).clamp(0.0, c)).collect() };
    let balance = |x: &[f64]| -> f64 { (0..2 * n).map(|t| s(t) * x[t]).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the `2n`-variable ε-SVR dual with
/// gradient-based restarts. Returns `β = α − α*`.
pub fn svr_dual_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64, iterations: usize) -> Vec<f64> {
    let n = y.len();
    let lip = 2.0 * k.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
    let step = 1.0 / lip;
    let grad = |x: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| x[i] - x[i + n]).collect();
        let kb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * beta[j]).sum()).collect();
        (0..2 * n)
            .map(|t| {
                if t < n {
                    kb[t] + epsilon - y[t]
                } else {
                    -kb[t - n] + epsilon + y[t - n]
                }
            })
            .collect()
    };
    let mut x = vec![0.0; 2 * n];
    let mut z = x.clone();
    let mut theta: f64 = 1.0;
    for _ in 0..iterations {
        let g = grad(&z);
        let trial: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&trial, n, c);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let restart = z
            .iter()
            .zip(next.iter().zip(&x))
            .map(|(zi, (a, b))| (zi - a) * (a - b))
            .sum::<f64>()
            > 0.0;
        if restart {
            theta = 1.0;
            z = next.clone();
        } else {
            let mom = (theta - 1.0) / theta_next;
            z = next.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
            theta = theta_next;
        }
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if moved < 1e-15 && !restart {
            break;
        }
    }
    (0..n).map(|i| x[i] - x[i + n]).collect()
}

/// Largest violation of the ε-SVR optimality conditions given predictions `f`.
pub fn svr_kkt_violation(y: &[f64], f: &[f64], beta: &[f64], c: f64, epsilon: f64) -> f64 {
    let tiny = 1e-12 * c.max(1.0);
    let mut worst = 0.0f64;
    for ((&yi, &fi), &b) in y.iter().zip(f).zip(beta) {
        let r = yi - fi;
        let v = if b.abs() <= tiny {
            (r.abs() - epsilon).max(0.0)
        } else if b > 0.0 && b < c - tiny {
            (r - epsilon).abs()
        } else if b >= c - tiny {
            (epsilon - r).max(0.0)
        } else if b < 0.0 && b > -c + tiny {
            (r + epsilon).abs()
        } else {
            (epsilon + r).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Random sites in a small box; the first `n_active` are active.
pub fn random_network(rng: &mut ChaCha8Rng, n_active: usize, n_candidates: usize) -> Network {
    let sites: Vec<Site> = (0..n_active + n_candidates)
        .map(|i| {
            let active = i < n_active;
            let g = rng.random_range(5_000.0..50_000.0);
            Site {
                id: format!("{}{i:03}", if active { 'A' } else { 'C' }),
                lat: 35.0 + rng.random_range(0.0..1.0),
                lon: -81.0 + rng.random_range(0.0..1.0),
                status: if active {
                    SiteStatus::Active
                } else {
                    SiteStatus::Candidate
                },
                base_sales: Some(g),
                addon_sales: active.then(|| 0.01 * g + rng.random_range(0.0..50.0)),
                income: rng.random_range(20_000.0..90_000.0),
                population: rng.random_range(1_000.0..20_000.0),
            }
        })
        .collect();
    Network::new(sites, DistanceMetric::Haversine).expect("random network is valid")
}

pub fn relative_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Greedy by repeated best insertion; ties go to the lower site index.
pub fn greedy_oracle(inst: &QpInstance) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..inst.k {
        let mut best: Option<(f64, usize)> = None;
        for &c in inst.candidates.iter().filter(|c| !chosen.contains(c)) {
            let members: Vec<usize> = inst.fixed.iter().chain(&chosen).chain([&c]).copied().collect();
            let v = quad_value(&inst.l, &inst.e, &members);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, c));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen.sort_unstable();
    chosen
}
