//! Grid search over SVR hyperparameters with boundary expansion.
//!
//! After every pass the winning cell is checked against the edges of each axis.
//! A winner on an edge pushes that axis one step outward (C and γ by their seed
//! ratio, ε by 0.1) and the search repeats over the enlarged grid. ε = 0 is a
//! domain edge, not a grid boundary. Each axis may be extended at most
//! [`MAX_EXTENSIONS`] times.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvError, CvPlan, CvSummary, CvTask};
use crate::models::{Hyperparams, ModelFamily};

pub const MAX_EXTENSIONS: usize = 20;
pub const EPSILON_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub c_values: Vec<f64>,
    pub epsilon_values: Vec<f64>,
    /// Ignored for non-radial families.
    pub gamma_values: Vec<f64>,
}

impl Default for Grid {
    /// C in 2^0..2^16, ε in 0..1 by 0.1, γ in 10^-7..10^-3.
    fn default() -> Self {
        Grid {
            c_values: (0..=16).map(|k| 2f64.powi(k)).collect(),
            epsilon_values: (0..=10).map(|k| k as f64 / 10.0).collect(),
            gamma_values: (-7..=-3).map(|k| 10f64.powi(k)).collect(),
        }
    }
}

impl Grid {
    pub fn validate(&self, family: ModelFamily) -> Result<(), String> {
        if self.c_values.is_empty() || self.epsilon_values.is_empty() {
            return Err("C and epsilon grids must be non-empty".into());
        }
        if family == ModelFamily::RadialSvr && self.gamma_values.is_empty() {
            return Err("gamma grid must be non-empty for the radial kernel".into());
        }
        if self.c_values.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err("C values must be positive".into());
        }
        if self.epsilon_values.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err("epsilon values must be non-negative".into());
        }
        if self.gamma_values.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err("gamma values must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    C,
    Epsilon,
    Gamma,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::C => "C",
            Axis::Epsilon => "epsilon",
            Axis::Gamma => "gamma",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyper: Hyperparams,
    pub summary: CvSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub family: ModelFamily,
    pub best: GridCell,
    /// Every evaluated cell, in evaluation order.
    pub cells: Vec<GridCell>,
    /// Cells whose CV failed, with the diagnostic.
    pub failed: Vec<(Hyperparams, String)>,
    pub extensions: Vec<(Axis, usize)>,
    /// Axes whose winner still sits on a boundary that could not be pushed
    /// further (extension cap reached, or a single-valued seed axis).
    pub capped_axes: Vec<Axis>,
    /// Final (possibly extended) grid.
    pub grid: Grid,
}

type CellKey = (u64, u64, u64);

fn key(h: &Hyperparams) -> CellKey {
    (h.c.to_bits(), h.epsilon.to_bits(), h.gamma.map_or(0, f64::to_bits))
}

/// Tie-break: smaller C, then smaller γ, then larger ε.
fn better(a: &GridCell, b: &GridCell) -> bool {
    let (ra, rb) = (a.summary.mean_rmse, b.summary.mean_rmse);
    if ra != rb {
        return ra < rb;
    }
    if a.hyper.c != b.hyper.c {
        return a.hyper.c < b.hyper.c;
    }
    let (ga, gb) = (a.hyper.gamma.unwrap_or(0.0), b.hyper.gamma.unwrap_or(0.0));
    if ga != gb {
        return ga < gb;
    }
    a.hyper.epsilon > b.hyper.epsilon
}

fn round_step(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Twelve significant digits, so `1e-7 / 10` lands on `1e-8`.
fn round_ratio(v: f64) -> f64 {
    format!("{v:.11e}").parse().unwrap_or(v)
}

struct AxisState {
    axis: Axis,
    values: Vec<f64>,
    /// Multiplicative ratio for C/γ; additive step for ε. `None` when the seed
    /// gives no spacing to extend with.
    step: Option<f64>,
    extensions: usize,
    capped: bool,
}

impl AxisState {
    fn new(axis: Axis, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        values.dedup();
        let step = match axis {
            Axis::Epsilon => (values.len() > 1).then_some(EPSILON_STEP),
            Axis::C | Axis::Gamma => (values.len() > 1).then(|| values[1] / values[0]),
        };
        AxisState {
            axis,
            values,
            step,
            extensions: 0,
            capped: false,
        }
    }

    /// Extends toward `winner` if it sits on an edge; returns whether it did.
    fn extend_if_boundary(&mut self, winner: f64) -> bool {
        let lo = self.values[0];
        let hi = *self.values.last().unwrap();
        let at_lo = winner == lo && !(self.axis == Axis::Epsilon && lo <= 0.0);
        let at_hi = winner == hi;
        if !at_lo && !at_hi {
            self.capped = false;
            return false;
        }
        let Some(step) = self.step else {
            self.capped = true;
            return false;
        };
        if self.extensions >= MAX_EXTENSIONS {
            self.capped = true;
            return false;
        }
        let next = match (self.axis, at_hi) {
            (Axis::Epsilon, true) => round_step(hi + step),
            (Axis::Epsilon, false) => round_step((lo - step).max(0.0)),
            (_, true) => round_ratio(hi * step),
            (_, false) => round_ratio(lo / step),
        };
        if at_hi {
            self.values.push(next);
        } else {
            self.values.insert(0, next);
        }
        self.extensions += 1;
        self.capped = false;
        true
    }
}

/// Runs the search for `task.family` (an SVR family); `task.hyper` is ignored.
pub fn grid_search(task: &CvTask<'_>, grid: &Grid, plan: &CvPlan) -> Result<GridSearchResult, CvError> {
    let family = task.family;
    if !family.is_svr() {
        return Err(CvError::InvalidPlan(format!(
            "{family} has no hyperparameters to search"
        )));
    }
    grid.validate(family).map_err(CvError::InvalidPlan)?;
    let radial = family == ModelFamily::RadialSvr;
    let mut axes = vec![
        AxisState::new(Axis::C, grid.c_values.clone()),
        AxisState::new(Axis::Epsilon, grid.epsilon_values.clone()),
    ];
    if radial {
        axes.push(AxisState::new(Axis::Gamma, grid.gamma_values.clone()));
    }

    let mut evaluated: HashMap<CellKey, Result<CvSummary, String>> = HashMap::new();
    let mut cells = Vec::new();
    let mut failed = Vec::new();

    loop {
        let mut pending = Vec::new();
        for &c in &axes[0].values {
            for &epsilon in &axes[1].values {
                let gammas: Vec<Option<f64>> = if radial {
                    axes[2].values.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                for gamma in gammas {
                    let h = Hyperparams { c, epsilon, gamma };
                    if !evaluated.contains_key(&key(&h)) {
                        pending.push(h);
                    }
                }
            }
        }
        let results: Vec<(Hyperparams, Result<CvSummary, String>)> = pending
            .into_par_iter()
            .map(|h| {
                let t = CvTask {
                    hyper: Some(&h),
                    ..*task
                };
                (h, cross_validate(&t, plan).map_err(|e| e.to_string()))
            })
            .collect();
        for (h, r) in results {
            match &r {
                Ok(summary) => cells.push(GridCell {
                    hyper: h,
                    summary: summary.clone(),
                }),
                Err(msg) => failed.push((h, msg.clone())),
            }
            evaluated.insert(key(&h), r);
        }

        let best = cells
            .iter()
            .fold(None::<&GridCell>, |acc, cell| match acc {
                Some(b) if !better(cell, b) => Some(b),
                _ => Some(cell),
            })
            .cloned();
        let Some(best) = best else {
            let msg = failed.first().map(|(_, m)| m.clone()).unwrap_or_default();
            return Err(CvError::InvalidPlan(format!("every grid cell failed: {msg}")));
        };

        let mut extended = false;
        for state in &mut axes {
            let winner = match state.axis {
                Axis::C => best.hyper.c,
                Axis::Epsilon => best.hyper.epsilon,
                Axis::Gamma => best.hyper.gamma.unwrap_or(0.0),
            };
            extended |= state.extend_if_boundary(winner);
        }
        if !extended {
            let grid = Grid {
                c_values: axes[0].values.clone(),
                epsilon_values: axes[1].values.clone(),
                gamma_values: if radial { axes[2].values.clone() } else { Vec::new() },
            };
            return Ok(GridSearchResult {
                family,
                best,
                cells,
                failed,
                extensions: axes.iter().map(|a| (a.axis, a.extensions)).collect(),
                capped_axes: axes.iter().filter(|a| a.capped).map(|a| a.axis).collect(),
                grid,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_seed_grid() {
        let g = Grid::default();
        assert_eq!(g.c_values.len(), 17);
        assert_eq!(g.c_values[16], 65536.0);
        assert_eq!(
            g.epsilon_values,
            vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        );
        assert_eq!(g.gamma_values.len(), 5);
        assert!((g.gamma_values[0] - 1e-7).abs() < 1e-20);
    }

    #[test]
    fn axis_extension_rules() {
        let mut eps = AxisState::new(Axis::Epsilon, vec![0.0, 0.1, 0.2]);
        assert!(!eps.extend_if_boundary(0.0));
        assert!(!eps.capped);
        assert!(eps.extend_if_boundary(0.2));
        assert_eq!(eps.values, vec![0.0, 0.1, 0.2, 0.3]);

        let mut c = AxisState::new(Axis::C, vec![1.0, 2.0, 4.0]);
        assert!(c.extend_if_boundary(1.0));
        assert_eq!(c.values, vec![0.5, 1.0, 2.0, 4.0]);
        assert!(c.extend_if_boundary(4.0));
        assert_eq!(*c.values.last().unwrap(), 8.0);
        assert!(!c.extend_if_boundary(2.0));

        let mut single = AxisState::new(Axis::Gamma, vec![1e-3]);
        assert!(!single.extend_if_boundary(1e-3));
        assert!(single.capped);

        let mut capped = AxisState::new(Axis::C, vec![1.0, 2.0]);
        for _ in 0..MAX_EXTENSIONS {
            let hi = *capped.values.last().unwrap();
            assert!(capped.extend_if_boundary(hi));
        }
        let hi = *capped.values.last().unwrap();
        assert!(!capped.extend_if_boundary(hi));
        assert!(capped.capped);
    }

    fn cell(c: f64, epsilon: f64, gamma: Option<f64>, rmse: f64) -> GridCell {
        GridCell {
            hyper: Hyperparams { c, epsilon, gamma },
            summary: CvSummary {
                mean_rmse: rmse,
                sd_rmse: 0.0,
                mean_mape: 0.0,
                sd_mape: 0.0,
                repeat_rmse: vec![],
                repeat_mape: vec![],
            },
        }
    }

    #[test]
    fn tie_breaks_toward_simpler() {
        assert!(better(&cell(1.0, 0.1, None, 5.0), &cell(2.0, 0.1, None, 5.0)));
        assert!(better(
            &cell(1.0, 0.1, Some(1e-4), 5.0),
            &cell(1.0, 0.1, Some(1e-3), 5.0)
        ));
        assert!(better(&cell(1.0, 0.5, None, 5.0), &cell(1.0, 0.1, None, 5.0)));
        assert!(better(&cell(8.0, 0.0, None, 4.0), &cell(1.0, 0.5, None, 5.0)));
    }
}
