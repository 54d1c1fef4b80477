mod common;

use std::collections::BTreeSet;

use addonsite::models::{FeatureSpec, Hyperparams, ModelFamily, SolverSettings};
use addonsite::select::{cross_validate, cross_validate_traced, evaluate_family, grid_search, CvPlan, CvTask, Grid};
use common::*;

fn task<'a>(
    net: &'a addonsite::geo::Network,
    members: &'a [usize],
    family: ModelFamily,
    spec: FeatureSpec,
) -> CvTask<'a> {
    CvTask {
        network: net,
        members,
        family,
        spec,
        hyper: None,
        settings: SolverSettings::default(),
    }
}

#[test]
fn folds_partition_members() {
    let plan = CvPlan {
        repeats: 4,
        folds: 7,
        seed: 3,
    };
    for repeat in 0..plan.repeats {
        let folds = plan.folds_for_repeat(50, repeat);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn held_out_lags_use_training_sites_only() {
    let mut r = rng(51);
    let net = random_network(&mut r, 40, 5);
    let members = net.active();
    let plan = CvPlan {
        repeats: 2,
        folds: 5,
        seed: 9,
    };
    let (_, traces) =
        cross_validate_traced(&task(&net, &members, ModelFamily::Ols, FeatureSpec::WITH_LAG), &plan).unwrap();
    assert_eq!(traces.len(), 10);
    for t in traces {
        let train: BTreeSet<usize> = t.train.iter().copied().collect();
        assert!(t.test.iter().all(|s| !train.contains(s)));
        assert!(!t.test_lag_sources.is_empty());
        assert!(t.test_lag_sources.iter().all(|s| train.contains(s)));
    }
}

#[test]
fn grid_search_picks_the_cv_argmin() {
    let mut r = rng(52);
    let net = random_network(&mut r, 36, 0);
    let members = net.active();
    let plan = CvPlan {
        repeats: 2,
        folds: 4,
        seed: 5,
    };
    let grid = Grid {
        c_values: vec![0.25, 4.0, 64.0],
        epsilon_values: vec![0.1, 0.5],
        gamma_values: vec![1e-2],
    };
    let base = task(&net, &members, ModelFamily::LinearSvr, FeatureSpec::WITHOUT_LAG);
    let result = grid_search(&base, &grid, &plan).unwrap();
    let mut best: Option<(f64, Hyperparams)> = None;
    for cell in &result.cells {
        let hyper = cell.hyper;
        let again = cross_validate(
            &CvTask {
                hyper: Some(&hyper),
                ..base
            },
            &plan,
        )
        .unwrap();
        assert_eq!(again, cell.summary);
        if best.is_none_or(|(rmse, _)| again.mean_rmse < rmse) {
            best = Some((again.mean_rmse, hyper));
        }
    }
    assert_eq!(result.best.summary.mean_rmse, best.unwrap().0);
}

#[test]
fn boundary_optimum_extends_the_grid() {
    let mut r = rng(53);
    let net = random_network(&mut r, 40, 0);
    let members = net.active();
    let plan = CvPlan {
        repeats: 1,
        folds: 4,
        seed: 1,
    };
    // Heavily regularized models underfit, so the search must grow C upward.
    let grid = Grid {
        c_values: vec![1.0 / 1024.0, 1.0 / 512.0],
        epsilon_values: vec![0.1, 0.2],
        gamma_values: vec![1e-2],
    };
    let result = grid_search(
        &task(&net, &members, ModelFamily::LinearSvr, FeatureSpec::WITHOUT_LAG),
        &grid,
        &plan,
    )
    .unwrap();
    assert!(!result.extensions.is_empty());
    assert!(result.best.hyper.c > 1.0 / 512.0);
    assert!(result.grid.c_values.len() > 2);
}

#[test]
fn ols_needs_no_search() {
    let mut r = rng(54);
    let net = random_network(&mut r, 30, 0);
    let members = net.active();
    let plan = CvPlan::quick(2);
    let res = evaluate_family(
        &net,
        &members,
        ModelFamily::Ols,
        FeatureSpec::WITH_LAG,
        &Grid::default(),
        &plan,
        SolverSettings::default(),
    )
    .unwrap();
    assert!(res.search.is_none() && res.hyper.is_none());
    assert_eq!(res.summary.repeat_rmse.len(), plan.repeats);
}
