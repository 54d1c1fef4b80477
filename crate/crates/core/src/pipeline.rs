//! End-to-end run: Moran tests, feature policy, cross-validated model
//! selection, expansion optimization, the gain experiment and the robustness
//! check. Each stage writes its outputs before the next starts, so a failure
//! leaves earlier results on disk.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::experiment::{robustness_check, run_gain_sweep, SweepOptions, SweepResult};
use crate::geo::Network;
use crate::io::{self, reports, FeaturePolicy, RunConfig};
use crate::models::{build_features, DemandModel, FeatureSpec, Hyperparams, ModelFamily};
use crate::moran::{morans_test_analytic, morans_test_permutation, residual_moran, Alternative, MoranResult};
use crate::optimize::{
    marginal_table, solve, ExactOptions, ExpansionProblem, ModelObjective, OptimizeError, SolverChoice,
};
use crate::select::{evaluate_family, refit, select_best, FamilyResult};

/// How held-out sites see the spatial lag during cross-validation.
pub const CV_LAG_RULE: &str =
    "held-out sites' spatial lag is computed against training-fold sites only; training sites' lag against the other training sites";

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

/// Base-sales Moran tests (analytic and permutation), plus the add-on sales
/// and the residuals of a 3-feature OLS fit, over the active sites.
pub fn moran_report(
    network: &Network,
    permutations: usize,
    seed: u64,
) -> Result<Vec<(String, String, MoranResult)>, PipelineError> {
    let err = stage("moran");
    let active = network.active();
    let w = network.weights_among(&active);
    let g: Vec<f64> = active
        .iter()
        .map(|&i| network.site(i).base_sales.unwrap_or(0.0))
        .collect();
    let a: Vec<f64> = active
        .iter()
        .map(|&i| network.site(i).addon_sales.unwrap_or(0.0))
        .collect();
    let alt = Alternative::Greater;
    let mut rows = vec![
        (
            "moran".to_string(),
            "base_sales".to_string(),
            morans_test_analytic(&w, &g, alt).map_err(&err)?,
        ),
        (
            "moran".to_string(),
            "base_sales".to_string(),
            morans_test_permutation(&w, &g, permutations, seed, alt).map_err(&err)?,
        ),
        (
            "moran".to_string(),
            "addon_sales".to_string(),
            morans_test_permutation(&w, &a, permutations, seed, alt).map_err(&err)?,
        ),
    ];
    let x = build_features(network, &active, FeatureSpec::WITHOUT_LAG).map_err(stage("moran"))?;
    rows.push((
        "residual_moran".to_string(),
        "addon_sales~base_sales+income+population".to_string(),
        residual_moran(&w, &a, &x.rows, permutations, seed, alt).map_err(&err)?,
    ));
    Ok(rows)
}

/// Applies the feature policy given the base-sales permutation p-value.
pub fn resolve_policy(policy: FeaturePolicy, base_sales_p: f64, alpha: f64) -> FeatureSpec {
    match policy {
        FeaturePolicy::Force3 => FeatureSpec::WITHOUT_LAG,
        FeaturePolicy::Force4 => FeatureSpec::WITH_LAG,
        FeaturePolicy::Auto if base_sales_p < alpha => FeatureSpec::WITH_LAG,
        FeaturePolicy::Auto => FeatureSpec::WITHOUT_LAG,
    }
}

#[derive(Debug, Clone, Serialize)]
struct PolicyRecord {
    policy: FeaturePolicy,
    alpha: f64,
    base_sales_permutation_p: f64,
    resolved: &'static str,
}

#[derive(Debug, Clone, Serialize)]
struct SelectedRecord {
    family: ModelFamily,
    features: &'static str,
    hyperparameters: Option<Hyperparams>,
    mean_rmse: f64,
    mean_mape: f64,
    refit: &'static str,
}

#[derive(Debug, Clone, Serialize)]
struct ExpansionRecord {
    k: usize,
    solver: String,
    optimal: bool,
    objective_value: f64,
    chosen: Vec<String>,
    note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: RunConfig,
    cv_lag_rule: &'static str,
    feature_policy: PolicyRecord,
    selected: SelectedRecord,
    expansion: ExpansionRecord,
    experiment_degenerate_records: usize,
    warnings: Vec<String>,
    outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub spec: FeatureSpec,
    pub selected: ModelFamily,
    pub outputs: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl Writer<'_> {
    fn text(&mut self, name: &str, text: &str, stage_name: &'static str) -> Result<(), PipelineError> {
        io::write_text(&self.dir.join(name), text).map_err(stage(stage_name))?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

pub fn exact_options(config: &RunConfig) -> ExactOptions {
    ExactOptions {
        time_limit: Some(Duration::from_secs_f64(config.solver_time_limit)),
        ..ExactOptions::default()
    }
}

/// Runs every stage and writes the artifact set into `config.out`.
pub fn pipeline_run(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    let seed = config.seed.ok_or_else(|| PipelineError {
        stage: "config",
        message: "a seed is required".into(),
    })?;
    let sites_path = config.sites.as_ref().ok_or_else(|| PipelineError {
        stage: "config",
        message: "no sites file given".into(),
    })?;
    let network = io::load_sites(sites_path, config.metric).map_err(stage("load"))?;
    std::fs::create_dir_all(&config.out).map_err(stage("output"))?;
    let mut w = Writer {
        dir: &config.out,
        outputs: Vec::new(),
    };
    let mut warnings = Vec::new();

    // Spatial autocorrelation and feature policy.
    let moran = moran_report(&network, config.permutations, seed)?;
    w.text(
        "moran.csv",
        &reports::moran_csv(&moran).map_err(stage("moran"))?,
        "moran",
    )?;
    let base_p = moran[1].2.p_value;
    let spec = resolve_policy(config.feature_policy, base_p, config.alpha);

    // Cross-validation and selection.
    let active = network.active();
    let plan = config.cv_plan(seed);
    let grid = config.grid();
    let settings = config.solver_settings();
    let mut results: Vec<FamilyResult> = Vec::new();
    for s in [FeatureSpec::WITH_LAG, FeatureSpec::WITHOUT_LAG] {
        for &family in &config.families {
            let r = evaluate_family(&network, &active, family, s, &grid, &plan, settings).map_err(stage("cv"))?;
            if let Some(search) = &r.search {
                if !search.capped_axes.is_empty() {
                    warnings.push(format!(
                        "{family} ({}): grid boundary not resolved on {:?}",
                        s.label(),
                        search.capped_axes
                    ));
                }
            }
            results.push(r);
        }
    }
    w.text(
        "cv.csv",
        &reports::cv_table_csv(&results, &config.families).map_err(stage("cv"))?,
        "cv",
    )?;
    w.text(
        "cv_cells.csv",
        &reports::cv_cells_csv(&results).map_err(stage("cv"))?,
        "cv",
    )?;
    let in_policy: Vec<FamilyResult> = results.iter().filter(|r| r.spec == spec).cloned().collect();
    let best = select_best(&in_policy).cloned().ok_or_else(|| PipelineError {
        stage: "select",
        message: "no model family evaluated".into(),
    })?;
    let model = refit(&network, &best, settings).map_err(stage("select"))?;
    w.text(
        "model.json",
        &io::model_to_json(&model).map_err(stage("select"))?,
        "select",
    )?;
    let mut alternates: Vec<(ModelFamily, DemandModel)> = Vec::new();
    for r in &in_policy {
        if r.family == best.family {
            continue;
        }
        let m = refit(&network, r, settings).map_err(stage("select"))?;
        w.text(
            &format!("model_{}.json", r.family),
            &io::model_to_json(&m).map_err(stage("select"))?,
            "select",
        )?;
        alternates.push((r.family, m));
    }

    // Expansion on the observed data.
    let expansion = expand(&network, &model, config, &mut w)?;

    // Gain experiment and robustness.
    let sweep_options = SweepOptions {
        region: config.region.clone(),
        model_label: best.family.to_string(),
        solver: match config.solver {
            SolverChoice::Baseline => SolverChoice::Auto,
            other => other,
        },
        exact: exact_options(config),
    };
    let sweep =
        run_gain_sweep(&network, &model, &config.sim_config(seed), &sweep_options).map_err(stage("experiment"))?;
    warnings.extend(sweep.warnings.iter().cloned());
    write_sweep(&mut w, &sweep, "gains.csv", "gain_records.csv", "experiment")?;
    for (family, alt) in &alternates {
        let r = robustness_check(&network, &sweep, alt, &family.to_string()).map_err(stage("robustness"))?;
        write_sweep(
            &mut w,
            &r,
            &format!("robustness_{family}.csv"),
            &format!("robustness_records_{family}.csv"),
            "robustness",
        )?;
    }

    let mut outputs = w.outputs.clone();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "addonsite",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: config.clone(),
        cv_lag_rule: CV_LAG_RULE,
        feature_policy: PolicyRecord {
            policy: config.feature_policy,
            alpha: config.alpha,
            base_sales_permutation_p: base_p,
            resolved: spec.label(),
        },
        selected: SelectedRecord {
            family: best.family,
            features: spec.label(),
            hyperparameters: best.hyper,
            mean_rmse: best.summary.mean_rmse,
            mean_mape: best.summary.mean_mape,
            refit: "final model refit on all active sites with the selected hyperparameters",
        },
        expansion,
        experiment_degenerate_records: sweep.degenerate,
        warnings,
        outputs: outputs.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(stage("manifest"))? + "\n";
    w.text("manifest.json", &json, "manifest")?;
    Ok(RunSummary {
        out: config.out.clone(),
        spec,
        selected: best.family,
        outputs,
    })
}

fn write_sweep(
    w: &mut Writer<'_>,
    sweep: &SweepResult,
    table: &str,
    records: &str,
    stage_name: &'static str,
) -> Result<(), PipelineError> {
    w.text(
        table,
        &reports::gains_table_csv(sweep).map_err(stage(stage_name))?,
        stage_name,
    )?;
    w.text(
        records,
        &reports::gain_records_csv(&sweep.records).map_err(stage(stage_name))?,
        stage_name,
    )
}

fn expand(
    network: &Network,
    model: &DemandModel,
    config: &RunConfig,
    w: &mut Writer<'_>,
) -> Result<ExpansionRecord, PipelineError> {
    let err = stage("optimize");
    let candidates = network.candidates();
    let skipped = |note: String| ExpansionRecord {
        k: 0,
        solver: String::new(),
        optimal: false,
        objective_value: f64::NAN,
        chosen: Vec::new(),
        note: Some(note),
    };
    if candidates.is_empty() {
        return Ok(skipped("no candidate sites".into()));
    }
    if let Some(&c) = candidates.iter().find(|&&c| network.site(c).base_sales.is_none()) {
        return Ok(skipped(format!(
            "candidate `{}` has no base sales; expansion on observed data skipped",
            network.site(c).id
        )));
    }
    let k = config.k.min(candidates.len());
    let data = ModelObjective::from_model(model, network).map_err(&err)?;
    let problem = ExpansionProblem::for_network(network, k, data.as_objective(model, network)).map_err(&err)?;
    let g = network.base_sales();
    let (solution, note) = match solve(&problem, config.solver, Some(&g), &exact_options(config)) {
        Ok(s) => (s, None),
        Err(OptimizeError::TimeLimit { incumbent }) => {
            (*incumbent, Some("time limit reached; incumbent reported".into()))
        }
        Err(e) => return Err(err(e)),
    };
    let marginals = marginal_table(&problem, &solution.chosen).map_err(&err)?;
    w.text(
        "expansion.csv",
        &reports::expansion_csv(network, &marginals).map_err(stage("optimize"))?,
        "optimize",
    )?;
    let title = format!("{}: K = {k}, {} solver", config.region, solution.solver);
    w.text(
        "map.svg",
        &io::render_map_svg(network, &solution.chosen, &title).map_err(stage("optimize"))?,
        "optimize",
    )?;
    Ok(ExpansionRecord {
        k,
        solver: solution.solver.to_string(),
        optimal: solution.optimal,
        objective_value: solution.objective_value,
        chosen: solution.chosen.iter().map(|&c| network.site(c).id.clone()).collect(),
        note,
    })
}
