use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use addonsite::experiment::{robustness_check, run_gain_sweep, SweepOptions};
use addonsite::geo::{DistanceMetric, Network};
use addonsite::io::{self, reports, ConfigFile, FeaturePolicy, RunConfig};
use addonsite::models::{DemandModel, FeatureSpec, Hyperparams, ModelFamily};
use addonsite::optimize::{
    marginal_table, solve, ExpansionProblem, ExpansionSolution, ModelObjective, OptimizeError, SolverChoice,
};
use addonsite::pipeline::{exact_options, moran_report, pipeline_run, resolve_policy};
use addonsite::select::{evaluate_family, refit, select_best, FamilyResult};
use addonsite::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "addonsite",
    version,
    about = "Add-on demand prediction and expansion-site selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Moran's I tests on the active sites.
    Moran(Common),
    /// Fit one model family with fixed hyperparameters.
    Fit(FitArgs),
    /// Cross-validate every family (grid-searching SVR hyperparameters).
    Cv(CvArgs),
    /// Resolve the feature policy, pick the best family and fit it on all data.
    Select(Common),
    /// Choose K expansion sites under a fitted model.
    Optimize(OptimizeArgs),
    /// Simulated-demand gain sweep and robustness check.
    Experiment(ExperimentArgs),
    /// Full pipeline.
    Run(Common),
    /// Draw a site map, optionally highlighting chosen candidates.
    Map(MapArgs),
    /// Write a synthetic site file.
    Synth(SynthArgs),
}

/// Configuration keys; each overrides the same key in `--config`.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML file with any of the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sites: Option<PathBuf>,
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    metric: Option<DistanceMetric>,
    #[arg(long, alias = "feature_policy")]
    feature_policy: Option<FeaturePolicy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, alias = "cv_repeats")]
    cv_repeats: Option<usize>,
    #[arg(long, alias = "cv_folds")]
    cv_folds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<ModelFamily>>,
    #[arg(long, alias = "c_values", value_delimiter = ',')]
    c_values: Option<Vec<f64>>,
    #[arg(long, alias = "epsilon_values", value_delimiter = ',')]
    epsilon_values: Option<Vec<f64>>,
    #[arg(long, alias = "gamma_values", value_delimiter = ',')]
    gamma_values: Option<Vec<f64>>,
    #[arg(long, alias = "svr_tol")]
    svr_tol: Option<f64>,
    #[arg(long, alias = "svr_max_iter")]
    svr_max_iter: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    solver: Option<SolverChoice>,
    /// Seconds.
    #[arg(long, alias = "solver_time_limit")]
    solver_time_limit: Option<f64>,
    #[arg(long, alias = "s_values", value_delimiter = ',')]
    s_values: Option<Vec<f64>>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, alias = "k_max")]
    k_max: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            sites: self.sites.clone(),
            region: self.region.clone(),
            metric: self.metric,
            feature_policy: self.feature_policy,
            alpha: self.alpha,
            permutations: self.permutations,
            cv_repeats: self.cv_repeats,
            cv_folds: self.cv_folds,
            families: self.families.clone(),
            c_values: self.c_values.clone(),
            epsilon_values: self.epsilon_values.clone(),
            gamma_values: self.gamma_values.clone(),
            svr_tol: self.svr_tol,
            svr_max_iter: self.svr_max_iter,
            k: self.k,
            solver: self.solver,
            solver_time_limit: self.solver_time_limit,
            s_values: self.s_values.clone(),
            draws: self.draws,
            k_max: self.k_max,
            out: self.out.clone(),
            seed: self.seed,
        };
        Ok(file.overlaid_with(flags).resolve()?)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    family: ModelFamily,
    /// 3 or 4.
    #[arg(long, default_value_t = 3)]
    features: u8,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    common: Common,
    /// 3, 4 or both.
    #[arg(long, default_value = "both")]
    features: String,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, num_args = 1..)]
    alt_models: Vec<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    sites: PathBuf,
    #[arg(long, default_value = "haversine")]
    metric: DistanceMetric,
    /// Comma-separated candidate ids to draw filled.
    #[arg(long, value_delimiter = ',')]
    chosen: Vec<String>,
    /// Solution JSON written by `optimize`; its chosen ids are added to `--chosen`.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 90)]
    n_active: usize,
    #[arg(long, default_value_t = 230)]
    n_candidates: usize,
    /// Plant spatial clustering in base sales.
    #[arg(long)]
    clustered: bool,
    /// Add-on slope on the spatial lag.
    #[arg(long, default_value_t = 0.0)]
    beta_lag: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Moran(c) => cmd_moran(&c),
        Command::Fit(a) => cmd_fit(&a),
        Command::Cv(a) => cmd_cv(&a),
        Command::Select(c) => cmd_select(&c),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Run(c) => cmd_run(&c),
        Command::Map(a) => cmd_map(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn load_network(cfg: &RunConfig) -> Result<Network> {
    let path = cfg.sites.as_ref().context("--sites is required")?;
    Ok(io::load_sites(path, cfg.metric)?)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    io::write_text(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_moran(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    let net = load_network(&cfg)?;
    let rows = moran_report(&net, cfg.permutations, cfg.seed.unwrap_or(0))?;
    let csv = reports::moran_csv(&rows)?;
    match &c.out {
        Some(dir) => write(dir, "moran.csv", &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn spec_from(features: u8) -> Result<FeatureSpec> {
    match features {
        3 => Ok(FeatureSpec::WITHOUT_LAG),
        4 => Ok(FeatureSpec::WITH_LAG),
        other => bail!("--features must be 3 or 4, got {other}"),
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let net = load_network(&cfg)?;
    let spec = spec_from(a.features)?;
    let hyper = a.c.map(|c| Hyperparams {
        c,
        epsilon: a.epsilon.unwrap_or(0.1),
        gamma: a.gamma,
    });
    let model = DemandModel::fit_on_active(a.family, spec, &net, hyper.as_ref(), cfg.solver_settings())?;
    write(&cfg.out, "model.json", &io::model_to_json(&model)?)
}

fn cross_validate_all(net: &Network, cfg: &RunConfig, specs: &[FeatureSpec]) -> Result<Vec<FamilyResult>> {
    let active = net.active();
    let plan = cfg.cv_plan(cfg.seed.unwrap_or(0));
    let mut results = Vec::new();
    for &spec in specs {
        for &family in &cfg.families {
            results.push(evaluate_family(
                net,
                &active,
                family,
                spec,
                &cfg.grid(),
                &plan,
                cfg.solver_settings(),
            )?);
        }
    }
    Ok(results)
}

fn cmd_cv(a: &CvArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let net = load_network(&cfg)?;
    let specs = match a.features.as_str() {
        "both" => vec![FeatureSpec::WITH_LAG, FeatureSpec::WITHOUT_LAG],
        f => vec![spec_from(f.parse().context("--features must be 3, 4 or both")?)?],
    };
    let results = cross_validate_all(&net, &cfg, &specs)?;
    write(&cfg.out, "cv.csv", &reports::cv_table_csv(&results, &cfg.families)?)?;
    write(&cfg.out, "cv_cells.csv", &reports::cv_cells_csv(&results)?)
}

fn cmd_select(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    let net = load_network(&cfg)?;
    let spec = match cfg.feature_policy {
        FeaturePolicy::Auto => {
            let rows = moran_report(&net, cfg.permutations, cfg.seed.unwrap_or(0))?;
            resolve_policy(cfg.feature_policy, rows[1].2.p_value, cfg.alpha)
        }
        p => resolve_policy(p, 1.0, cfg.alpha),
    };
    let results = cross_validate_all(&net, &cfg, &[spec])?;
    let best = select_best(&results).context("no family evaluated")?;
    let model = refit(&net, best, cfg.solver_settings())?;
    write(&cfg.out, "cv.csv", &reports::cv_table_csv(&results, &cfg.families)?)?;
    write(&cfg.out, "cv_cells.csv", &reports::cv_cells_csv(&results)?)?;
    write(&cfg.out, "model.json", &io::model_to_json(&model)?)?;
    println!(
        "selected {} ({}), mean RMSE {}",
        best.family,
        spec.label(),
        best.summary.mean_rmse
    );
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SolutionFile {
    chosen: Vec<String>,
    objective_value: f64,
    solver: String,
    optimal: bool,
    k: usize,
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let net = load_network(&cfg)?;
    let model = io::load_model(&a.model)?;
    let data = ModelObjective::from_model(&model, &net)?;
    let problem = ExpansionProblem::for_network(&net, cfg.k, data.as_objective(&model, &net))?;
    let g = net.base_sales();
    let solution: ExpansionSolution = match solve(&problem, cfg.solver, Some(&g), &exact_options(&cfg)) {
        Ok(s) => s,
        Err(OptimizeError::TimeLimit { incumbent }) => {
            eprintln!("time limit reached; reporting the best set found");
            *incumbent
        }
        Err(e) => return Err(e.into()),
    };
    let ids: Vec<String> = solution.chosen.iter().map(|&c| net.site(c).id.clone()).collect();
    let file = SolutionFile {
        chosen: ids.clone(),
        objective_value: solution.objective_value,
        solver: solution.solver.to_string(),
        optimal: solution.optimal,
        k: cfg.k,
    };
    write(
        &cfg.out,
        "solution.json",
        &(serde_json::to_string_pretty(&file)? + "\n"),
    )?;
    write(
        &cfg.out,
        "expansion.csv",
        &reports::expansion_csv(&net, &marginal_table(&problem, &solution.chosen)?)?,
    )?;
    let title = format!("{}: K = {}, {} solver", cfg.region, cfg.k, solution.solver);
    write(
        &cfg.out,
        "map.svg",
        &io::render_map_svg(&net, &solution.chosen, &title)?,
    )?;
    println!(
        "chosen: {}\nobjective: {}\nsolver: {} (optimal: {})",
        ids.join(","),
        solution.objective_value,
        solution.solver,
        solution.optimal
    );
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let seed = cfg.seed.context("--seed is required for experiment")?;
    let net = load_network(&cfg)?;
    let model = io::load_model(&a.model)?;
    let options = SweepOptions {
        region: cfg.region.clone(),
        model_label: model.family().to_string(),
        solver: cfg.solver,
        exact: exact_options(&cfg),
    };
    let sweep = run_gain_sweep(&net, &model, &cfg.sim_config(seed), &options)?;
    for w in &sweep.warnings {
        eprintln!("warning: {w}");
    }
    write(&cfg.out, "gains.csv", &reports::gains_table_csv(&sweep)?)?;
    write(
        &cfg.out,
        "gain_records.csv",
        &reports::gain_records_csv(&sweep.records)?,
    )?;
    for path in &a.alt_models {
        let alt = io::load_model(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| alt.family().to_string());
        let r = robustness_check(&net, &sweep, &alt, &label)?;
        write(
            &cfg.out,
            &format!("robustness_{label}.csv"),
            &reports::gains_table_csv(&r)?,
        )?;
        write(
            &cfg.out,
            &format!("robustness_records_{label}.csv"),
            &reports::gain_records_csv(&r.records)?,
        )?;
    }
    Ok(())
}

fn cmd_run(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    if cfg.seed.is_none() {
        bail!("--seed is required for run");
    }
    let summary = pipeline_run(&cfg)?;
    println!(
        "{} selected with {}; {} files in {}",
        summary.selected,
        summary.spec.label(),
        summary.outputs.len(),
        summary.out.display()
    );
    Ok(())
}

fn cmd_map(a: &MapArgs) -> Result<()> {
    let net = io::load_sites(&a.sites, a.metric)?;
    let mut ids = a.chosen.clone();
    if let Some(p) = &a.solution {
        let file: SolutionFile = serde_json::from_str(&io::read_text(p)?)?;
        ids.extend(file.chosen);
    }
    let mut chosen = Vec::new();
    for id in ids.iter().filter(|s| !s.is_empty()) {
        let i = net.index_of(id).with_context(|| format!("unknown site id `{id}`"))?;
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    let title = a.title.clone().unwrap_or_else(|| "sites".into());
    io::emit_map_svg(&net, &chosen, &title, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::region(a.seed);
    cfg.n_active = a.n_active;
    cfg.n_candidates = a.n_candidates;
    if a.clustered {
        cfg = cfg.clustered();
    }
    cfg.addon.beta_lag = a.beta_lag;
    let net = generate(&cfg)?;
    io::save_sites(&net, &a.out)?;
    println!(
        "wrote {} ({} active, {} candidates)",
        a.out.display(),
        a.n_active,
        a.n_candidates
    );
    Ok(())
}
