//! CSV report tables. Numbers use Rust's shortest round-trip formatting so
//! identical inputs give byte-identical files.

use crate::experiment::{GainRecord, SweepResult};
use crate::geo::Network;
use crate::models::{FeatureSpec, ModelFamily};
use crate::moran::MoranResult;
use crate::select::FamilyResult;

use super::IoError;

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Schema(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per test: `(test name, variable, result)`.
pub fn moran_csv(rows: &[(String, String, MoranResult)]) -> Result<String, IoError> {
    to_csv(
        &[
            "test",
            "variable",
            "method",
            "alternative",
            "statistic",
            "expected",
            "variance",
            "z",
            "p_value",
            "permutations",
        ],
        rows.iter()
            .map(|(test, var, r)| {
                vec![
                    test.clone(),
                    var.clone(),
                    format!("{:?}", r.method).to_lowercase(),
                    format!("{:?}", r.alternative).to_lowercase(),
                    num(r.statistic),
                    num(r.expected),
                    num(r.variance),
                    num(r.z),
                    num(r.p_value),
                    r.permutations.to_string(),
                ]
            })
            .collect(),
    )
}

/// Statistics × feature set down, model families across.
pub fn cv_table_csv(results: &[FamilyResult], families: &[ModelFamily]) -> Result<String, IoError> {
    let mut header = vec!["statistic", "features"];
    header.extend(families.iter().map(|f| match f {
        ModelFamily::Ols => "ols",
        ModelFamily::LinearSvr => "linear_svr",
        ModelFamily::RadialSvr => "radial_svr",
    }));
    let stats: [(&str, fn(&FamilyResult) -> f64); 4] = [
        ("mean_rmse", |r| r.summary.mean_rmse),
        ("sd_rmse", |r| r.summary.sd_rmse),
        ("mean_mape", |r| r.summary.mean_mape),
        ("sd_mape", |r| r.summary.sd_mape),
    ];
    let mut rows = Vec::new();
    for (name, get) in stats {
        for spec in [FeatureSpec::WITH_LAG, FeatureSpec::WITHOUT_LAG] {
            if !results.iter().any(|r| r.spec == spec) {
                continue;
            }
            let mut row = vec![name.to_string(), spec.label().to_string()];
            for &f in families {
                row.push(
                    results
                        .iter()
                        .find(|r| r.family == f && r.spec == spec)
                        .map(|r| num(get(r)))
                        .unwrap_or_default(),
                );
            }
            rows.push(row);
        }
    }
    to_csv(&header, rows)
}

/// Every evaluated hyperparameter cell plus the OLS rows.
pub fn cv_cells_csv(results: &[FamilyResult]) -> Result<String, IoError> {
    let mut rows = Vec::new();
    for r in results {
        let base = |c: String, e: String, g: String, s: &crate::select::CvSummary, selected: bool, status: &str| {
            vec![
                r.family.to_string(),
                r.spec.label().to_string(),
                c,
                e,
                g,
                num(s.mean_rmse),
                num(s.sd_rmse),
                num(s.mean_mape),
                num(s.sd_mape),
                selected.to_string(),
                status.to_string(),
            ]
        };
        match &r.search {
            None => rows.push(base(
                String::new(),
                String::new(),
                String::new(),
                &r.summary,
                true,
                "ok",
            )),
            Some(search) => {
                for cell in &search.cells {
                    let h = cell.hyper;
                    rows.push(base(
                        num(h.c),
                        num(h.epsilon),
                        opt(h.gamma),
                        &cell.summary,
                        Some(h) == r.hyper,
                        "ok",
                    ));
                }
                for (h, msg) in &search.failed {
                    let mut row = vec![
                        r.family.to_string(),
                        r.spec.label().to_string(),
                        num(h.c),
                        num(h.epsilon),
                        opt(h.gamma),
                    ];
                    row.extend(std::iter::repeat_n(String::new(), 4));
                    row.push("false".into());
                    row.push(format!("failed: {msg}"));
                    rows.push(row);
                }
            }
        }
    }
    to_csv(
        &[
            "family",
            "features",
            "c",
            "epsilon",
            "gamma",
            "mean_rmse",
            "sd_rmse",
            "mean_mape",
            "sd_mape",
            "selected",
            "status",
        ],
        rows,
    )
}

/// Mean gain (%) with `K` down and `s` across.
pub fn gains_table_csv(sweep: &SweepResult) -> Result<String, IoError> {
    let mut s_values: Vec<f64> = Vec::new();
    for c in &sweep.table {
        if !s_values.contains(&c.s) {
            s_values.push(c.s);
        }
    }
    let names: Vec<String> = s_values.iter().map(|s| format!("s={s}")).collect();
    let mut header = vec!["k"];
    header.extend(names.iter().map(String::as_str));
    let rows = (1..=sweep.k_max)
        .map(|k| {
            let mut row = vec![k.to_string()];
            for &s in &s_values {
                row.push(sweep.cell(s, k).map(|c| num(c.mean_gain)).unwrap_or_default());
            }
            row
        })
        .collect();
    to_csv(&header, rows)
}

pub fn gain_records_csv(records: &[GainRecord]) -> Result<String, IoError> {
    to_csv(
        &[
            "region", "model", "s", "draw", "k", "z0", "z_b", "z_e", "gain", "solver", "optimal",
        ],
        records
            .iter()
            .map(|r| {
                vec![
                    r.region.clone(),
                    r.model.clone(),
                    num(r.s),
                    r.draw.to_string(),
                    r.k.to_string(),
                    num(r.z0),
                    num(r.z_b),
                    num(r.z_e),
                    opt(r.gain),
                    r.solver.to_string(),
                    r.optimal.to_string(),
                ]
            })
            .collect(),
    )
}

/// Per-candidate table for one expansion: `(site, chosen, marginal)` rows.
pub fn expansion_csv(network: &Network, marginals: &[(usize, bool, f64)]) -> Result<String, IoError> {
    let mut rows: Vec<(usize, bool, f64)> = marginals.to_vec();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(network.site(a.0).id.cmp(&network.site(b.0).id)));
    to_csv(
        &["id", "chosen", "lat", "lon", "base_sales", "marginal"],
        rows.iter()
            .map(|&(i, chosen, m)| {
                let s = network.site(i);
                vec![
                    s.id.clone(),
                    chosen.to_string(),
                    num(s.lat),
                    num(s.lon),
                    opt(s.base_sales),
                    num(m),
                ]
            })
            .collect(),
    )
}
