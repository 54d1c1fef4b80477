//! Model evaluation and selection: metrics, repeated k-fold CV and grid search.

pub mod cv;
pub mod grid;
pub mod metrics;

use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, cross_validate_traced, CvError, CvPlan, CvSummary, CvTask, FoldTrace};
pub use grid::{grid_search, Axis, Grid, GridCell, GridSearchResult};
pub use metrics::{mape, rmse, MetricError};

use crate::geo::Network;
use crate::models::{DemandModel, FeatureSpec, Hyperparams, ModelError, ModelFamily, SolverSettings};

/// CV outcome for one (family, feature spec) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: ModelFamily,
    pub spec: FeatureSpec,
    pub hyper: Option<Hyperparams>,
    pub summary: CvSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub search: Option<GridSearchResult>,
}

/// Cross-validates OLS directly and grid-searches the SVR families.
pub fn evaluate_family(
    network: &Network,
    members: &[usize],
    family: ModelFamily,
    spec: FeatureSpec,
    grid: &Grid,
    plan: &CvPlan,
    settings: SolverSettings,
) -> Result<FamilyResult, CvError> {
    let task = CvTask {
        network,
        members,
        family,
        spec,
        hyper: None,
        settings,
    };
    if family.is_svr() {
        let search = grid_search(&task, grid, plan)?;
        Ok(FamilyResult {
            family,
            spec,
            hyper: Some(search.best.hyper),
            summary: search.best.summary.clone(),
            search: Some(search),
        })
    } else {
        Ok(FamilyResult {
            family,
            spec,
            hyper: None,
            summary: cross_validate(&task, plan)?,
            search: None,
        })
    }
}

/// Lowest mean RMSE; ties go to fewer features, then the simpler family.
pub fn select_best(results: &[FamilyResult]) -> Option<&FamilyResult> {
    results.iter().min_by(|a, b| {
        a.summary
            .mean_rmse
            .total_cmp(&b.summary.mean_rmse)
            .then(a.spec.dim().cmp(&b.spec.dim()))
            .then(a.family.cmp(&b.family))
    })
}

/// Refits the selected configuration on every active site.
pub fn refit(network: &Network, result: &FamilyResult, settings: SolverSettings) -> Result<DemandModel, ModelError> {
    DemandModel::fit_on_active(result.family, result.spec, network, result.hyper.as_ref(), settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(family: ModelFamily, spec: FeatureSpec, rmse: f64) -> FamilyResult {
        FamilyResult {
            family,
            spec,
            hyper: None,
            summary: CvSummary {
                mean_rmse: rmse,
                sd_rmse: 0.0,
                mean_mape: 0.0,
                sd_mape: 0.0,
                repeat_rmse: vec![rmse],
                repeat_mape: vec![0.0],
            },
            search: None,
        }
    }

    #[test]
    fn selection_rules() {
        let rs = vec![
            result(ModelFamily::RadialSvr, FeatureSpec::WITH_LAG, 2.0),
            result(ModelFamily::LinearSvr, FeatureSpec::WITH_LAG, 2.0),
            result(ModelFamily::Ols, FeatureSpec::WITH_LAG, 3.0),
        ];
        assert_eq!(select_best(&rs).unwrap().family, ModelFamily::LinearSvr);
        let rs = vec![
            result(ModelFamily::Ols, FeatureSpec::WITH_LAG, 1.0),
            result(ModelFamily::RadialSvr, FeatureSpec::WITHOUT_LAG, 1.0),
        ];
        assert_eq!(select_best(&rs).unwrap().spec, FeatureSpec::WITHOUT_LAG);
        assert!(select_best(&[]).is_none());
    }
}
