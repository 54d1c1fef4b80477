use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::geo::{lag_against, GeoError, Network};

/// Which predictors enter the model. Column order is always `(g, Wg, h, p)` or
/// `(g, h, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub use_spatial_lag: bool,
}

impl FeatureSpec {
    pub const WITH_LAG: FeatureSpec = FeatureSpec { use_spatial_lag: true };
    pub const WITHOUT_LAG: FeatureSpec = FeatureSpec { use_spatial_lag: false };

    pub fn dim(self) -> usize {
        if self.use_spatial_lag {
            4
        } else {
            3
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        if self.use_spatial_lag {
            &["base_sales", "spatial_lag", "income", "population"]
        } else {
            &["base_sales", "income", "population"]
        }
    }

    /// Column of the lag feature, if present.
    pub fn lag_column(self) -> Option<usize> {
        self.use_spatial_lag.then_some(1)
    }

    pub fn label(self) -> &'static str {
        if self.use_spatial_lag {
            "4-feature"
        } else {
            "3-feature"
        }
    }

    pub fn row(self, g: f64, lag: f64, h: f64, p: f64) -> Vec<f64> {
        if self.use_spatial_lag {
            vec![g, lag, h, p]
        } else {
            vec![g, h, p]
        }
    }
}

/// Feature rows for a member set, one per member in the given order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub members: Vec<usize>,
    pub rows: DMatrix<f64>,
    /// Observed add-on sales where the member has them.
    pub targets: Vec<Option<f64>>,
}

impl FeatureMatrix {
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.rows.row(k).iter().copied().collect()
    }

    /// Targets for every row, failing on the first member without add-on sales.
    pub fn required_targets(&self, network: &Network) -> Result<Vec<f64>, ModelError> {
        self.targets
            .iter()
            .zip(&self.members)
            .map(|(t, &i)| {
                t.ok_or_else(|| ModelError::MissingField {
                    site: network.site(i).id.clone(),
                    field: "addon_sales",
                })
            })
            .collect()
    }
}

/// Features for `members`, with the lag of each member taken over the member
/// set itself.
pub fn build_features(network: &Network, members: &[usize], spec: FeatureSpec) -> Result<FeatureMatrix, ModelError> {
    build_features_with_sources(network, members, members, spec)
}

/// Features for `targets` where the lag is computed only from `lag_sources`.
/// Cross-validation uses this to keep held-out sites out of each other's lag.
pub fn build_features_with_sources(
    network: &Network,
    targets: &[usize],
    lag_sources: &[usize],
    spec: FeatureSpec,
) -> Result<FeatureMatrix, ModelError> {
    let sales = network.base_sales();
    let mut g = Vec::with_capacity(targets.len());
    for &i in targets {
        if i >= network.len() {
            return Err(GeoError::UnknownMember(i).into());
        }
        let v = sales[i].ok_or_else(|| ModelError::MissingField {
            site: network.site(i).id.clone(),
            field: "base_sales",
        })?;
        g.push(v);
    }
    let lag = if spec.use_spatial_lag {
        lag_against(network.weights(), &sales, targets, lag_sources).map_err(|e| match e {
            GeoError::MissingSales(j) => ModelError::MissingField {
                site: network.site(j).id.clone(),
                field: "base_sales",
            },
            other => other.into(),
        })?
    } else {
        vec![0.0; targets.len()]
    };
    let dim = spec.dim();
    let mut rows = DMatrix::zeros(targets.len(), dim);
    for (k, &i) in targets.iter().enumerate() {
        let site = network.site(i);
        let row = spec.row(g[k], lag[k], site.income, site.population);
        for (j, v) in row.into_iter().enumerate() {
            rows[(k, j)] = v;
        }
    }
    Ok(FeatureMatrix {
        members: targets.to_vec(),
        rows,
        targets: targets.iter().map(|&i| network.site(i).addon_sales).collect(),
    })
}
