//! Site and network data model, pairwise distances and inverse-distance
//! spatial weights.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Miles per degree used by the planar metric.
pub const MILES_PER_DEGREE: f64 = 69.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("sites {0} and {1} share identical coordinates")]
    DuplicateCoordinates(usize, usize),
    #[error("site {0} has no base-product sales")]
    MissingSales(usize),
    #[error("duplicate site id `{0}`")]
    DuplicateId(String),
    #[error("site `{id}`: {reason}")]
    InvalidSite { id: String, reason: String },
    #[error("a network needs at least two sites, got {0}")]
    TooFewSites(usize),
    #[error("member index {0} is outside the network")]
    UnknownMember(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteStatus {
    Active,
    Candidate,
}

impl fmt::Display for SiteStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteStatus::Active => f.write_str("active"),
            SiteStatus::Candidate => f.write_str("candidate"),
        }
    }
}

/// One retail location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub status: SiteStatus,
    /// Base-product transactions per year.
    pub base_sales: Option<f64>,
    /// Add-on transactions per year; only meaningful for active sites.
    pub addon_sales: Option<f64>,
    /// Median household income (USD).
    pub income: f64,
    pub population: f64,
}

impl Site {
    pub fn is_active(&self) -> bool {
        self.status == SiteStatus::Active
    }

    /// Checks the per-site invariants, returning a human-readable reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(format!("latitude {} outside [-90, 90]", self.lat));
        }
        if !self.lon.is_finite() || !(-180.0..=180.0).contains(&self.lon) {
            return Err(format!("longitude {} outside [-180, 180]", self.lon));
        }
        let checks = [
            ("base_sales", self.base_sales),
            ("addon_sales", self.addon_sales),
            ("income", Some(self.income)),
            ("population", Some(self.population)),
        ];
        for (name, value) in checks {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("{name} must be a finite non-negative number, got {v}"));
                }
            }
        }
        if self.is_active() {
            if self.base_sales.is_none() {
                return Err("active site requires base_sales".into());
            }
            if self.addon_sales.is_none() {
                return Err("active site requires addon_sales".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Great-circle distance on a sphere of radius [`EARTH_RADIUS_MILES`].
    #[default]
    Haversine,
    /// Planar distance in degrees scaled by [`MILES_PER_DEGREE`].
    EuclideanDegrees,
}

impl DistanceMetric {
    pub fn miles(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match self {
            DistanceMetric::Haversine => {
                let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
                let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
                let dlat = lat2 - lat1;
                let dlon = lon2 - lon1;
                let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
                2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
            }
            DistanceMetric::EuclideanDegrees => {
                let dlat = a.0 - b.0;
                let dlon = a.1 - b.1;
                (dlat * dlat + dlon * dlon).sqrt() * MILES_PER_DEGREE
            }
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceMetric::Haversine => f.write_str("haversine"),
            DistanceMetric::EuclideanDegrees => f.write_str("euclidean_degrees"),
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "haversine" => Ok(DistanceMetric::Haversine),
            "euclidean_degrees" | "euclidean" => Ok(DistanceMetric::EuclideanDegrees),
            other => Err(format!("unknown distance metric `{other}`")),
        }
    }
}

/// Symmetric matrix of pairwise distances in miles.
///
/// Any pair of distinct sites at zero distance is rejected; the inverse-distance
/// weights are undefined there.
pub fn distance_matrix(sites: &[Site], metric: DistanceMetric) -> Result<DMatrix<f64>, GeoError> {
    let n = sites.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dij = metric.miles((sites[i].lat, sites[i].lon), (sites[j].lat, sites[j].lon));
            if dij <= 0.0 {
                return Err(GeoError::DuplicateCoordinates(i, j));
            }
            d[(i, j)] = dij;
            d[(j, i)] = dij;
        }
    }
    Ok(d)
}

/// Raw inverse-distance weights: `w_ij = 1 / d_ij`, zero on the diagonal. No row
/// standardization.
pub fn weight_matrix(distances: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(distances.nrows(), distances.ncols(), |i, j| {
        if i == j {
            0.0
        } else {
            1.0 / distances[(i, j)]
        }
    })
}

/// Spatial lag of `sales` over a selected member set: entry `k` is
/// `sum_{j in members, j != members[k]} w[members[k], j] * sales[j]`.
pub fn spatial_lag(weights: &DMatrix<f64>, sales: &[Option<f64>], members: &[usize]) -> Result<Vec<f64>, GeoError> {
    lag_against(weights, sales, members, members)
}

/// Lag of each `target` computed only from `sources`. A target that is also a
/// source never contributes to its own lag.
pub fn lag_against(
    weights: &DMatrix<f64>,
    sales: &[Option<f64>],
    targets: &[usize],
    sources: &[usize],
) -> Result<Vec<f64>, GeoError> {
    let n = weights.nrows();
    let mut source_sales = Vec::with_capacity(sources.len());
    for &j in sources {
        if j >= n {
            return Err(GeoError::UnknownMember(j));
        }
        let g = sales.get(j).copied().flatten().ok_or(GeoError::MissingSales(j))?;
        source_sales.push((j, g));
    }
    targets
        .iter()
        .map(|&i| {
            if i >= n {
                return Err(GeoError::UnknownMember(i));
            }
            Ok(source_sales
                .iter()
                .filter(|(j, _)| *j != i)
                .map(|&(j, g)| weights[(i, j)] * g)
                .sum())
        })
        .collect()
}

/// The full site collection with its derived distance and weight matrices.
#[derive(Debug, Clone)]
pub struct Network {
    sites: Vec<Site>,
    metric: DistanceMetric,
    distances: Arc<DMatrix<f64>>,
    weights: Arc<DMatrix<f64>>,
}

impl Network {
    pub fn new(sites: Vec<Site>, metric: DistanceMetric) -> Result<Self, GeoError> {
        if sites.len() < 2 {
            return Err(GeoError::TooFewSites(sites.len()));
        }
        let mut seen = HashMap::with_capacity(sites.len());
        for site in &sites {
            site.validate().map_err(|reason| GeoError::InvalidSite {
                id: site.id.clone(),
                reason,
            })?;
            if seen.insert(site.id.as_str(), ()).is_some() {
                return Err(GeoError::DuplicateId(site.id.clone()));
            }
        }
        let distances = distance_matrix(&sites, metric)?;
        let weights = weight_matrix(&distances);
        Ok(Network {
            sites,
            metric,
            distances: Arc::new(distances),
            weights: Arc::new(weights),
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &Site {
        &self.sites[i]
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.distances
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Indices of active sites, in network order.
    pub fn active(&self) -> Vec<usize> {
        self.indices_with(SiteStatus::Active)
    }

    /// Indices of candidate sites, in network order.
    pub fn candidates(&self) -> Vec<usize> {
        self.indices_with(SiteStatus::Candidate)
    }

    fn indices_with(&self, status: SiteStatus) -> Vec<usize> {
        self.sites
            .iter()
            .enumerate()
            .filter(|(_, s)| s.status == status)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn base_sales(&self) -> Vec<Option<f64>> {
        self.sites.iter().map(|s| s.base_sales).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.id == id)
    }

    /// Sub-matrix of `W` restricted to `members` (in the given order).
    pub fn weights_among(&self, members: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(members.len(), members.len(), |a, b| {
            self.weights[(members[a], members[b])]
        })
    }

    /// Copy of the network with base sales replaced at the given sites. Distances
    /// and weights are shared with `self`.
    pub fn with_base_sales(&self, updates: &[(usize, f64)]) -> Result<Network, GeoError> {
        let mut sites = self.sites.clone();
        for &(i, g) in updates {
            let site = sites.get_mut(i).ok_or(GeoError::UnknownMember(i))?;
            if !g.is_finite() || g < 0.0 {
                return Err(GeoError::InvalidSite {
                    id: site.id.clone(),
                    reason: format!("base_sales must be finite and non-negative, got {g}"),
                });
            }
            site.base_sales = Some(g);
        }
        Ok(Network {
            sites,
            metric: self.metric,
            distances: Arc::clone(&self.distances),
            weights: Arc::clone(&self.weights),
        })
    }

    /// Rank of each site when ids are sorted ascending. Used as the deterministic
    /// tie-break everywhere.
    pub fn id_ranks(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.sites[a].id.cmp(&self.sites[b].id));
        let mut rank = vec![0; self.len()];
        for (r, i) in order.into_iter().enumerate() {
            rank[i] = r;
        }
        rank
    }
}
