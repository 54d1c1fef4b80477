//! Seeded synthetic regions for testing and demonstration.
//!
//! Sites are scattered uniformly over a lat/lon box. Base sales are either
//! independent normal draws or a smooth random field plus noise, which plants
//! positive spatial autocorrelation. Active sites get add-on sales from an
//! affine rule in `(g, Wg, h, p)` plus Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geo::{distance_matrix, spatial_lag, weight_matrix, DistanceMetric, GeoError, Network, Site, SiteStatus};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pattern {
    Independent,
    /// `strength` in `[0, 1]` is the share of base-sales standard deviation
    /// carried by the smooth field.
    Clustered {
        bumps: usize,
        strength: f64,
    },
}

/// `a = intercept + g·β_g + Wg·β_lag + h·β_h + p·β_p + N(0, noise²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddonRule {
    pub intercept: f64,
    pub beta_g: f64,
    pub beta_lag: f64,
    pub beta_h: f64,
    pub beta_p: f64,
    pub noise_sd: f64,
}

impl Default for AddonRule {
    fn default() -> Self {
        AddonRule {
            intercept: 50.0,
            beta_g: 0.01,
            beta_lag: 0.0,
            beta_h: 0.002,
            beta_p: 0.01,
            noise_sd: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_active: usize,
    pub n_candidates: usize,
    pub pattern: Pattern,
    /// South-west corner of the box.
    pub origin: (f64, f64),
    /// Box size in degrees of (latitude, longitude).
    pub span: (f64, f64),
    pub base_mean: f64,
    pub base_sd: f64,
    pub addon: AddonRule,
    pub seed: u64,
}

impl SynthConfig {
    /// About 90 active and 230 candidate sites with independent base sales.
    pub fn region(seed: u64) -> Self {
        SynthConfig {
            n_active: 90,
            n_candidates: 230,
            pattern: Pattern::Independent,
            origin: (35.0, -81.5),
            span: (1.5, 2.0),
            base_mean: 30_000.0,
            base_sd: 6_000.0,
            addon: AddonRule::default(),
            seed,
        }
    }

    pub fn clustered(mut self) -> Self {
        self.pattern = Pattern::Clustered {
            bumps: 6,
            strength: 0.9,
        };
        self
    }
}

pub fn generate(config: &SynthConfig) -> Result<Network, GeoError> {
    let n = config.n_active + config.n_candidates;
    let mut rng = rng::substream(config.seed, rng::SYNTHETIC, &[]);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let coords: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            (
                config.origin.0 + rng.random::<f64>() * config.span.0,
                config.origin.1 + rng.random::<f64>() * config.span.1,
            )
        })
        .collect();

    let z: Vec<f64> = match config.pattern {
        Pattern::Independent => (0..n).map(|_| std_normal.sample(&mut rng)).collect(),
        Pattern::Clustered { bumps, strength } => {
            let radius = 0.2 * config.span.0.max(config.span.1);
            let centers: Vec<((f64, f64), f64)> = (0..bumps.max(1))
                .map(|b| {
                    let c = (
                        config.origin.0 + rng.random::<f64>() * config.span.0,
                        config.origin.1 + rng.random::<f64>() * config.span.1,
                    );
                    (c, if b % 2 == 0 { 1.0 } else { -1.0 })
                })
                .collect();
            let field: Vec<f64> = coords
                .iter()
                .map(|&(lat, lon)| {
                    centers
                        .iter()
                        .map(|&((clat, clon), sign)| {
                            let d2 = (lat - clat).powi(2) + (lon - clon).powi(2);
                            sign * (-d2 / (2.0 * radius * radius)).exp()
                        })
                        .sum()
                })
                .collect();
            let mean = field.iter().sum::<f64>() / n as f64;
            let sd = (field.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n as f64)
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let s = strength.clamp(0.0, 1.0);
            let noise = (1.0 - s * s).sqrt();
            field
                .iter()
                .map(|f| s * (f - mean) / sd + noise * std_normal.sample(&mut rng))
                .collect()
        }
    };

    let mut sites: Vec<Site> = (0..n)
        .map(|i| {
            let active = i < config.n_active;
            let income = (55_000.0 + 12_000.0 * std_normal.sample(&mut rng)).max(15_000.0);
            let population = 5_000.0 * (0.5 * std_normal.sample(&mut rng)).exp();
            Site {
                id: if active {
                    format!("A{:03}", i + 1)
                } else {
                    format!("C{:03}", i - config.n_active + 1)
                },
                lat: coords[i].0,
                lon: coords[i].1,
                status: if active {
                    SiteStatus::Active
                } else {
                    SiteStatus::Candidate
                },
                base_sales: Some((config.base_mean + config.base_sd * z[i]).max(0.05 * config.base_mean)),
                addon_sales: None,
                income,
                population,
            }
        })
        .collect();

    let metric = DistanceMetric::Haversine;
    let weights = weight_matrix(&distance_matrix(&sites, metric)?);
    let active: Vec<usize> = (0..config.n_active).collect();
    let base: Vec<Option<f64>> = sites.iter().map(|s| s.base_sales).collect();
    let lag = spatial_lag(&weights, &base, &active)?;
    let rule = config.addon;
    let noise = Normal::new(0.0, rule.noise_sd.max(0.0)).expect("finite noise sd");
    for (k, &i) in active.iter().enumerate() {
        let s = &sites[i];
        let a = rule.intercept
            + rule.beta_g * s.base_sales.unwrap_or(0.0)
            + rule.beta_lag * lag[k]
            + rule.beta_h * s.income
            + rule.beta_p * s.population
            + noise.sample(&mut rng);
        sites[i].addon_sales = Some(a.max(0.0));
    }
    Network::new(sites, metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let mut cfg = SynthConfig::region(11);
        cfg.n_active = 20;
        cfg.n_candidates = 30;
        let a = generate(&cfg).unwrap();
        assert_eq!(a.active().len(), 20);
        assert_eq!(a.candidates().len(), 30);
        assert!(a.sites().iter().all(|s| s.base_sales.is_some()));
        assert!(a.sites().iter().all(|s| s.is_active() == s.addon_sales.is_some()));
        let b = generate(&cfg).unwrap();
        assert_eq!(a.sites(), b.sites());
        let c = generate(&cfg.clone().clustered()).unwrap();
        assert_ne!(a.sites(), c.sites());
    }
}
