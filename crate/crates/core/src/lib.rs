//! Derived-demand prediction and expansion-site selection for add-on retail
//! products.
//!
//! The pipeline runs in this order: spatial autocorrelation tests on the active
//! sites ([`moran`]), demand-model fitting ([`models`]) and selection by repeated
//! cross-validation ([`select`]), expansion optimization ([`optimize`]), and the
//! simulated-demand gain experiments ([`experiment`]). [`pipeline`] ties them
//! together and [`io`] handles files.

pub mod experiment;
pub mod geo;
pub mod io;
pub mod models;
pub mod moran;
pub mod optimize;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod synth;
