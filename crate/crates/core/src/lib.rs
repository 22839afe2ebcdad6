//! Confidence intervals for ratio metrics, clustered averages, clustered
//! quantiles and cross-over experiments with missing data, built on the
//! Delta method.

pub mod cluster;
pub mod crossover;
pub mod dist;
pub mod error;
pub mod interval;
pub mod io;
pub mod lmm;
pub mod moments;
pub mod quantile;
pub mod ratio;
pub mod report;
pub mod rng;
pub mod sim;
mod select;

pub use error::{Error, Result};
pub use interval::{ConfidenceInterval, Method};
pub use select::select_ranks;
