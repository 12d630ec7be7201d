//! Conformal prediction under feedback covariate shift.
//!
//! Weighted quantiles, ridge and Gaussian-process regression with augmented
//! leave-one-out systems, full and split conformal confidence sets, and a
//! simulator for iterative Boltzmann design over enumerable landscapes.

pub mod cli;
pub mod config;
pub mod design;
pub mod error;
pub mod fcs;
pub mod landscape;
pub mod metrics;
pub mod quantile;
pub mod records;
pub mod regression;
pub mod split;

pub use error::{FcsError, Result};
