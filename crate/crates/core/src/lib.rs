//! Multivariate time-series forecasting built around a two-stage hybrid:
//! a ridge-regularized vector autoregression makes the first forecast, and
//! a single-layer LSTM trained on the VAR's own prediction errors forecasts
//! the error it will make next, one horizon ahead. The sum of the two is
//! the final prediction.
//!
//! The crate also ships the supporting toolkit: CSV ingestion, reversible
//! preprocessing (z-scoring and seasonal-mean removal), forecast metrics,
//! synthetic generators, and a seeded experiment harness comparing the
//! hybrid against its parts.

pub mod cli;
pub mod error;
pub mod harness;
pub mod lstm;
pub mod metrics;
pub mod r2n2;
mod serde_util;
pub mod timeseries;
pub mod var;

pub use error::{Error, Result};
