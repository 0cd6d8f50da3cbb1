//! Strictly consistent scoring of VaR/ES forecasts and tests of equal
//! predictive ability (Diebold–Mariano, Model Confidence Set), together with
//! the simulation machinery needed to study their finite-sample behaviour.
//!
//! The crate is organised bottom-up:
//!
//! * [`distributions`] – standard normal and unit-variance Student-t innovations.
//! * [`dgp`] – GARCH-type return simulation and volatility filtering.
//! * [`forecasting`] – VaR/ES forecast series.
//! * [`scoring`] – GPL quantile losses and Fissler–Ziegel joint losses.
//! * [`eqtest`] – the two-sided Diebold–Mariano test.
//! * [`mcs`] – the Model Confidence Set procedure.
//! * [`oracle`] – expected losses and true model rankings.
//! * [`harness`] – the Monte Carlo experiment runner.

pub mod bootstrap;
pub mod config;
pub mod dgp;
pub mod distributions;
pub mod eqtest;
mod error;
pub mod forecasting;
pub mod harness;
pub mod mcs;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod scoring;

pub use error::{Error, Result};

/// Version string echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
