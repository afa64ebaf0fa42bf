//! Config-driven runner around `donor_backaction`.
//!
//! `simulate` writes the populations of one pulse over time. `sweep` varies a
//! single parameter and writes final flip probabilities, their closed-form
//! counterparts and optional trajectory estimates. Every CSV gets a
//! `.meta.toml` sidecar with the parameters, units and conventions used.

pub mod config;
pub mod error;
pub mod run;

pub use config::{Config, OracleConfig, SweepAxis, SweepConfig};
pub use error::CliError;
pub use run::{format_number, meta_path, run_single, run_sweep, RunOptions, RunReport};
