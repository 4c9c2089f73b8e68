//! Seeded Monte Carlo suites, rate scans and command-line entry points for
//! `esteq`.

pub mod config;
pub mod error;
pub mod ks;
pub mod mc;
pub mod rates;
pub mod report;
pub mod run;
pub mod scenario;
pub mod seed;

pub use config::Config;
pub use error::{HarnessError, Result};
pub use mc::{run_monte_carlo, run_monte_carlo_with, McRun, McSummary, RepRecord};
pub use rates::{rate_scan, RateTable};
pub use scenario::{generate, Population, Scenario};
