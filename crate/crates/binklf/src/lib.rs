//! Scenarios, Monte Carlo harness, oracle suites and the `binklf` command
//! line tool built on [`binklf_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod filters;
pub mod montecarlo;
pub mod oracles;
pub mod output;
pub mod scenarios;

pub use error::{HarnessError, Result};
pub use filters::{run_filter, FilterKind, FilterRun};
pub use montecarlo::{run_monte_carlo, FilterSummary, McOptions, McReport};
pub use scenarios::{Scenario, ScenarioModel, ScenarioOptions};
