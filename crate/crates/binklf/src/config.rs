//! Flat TOML run configuration. Every key is optional; CLI flags override
//! file values.
//!
//! ```toml
//! scenario = "o2"
//! filters = ["lbklf", "open_loop", "clairvoyant", "switch_klf"]
//! runs = 100
//! steps = 200
//! seed = 7
//! out = "results/o2"
//! threads = 4
//! e_co2 = 40.0
//! beta_factor = 2.0
//! thresholds = [61.5, 62.0, 62.5]
//! ```
//!
//! Scenario keys: `e_co2`, `calibration_offset`, `literal`, `thresholds`,
//! `x0_true`, `x0_hat`, `phi0`, `beta_factor`, `xi_factor`, `ut_a`, `ut_b`,
//! `ut_kappa`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::filters::FilterKind;
use crate::scenarios::ScenarioOptions;

const RUN_KEYS: &[&str] = &[
    "scenario", "filters", "runs", "steps", "seed", "out", "threads",
];
const SCENARIO_KEYS: &[&str] = &[
    "e_co2",
    "calibration_offset",
    "literal",
    "thresholds",
    "x0_true",
    "x0_hat",
    "phi0",
    "beta_factor",
    "xi_factor",
    "ut_a",
    "ut_b",
    "ut_kappa",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub filters: Option<Vec<String>>,
    pub runs: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub options: ScenarioOptions,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        if let Some(key) = table
            .keys()
            .find(|k| !RUN_KEYS.contains(&k.as_str()) && !SCENARIO_KEYS.contains(&k.as_str()))
        {
            return Err(HarnessError::Config(format!(
                "{}: unknown key `{key}`",
                path.display()
            )));
        }
        toml::from_str(text).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Fields set in `over` win.
    pub fn merged(self, over: RunConfig) -> RunConfig {
        RunConfig {
            scenario: over.scenario.or(self.scenario),
            filters: over.filters.or(self.filters),
            runs: over.runs.or(self.runs),
            steps: over.steps.or(self.steps),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            threads: over.threads.or(self.threads),
            options: self.options.merged(&over.options),
        }
    }

    pub fn filter_kinds(&self) -> Result<Option<Vec<FilterKind>>> {
        self.filters
            .as_ref()
            .map(|names| names.iter().map(|n| n.parse()).collect())
            .transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == Some(0) {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.steps == Some(0) {
            return Err(HarnessError::Config("steps must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::Config("threads must be at least 1".into()));
        }
        self.filter_kinds()?;
        Ok(())
    }
}
