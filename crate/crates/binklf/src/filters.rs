//! Runs one estimator over a simulated trajectory.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use binklf_core::baselines::{self, SwitchSet};
use binklf_core::{lbklf, nbklf, predicted_bits, FilterState, SensorBank, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::scenarios::{Scenario, ScenarioModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lbklf,
    Nbklf,
    OpenLoop,
    Clairvoyant,
    SwitchKlf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] = [
        FilterKind::Lbklf,
        FilterKind::Nbklf,
        FilterKind::OpenLoop,
        FilterKind::Clairvoyant,
        FilterKind::SwitchKlf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Lbklf => "lbklf",
            FilterKind::Nbklf => "nbklf",
            FilterKind::OpenLoop => "open_loop",
            FilterKind::Clairvoyant => "clairvoyant",
            FilterKind::SwitchKlf => "switch_klf",
        }
    }

    /// Whether the filter needs the linear model structure.
    pub fn needs_linear(self) -> bool {
        matches!(
            self,
            FilterKind::Lbklf | FilterKind::Clairvoyant | FilterKind::SwitchKlf
        )
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| HarnessError::UnknownFilter(s.to_string()))
    }
}

/// Output of one filter over one trajectory; index `k − 1` holds step k.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub kind: FilterKind,
    pub estimates: Vec<FilterState>,
    /// Sensors used at each step: `m_k` for the binary filters, the switch
    /// count for the switch baseline, m for the clairvoyant filter and 0 for
    /// open-loop prediction.
    pub sensors_used: Vec<usize>,
    pub step_seconds: Vec<f64>,
}

impl FilterRun {
    pub fn squared_errors(&self, traj: &Trajectory) -> Vec<f64> {
        self.estimates
            .iter()
            .zip(&traj.states)
            .map(|(est, x)| (x - &est.x_hat).norm_squared())
            .collect()
    }
}

pub fn check_supported(scenario: &Scenario, kind: FilterKind) -> Result<()> {
    if kind.needs_linear() && scenario.model.linear().is_none() {
        return Err(HarnessError::Config(format!(
            "filter `{kind}` needs a linear model; scenario `{}` is nonlinear",
            scenario.name
        )));
    }
    Ok(())
}

pub fn run_filter(scenario: &Scenario, kind: FilterKind, traj: &Trajectory) -> Result<FilterRun> {
    check_supported(scenario, kind)?;
    let steps = traj.len();
    let mut state = FilterState::new(scenario.x0_hat.clone(), scenario.phi0.clone())?;
    let mut out = FilterRun {
        kind,
        estimates: Vec::with_capacity(steps),
        sensors_used: Vec::with_capacity(steps),
        step_seconds: Vec::with_capacity(steps),
    };
    let model = scenario.model.as_system();
    let mut prev_bits = match scenario.model.linear() {
        Some(lin) => predicted_bits(
            (lin.output_matrix() * &state.x_hat).as_slice(),
            &lin.thresholds(),
        )?,
        None => Vec::new(),
    };

    for j in 0..steps {
        let (u, y, z) = (&traj.inputs[j], &traj.bits[j], &traj.sensed[j]);
        let start = Instant::now();
        let (next, used) = match (kind, &scenario.model) {
            (FilterKind::Lbklf, ScenarioModel::Linear(m)) => {
                let r = lbklf::step(&state, m, u, y, &scenario.lbklf)?;
                (r.new_state, r.innovation.len())
            }
            (FilterKind::Nbklf, _) => {
                let r = nbklf::step(&state, model, u, y, &scenario.nbklf)?;
                (r.new_state, r.innovation.len())
            }
            (FilterKind::OpenLoop, ScenarioModel::Linear(m)) => {
                (baselines::open_loop_step(&state, m, u), 0)
            }
            (FilterKind::OpenLoop, ScenarioModel::Nonlinear(m)) => (
                baselines::open_loop_ut_step(&state, m, u, &scenario.nbklf.ut)?,
                0,
            ),
            (FilterKind::Clairvoyant, ScenarioModel::Linear(m)) => (
                baselines::clairvoyant_kf_step(&state, m, u, z)?,
                m.sensor_count(),
            ),
            (FilterKind::SwitchKlf, ScenarioModel::Linear(m)) => {
                let used = SwitchSet::new(y, &prev_bits)?.indices.len();
                let next = baselines::switch_klf_step(&state, m, u, y, &prev_bits)?;
                prev_bits.clone_from(y);
                (next, used)
            }
            _ => unreachable!("check_supported rejects linear-only filters on nonlinear models"),
        };
        out.step_seconds.push(start.elapsed().as_secs_f64());
        out.sensors_used.push(used);
        out.estimates.push(next.clone());
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{build, ScenarioOptions};
    use binklf_core::simulate;

    #[test]
    fn names_round_trip() {
        for k in FilterKind::ALL {
            assert_eq!(k.name().parse::<FilterKind>().unwrap(), k);
        }
        assert_eq!(
            "open-loop".parse::<FilterKind>().unwrap(),
            FilterKind::OpenLoop
        );
        assert!("kalman".parse::<FilterKind>().is_err());
    }

    #[test]
    fn every_filter_runs_on_o2() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let traj = simulate(s.model.linear().unwrap(), &s.inputs(30), &s.x0_true, 3, 30).unwrap();
        for k in FilterKind::ALL {
            let run = run_filter(&s, k, &traj).unwrap();
            assert_eq!(run.estimates.len(), 30);
            assert!(run.sensors_used.iter().all(|&m| m <= 10));
        }
    }

    #[test]
    fn open_loop_uses_no_sensors() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let traj = simulate(s.model.linear().unwrap(), &s.inputs(10), &s.x0_true, 1, 10).unwrap();
        let run = run_filter(&s, FilterKind::OpenLoop, &traj).unwrap();
        assert!(run.sensors_used.iter().all(|&m| m == 0));
        let kf = run_filter(&s, FilterKind::Clairvoyant, &traj).unwrap();
        assert!(kf.sensors_used.iter().all(|&m| m == 10));
    }

    #[test]
    fn linear_only_filters_reject_the_nonlinear_scenario() {
        let s = build("nonlinear", &ScenarioOptions::default()).unwrap();
        let traj = simulate(s.model.as_system(), &s.inputs(5), &s.x0_true, 0, 5).unwrap();
        for k in [
            FilterKind::Lbklf,
            FilterKind::Clairvoyant,
            FilterKind::SwitchKlf,
        ] {
            assert!(matches!(
                run_filter(&s, k, &traj),
                Err(HarnessError::Config(_))
            ));
        }
        assert!(run_filter(&s, FilterKind::Nbklf, &traj).is_ok());
        assert!(run_filter(&s, FilterKind::OpenLoop, &traj).is_ok());
    }
}
