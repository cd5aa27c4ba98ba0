//! Built-in experiments: arterial O₂ content seen through 10 pulmonary
//! binary sensors, and a 2-state nonlinear system seen through 18
//! log-distance binary sensors.

use std::f64::consts::LN_2;

use binklf_core::{
    LbklfParams, LinearModel, LinearSensor, NbklfParams, NonlinearModel, NonlinearSensor,
    SystemModel, UtParams,
};
use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::filters::FilterKind;

/// Names accepted by [`build`].
pub const SCENARIOS: &[(&str, &str)] = &[
    (
        "o2",
        "arterial O2 content, 10 binary sensors, input offset calibrated into the threshold band",
    ),
    (
        "o2-literal",
        "arterial O2 content with the physiological constants taken literally (no calibration)",
    ),
    (
        "nonlinear",
        "coupled 2-state nonlinear system, 18 log-distance binary sensors",
    ),
];

/// Distance below which the log-distance sensed maps are clamped.
pub const LOG_DISTANCE_FLOOR: f64 = 1e-9;

/// Overrides shared by scenario files and CLI flags. `None` keeps the
/// scenario default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    /// Exhaled CO₂ partial pressure in mmHg (O₂ scenarios).
    pub e_co2: Option<f64>,
    /// Additive offset on the O₂ input; replaces the calibrated value.
    pub calibration_offset: Option<f64>,
    /// Use the O₂ constants without the calibration offset.
    #[serde(default)]
    pub literal: bool,
    /// Replaces the threshold list. For O₂ the sensor count follows its length.
    pub thresholds: Option<Vec<f64>>,
    pub x0_true: Option<Vec<f64>>,
    pub x0_hat: Option<Vec<f64>>,
    /// Initial covariance as a multiple of the identity.
    pub phi0: Option<f64>,
    pub beta_factor: Option<f64>,
    pub xi_factor: Option<f64>,
    pub ut_a: Option<f64>,
    pub ut_b: Option<f64>,
    pub ut_kappa: Option<f64>,
}

impl ScenarioOptions {
    /// Fields set in `other` win.
    pub fn merged(&self, other: &ScenarioOptions) -> ScenarioOptions {
        ScenarioOptions {
            e_co2: other.e_co2.or(self.e_co2),
            calibration_offset: other.calibration_offset.or(self.calibration_offset),
            literal: self.literal || other.literal,
            thresholds: other.thresholds.clone().or_else(|| self.thresholds.clone()),
            x0_true: other.x0_true.clone().or_else(|| self.x0_true.clone()),
            x0_hat: other.x0_hat.clone().or_else(|| self.x0_hat.clone()),
            phi0: other.phi0.or(self.phi0),
            beta_factor: other.beta_factor.or(self.beta_factor),
            xi_factor: other.xi_factor.or(self.xi_factor),
            ut_a: other.ut_a.or(self.ut_a),
            ut_b: other.ut_b.or(self.ut_b),
            ut_kappa: other.ut_kappa.or(self.ut_kappa),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSignal {
    Constant(f64),
    /// `[A cos(k / period), A sin(k / period)]`.
    Rotating {
        amplitude: f64,
        period: f64,
    },
}

impl InputSignal {
    pub fn at(&self, k: usize) -> DVector<f64> {
        match *self {
            InputSignal::Constant(v) => DVector::from_element(1, v),
            InputSignal::Rotating { amplitude, period } => {
                let t = k as f64 / period;
                DVector::from_vec(vec![amplitude * t.cos(), amplitude * t.sin()])
            }
        }
    }

    /// `u_0 … u_{steps-1}`; `u_{k-1}` drives the transition into step k.
    pub fn sequence(&self, steps: usize) -> Vec<DVector<f64>> {
        (0..steps).map(|k| self.at(k)).collect()
    }
}

#[derive(Debug, Clone)]
pub enum ScenarioModel {
    Linear(LinearModel),
    Nonlinear(NonlinearModel),
}

impl ScenarioModel {
    pub fn as_system(&self) -> &dyn SystemModel {
        match self {
            ScenarioModel::Linear(m) => m,
            ScenarioModel::Nonlinear(m) => m,
        }
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match self {
            ScenarioModel::Linear(m) => Some(m),
            ScenarioModel::Nonlinear(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: ScenarioModel,
    pub input: InputSignal,
    pub x0_true: DVector<f64>,
    pub x0_hat: DVector<f64>,
    pub phi0: DMatrix<f64>,
    pub lbklf: LbklfParams,
    pub nbklf: NbklfParams,
    /// Filters run by `mc` when none are requested.
    pub default_filters: Vec<FilterKind>,
}

impl Scenario {
    pub fn state_dim(&self) -> usize {
        self.x0_true.len()
    }

    pub fn sensor_count(&self) -> usize {
        self.model.as_system().sensor_count()
    }

    pub fn inputs(&self, steps: usize) -> Vec<DVector<f64>> {
        self.input.sequence(steps)
    }

    /// Horizon used when none is requested.
    pub fn default_steps(&self) -> usize {
        match self.model {
            ScenarioModel::Linear(_) => 200,
            ScenarioModel::Nonlinear(_) => 300,
        }
    }

    /// The filter `run` traces when none is requested.
    pub fn primary_filter(&self) -> FilterKind {
        match self.model {
            ScenarioModel::Linear(_) => FilterKind::Lbklf,
            ScenarioModel::Nonlinear(_) => FilterKind::Nbklf,
        }
    }
}

/// Physiological constants of the O₂ model
/// `x_{k+1} = f x_k + U_k + w_k`,
/// `U_k = (1 − f)(1.34 Hb + 0.003 (a u_k + c_k e_k)) − f μ`,
/// `a = P_ATM − P_H2O`, `c_k = (1 − u_k (1 − RQ)) / RQ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct O2Constants {
    pub f: f64,
    pub hb: f64,
    pub p_atm: f64,
    pub p_h2o: f64,
    pub mu: f64,
    pub rq: f64,
    /// Inhaled O₂ fraction.
    pub u: f64,
    pub e_co2: f64,
    pub output_gain: f64,
    pub process_variance: f64,
    pub sensor_variance: f64,
}

impl Default for O2Constants {
    fn default() -> Self {
        O2Constants {
            f: 0.75,
            hb: 12.0,
            p_atm: 760.0,
            p_h2o: 47.0,
            mu: 5.0,
            rq: 0.8,
            u: 0.6,
            e_co2: 40.0,
            output_gain: 0.5,
            process_variance: 1.0,
            sensor_variance: 0.02,
        }
    }
}

impl O2Constants {
    pub fn pressure_gap(&self) -> f64 {
        self.p_atm - self.p_h2o
    }

    pub fn co2_factor(&self) -> f64 {
        (1.0 - self.u * (1.0 - self.rq)) / self.rq
    }

    pub fn literal_input(&self) -> f64 {
        (1.0 - self.f)
            * (1.34 * self.hb
                + 0.003 * (self.pressure_gap() * self.u + self.co2_factor() * self.e_co2))
            - self.f * self.mu
    }

    /// Noise-free steady state `U / (1 − f)` for a given total input.
    pub fn steady_state(&self, input: f64) -> f64 {
        input / (1.0 - self.f)
    }

    /// Offset that moves the noise-free steady state of the sensed variable
    /// to the middle of `[lo, hi]`.
    pub fn calibration_offset(&self, lo: f64, hi: f64) -> f64 {
        let x_target = 0.5 * (lo + hi) / self.output_gain;
        (1.0 - self.f) * x_target - self.literal_input()
    }
}

pub fn o2_thresholds(count: usize, spacing: f64) -> Vec<f64> {
    (1..=count).map(|i| 61.0 + spacing * i as f64).collect()
}

/// The O₂ experiment. The default offset places the noise-free steady state
/// of the sensed variable mid-way through the threshold band.
pub fn o2_scenario(opts: &ScenarioOptions) -> Result<Scenario> {
    let consts = O2Constants {
        e_co2: opts.e_co2.unwrap_or(40.0),
        ..O2Constants::default()
    };
    let thresholds = opts
        .thresholds
        .clone()
        .unwrap_or_else(|| o2_thresholds(10, 0.5));
    if thresholds.is_empty() {
        return Err(HarnessError::Config(
            "the O2 scenario needs at least one threshold".into(),
        ));
    }
    let (lo, hi) = thresholds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    let offset = match (opts.literal, opts.calibration_offset) {
        (true, _) => 0.0,
        (false, Some(o)) => o,
        (false, None) => consts.calibration_offset(lo, hi),
    };
    let input = consts.literal_input() + offset;

    let sensors = thresholds
        .iter()
        .map(|&tau| {
            LinearSensor::new(
                RowDVector::from_element(1, consts.output_gain),
                1.0,
                consts.sensor_variance,
                tau,
            )
        })
        .collect();
    let model = LinearModel::new(
        DMatrix::from_element(1, 1, consts.f),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, consts.process_variance),
        sensors,
    )?;

    let x0_true = vector_or(&opts.x0_true, vec![consts.steady_state(input)], "x0_true")?;
    let x0_hat = vector_or(&opts.x0_hat, vec![x0_true[0] + 2.0], "x0_hat")?;
    let name = if opts.literal { "o2-literal" } else { "o2" };
    finish(
        name,
        ScenarioModel::Linear(model),
        InputSignal::Constant(input),
        x0_true,
        x0_hat,
        opts.phi0.unwrap_or(4.0),
        opts,
        vec![
            FilterKind::Lbklf,
            FilterKind::OpenLoop,
            FilterKind::Clairvoyant,
            FilterKind::SwitchKlf,
        ],
    )
}

/// `g(x) = 0.9 x + (x + 100) / (x² + 1)`.
pub fn g(x: f64) -> f64 {
    0.9 * x + (x + 100.0) / (x * x + 1.0)
}

/// `ln |x − c|` with the distance clamped at [`LOG_DISTANCE_FLOOR`].
pub fn log_distance(x: f64, c: f64) -> f64 {
    (x - c).abs().max(LOG_DISTANCE_FLOOR).ln()
}

/// Centres of the log-distance sensors: `15 + 2i` on the first state for
/// i = 1..9, `3.5i − 22` on the second for i = 10..18.
pub fn nonlinear_sensor_centres() -> Vec<(usize, f64)> {
    (1..=18)
        .map(|i| {
            let i_f = i as f64;
            if i <= 9 {
                (0, 15.0 + 2.0 * i_f)
            } else {
                (1, 3.5 * i_f - 22.0)
            }
        })
        .collect()
}

pub fn nonlinear_thresholds() -> Vec<f64> {
    (1..=18)
        .map(|i| if i <= 9 { -LN_2 } else { 0.875f64.ln() })
        .collect()
}

pub fn nonlinear_scenario(opts: &ScenarioOptions) -> Result<Scenario> {
    let thresholds = opts.thresholds.clone().unwrap_or_else(nonlinear_thresholds);
    if thresholds.len() != 18 {
        return Err(HarnessError::Config(format!(
            "the nonlinear scenario has 18 sensors, got {} thresholds",
            thresholds.len()
        )));
    }
    let sensors = nonlinear_sensor_centres()
        .into_iter()
        .zip(&thresholds)
        .map(|((component, centre), &tau)| {
            NonlinearSensor::new(
                move |x: &DVector<f64>| log_distance(x[component], centre),
                1.0,
                0.01,
                tau,
            )
        })
        .collect();
    let model = NonlinearModel::new(
        2,
        2,
        |x: &DVector<f64>, u: &DVector<f64>| {
            let (g1, g2) = (g(x[0]), g(x[1]));
            DVector::from_vec(vec![g1 + 0.1 * g2 + u[0], g2 + 0.1 * g1 + u[1]])
        },
        DMatrix::identity(2, 2),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.09, 0.25])),
        sensors,
    )?;
    let x0_true = vector_or(&opts.x0_true, vec![0.0, 0.0], "x0_true")?;
    let x0_hat = vector_or(&opts.x0_hat, vec![1.0, -1.0], "x0_hat")?;
    finish(
        "nonlinear",
        ScenarioModel::Nonlinear(model),
        InputSignal::Rotating {
            amplitude: 2.0,
            period: 5.0,
        },
        x0_true,
        x0_hat,
        opts.phi0.unwrap_or(1.0),
        opts,
        vec![FilterKind::Nbklf, FilterKind::OpenLoop],
    )
}

/// Looks up a built-in scenario by name.
pub fn build(name: &str, opts: &ScenarioOptions) -> Result<Scenario> {
    match name {
        "o2" => o2_scenario(opts),
        "o2-literal" => o2_scenario(&ScenarioOptions {
            literal: true,
            ..opts.clone()
        }),
        "nonlinear" => nonlinear_scenario(opts),
        other => Err(HarnessError::UnknownScenario(other.to_string())),
    }
}

fn vector_or(given: &Option<Vec<f64>>, default: Vec<f64>, what: &str) -> Result<DVector<f64>> {
    let v = given.clone().unwrap_or(default);
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(HarnessError::Config(format!(
            "{what} must be a non-empty list of finite numbers"
        )));
    }
    Ok(DVector::from_vec(v))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    name: &str,
    model: ScenarioModel,
    input: InputSignal,
    x0_true: DVector<f64>,
    x0_hat: DVector<f64>,
    phi0: f64,
    opts: &ScenarioOptions,
    default_filters: Vec<FilterKind>,
) -> Result<Scenario> {
    let n = model.as_system().state_dim();
    for (what, v) in [("x0_true", &x0_true), ("x0_hat", &x0_hat)] {
        if v.len() != n {
            return Err(HarnessError::Config(format!(
                "{what} has length {}, expected {n}",
                v.len()
            )));
        }
    }
    if !phi0.is_finite() || phi0 <= 0.0 {
        return Err(HarnessError::Config("phi0 must be positive".into()));
    }
    let lbklf = LbklfParams {
        beta_factor: opts
            .beta_factor
            .unwrap_or(LbklfParams::default().beta_factor),
    };
    lbklf.validate()?;
    let ut_default = UtParams::default();
    let nbklf = NbklfParams {
        xi_factor: opts.xi_factor.unwrap_or(NbklfParams::default().xi_factor),
        ut: UtParams {
            a: opts.ut_a.unwrap_or(ut_default.a),
            b: opts.ut_b.unwrap_or(ut_default.b),
            kappa: opts.ut_kappa.unwrap_or(ut_default.kappa),
        },
    };
    nbklf.validate(n)?;
    Ok(Scenario {
        name: name.to_string(),
        model,
        input,
        x0_true,
        x0_hat,
        phi0: DMatrix::identity(n, n) * phi0,
        lbklf,
        nbklf,
        default_filters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use binklf_core::simulate;

    #[test]
    fn o2_derived_constants() {
        let c = O2Constants::default();
        assert_eq!(c.pressure_gap(), 713.0);
        assert_relative_eq!(c.co2_factor(), 1.1, epsilon = 1e-15);
        // 0.25 (16.08 + 0.003 (427.8 + 44)) − 3.75
        assert_relative_eq!(c.literal_input(), 0.623_85, epsilon = 1e-12);
    }

    #[test]
    fn literal_steady_state_is_below_the_band() {
        let s = o2_scenario(&ScenarioOptions {
            literal: true,
            ..Default::default()
        })
        .unwrap();
        let z = 0.5 * s.x0_true[0];
        assert!(z < 2.0, "literal steady-state sensed value {z}");
    }

    #[test]
    fn calibrated_pilot_run_sits_in_the_band() {
        let s = o2_scenario(&ScenarioOptions {
            x0_true: Some(vec![0.0]),
            ..Default::default()
        })
        .unwrap();
        let model = s.model.linear().unwrap();
        let quiet = LinearModel::new(
            model.transition_matrix().clone(),
            model.input_matrix().clone(),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            model.sensors().to_vec(),
        )
        .unwrap();
        let traj = simulate(&quiet, &s.inputs(200), &s.x0_true, 0, 200).unwrap();
        let z_end = 0.5 * traj.states.last().unwrap()[0];
        assert!((61.5..=66.0).contains(&z_end), "pilot steady state {z_end}");
        assert_relative_eq!(z_end, 63.75, epsilon = 1e-9);
    }

    #[test]
    fn o2_defaults() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        assert_eq!(s.sensor_count(), 10);
        assert_relative_eq!(s.x0_true[0], 127.5, epsilon = 1e-12);
        assert_relative_eq!(s.x0_hat[0], 129.5, epsilon = 1e-12);
        assert_eq!(s.phi0[(0, 0)], 4.0);
        let taus = s.model.as_system().thresholds();
        assert_eq!(taus[0], 61.5);
        assert_eq!(taus[9], 66.0);
    }

    #[test]
    fn o2_process_noise_variance_is_recovered() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let model = s.model.linear().unwrap();
        let traj = simulate(model, &s.inputs(200), &s.x0_true, 0, 200).unwrap();
        let u = s.inputs(1)[0][0];
        let mut prev = s.x0_true[0];
        let mut sq = 0.0;
        for x in &traj.states {
            let w = x[0] - 0.75 * prev - u;
            sq += w * w;
            prev = x[0];
        }
        let var = sq / 200.0;
        assert!(
            (0.75..=1.25).contains(&var),
            "empirical process variance {var}"
        );
    }

    #[test]
    fn threshold_override_changes_sensor_count() {
        let s = build(
            "o2",
            &ScenarioOptions {
                thresholds: Some(o2_thresholds(20, 0.25)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.sensor_count(), 20);
        assert_relative_eq!(s.x0_true[0], 0.5 * (61.25 + 66.0) / 0.5, epsilon = 1e-9);
    }

    #[test]
    fn nonlinear_constants() {
        assert_eq!(g(0.0), 100.0);
        let taus = nonlinear_thresholds();
        assert_relative_eq!(taus[0], -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(taus[8], -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(taus[9], -0.1335, epsilon = 1e-4);
        let centres = nonlinear_sensor_centres();
        assert_eq!(centres[0], (0, 17.0));
        assert_eq!(centres[8], (0, 33.0));
        assert_eq!(centres[9], (1, 13.0));
        assert_eq!(centres[17], (1, 41.0));
    }

    #[test]
    fn log_distance_is_clamped_at_the_singularity() {
        assert_eq!(log_distance(17.0, 17.0), LOG_DISTANCE_FLOOR.ln());
        assert!(log_distance(17.0, 17.0).is_finite());
        assert_relative_eq!(log_distance(18.0, 17.0), 0.0);
        assert_relative_eq!(log_distance(16.5, 17.0), -LN_2, epsilon = 1e-15);
    }

    #[test]
    fn nonlinear_model_matches_the_printed_dynamics() {
        let s = build("nonlinear", &ScenarioOptions::default()).unwrap();
        let m = s.model.as_system();
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let next = m.transition(&x, &s.input.at(0));
        assert_relative_eq!(next[0], 110.0 + 2.0);
        assert_relative_eq!(next[1], 110.0);
        let u5 = s.input.at(5);
        assert_relative_eq!(u5[0], 2.0 * 1f64.cos());
        assert_relative_eq!(u5[1], 2.0 * 1f64.sin());
        assert_eq!(m.sensor_count(), 18);
        assert_relative_eq!(m.sensed(9, &DVector::from_vec(vec![0.0, 14.0])), 0.0);
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        assert!(matches!(
            build("bogus", &ScenarioOptions::default()),
            Err(HarnessError::UnknownScenario(_))
        ));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let bad = ScenarioOptions {
            x0_true: Some(vec![1.0, 2.0]),
            ..Default::default()
        };
        assert!(matches!(build("o2", &bad), Err(HarnessError::Config(_))));
        let bad_thr = ScenarioOptions {
            thresholds: Some(vec![0.0]),
            ..Default::default()
        };
        assert!(matches!(
            build("nonlinear", &bad_thr),
            Err(HarnessError::Config(_))
        ));
        let bad_beta = ScenarioOptions {
            beta_factor: Some(0.5),
            ..Default::default()
        };
        assert!(build("o2", &bad_beta).is_err());
    }

    #[test]
    fn merge_prefers_the_later_source() {
        let file = ScenarioOptions {
            e_co2: Some(35.0),
            phi0: Some(2.0),
            ..Default::default()
        };
        let flags = ScenarioOptions {
            phi0: Some(3.0),
            ..Default::default()
        };
        let m = file.merged(&flags);
        assert_eq!(m.e_co2, Some(35.0));
        assert_eq!(m.phi0, Some(3.0));
    }
}
