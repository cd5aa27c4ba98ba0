//! Independent checks of the filter steps: covariance dominance over the
//! threshold uncertainty, stationarity of the gain, optimality of α and ε,
//! and exactness of the unscented transform on affine maps.

use binklf_core::linalg::{d_max, lambda_max, spd_solve};
use binklf_core::unscented::{cross_covariances, predict_sensed, predict_state};
use binklf_core::{
    lbklf, nbklf, FilterState, LbklfParams, LbklfStepReport, LinearModel, LinearSensor,
    NbklfParams, NbklfStepReport, NonlinearModel, NonlinearSensor, UtParams,
};
use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Relative slack allowed on `Φ̂ ⪰ P̂(Δ)`.
pub const DOMINANCE_TOL: f64 = 1e-8;
/// Corner offset: `δᵢ = ±(0.5 − CORNER_INSET)`.
pub const CORNER_INSET: f64 = 1e-6;
/// Exhaustive corners are checked up to this many innovating sensors.
pub const MAX_CORNER_DIM: usize = 6;
pub const GAIN_TOL: f64 = 1e-6;
pub const AFFINE_TOL: f64 = 1e-10;
pub const SCAN_POINTS: usize = 200;
pub const SCAN_SPAN: f64 = 20.0;

/// Result of one oracle suite.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub suite: &'static str,
    pub checks: usize,
    /// Worst observed value divided by its tolerance; the suite passes at ≤ 1.
    pub worst_ratio: f64,
    pub detail: String,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// `M Mᵀ + 0.1 I`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

fn random_sensor_scalars(rng: &mut impl Rng) -> (f64, f64) {
    (rng.random_range(0.5..1.5), rng.random_range(0.01..1.0))
}

/// Bits equal to the prediction except at `flips` random sensors.
fn bits_with_flips(rng: &mut impl Rng, predicted: &[bool], flips: usize) -> Vec<bool> {
    let mut y = predicted.to_vec();
    for i in sample(rng, predicted.len(), flips) {
        y[i] = !y[i];
    }
    y
}

/// A random linear step with `1 ≤ m_k ≤ max_mk` innovating sensors.
pub fn random_linear_step(
    rng: &mut impl Rng,
    max_n: usize,
    max_mk: usize,
) -> Result<LbklfStepReport> {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_mk + 2);
    let sensors = (0..m)
        .map(|_| {
            let (e, r) = random_sensor_scalars(rng);
            LinearSensor::new(
                RowDVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                e,
                r,
                rng.random_range(-2.0..2.0),
            )
        })
        .collect();
    let model = LinearModel::new(
        random_matrix(rng, n, n),
        random_matrix(rng, n, 1),
        DMatrix::identity(n, n),
        random_spd(rng, n),
        sensors,
    )?;
    let prev = FilterState::new(random_vector(rng, n, 3.0), random_spd(rng, n))?;
    let u = random_vector(rng, 1, 1.0);
    let params = LbklfParams::default();
    let probe = lbklf::step(&prev, &model, &u, &vec![false; m], &params)?;
    let flips = rng.random_range(1..=max_mk.min(m));
    let y = bits_with_flips(rng, &probe.predicted_bits, flips);
    Ok(lbklf::step(&prev, &model, &u, &y, &params)?)
}

/// A random smooth nonlinear model and one step with innovations.
pub fn random_nonlinear_step(
    rng: &mut impl Rng,
    max_n: usize,
    max_mk: usize,
) -> Result<NbklfStepReport> {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_mk + 2);
    let a = random_matrix(rng, n, n);
    let lin = random_matrix(rng, n, n) * 0.5;
    let b = random_matrix(rng, n, 1);
    let dynamics =
        move |x: &DVector<f64>, u: &DVector<f64>| &a * x.map(f64::sin) + &lin * x + &b * u;
    let sensors = (0..m)
        .map(|_| {
            let c = random_vector(rng, n, 1.0);
            let d = random_vector(rng, n, 1.0);
            let curvature = rng.random_range(-0.3..0.3);
            let (e, r) = random_sensor_scalars(rng);
            NonlinearSensor::new(
                move |x: &DVector<f64>| {
                    c.dot(x) + 0.3 * d.dot(x).sin() + curvature * d.dot(x).powi(2)
                },
                e,
                r,
                rng.random_range(-2.0..2.0),
            )
        })
        .collect();
    let model = NonlinearModel::new(
        n,
        1,
        dynamics,
        DMatrix::identity(n, n),
        random_spd(rng, n) * 0.3,
        sensors,
    )?;
    let prev = FilterState::new(random_vector(rng, n, 2.0), random_spd(rng, n) * 0.5)?;
    let u = random_vector(rng, 1, 1.0);
    let params = NbklfParams::default();
    let probe = nbklf::step(&prev, &model, &u, &vec![false; m], &params)?;
    let flips = rng.random_range(1..=max_mk.min(m));
    let y = bits_with_flips(rng, &probe.predicted_bits, flips);
    Ok(nbklf::step(&prev, &model, &u, &y, &params)?)
}

/// `Δ` samples: zero, every corner `±(0.5 − inset)` when `m_k ≤ 6`, then
/// `samples` uniform draws from `(−0.5, 0.5)`.
pub fn delta_samples(rng: &mut impl Rng, mk: usize, samples: usize) -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(mk)];
    if mk <= MAX_CORNER_DIM {
        let c = 0.5 - CORNER_INSET;
        for mask in 0u32..(1 << mk) {
            out.push(DVector::from_fn(mk, |i, _| {
                if mask >> i & 1 == 1 {
                    c
                } else {
                    -c
                }
            }));
        }
    }
    out.extend((0..samples).map(|_| DVector::from_fn(mk, |_, _| rng.random_range(-0.5..0.5))));
    out
}

/// `I + 2Δ` for diagonal Δ.
fn widen(delta: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&delta.map(|d| 1.0 + 2.0 * d))
}

/// True error covariance of the linear step for a realised Δ:
/// `(I − ½ G (I+2Δ) D) Φ̄ (·)ᵀ + ¼ G (I+2Δ) Ψ (I+2Δ) Gᵀ`.
pub fn linear_realised_covariance(
    report: &LbklfStepReport,
    delta: &DVector<f64>,
) -> Option<DMatrix<f64>> {
    let c = report.correction.as_ref()?;
    let g = &c.terms.gain;
    let w = widen(delta);
    let n = report.phi_bar.nrows();
    let left = DMatrix::identity(n, n) - g * &w * &c.terms.output_matrix * 0.5;
    Some(&left * &report.phi_bar * left.transpose() + g * &w * &c.psi * &w * g.transpose() * 0.25)
}

/// Same for the nonlinear step, in terms of the UT covariances:
/// `P̄ − ½ Pˣᶻ (I+2Δ) Gᵀ − ½ G (I+2Δ) Pˣᶻᵀ + ¼ G (I+2Δ) Pᶻᶻ (I+2Δ) Gᵀ`.
pub fn nonlinear_realised_covariance(
    report: &NbklfStepReport,
    delta: &DVector<f64>,
) -> Option<DMatrix<f64>> {
    let c = report.correction.as_ref()?;
    let g = &c.gain;
    let w = widen(delta);
    let cross = &c.p_xz * &w * g.transpose();
    Some(
        &report.p_bar - &cross * 0.5 - cross.transpose() * 0.5
            + g * &w * &c.p_zz * &w * g.transpose() * 0.25,
    )
}

/// Largest `λ_max(P̂(Δ) − Φ̂)` over the samples, and the tolerance
/// `1e−8 · Tr(Φ̂)` it is compared against.
pub fn dominance_violation(
    phi_hat: &DMatrix<f64>,
    deltas: &[DVector<f64>],
    realised: impl Fn(&DVector<f64>) -> DMatrix<f64>,
) -> (f64, f64) {
    let worst = deltas
        .iter()
        .map(|d| lambda_max(&(realised(d) - phi_hat)))
        .fold(f64::NEG_INFINITY, f64::max);
    (worst, DOMINANCE_TOL * phi_hat.trace())
}

pub fn linear_dominance(
    report: &LbklfStepReport,
    rng: &mut impl Rng,
    samples: usize,
) -> Option<(f64, f64)> {
    report.correction.as_ref()?;
    let deltas = delta_samples(rng, report.innovation.len(), samples);
    Some(dominance_violation(
        &report.new_state.phi_hat,
        &deltas,
        |d| linear_realised_covariance(report, d).expect("checked above"),
    ))
}

pub fn nonlinear_dominance(
    report: &NbklfStepReport,
    rng: &mut impl Rng,
    samples: usize,
) -> Option<(f64, f64)> {
    report.correction.as_ref()?;
    let deltas = delta_samples(rng, report.innovation.len(), samples);
    Some(dominance_violation(
        &report.new_state.phi_hat,
        &deltas,
        |d| nonlinear_realised_covariance(report, d).expect("checked above"),
    ))
}

/// Ratio of the worst violation to its tolerance, floored at a tiny
/// absolute slack so an exactly zero tolerance does not divide by zero.
fn ratio(value: f64, tol: f64) -> f64 {
    value / tol.max(f64::MIN_POSITIVE)
}

pub fn dominance_suite(instances: usize, samples: usize, seed: u64) -> Result<OracleOutcome> {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let r = random_linear_step(&mut rng, 4, 4)?;
        let (v, tol) = linear_dominance(&r, &mut rng, samples).expect("instances always innovate");
        worst = worst.max(ratio(v, tol));
    }
    for _ in 0..instances {
        let r = random_nonlinear_step(&mut rng, 3, 4)?;
        let (v, tol) =
            nonlinear_dominance(&r, &mut rng, samples).expect("instances always innovate");
        worst = worst.max(ratio(v, tol));
    }
    Ok(OracleOutcome {
        suite: "dominance",
        checks: 2 * instances,
        worst_ratio: worst,
        detail: format!("{instances} linear + {instances} nonlinear steps, {samples} random Δ plus corners each"),
    })
}

/// Finite-difference probe of `Tr Φ̂(G)` around `G*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainProbe {
    /// Largest `|∂_V Tr Φ̂|` over unit directions V, divided by `scale`.
    pub max_derivative: f64,
    /// Most negative `Tr Φ̂(G* + δG) − Tr Φ̂(G*)` for `‖δG‖ = 1e−3`, divided by `scale`.
    pub min_increase: f64,
    pub scale: f64,
}

/// `scale` is the magnitude of the two gradient terms that cancel at the
/// optimum, so the derivative is measured relative to that cancellation.
pub fn probe_gain(
    gain: &DMatrix<f64>,
    scale: f64,
    directions: usize,
    rng: &mut impl Rng,
    trace_at: impl Fn(&DMatrix<f64>) -> f64,
) -> GainProbe {
    let t0 = trace_at(gain);
    let h = 1e-4 * (1.0 + gain.norm());
    let mut max_derivative: f64 = 0.0;
    let mut min_increase = f64::INFINITY;
    for _ in 0..directions {
        let mut v = random_matrix(rng, gain.nrows(), gain.ncols());
        v /= v.norm();
        let d = (trace_at(&(gain + &v * h)) - trace_at(&(gain - &v * h))) / (2.0 * h);
        max_derivative = max_derivative.max(d.abs() / scale);
        min_increase = min_increase.min((trace_at(&(gain + &v * 1e-3)) - t0) / scale);
    }
    GainProbe {
        max_derivative,
        min_increase,
        scale,
    }
}

pub fn linear_gain_probe(
    report: &LbklfStepReport,
    directions: usize,
    rng: &mut impl Rng,
) -> Option<GainProbe> {
    let c = report.correction.as_ref()?;
    let t = &c.terms;
    let scale =
        1.0 + (&t.upsilon * t.output_matrix.transpose()).norm() + t.gain.norm() * t.bracket.norm();
    Some(probe_gain(&t.gain, scale, directions, rng, |g| {
        lbklf::conservative_covariance(t, g).trace()
    }))
}

pub fn nonlinear_gain_probe(
    report: &NbklfStepReport,
    directions: usize,
    rng: &mut impl Rng,
) -> Option<GainProbe> {
    let c = report.correction.as_ref()?;
    let scale = 1.0 + c.p_xz.norm() + c.gain.norm() * c.bracket.norm();
    Some(probe_gain(&c.gain, scale, directions, rng, |g| {
        nbklf::conservative_covariance(&report.p_bar, c, g).trace()
    }))
}

pub fn gain_suite(instances: usize, directions: usize, seed: u64) -> Result<OracleOutcome> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    let mut probes = Vec::with_capacity(2 * instances);
    for _ in 0..instances {
        let r = random_linear_step(&mut rng, 4, 4)?;
        probes
            .push(linear_gain_probe(&r, directions, &mut rng).expect("instances always innovate"));
    }
    for _ in 0..instances {
        let r = random_nonlinear_step(&mut rng, 3, 4)?;
        probes.push(
            nonlinear_gain_probe(&r, directions, &mut rng).expect("instances always innovate"),
        );
    }
    for p in &probes {
        worst = worst
            .max(p.max_derivative / GAIN_TOL)
            .max(-p.min_increase / GAIN_TOL);
    }
    Ok(OracleOutcome {
        suite: "gain",
        checks: probes.len(),
        worst_ratio: worst,
        detail: format!(
            "{instances} linear + {instances} nonlinear gains, {directions} directions each"
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    /// `d_max(Ξ(α))`, `Ξ(α) = Ψ + Ψ(αI − Ψ)⁻¹Ψ + αI`, over `α ∈ (d_max(Ψ), 20 d_max(Ψ)]`.
    Alpha,
    /// `λ_max(M(ε))`, `M(ε) = Pᶻᶻ(εI − Pᶻᶻ)⁻¹Pᶻᶻ + εI`, over `ε ∈ (λ_max, 20 λ_max]`.
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    pub argmin: f64,
    /// `2 d_max(Ψ)` or `2 λ_max(Pᶻᶻ)`.
    pub expected: f64,
    /// Multiplicative grid step `20^{1/200}`.
    pub grid_ratio: f64,
}

impl ScanResult {
    /// Distance from the expected optimum in grid steps.
    pub fn grid_steps_off(&self) -> f64 {
        (self.argmin / self.expected).ln().abs() / self.grid_ratio.ln()
    }
}

/// Grid scan of the bounding objective; `matrix` is Ψ or Pᶻᶻ. Entries must
/// make the lower end of the range positive.
pub fn parameter_scan(kind: ScanKind, matrix: &DMatrix<f64>) -> Result<ScanResult> {
    let k = matrix.nrows();
    let base = match kind {
        ScanKind::Alpha => d_max(matrix),
        ScanKind::Epsilon => lambda_max(matrix),
    };
    let grid_ratio = SCAN_SPAN.powf(1.0 / SCAN_POINTS as f64);
    let mut best = (f64::INFINITY, f64::NAN);
    for j in 1..=SCAN_POINTS {
        let t = base * grid_ratio.powi(j as i32);
        let gap = DMatrix::identity(k, k) * t - matrix;
        let middle = matrix * spd_solve(&gap, matrix, "scan: t I - matrix")?;
        let bound = middle + DMatrix::identity(k, k) * t;
        let value = match kind {
            ScanKind::Alpha => d_max(&(matrix + bound)),
            ScanKind::Epsilon => lambda_max(&bound),
        };
        if value < best.0 {
            best = (value, t);
        }
    }
    Ok(ScanResult {
        argmin: best.1,
        expected: 2.0 * base,
        grid_ratio,
    })
}

pub fn params_suite(instances: usize, seed: u64) -> Result<OracleOutcome> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.random_range(1..=6);
        let psi = DMatrix::from_diagonal(&DVector::from_fn(k, |_, _| rng.random_range(0.001..5.0)));
        worst = worst.max(parameter_scan(ScanKind::Alpha, &psi)?.grid_steps_off());
        let p_zz = random_spd(&mut rng, k);
        worst = worst.max(parameter_scan(ScanKind::Epsilon, &p_zz)?.grid_steps_off());
    }
    Ok(OracleOutcome {
        suite: "params",
        checks: 2 * instances,
        worst_ratio: worst,
        detail: format!("{instances} α scans + {instances} ε scans, worst offset in grid steps"),
    })
}

/// Largest relative error between UT outputs and the closed-form linear
/// predictions on one random affine system of dimension ≤ `max_n`.
pub fn affine_relative_error(rng: &mut impl Rng, max_n: usize) -> Result<f64> {
    let n = rng.random_range(1..=max_n);
    let q = rng.random_range(1..=n);
    let m = rng.random_range(1..=4);
    let a = random_matrix(rng, n, n);
    let b = random_matrix(rng, n, 2);
    let c = random_matrix(rng, n, q);
    let noise = &c * random_spd(rng, q) * c.transpose();
    let d = random_matrix(rng, m, n);
    let offset = random_vector(rng, m, 2.0);
    let psi = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.01..1.0)));
    let prev = FilterState::new(random_vector(rng, n, 5.0), random_spd(rng, n))?;
    let u = random_vector(rng, 2, 1.0);
    let params = UtParams::default();

    let x_lin = &a * &prev.x_hat + &b * &u;
    let p_lin = &a * &prev.phi_hat * a.transpose() + &noise;
    let state = predict_state(&prev, |x| &a * x + &b * &u, &noise, &params)?;
    let sensed = predict_sensed(&x_lin, &p_lin, |x| &d * x + &offset, &params)?;
    let (p_xz, p_zz) = cross_covariances(
        &sensed.sigma,
        &x_lin,
        &sensed.sensed_points,
        &sensed.z_bar,
        &psi,
    )?;

    let rel = |got: &DMatrix<f64>, want: &DMatrix<f64>| {
        (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
    };
    let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    Ok([
        rel(&col(&state.x_bar), &col(&x_lin)),
        rel(&state.p_bar, &p_lin),
        rel(&col(&sensed.z_bar), &col(&(&d * &x_lin + &offset))),
        rel(&p_xz, &(&p_lin * d.transpose())),
        rel(&p_zz, &(&d * &p_lin * d.transpose() + &psi)),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

pub fn affine_suite(systems: usize, seed: u64) -> Result<OracleOutcome> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..systems {
        worst = worst.max(affine_relative_error(&mut rng, 5)?);
    }
    Ok(OracleOutcome {
        suite: "affine",
        checks: systems,
        worst_ratio: worst / AFFINE_TOL,
        detail: format!("{systems} affine systems, worst relative error {worst:.3e}"),
    })
}
