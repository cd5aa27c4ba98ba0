//! Nonlinear binary Kalman-like filter built on the unscented transform.
//!
//! With `P̄ˣᶻ`, `P̄ᶻᶻ` the UT cross and innovation covariances of the
//! innovating sensors:
//!
//! ```text
//! G = 2 P̄ˣᶻ [P̄ᶻᶻ + P̄ᶻᶻ (εI − P̄ᶻᶻ)⁻¹ P̄ᶻᶻ + (ε + ξ) I]⁻¹
//! x̂ = x̄ + G (τ_I − z̄_I)
//! Φ̂ = P̄ − ½ P̄ˣᶻ Gᵀ − ½ G P̄ˣᶻᵀ + ¼ G [·] Gᵀ + (1/ξ) P̄ˣᶻ P̄ˣᶻᵀ
//! ```
//!
//! `ε = 2 λ_max(P̄ᶻᶻ)` minimises the bound over `ε`; `ξ` has only a reference
//! range `(0, 2 Tr(P̄ˣᶻ P̄ˣᶻᵀ)]` and defaults to its midpoint.

use alloc::vec::Vec;
use core::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::innovation::{innovation_set, predicted_bits, InnovationSet};
use crate::lbklf::FilterState;
use crate::linalg::{lambda_max, spd_solve, symmetrize};
use crate::models::SystemModel;
use crate::unscented::{cross_covariances, predict_sensed, predict_state, UtParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbklfParams {
    /// `ξ = xi_factor · Tr(P̄ˣᶻ P̄ˣᶻᵀ)`; the reference range is `(0, 2]`.
    pub xi_factor: f64,
    pub ut: UtParams,
}

impl Default for NbklfParams {
    fn default() -> Self {
        NbklfParams {
            xi_factor: 1.0,
            ut: UtParams::default(),
        }
    }
}

impl NbklfParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.xi_factor > 0.0) || !self.xi_factor.is_finite() {
            return Err(Error::Config(
                "xi factor must be finite and positive".into(),
            ));
        }
        self.ut.validate(n)
    }
}

fn floor(scale: f64) -> f64 {
    1e-12 * (1.0 + scale.abs())
}

/// `ε = 2 λ_max(P̄ᶻᶻ)`, floored at `1e-12 (1 + tr P̄ᶻᶻ)`.
pub fn compute_epsilon(p_zz: &DMatrix<f64>) -> f64 {
    (2.0 * lambda_max(p_zz)).max(floor(p_zz.trace()))
}

/// `ξ = Tr(P̄ˣᶻ P̄ˣᶻᵀ)`, floored at `1e-12 (1 + ‖P̄ˣᶻ‖²)`.
pub fn choose_xi(p_xz: &DMatrix<f64>) -> f64 {
    choose_xi_with(p_xz, NbklfParams::default().xi_factor)
}

pub fn choose_xi_with(p_xz: &DMatrix<f64>, factor: f64) -> f64 {
    let sq = p_xz.norm_squared();
    (factor * sq).max(floor(sq))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbklfGain {
    /// n×m_k.
    pub gain: DMatrix<f64>,
    /// `P̄ᶻᶻ + P̄ᶻᶻ (εI − P̄ᶻᶻ)⁻¹ P̄ᶻᶻ + (ε + ξ) I`.
    pub bracket: DMatrix<f64>,
    pub p_xz: DMatrix<f64>,
    pub p_zz: DMatrix<f64>,
    pub epsilon: f64,
    pub xi: f64,
}

const EPSILON_CONSTRAINT: &str = "epsilon*I - P_zz (epsilon bound violated)";
const BRACKET_CONSTRAINT: &str = "P_zz + P_zz*(epsilon*I - P_zz)^-1*P_zz + (epsilon + xi)*I";

pub fn compute_gain(
    p_xz: &DMatrix<f64>,
    p_zz: &DMatrix<f64>,
    epsilon: f64,
    xi: f64,
) -> Result<NbklfGain> {
    let mk = p_zz.nrows();
    if p_zz.ncols() != mk || p_xz.ncols() != mk {
        return Err(Error::dim("innovation covariance", mk, p_xz.ncols()));
    }
    if !(xi > 0.0) {
        return Err(Error::Config("xi must be positive".into()));
    }
    let eye = DMatrix::<f64>::identity(mk, mk);
    let gap = &eye * epsilon - p_zz;
    let inflation = p_zz * spd_solve(&gap, p_zz, EPSILON_CONSTRAINT)?;
    let bracket = symmetrize(&(p_zz + inflation + &eye * (epsilon + xi)));
    let gain_t = spd_solve(&bracket, &(p_xz.transpose() * 2.0), BRACKET_CONSTRAINT)?;
    Ok(NbklfGain {
        gain: gain_t.transpose(),
        bracket,
        p_xz: p_xz.clone(),
        p_zz: p_zz.clone(),
        epsilon,
        xi,
    })
}

/// The conservative covariance at an arbitrary gain `g`, symmetrised.
pub fn conservative_covariance(
    p_bar: &DMatrix<f64>,
    terms: &NbklfGain,
    g: &DMatrix<f64>,
) -> DMatrix<f64> {
    let cross = &terms.p_xz * g.transpose();
    let phi = p_bar - &cross * 0.5 - cross.transpose() * 0.5
        + g * &terms.bracket * g.transpose() * 0.25
        + &terms.p_xz * terms.p_xz.transpose() / terms.xi;
    symmetrize(&phi)
}

/// `x̂ = x̄ + G (τ_I − z̄_I)` and the conservative covariance at `G`.
pub fn update(
    x_bar: &DVector<f64>,
    p_bar: &DMatrix<f64>,
    inn: &InnovationSet,
    z_bar_i: &DVector<f64>,
    terms: &NbklfGain,
) -> FilterState {
    let residual = inn.thresholds() - z_bar_i;
    FilterState {
        x_hat: x_bar + &terms.gain * residual,
        phi_hat: conservative_covariance(p_bar, terms, &terms.gain),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbklfStepReport {
    pub x_bar: DVector<f64>,
    pub p_bar: DMatrix<f64>,
    /// UT prediction of all m sensed variables.
    pub z_bar: DVector<f64>,
    pub predicted_bits: Vec<bool>,
    pub innovation: InnovationSet,
    pub correction: Option<NbklfGain>,
    pub new_state: FilterState,
    /// Left at zero here; filled in by callers that have a clock.
    pub elapsed: Duration,
}

impl NbklfStepReport {
    pub fn gain(&self) -> Option<&DMatrix<f64>> {
        self.correction.as_ref().map(|c| &c.gain)
    }

    /// `τ_I − z̄_I`.
    pub fn residual(&self) -> DVector<f64> {
        self.innovation.thresholds() - self.innovation.select(&self.z_bar)
    }
}

/// One full filter step. Works for any [`SystemModel`]; the sensed maps are
/// only ever evaluated at sigma points.
pub fn step<M: SystemModel + ?Sized>(
    prev: &FilterState,
    model: &M,
    u: &DVector<f64>,
    y: &[bool],
    params: &NbklfParams,
) -> Result<NbklfStepReport> {
    let n = model.state_dim();
    if prev.dim() != n {
        return Err(Error::dim("filter state", n, prev.dim()));
    }
    if u.len() != model.input_dim() {
        return Err(Error::dim("input vector", model.input_dim(), u.len()));
    }
    let state = predict_state(
        prev,
        |x| model.transition(x, u),
        &model.process_noise_cov(),
        &params.ut,
    )?;
    let (x_bar, p_bar) = (state.x_bar, state.p_bar);
    let sensed = predict_sensed(&x_bar, &p_bar, |x| model.sensed_all(x), &params.ut)?;
    let y_bar = predicted_bits(sensed.z_bar.as_slice(), &model.thresholds())?;
    let innovation = innovation_set(y, &y_bar, model)?;

    let (correction, new_state) = if innovation.is_empty() {
        (
            None,
            FilterState {
                x_hat: x_bar.clone(),
                phi_hat: p_bar.clone(),
            },
        )
    } else {
        let h_points: Vec<DVector<f64>> = sensed
            .sensed_points
            .iter()
            .map(|z| innovation.select(z))
            .collect();
        let z_bar_i = innovation.select(&sensed.z_bar);
        let (p_xz, p_zz) = cross_covariances(
            &sensed.sigma,
            &x_bar,
            &h_points,
            &z_bar_i,
            &innovation.psi(),
        )?;
        let epsilon = compute_epsilon(&p_zz);
        let xi = choose_xi_with(&p_xz, params.xi_factor);
        let terms = compute_gain(&p_xz, &p_zz, epsilon, xi)?;
        let state = update(&x_bar, &p_bar, &innovation, &z_bar_i, &terms);
        (Some(terms), state)
    };

    Ok(NbklfStepReport {
        x_bar,
        p_bar,
        z_bar: sensed.z_bar,
        predicted_bits: y_bar,
        innovation,
        correction,
        new_state,
        elapsed: Duration::ZERO,
    })
}
