//! Linear binary Kalman-like filter.
//!
//! One step is: predict `x̄ = A x̂ + B u`, `Φ̄ = A Φ̂ Aᵀ + C Q Cᵀ`; classify
//! the bits against `z̄ = D x̄`; if no sensor innovates the prediction is the
//! estimate, otherwise correct with the innovating sensors only:
//!
//! ```text
//! Υ = Φ̄ + Φ̄ D_Iᵀ (βI − D_I Φ̄ D_Iᵀ)⁻¹ D_I Φ̄
//! Ξ = Ψ + Ψ (αI − Ψ)⁻¹ Ψ + αI,          Ψ = E_I R_I E_Iᵀ
//! G = 2 Υ D_Iᵀ [D_I Υ D_Iᵀ + βI + Ξ]⁻¹
//! x̂ = x̄ + G (τ_I − D_I x̄)
//! Φ̂ = ¼ G [D_I Υ D_Iᵀ + βI + Ξ] Gᵀ − ½ Υ D_Iᵀ Gᵀ − ½ G D_I Υ + Υ
//! ```
//!
//! `Φ̂` upper-bounds the error covariance for every position of the
//! threshold between the predicted and the true sensed value, and `G`
//! minimises its trace. `α = 2 d_max(Ψ)` minimises the bound over `α`; `β`
//! only has a reference interval and defaults to its upper end.

use alloc::vec::Vec;
use core::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::innovation::{innovation_set, predicted_bits, InnovationSet};
use crate::linalg::{self, d_max, lambda_max, spd_solve, symmetrize};
use crate::models::{LinearModel, SensorBank, SystemModel};

/// Estimate and conservative covariance carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub phi_hat: DMatrix<f64>,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, phi_hat: DMatrix<f64>) -> Result<Self> {
        let n = x_hat.len();
        if phi_hat.nrows() != n || phi_hat.ncols() != n {
            return Err(Error::dim("covariance", n, phi_hat.nrows()));
        }
        let tol = 1e-10 * phi_hat.trace().abs().max(1.0);
        if !linalg::is_psd(&phi_hat, tol) {
            return Err(Error::Config(
                "initial covariance must be positive semidefinite".into(),
            ));
        }
        Ok(FilterState {
            x_hat,
            phi_hat: symmetrize(&phi_hat),
        })
    }

    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbklfParams {
    /// `β = beta_factor · λ_max(D_I Φ̄ D_Iᵀ)`; the reference interval is
    /// `(1, 2]`.
    pub beta_factor: f64,
}

impl Default for LbklfParams {
    fn default() -> Self {
        LbklfParams { beta_factor: 2.0 }
    }
}

impl LbklfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_factor > 1.0) || !self.beta_factor.is_finite() {
            return Err(Error::Config(
                "beta factor must be finite and greater than 1".into(),
            ));
        }
        Ok(())
    }
}

/// Quantities of a correction step, present only when the innovation set is
/// non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LbklfCorrection {
    pub alpha: f64,
    pub beta: f64,
    /// `Ψ = E_I R_I E_Iᵀ`.
    pub psi: DMatrix<f64>,
    pub terms: LbklfGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbklfStepReport {
    pub x_bar: DVector<f64>,
    pub phi_bar: DMatrix<f64>,
    /// Predicted sensed variables of all m sensors.
    pub z_bar: DVector<f64>,
    pub predicted_bits: Vec<bool>,
    pub innovation: InnovationSet,
    pub correction: Option<LbklfCorrection>,
    pub new_state: FilterState,
    /// Wall time of the step; left at zero here and filled in by callers
    /// that have a clock.
    pub elapsed: Duration,
}

impl LbklfStepReport {
    pub fn gain(&self) -> Option<&DMatrix<f64>> {
        self.correction.as_ref().map(|c| &c.terms.gain)
    }
}

/// `x̄ = A x̂ + B u`, `Φ̄ = A Φ̂ Aᵀ + C Q Cᵀ`.
pub fn predict(
    prev: &FilterState,
    model: &LinearModel,
    u: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let a = model.transition_matrix();
    let x_bar = model.predict_mean(&prev.x_hat, u);
    let phi_bar = symmetrize(&(a * &prev.phi_hat * a.transpose() + model.process_noise_cov()));
    (x_bar, phi_bar)
}

fn floor(trace: f64) -> f64 {
    1e-12 * (1.0 + trace.abs())
}

/// `α = 2 d_max(Ψ)`, floored at `1e-12 (1 + tr Ψ)` so that `αI > Ψ` also
/// holds for noise-free sensors.
pub fn compute_alpha(psi: &DMatrix<f64>) -> f64 {
    (2.0 * d_max(psi)).max(floor(psi.trace()))
}

/// `β = 2 λ_max(D_I Φ̄ D_Iᵀ)` with the same floor rule as [`compute_alpha`].
pub fn choose_beta(dphid: &DMatrix<f64>) -> f64 {
    choose_beta_with(dphid, LbklfParams::default().beta_factor)
}

pub fn choose_beta_with(dphid: &DMatrix<f64>, factor: f64) -> f64 {
    (factor * lambda_max(dphid)).max(floor(dphid.trace()))
}

/// Gain and the auxiliary matrices it is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LbklfGain {
    /// n×m_k.
    pub gain: DMatrix<f64>,
    pub upsilon: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    /// `D_I Υ D_Iᵀ + βI + Ξ`.
    pub bracket: DMatrix<f64>,
    pub output_matrix: DMatrix<f64>,
}

const BETA_CONSTRAINT: &str = "beta*I - D_I*Phi_bar*D_I^T (beta bound violated)";
const ALPHA_CONSTRAINT: &str = "alpha*I - Psi (alpha bound violated)";
const BRACKET_CONSTRAINT: &str = "D_I*Upsilon*D_I^T + beta*I + Xi";

/// Evaluates `Υ`, `Ξ` and the trace-minimising gain.
pub fn compute_gain(
    phi_bar: &DMatrix<f64>,
    d_i: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
) -> Result<LbklfGain> {
    let n = phi_bar.nrows();
    let mk = d_i.nrows();
    if d_i.ncols() != n {
        return Err(Error::dim(
            "innovation output matrix columns",
            n,
            d_i.ncols(),
        ));
    }
    if psi.nrows() != mk || psi.ncols() != mk {
        return Err(Error::dim("Psi", mk, psi.nrows()));
    }
    let eye = DMatrix::<f64>::identity(mk, mk);

    let d_phi = d_i * phi_bar;
    let beta_gap = &eye * beta - &d_phi * d_i.transpose();
    let upsilon =
        symmetrize(&(phi_bar + d_phi.transpose() * spd_solve(&beta_gap, &d_phi, BETA_CONSTRAINT)?));

    let mut xi = DMatrix::zeros(mk, mk);
    for i in 0..mk {
        let p = psi[(i, i)];
        let gap = alpha - p;
        if !(gap > 0.0) {
            return Err(Error::NotPositiveDefinite {
                constraint: ALPHA_CONSTRAINT,
            });
        }
        xi[(i, i)] = p + p * p / gap + alpha;
    }

    let d_ups = d_i * &upsilon;
    let bracket = symmetrize(&(&d_ups * d_i.transpose() + &eye * beta + &xi));
    let gain_t = spd_solve(&bracket, &(d_ups * 2.0), BRACKET_CONSTRAINT)?;
    Ok(LbklfGain {
        gain: gain_t.transpose(),
        upsilon,
        xi,
        bracket,
        output_matrix: d_i.clone(),
    })
}

/// The conservative covariance as a function of an arbitrary gain `g`,
/// symmetrised.
pub fn conservative_covariance(terms: &LbklfGain, g: &DMatrix<f64>) -> DMatrix<f64> {
    let ups = &terms.upsilon;
    let cross = g * &terms.output_matrix * ups;
    let phi =
        g * &terms.bracket * g.transpose() * 0.25 - cross.transpose() * 0.5 - cross * 0.5 + ups;
    symmetrize(&phi)
}

/// `x̂ = x̄ + G (τ_I − D_I x̄)` and the conservative covariance at `G`.
pub fn update(x_bar: &DVector<f64>, inn: &InnovationSet, terms: &LbklfGain) -> FilterState {
    let residual = inn.thresholds() - &terms.output_matrix * x_bar;
    FilterState {
        x_hat: x_bar + &terms.gain * residual,
        phi_hat: conservative_covariance(terms, &terms.gain),
    }
}

/// One full filter step driven by the received bits `y`.
pub fn step(
    prev: &FilterState,
    model: &LinearModel,
    u: &DVector<f64>,
    y: &[bool],
    params: &LbklfParams,
) -> Result<LbklfStepReport> {
    let n = model.state_dim();
    if prev.dim() != n {
        return Err(Error::dim("filter state", n, prev.dim()));
    }
    if u.len() != model.input_dim() {
        return Err(Error::dim("input vector", model.input_dim(), u.len()));
    }
    let (x_bar, phi_bar) = predict(prev, model, u);
    let z_bar = model.output_matrix() * &x_bar;
    let y_bar = predicted_bits(z_bar.as_slice(), &model.thresholds())?;
    let innovation = innovation_set(y, &y_bar, model)?;

    let (correction, new_state) = if innovation.is_empty() {
        (
            None,
            FilterState {
                x_hat: x_bar.clone(),
                phi_hat: phi_bar.clone(),
            },
        )
    } else {
        let d_i = innovation
            .output_matrix()
            .expect("linear sensor banks always stack output rows");
        let psi = innovation.psi();
        let alpha = compute_alpha(&psi);
        let beta = choose_beta_with(&(d_i * &phi_bar * d_i.transpose()), params.beta_factor);
        let terms = compute_gain(&phi_bar, d_i, &psi, alpha, beta)?;
        let state = update(&x_bar, &innovation, &terms);
        (
            Some(LbklfCorrection {
                alpha,
                beta,
                psi,
                terms,
            }),
            state,
        )
    };

    Ok(LbklfStepReport {
        x_bar,
        phi_bar,
        z_bar,
        predicted_bits: y_bar,
        innovation,
        correction,
        new_state,
        elapsed: Duration::ZERO,
    })
}
