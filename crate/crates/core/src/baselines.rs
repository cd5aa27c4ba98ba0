//! Reference estimators the binary filters are compared against.
//!
//! - [`open_loop_step`] / [`open_loop_ut_step`]: prediction only, bits unused.
//! - [`clairvoyant_kf_step`]: a Kalman filter fed the un-thresholded sensed
//!   variables; a performance floor no 1-bit filter can beat on average.
//! - [`switch_klf_step`]: a Kalman-like filter built on the switch model,
//!   where a sensor whose bit toggled between consecutive steps is taken to
//!   have its threshold halfway between the previous and current sensed values,
//!   with the position uncertainty ignored.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lbklf::{predict, FilterState};
use crate::linalg::{spd_solve, symmetrize};
use crate::models::{LinearModel, SensorBank, SystemModel};
use crate::unscented::{predict_state, UtParams};

/// Pure prediction for a linear model.
pub fn open_loop_step(prev: &FilterState, model: &LinearModel, u: &DVector<f64>) -> FilterState {
    let (x_hat, phi_hat) = predict(prev, model, u);
    FilterState { x_hat, phi_hat }
}

/// Pure UT prediction for any model.
pub fn open_loop_ut_step<M: SystemModel + ?Sized>(
    prev: &FilterState,
    model: &M,
    u: &DVector<f64>,
    params: &UtParams,
) -> Result<FilterState> {
    let pred = predict_state(
        prev,
        |x| model.transition(x, u),
        &model.process_noise_cov(),
        params,
    )?;
    Ok(FilterState {
        x_hat: pred.x_bar,
        phi_hat: pred.p_bar,
    })
}

/// Kalman filter on the continuous sensed vector `z` (all m sensors), Joseph
/// form covariance update.
pub fn clairvoyant_kf_step(
    prev: &FilterState,
    model: &LinearModel,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<FilterState> {
    let m = model.sensor_count();
    if z.len() != m {
        return Err(Error::dim("sensed vector", m, z.len()));
    }
    let (x_bar, phi_bar) = predict(prev, model, u);
    let d = model.output_matrix();
    let noise = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            let e = model.noise_gain(i);
            e * model.noise_variance(i) * e
        } else {
            0.0
        }
    });
    let s = &d * &phi_bar * d.transpose() + &noise;
    let k = spd_solve(
        &s,
        &(&d * &phi_bar),
        "innovation covariance D*Phi_bar*D^T + E*R*E^T",
    )?
    .transpose();
    let x_hat = &x_bar + &k * (z - &d * &x_bar);
    let n = model.state_dim();
    let i_kd = DMatrix::identity(n, n) - &k * &d;
    let phi_hat = symmetrize(&(&i_kd * phi_bar * i_kd.transpose() + &k * noise * k.transpose()));
    Ok(FilterState { x_hat, phi_hat })
}

/// Sensors whose bit changed between consecutive steps, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SwitchSet {
    pub indices: Vec<usize>,
}

impl SwitchSet {
    pub fn new(y: &[bool], y_prev: &[bool]) -> Result<Self> {
        if y.len() != y_prev.len() {
            return Err(Error::dim("previous bits", y.len(), y_prev.len()));
        }
        Ok(SwitchSet {
            indices: (0..y.len()).filter(|&i| y[i] != y_prev[i]).collect(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Switch-based Kalman-like step. For each switched sensor, in ascending
/// order, the prediction is corrected by
/// `x̂ = x̄ + G (τⁱ − ½ ẑⁱ_{k-1} − ½ z̄ⁱ)` with `ẑⁱ_{k-1} = Dⁱ x̂_{k-1}` and
/// `G = 2 Φ̄ Dⁱᵀ (Dⁱ Φ̄ Dⁱᵀ + Ψⁱ)⁻¹`, i.e. the linear filter's gain with the
/// uncertainty-bounding terms dropped. Later sensors see the corrected
/// estimate.
pub fn switch_klf_step(
    prev: &FilterState,
    model: &LinearModel,
    u: &DVector<f64>,
    y: &[bool],
    y_prev: &[bool],
) -> Result<FilterState> {
    let m = model.sensor_count();
    if y.len() != m {
        return Err(Error::dim("received bits", m, y.len()));
    }
    let switches = SwitchSet::new(y, y_prev)?;
    let (mut x, mut phi) = predict(prev, model, u);
    let n = model.state_dim();
    for &i in &switches.indices {
        let sensor = &model.sensors()[i];
        let d = DMatrix::from_row_slice(1, n, sensor.output.as_slice());
        let z_prev_hat = sensor.output.dot(&prev.x_hat.transpose());
        let z_bar = sensor.output.dot(&x.transpose());
        let residual = sensor.threshold - 0.5 * z_prev_hat - 0.5 * z_bar;
        let psi = sensor.noise_gain * sensor.noise_variance * sensor.noise_gain;
        let s = (&d * &phi * d.transpose())[(0, 0)] + psi;
        if !(s > 0.0) {
            return Err(Error::NotPositiveDefinite {
                constraint: "switch update D*Phi_bar*D^T + Psi",
            });
        }
        let gain = &phi * d.transpose() * (2.0 / s);
        x += &gain * residual;
        let i_gd = DMatrix::identity(n, n) - &gain * &d * 0.5;
        phi = symmetrize(
            &(&i_gd * &phi * i_gd.transpose() + &gain * gain.transpose() * (0.25 * psi)),
        );
    }
    Ok(FilterState {
        x_hat: x,
        phi_hat: phi,
    })
}
