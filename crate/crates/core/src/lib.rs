//! Kalman-like filters for dynamic systems observed only through binary
//! (1-bit threshold) sensors.
//!
//! A binary sensor compares its continuous sensed variable against a fixed
//! threshold and transmits only the comparison. The filters here keep the one
//! step prediction of every sensed variable, flag the sensors whose received
//! bit disagrees with the predicted bit (the innovation set), and correct the
//! prediction using only those sensors. The threshold of an innovating sensor
//! is known to lie between the predicted and the true sensed value; the
//! resulting uncertainty is absorbed into a conservative covariance that upper
//! bounds the true error covariance for every admissible realisation.
//!
//! - [`lbklf`]: linear systems.
//! - [`nbklf`]: nonlinear systems, using the [`unscented`] transform.
//! - [`baselines`]: open-loop prediction, a clairvoyant Kalman filter on the
//!   un-thresholded sensed variables, and a switch-based Kalman-like filter.
//!
//! The crate is `no_std` and only needs `alloc`. Timing and IO live in the
//! companion `binklf` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod error;
pub mod innovation;
pub mod lbklf;
pub mod linalg;
pub mod models;
pub mod nbklf;
pub mod unscented;

pub use error::{Error, Result};
pub use innovation::{innovation_set, predicted_bits, InnovationSet};
pub use lbklf::{FilterState, LbklfParams, LbklfStepReport};
pub use models::{
    binary_output, simulate, LinearModel, LinearSensor, NonlinearModel, NonlinearSensor,
    SensorBank, SystemModel, Trajectory,
};
pub use nbklf::{NbklfParams, NbklfStepReport};
pub use unscented::{SigmaSet, UtParams};
