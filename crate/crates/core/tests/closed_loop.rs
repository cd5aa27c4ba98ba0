//! Filters driven by simulated trajectories through the public API only.
#![allow(clippy::needless_range_loop)]

use binklf_core::{
    lbklf, linalg, nbklf, simulate, FilterState, LbklfParams, LinearModel, LinearSensor,
    NbklfParams, NonlinearModel, NonlinearSensor, SensorBank,
};
use nalgebra::{dmatrix, dvector, DMatrix, DVector, RowDVector};

fn tracking_model() -> LinearModel {
    let sensors = (0..6)
        .map(|i| {
            let row = if i % 2 == 0 {
                RowDVector::from_row_slice(&[1.0, 0.0])
            } else {
                RowDVector::from_row_slice(&[0.5, 0.5])
            };
            LinearSensor::new(row, 1.0, 0.05, -1.5 + 0.6 * i as f64)
        })
        .collect();
    LinearModel::new(
        dmatrix![0.95, 0.1; -0.1, 0.9],
        dmatrix![1.0; 0.0],
        DMatrix::identity(2, 2),
        DMatrix::from_diagonal(&dvector![0.04, 0.04]),
        sensors,
    )
    .unwrap()
}

fn pendulum_like() -> NonlinearModel {
    let sensors = (0..8)
        .map(|i| {
            let c = -2.0 + 0.5 * i as f64;
            NonlinearSensor::new(
                move |x: &DVector<f64>| x[0].sin() + 0.3 * x[1] - c,
                1.0,
                0.01,
                0.0,
            )
        })
        .collect();
    NonlinearModel::new(
        2,
        1,
        |x: &DVector<f64>, u: &DVector<f64>| {
            dvector![x[0] + 0.1 * x[1], 0.95 * x[1] - 0.2 * x[0].sin() + u[0]]
        },
        DMatrix::identity(2, 2),
        DMatrix::from_diagonal(&dvector![0.01, 0.02]),
        sensors,
    )
    .unwrap()
}

fn inputs(steps: usize) -> Vec<DVector<f64>> {
    (0..steps)
        .map(|k| dvector![0.3 * (0.05 * k as f64).sin()])
        .collect()
}

fn assert_psd(phi: &DMatrix<f64>) {
    assert!((phi - phi.transpose()).abs().max() <= 1e-12 * (1.0 + phi.abs().max()));
    assert!(linalg::is_psd(phi, 1e-10 * (1.0 + phi.trace())), "{phi}");
}

#[test]
fn lbklf_covariance_stays_psd_and_covers_the_error() {
    let model = tracking_model();
    let (steps, seeds) = (120, 200);
    let u = inputs(steps);
    let x0 = dvector![0.0, 0.0];
    let (mut sq_err, mut trace) = (0.0, 0.0);
    for seed in 0..seeds {
        let traj = simulate(&model, &u, &x0, seed, steps).unwrap();
        let mut state = FilterState::new(dvector![0.5, -0.5], DMatrix::identity(2, 2)).unwrap();
        for k in 0..steps {
            let r = lbklf::step(
                &state,
                &model,
                &u[k],
                &traj.bits[k],
                &LbklfParams::default(),
            )
            .unwrap();
            if r.innovation.is_empty() {
                assert_eq!(r.new_state.x_hat, r.x_bar);
                assert_eq!(r.new_state.phi_hat, r.phi_bar);
            }
            assert_psd(&r.new_state.phi_hat);
            state = r.new_state;
            if k >= 20 {
                sq_err += (&traj.states[k] - &state.x_hat).norm_squared();
                trace += state.phi_hat.trace();
            }
        }
    }
    // Φ̂ upper bounds the error covariance, so its trace bounds the mean squared error.
    assert!(
        sq_err <= trace,
        "mean squared error {sq_err} exceeds mean trace {trace}"
    );
}

#[test]
fn nbklf_covariance_stays_psd_and_covers_the_error() {
    let model = pendulum_like();
    let (steps, seeds) = (100, 100);
    let u = inputs(steps);
    let x0 = dvector![0.2, 0.0];
    let (mut sq_err, mut trace) = (0.0, 0.0);
    for seed in 0..seeds {
        let traj = simulate(&model, &u, &x0, seed, steps).unwrap();
        let mut state =
            FilterState::new(dvector![0.0, 0.3], DMatrix::identity(2, 2) * 0.5).unwrap();
        for k in 0..steps {
            let r = nbklf::step(
                &state,
                &model,
                &u[k],
                &traj.bits[k],
                &NbklfParams::default(),
            )
            .unwrap();
            assert_eq!(r.predicted_bits.len(), model.sensor_count());
            assert_psd(&r.new_state.phi_hat);
            state = r.new_state;
            if k >= 20 {
                sq_err += (&traj.states[k] - &state.x_hat).norm_squared();
                trace += state.phi_hat.trace();
            }
        }
    }
    assert!(
        sq_err <= trace,
        "mean squared error {sq_err} exceeds mean trace {trace}"
    );
}

#[test]
fn simulation_is_reproducible_per_seed() {
    let model = tracking_model();
    let u = inputs(50);
    let a = simulate(&model, &u, &dvector![0.0, 0.0], 42, 50).unwrap();
    let b = simulate(&model, &u, &dvector![0.0, 0.0], 42, 50).unwrap();
    let c = simulate(&model, &u, &dvector![0.0, 0.0], 43, 50).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a.checksum(), c.checksum());
}
