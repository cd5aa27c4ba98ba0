//! Unscented transform with `2n + 1` sigma points.
//!
//! Points are `χ₀ = x`, `χⱼ = x − Lⱼ` and `χ_{n+j} = x + Lⱼ` for the columns
//! `Lⱼ` of the lower Cholesky factor of `(n + η) P`, with
//! `η = a²(n + κ) − n`. Weights are `wᵐⱼ = wᶜⱼ = 1 / (2(n + η))` for `j ≥ 1`,
//! `wᵐ₀ = η / (n + η)` and `wᶜ₀ = wᵐ₀ + 1 − a² + b`. With the default
//! `a = 1, b = 2, κ = 0` this gives `η = 0`, `wᵐ₀ = 0` and `wᶜ₀ = 2`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lbklf::FilterState;
use crate::linalg::{cholesky_with_jitter, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        UtParams {
            a: 1.0,
            b: 2.0,
            kappa: 0.0,
        }
    }
}

impl UtParams {
    pub fn eta(&self, n: usize) -> f64 {
        self.a * self.a * (n as f64 + self.kappa) - n as f64
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let spread = n as f64 + self.eta(n);
        if !(spread > 0.0) || !spread.is_finite() || !self.b.is_finite() {
            return Err(Error::Config(
                "unscented parameters must give n + eta > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
    pub params: UtParams,
    pub eta: f64,
}

impl SigmaSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same weights, points mapped through `f`.
    pub fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> SigmaSet {
        SigmaSet {
            points: self.points.iter().map(f).collect(),
            ..self.clone()
        }
    }

    pub fn weighted_mean(&self) -> DVector<f64> {
        weighted_mean(&self.points, &self.mean_weights)
    }
}

fn weighted_mean(points: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    points
        .iter()
        .zip(weights)
        .fold(DVector::zeros(dim), |acc, (p, &w)| acc + p * w)
}

fn weighted_cross(
    left: &[DVector<f64>],
    left_mean: &DVector<f64>,
    right: &[DVector<f64>],
    right_mean: &DVector<f64>,
    weights: &[f64],
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(left_mean.len(), right_mean.len());
    for ((l, r), &w) in left.iter().zip(right).zip(weights) {
        out += (l - left_mean) * (r - right_mean).transpose() * w;
    }
    out
}

/// Draws `2n + 1` sigma points around `center` with covariance `cov`.
pub fn sigma_points(
    center: &DVector<f64>,
    cov: &DMatrix<f64>,
    params: &UtParams,
) -> Result<SigmaSet> {
    let n = center.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::dim("sigma point covariance", n, cov.nrows()));
    }
    params.validate(n)?;
    let eta = params.eta(n);
    let spread = n as f64 + eta;
    let factor = cholesky_with_jitter(&(cov * spread), "sigma point covariance")?;

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(center.clone());
    for j in 0..n {
        points.push(center - factor.column(j));
    }
    for j in 0..n {
        points.push(center + factor.column(j));
    }

    let side = 1.0 / (2.0 * spread);
    let w0 = eta / spread;
    let mut mean_weights = alloc::vec![side; 2 * n + 1];
    let mut cov_weights = mean_weights.clone();
    mean_weights[0] = w0;
    cov_weights[0] = w0 + (1.0 - params.a * params.a + params.b);
    Ok(SigmaSet {
        points,
        mean_weights,
        cov_weights,
        params: *params,
        eta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePrediction {
    pub x_bar: DVector<f64>,
    pub p_bar: DMatrix<f64>,
    /// Sigma points of the previous estimate mapped through the dynamics.
    pub propagated: SigmaSet,
}

/// UT prediction of the state: `x̄ = Σ wᵐⱼ f(χⱼ)` and
/// `P̄ = Σ wᶜⱼ (f(χⱼ) − x̄)(f(χⱼ) − x̄)ᵀ + C Q Cᵀ`.
pub fn predict_state(
    prev: &FilterState,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    process_noise_cov: &DMatrix<f64>,
    params: &UtParams,
) -> Result<StatePrediction> {
    let n = prev.dim();
    if process_noise_cov.nrows() != n {
        return Err(Error::dim(
            "process noise covariance",
            n,
            process_noise_cov.nrows(),
        ));
    }
    let sigma = sigma_points(&prev.x_hat, &prev.phi_hat, params)?;
    let propagated = sigma.map(f);
    if let Some(bad) = propagated.points.iter().find(|p| p.len() != n) {
        return Err(Error::dim("dynamics output", n, bad.len()));
    }
    let x_bar = propagated.weighted_mean();
    let spread = weighted_cross(
        &propagated.points,
        &x_bar,
        &propagated.points,
        &x_bar,
        &propagated.cov_weights,
    );
    let p_bar = symmetrize(&(spread + process_noise_cov));
    Ok(StatePrediction {
        x_bar,
        p_bar,
        propagated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensedPrediction {
    /// `z̄ⁱ = Σ wᵐⱼ hⁱ(χ̄ⱼ)` for every sensor.
    pub z_bar: DVector<f64>,
    /// Sigma points redrawn around `(x̄, P̄)`.
    pub sigma: SigmaSet,
    /// `h(χ̄ⱼ)` for every sigma point, each of length m.
    pub sensed_points: Vec<DVector<f64>>,
}

/// Redraws sigma points around the predicted state and maps them through
/// the stacked sensed map `h` (all m sensors).
pub fn predict_sensed(
    x_bar: &DVector<f64>,
    p_bar: &DMatrix<f64>,
    h: impl Fn(&DVector<f64>) -> DVector<f64>,
    params: &UtParams,
) -> Result<SensedPrediction> {
    let sigma = sigma_points(x_bar, p_bar, params)?;
    let sensed_points: Vec<DVector<f64>> = sigma.points.iter().map(h).collect();
    let m = sensed_points.first().map_or(0, |z| z.len());
    if let Some(bad) = sensed_points.iter().find(|z| z.len() != m) {
        return Err(Error::dim("sensed map output", m, bad.len()));
    }
    let z_bar = weighted_mean(&sensed_points, &sigma.mean_weights);
    Ok(SensedPrediction {
        z_bar,
        sigma,
        sensed_points,
    })
}

/// Cross covariance `P̄ˣᶻ` (n×m_k) and innovation covariance `P̄ᶻᶻ`
/// (m_k×m_k, including `E_I R_I E_Iᵀ`) from the redrawn sigma points.
/// `h_points[j]` must hold `h_I(χ̄ⱼ)`.
pub fn cross_covariances(
    sigma: &SigmaSet,
    x_bar: &DVector<f64>,
    h_points: &[DVector<f64>],
    z_bar_i: &DVector<f64>,
    noise_cov: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mk = z_bar_i.len();
    if h_points.len() != sigma.len() {
        return Err(Error::dim(
            "sensed sigma points",
            sigma.len(),
            h_points.len(),
        ));
    }
    if noise_cov.nrows() != mk || noise_cov.ncols() != mk {
        return Err(Error::dim(
            "measurement noise covariance",
            mk,
            noise_cov.nrows(),
        ));
    }
    let p_xz = weighted_cross(&sigma.points, x_bar, h_points, z_bar_i, &sigma.cov_weights);
    let p_zz = weighted_cross(h_points, z_bar_i, h_points, z_bar_i, &sigma.cov_weights) + noise_cov;
    Ok((p_xz, symmetrize(&p_zz)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.05
    }

    #[test]
    fn scalar_default_points_and_weights() {
        let s = sigma_points(&dvector![0.0], &dmatrix![1.0], &UtParams::default()).unwrap();
        let pts: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, -1.0, 1.0]);
        assert_eq!(s.mean_weights, vec![0.0, 0.5, 0.5]);
        assert_eq!(s.cov_weights, vec![2.0, 0.5, 0.5]);
        assert_eq!(s.eta, 0.0);
    }

    #[test]
    fn identity_covariance_columns() {
        let s = sigma_points(
            &dvector![0.0, 0.0],
            &DMatrix::identity(2, 2),
            &UtParams::default(),
        )
        .unwrap();
        let r2 = 2.0_f64.sqrt();
        assert_relative_eq!(s.points[1], dvector![-r2, 0.0], epsilon = 1e-15);
        assert_relative_eq!(s.points[2], dvector![0.0, -r2], epsilon = 1e-15);
        assert_relative_eq!(s.points[3], dvector![r2, 0.0], epsilon = 1e-15);
        assert_relative_eq!(s.points[4], dvector![0.0, r2], epsilon = 1e-15);
    }

    #[test]
    fn moments_are_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=5 {
            let center = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let cov = random_spd(&mut rng, n);
            for params in [
                UtParams::default(),
                UtParams {
                    a: 0.7,
                    b: 2.0,
                    kappa: 1.0,
                },
            ] {
                let s = sigma_points(&center, &cov, &params).unwrap();
                assert_eq!(s.len(), 2 * n + 1);
                assert_relative_eq!(s.mean_weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                assert_relative_eq!(s.weighted_mean(), center, epsilon = 1e-10);
                // the mean weights rebuild the covariance exactly
                let rebuilt =
                    weighted_cross(&s.points, &center, &s.points, &center, &s.mean_weights);
                assert_relative_eq!(rebuilt, cov, epsilon = 1e-10);
                // deviations come in ± pairs
                for j in 1..=n {
                    assert_relative_eq!(
                        &s.points[j] - &center,
                        &center - &s.points[j + n],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn affine_dynamics_match_linear_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = dvector![0.3, -1.0, 2.0];
        let cqc = random_spd(&mut rng, 3);
        let prev = FilterState::new(dvector![1.0, -2.0, 0.5], random_spd(&mut rng, 3)).unwrap();
        let pred = predict_state(&prev, |x| &a * x + &b, &cqc, &UtParams::default()).unwrap();
        let x_lin = &a * &prev.x_hat + &b;
        let p_lin = &a * &prev.phi_hat * a.transpose() + &cqc;
        assert_relative_eq!(pred.x_bar, x_lin, max_relative = 1e-10);
        assert_relative_eq!(pred.p_bar, p_lin, max_relative = 1e-10);
    }

    #[test]
    fn identity_dynamics_without_noise() {
        let prev = FilterState::new(dvector![1.0, 2.0], dmatrix![2.0, 0.1; 0.1, 0.5]).unwrap();
        let pred = predict_state(
            &prev,
            |x| x.clone(),
            &DMatrix::zeros(2, 2),
            &UtParams::default(),
        )
        .unwrap();
        assert_relative_eq!(pred.x_bar, prev.x_hat, epsilon = 1e-14);
        assert_relative_eq!(pred.p_bar, prev.phi_hat, epsilon = 1e-14);
    }

    #[test]
    fn affine_sensed_maps() {
        let x_bar = dvector![1.0, -1.0];
        let p_bar = dmatrix![1.0, 0.2; 0.2, 2.0];
        let d = dmatrix![1.0, 2.0; -0.5, 0.0];
        let offset = dvector![0.5, 1.0];
        let pred =
            predict_sensed(&x_bar, &p_bar, |x| &d * x + &offset, &UtParams::default()).unwrap();
        assert_relative_eq!(pred.z_bar, &d * &x_bar + &offset, epsilon = 1e-12);

        let noise = DMatrix::from_diagonal(&dvector![0.1, 0.2]);
        let z_bar = pred.z_bar.clone();
        let (p_xz, p_zz) =
            cross_covariances(&pred.sigma, &x_bar, &pred.sensed_points, &z_bar, &noise).unwrap();
        assert_relative_eq!(p_xz, &p_bar * d.transpose(), max_relative = 1e-10);
        assert_relative_eq!(
            p_zz,
            &d * &p_bar * d.transpose() + &noise,
            max_relative = 1e-10
        );
    }

    #[test]
    fn constant_sensed_map_has_no_correlation() {
        let x_bar = dvector![1.0, -1.0];
        let p_bar = dmatrix![1.0, 0.2; 0.2, 2.0];
        let pred = predict_sensed(&x_bar, &p_bar, |_| dvector![3.0], &UtParams::default()).unwrap();
        let noise = dmatrix![0.01];
        let (p_xz, p_zz) = cross_covariances(
            &pred.sigma,
            &x_bar,
            &pred.sensed_points,
            &pred.z_bar,
            &noise,
        )
        .unwrap();
        assert_relative_eq!(p_xz, DMatrix::zeros(2, 1), epsilon = 1e-14);
        assert_relative_eq!(p_zz, noise, epsilon = 1e-14);
    }

    #[test]
    fn empty_sensor_bank() {
        let pred = predict_sensed(
            &dvector![0.0],
            &dmatrix![1.0],
            |_| DVector::zeros(0),
            &UtParams::default(),
        )
        .unwrap();
        assert_eq!(pred.z_bar.len(), 0);
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let err = sigma_points(
            &dvector![0.0, 0.0],
            &dmatrix![1.0, 0.0; 0.0, -1.0],
            &UtParams::default(),
        )
        .unwrap_err();
        assert!(err.is_numerical());
    }
}
