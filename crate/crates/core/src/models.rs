//! System models, binary sensor banks and ground-truth simulation.
//!
//! Both model kinds share the same sensor convention: sensor `i` produces a
//! sensed variable `zⁱ = hⁱ(x) + Eⁱ vⁱ` with `vⁱ ~ N(0, Rⁱ)` and transmits the
//! single bit `zⁱ >= τⁱ`. System matrices are constant over time.

use alloc::{sync::Arc, vec::Vec};
use core::fmt;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// The 1-bit sensor output rule. Equality maps to `true` (bit 1).
#[inline]
pub fn binary_output(z: f64, tau: f64) -> bool {
    z >= tau
}

/// Per-sensor parameters common to every model kind.
pub trait SensorBank {
    fn sensor_count(&self) -> usize;
    fn threshold(&self, i: usize) -> f64;
    /// Scalar `Eⁱ` multiplying the sensor noise.
    fn noise_gain(&self, i: usize) -> f64;
    /// Scalar `Rⁱ`, the variance of `vⁱ`.
    fn noise_variance(&self, i: usize) -> f64;
    /// The row `Dⁱ` when the sensed map is linear.
    fn output_row(&self, _i: usize) -> Option<RowDVector<f64>> {
        None
    }

    fn thresholds(&self) -> Vec<f64> {
        (0..self.sensor_count())
            .map(|i| self.threshold(i))
            .collect()
    }
}

/// A discrete-time system `x_k = f(x_{k-1}, u_{k-1}) + C w_{k-1}` observed
/// through a [`SensorBank`].
pub trait SystemModel: SensorBank {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Noise-free dynamics `f(x, u)`.
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// Noise-free sensed variable `hⁱ(x)`.
    fn sensed(&self, i: usize, x: &DVector<f64>) -> f64;
    fn process_gain(&self) -> &DMatrix<f64>;
    fn process_cov(&self) -> &DMatrix<f64>;

    /// `C Q Cᵀ`.
    fn process_noise_cov(&self) -> DMatrix<f64> {
        let c = self.process_gain();
        linalg::symmetrize(&(c * self.process_cov() * c.transpose()))
    }

    /// Noise-free sensed variables of every sensor.
    fn sensed_all(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.sensor_count(),
            (0..self.sensor_count()).map(|i| self.sensed(i, x)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSensor {
    /// `Dⁱ`, length n.
    pub output: RowDVector<f64>,
    pub noise_gain: f64,
    pub noise_variance: f64,
    pub threshold: f64,
}

impl LinearSensor {
    pub fn new(
        output: RowDVector<f64>,
        noise_gain: f64,
        noise_variance: f64,
        threshold: f64,
    ) -> Self {
        LinearSensor {
            output,
            noise_gain,
            noise_variance,
            threshold,
        }
    }
}

fn check_sensor_scalars(noise_gain: f64, noise_variance: f64, threshold: f64) -> Result<()> {
    if !noise_gain.is_finite() || !threshold.is_finite() {
        return Err(Error::Config(
            "sensor gain and threshold must be finite".into(),
        ));
    }
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::Config(
            "sensor noise variance must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn check_process_noise(n: usize, c: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<()> {
    if c.nrows() != n {
        return Err(Error::dim("process noise gain rows", n, c.nrows()));
    }
    if q.nrows() != c.ncols() || q.ncols() != c.ncols() {
        return Err(Error::dim("process noise covariance", c.ncols(), q.nrows()));
    }
    let asym = (q - q.transpose()).amax();
    if asym > 1e-12 * (1.0 + q.amax()) {
        return Err(Error::Config(
            "process noise covariance is not symmetric".into(),
        ));
    }
    if !linalg::is_psd(q, 1e-12 * (1.0 + q.amax())) {
        return Err(Error::Config(
            "process noise covariance is not positive semidefinite".into(),
        ));
    }
    Ok(())
}

/// `x_k = A x_{k-1} + B u_{k-1} + C w_{k-1}`, `zⁱ_k = Dⁱ x_k + Eⁱ vⁱ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    q: DMatrix<f64>,
    sensors: Vec<LinearSensor>,
}

impl LinearModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        sensors: Vec<LinearSensor>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("transition matrix columns", n, a.ncols()));
        }
        if b.nrows() != n {
            return Err(Error::dim("input matrix rows", n, b.nrows()));
        }
        check_process_noise(n, &c, &q)?;
        if sensors.is_empty() {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        for s in &sensors {
            if s.output.len() != n {
                return Err(Error::dim("sensor output row", n, s.output.len()));
            }
            check_sensor_scalars(s.noise_gain, s.noise_variance, s.threshold)?;
        }
        Ok(LinearModel {
            a,
            b,
            c,
            q,
            sensors,
        })
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sensors(&self) -> &[LinearSensor] {
        &self.sensors
    }

    /// All `Dⁱ` stacked, m×n.
    pub fn output_matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.sensors.len(), self.a.nrows());
        for (i, s) in self.sensors.iter().enumerate() {
            d.row_mut(i).copy_from(&s.output);
        }
        d
    }

    /// `A x + B u`.
    pub fn predict_mean(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

impl SensorBank for LinearModel {
    fn sensor_count(&self) -> usize {
        self.sensors.len()
    }
    fn threshold(&self, i: usize) -> f64 {
        self.sensors[i].threshold
    }
    fn noise_gain(&self, i: usize) -> f64 {
        self.sensors[i].noise_gain
    }
    fn noise_variance(&self, i: usize) -> f64 {
        self.sensors[i].noise_variance
    }
    fn output_row(&self, i: usize) -> Option<RowDVector<f64>> {
        Some(self.sensors[i].output.clone())
    }
}

impl SystemModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.predict_mean(x, u)
    }
    fn sensed(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.sensors[i].output.dot(&x.transpose())
    }
    fn process_gain(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn process_cov(&self) -> &DMatrix<f64> {
        &self.q
    }
}

pub type DynamicsFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
pub type SensedFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct NonlinearSensor {
    pub map: Arc<SensedFn>,
    pub noise_gain: f64,
    pub noise_variance: f64,
    pub threshold: f64,
}

impl NonlinearSensor {
    pub fn new(
        map: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        noise_gain: f64,
        noise_variance: f64,
        threshold: f64,
    ) -> Self {
        NonlinearSensor {
            map: Arc::new(map),
            noise_gain,
            noise_variance,
            threshold,
        }
    }
}

impl fmt::Debug for NonlinearSensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSensor")
            .field("noise_gain", &self.noise_gain)
            .field("noise_variance", &self.noise_variance)
            .field("threshold", &self.threshold)
            .finish_non_exhaustive()
    }
}

/// `x_k = f(x_{k-1}, u_{k-1}) + C w_{k-1}`, `zⁱ_k = hⁱ(x_k) + Eⁱ vⁱ_k`.
#[derive(Clone)]
pub struct NonlinearModel {
    state_dim: usize,
    input_dim: usize,
    dynamics: Arc<DynamicsFn>,
    c: DMatrix<f64>,
    q: DMatrix<f64>,
    sensors: Vec<NonlinearSensor>,
}

impl NonlinearModel {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        dynamics: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        sensors: Vec<NonlinearSensor>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        check_process_noise(state_dim, &c, &q)?;
        if sensors.is_empty() {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        for s in &sensors {
            check_sensor_scalars(s.noise_gain, s.noise_variance, s.threshold)?;
        }
        Ok(NonlinearModel {
            state_dim,
            input_dim,
            dynamics: Arc::new(dynamics),
            c,
            q,
            sensors,
        })
    }

    pub fn sensors(&self) -> &[NonlinearSensor] {
        &self.sensors
    }

    /// Replaces every threshold, keeping the sensed maps.
    pub fn with_thresholds(mut self, thresholds: &[f64]) -> Result<Self> {
        if thresholds.len() != self.sensors.len() {
            return Err(Error::dim(
                "thresholds",
                self.sensors.len(),
                thresholds.len(),
            ));
        }
        for (s, &t) in self.sensors.iter_mut().zip(thresholds) {
            check_sensor_scalars(s.noise_gain, s.noise_variance, t)?;
            s.threshold = t;
        }
        Ok(self)
    }
}

impl LinearModel {
    /// Replaces every threshold, keeping the output rows.
    pub fn with_thresholds(mut self, thresholds: &[f64]) -> Result<Self> {
        if thresholds.len() != self.sensors.len() {
            return Err(Error::dim(
                "thresholds",
                self.sensors.len(),
                thresholds.len(),
            ));
        }
        for (s, &t) in self.sensors.iter_mut().zip(thresholds) {
            check_sensor_scalars(s.noise_gain, s.noise_variance, t)?;
            s.threshold = t;
        }
        Ok(self)
    }
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("process_gain", &self.c)
            .field("process_cov", &self.q)
            .field("sensors", &self.sensors)
            .finish_non_exhaustive()
    }
}

impl SensorBank for NonlinearModel {
    fn sensor_count(&self) -> usize {
        self.sensors.len()
    }
    fn threshold(&self, i: usize) -> f64 {
        self.sensors[i].threshold
    }
    fn noise_gain(&self, i: usize) -> f64 {
        self.sensors[i].noise_gain
    }
    fn noise_variance(&self, i: usize) -> f64 {
        self.sensors[i].noise_variance
    }
}

impl SystemModel for NonlinearModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.dynamics)(x, u)
    }
    fn sensed(&self, i: usize, x: &DVector<f64>) -> f64 {
        (self.sensors[i].map)(x)
    }
    fn process_gain(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn process_cov(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Ground truth for steps `k = 1..=steps`. Index `k - 1` of every sequence
/// holds step `k`; `inputs[k - 1]` is `u_{k-1}`, the input that drove
/// `x_{k-1} → x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: DVector<f64>,
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub sensed: Vec<DVector<f64>>,
    pub bits: Vec<Vec<bool>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// FNV-1a over the bit patterns of every stored value.
    pub fn checksum(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |word: u64| {
            for byte in word.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(PRIME);
            }
        };
        for v in core::iter::once(&self.initial_state)
            .chain(&self.inputs)
            .chain(&self.states)
            .chain(&self.sensed)
        {
            for x in v.iter() {
                eat(x.to_bits());
            }
        }
        for row in &self.bits {
            for &b in row {
                eat(u64::from(b));
            }
        }
        h
    }
}

const PROCESS_STREAM: u64 = 0;

fn sensor_stream(i: usize) -> u64 {
    1 + i as u64
}

fn rng_for_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Forward-simulates the model with seeded Gaussian noise.
///
/// Noise comes from ChaCha8 seeded with `seed`: stream 0 feeds the process
/// noise and stream `i + 1` feeds sensor `i`, so the process-noise sequence
/// does not depend on how many sensors are attached.
pub fn simulate<M: SystemModel + ?Sized>(
    model: &M,
    inputs: &[DVector<f64>],
    x0: &DVector<f64>,
    seed: u64,
    steps: usize,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::dim("initial state", n, x0.len()));
    }
    if inputs.len() < steps {
        return Err(Error::dim("input sequence length", steps, inputs.len()));
    }
    if let Some(bad) = inputs[..steps]
        .iter()
        .find(|u| u.len() != model.input_dim())
    {
        return Err(Error::dim("input vector", model.input_dim(), bad.len()));
    }
    let q_sqrt =
        linalg::psd_sqrt(model.process_cov(), "process noise covariance").map_err(|_| {
            Error::Config("process noise covariance is not positive semidefinite".into())
        })?;
    let noise_map = model.process_gain() * q_sqrt;
    let q_dim = noise_map.ncols();
    let m = model.sensor_count();

    let mut process_rng = rng_for_stream(seed, PROCESS_STREAM);
    let mut sensor_rngs: Vec<ChaCha8Rng> = (0..m)
        .map(|i| rng_for_stream(seed, sensor_stream(i)))
        .collect();
    let sensor_scale: Vec<f64> = (0..m)
        .map(|i| model.noise_gain(i) * libm::sqrt(model.noise_variance(i)))
        .collect();

    let mut states = Vec::with_capacity(steps);
    let mut sensed = Vec::with_capacity(steps);
    let mut bits = Vec::with_capacity(steps);
    let mut x = x0.clone();
    for u in &inputs[..steps] {
        let w = DVector::from_iterator(
            q_dim,
            (0..q_dim).map(|_| StandardNormal.sample(&mut process_rng)),
        );
        let next = model.transition(&x, u);
        if next.len() != n {
            return Err(Error::dim("transition output", n, next.len()));
        }
        x = next + &noise_map * w;
        let z = DVector::from_iterator(
            m,
            (0..m).map(|i| {
                let v: f64 = StandardNormal.sample(&mut sensor_rngs[i]);
                model.sensed(i, &x) + sensor_scale[i] * v
            }),
        );
        bits.push(
            (0..m)
                .map(|i| binary_output(z[i], model.threshold(i)))
                .collect(),
        );
        sensed.push(z);
        states.push(x.clone());
    }
    Ok(Trajectory {
        initial_state: x0.clone(),
        inputs: inputs[..steps].to_vec(),
        states,
        sensed,
        bits,
    })
}
