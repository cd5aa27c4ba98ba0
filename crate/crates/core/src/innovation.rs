//! Predicted bits, the innovation set and its augmented sensor quantities.
//!
//! A sensor belongs to the innovation set when its received bit differs from
//! the bit its own one-step prediction would produce. Members are kept in
//! ascending sensor order and every stacked quantity follows that order.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{binary_output, SensorBank, SystemModel};

/// Component-wise threshold test of predicted sensed variables.
pub fn predicted_bits(z_bar: &[f64], taus: &[f64]) -> Result<Vec<bool>> {
    if z_bar.len() != taus.len() {
        return Err(Error::dim(
            "predicted sensed variables",
            taus.len(),
            z_bar.len(),
        ));
    }
    Ok(z_bar
        .iter()
        .zip(taus)
        .map(|(&z, &tau)| binary_output(z, tau))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnovationSet {
    indices: Vec<usize>,
    thresholds: DVector<f64>,
    output_rows: Option<DMatrix<f64>>,
    noise_gains: DVector<f64>,
    noise_variances: DVector<f64>,
}

impl InnovationSet {
    /// Strictly increasing member sensor indices (0-based).
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `m_k`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `τ_I`.
    pub fn thresholds(&self) -> &DVector<f64> {
        &self.thresholds
    }

    /// `D_I`, m_k×n; present only for linear sensor banks.
    pub fn output_matrix(&self) -> Option<&DMatrix<f64>> {
        self.output_rows.as_ref()
    }

    /// `E_I` as a diagonal matrix.
    pub fn noise_gain_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.noise_gains)
    }

    /// `R_I` as a diagonal matrix.
    pub fn noise_cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.noise_variances)
    }

    /// `Ψ = E_I R_I E_Iᵀ`, diagonal.
    pub fn psi(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(
            &self
                .noise_gains
                .zip_map(&self.noise_variances, |e, r| e * r * e),
        )
    }

    /// Picks the member entries of a length-m vector, e.g. `z̄_I` from `z̄`.
    pub fn select(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|&i| full[i]))
    }

    /// Picks the member rows of an m×c matrix.
    pub fn select_rows(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        full.select_rows(self.indices.iter())
    }

    /// The stacked sensed map `h_I(x)`.
    pub fn stacked_sensed<M: SystemModel + ?Sized>(
        &self,
        model: &M,
        x: &DVector<f64>,
    ) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|&i| model.sensed(i, x)))
    }
}

/// Collects the sensors whose received bit `y` differs from the predicted
/// bit `y_bar` and stacks their parameters. An empty set is a valid result.
pub fn innovation_set<B: SensorBank + ?Sized>(
    y: &[bool],
    y_bar: &[bool],
    bank: &B,
) -> Result<InnovationSet> {
    let m = bank.sensor_count();
    if y.len() != m {
        return Err(Error::dim("received bits", m, y.len()));
    }
    if y_bar.len() != m {
        return Err(Error::dim("predicted bits", m, y_bar.len()));
    }
    let indices: Vec<usize> = (0..m).filter(|&i| y[i] != y_bar[i]).collect();
    let mk = indices.len();
    let pick = |f: &dyn Fn(usize) -> f64| DVector::from_iterator(mk, indices.iter().map(|&i| f(i)));
    let thresholds = pick(&|i| bank.threshold(i));
    let noise_gains = pick(&|i| bank.noise_gain(i));
    let noise_variances = pick(&|i| bank.noise_variance(i));

    let first_row = if m > 0 { bank.output_row(0) } else { None };
    let output_rows = match first_row {
        Some(first) => {
            let n = first.len();
            let mut d = DMatrix::zeros(mk, n);
            for (row, &i) in indices.iter().enumerate() {
                let r = bank.output_row(i).ok_or(Error::Config(
                    "sensor bank mixes linear and nonlinear sensors".into(),
                ))?;
                if r.len() != n {
                    return Err(Error::dim("sensor output row", n, r.len()));
                }
                d.row_mut(row).copy_from(&r);
            }
            Some(d)
        }
        None => None,
    };

    Ok(InnovationSet {
        indices,
        thresholds,
        output_rows,
        noise_gains,
        noise_variances,
    })
}
