use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};

use crate::{CdlError, Result};

/// Cholesky factor of a small symmetric positive-definite system.
pub(crate) struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let k = a.nrows();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(CdlError::Numeric("non-finite entry in normal equations".into()));
        }
        let m = DMatrix::from_fn(k, k, |r, c| a[[r, c]]);
        let chol = m
            .cholesky()
            .ok_or_else(|| CdlError::Numeric("normal equations not positive definite".into()))?;
        Ok(Self { chol })
    }

    pub fn solve(&self, rhs: ArrayView1<f64>) -> Array1<f64> {
        let b = DVector::from_iterator(rhs.len(), rhs.iter().copied());
        let x = self.chol.solve(&b);
        Array1::from_iter(x.iter().copied())
    }

    /// Solves `Lᵀ x = z`, turning a standard normal `z` into a draw with covariance `A⁻¹`.
    pub fn solve_upper(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let b = DVector::from_iterator(z.len(), z.iter().copied());
        let l = self.chol.l();
        let x = l
            .transpose()
            .solve_upper_triangular(&b)
            .expect("cholesky factor has a positive diagonal");
        Array1::from_iter(x.iter().copied())
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
