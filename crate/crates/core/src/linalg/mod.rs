//! Dense linear algebra and descriptive statistics.

mod backfit;
mod decomp;
mod matrix;
mod ols;
mod stats;

use serde::{Deserialize, Serialize};

pub use backfit::{
    backfit, backfit_with, AdditiveFit, BackfitOptions, Component, SplineCurve, StepCurve,
};
pub use decomp::{check_spd, Cholesky, Qr, Svd};
pub use matrix::{nested, Matrix};
pub use ols::{ols_fit, LinearFit, RANK_TOLERANCE};
pub use stats::{
    correlation, covariance, mean, moments, partial_correlation, standardize, variance,
    StandardizationStats,
};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Thin SVD rescaled so that the left scores have unit sample variance.
///
/// `a = u_tilde * diag(singular_values) * v_tilde^T` with
/// `u_tilde = sqrt(n-1) U` and `v_tilde = V / sqrt(n-1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScaledSvd<T> {
    pub u_tilde: Matrix<T>,
    pub singular_values: Vec<T>,
    pub v_tilde: Matrix<T>,
}

impl<T: Real> ScaledSvd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.u_tilde.clone();
        for i in 0..us.rows() {
            for (v, &s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *v *= s;
            }
        }
        us.matmul(&self.v_tilde.transpose())
            .expect("conformable by construction")
    }
}

pub fn scaled_svd<T: Real>(a: &Matrix<T>) -> Result<ScaledSvd<T>> {
    let (n, k) = a.shape();
    if n <= k {
        return Err(Error::InsufficientRows { needed: k + 1, got: n });
    }
    let svd = Svd::new(a)?;
    let ratio = svd.condition_ratio();
    if !(ratio >= T::lit(RANK_TOLERANCE)) {
        return Err(Error::RankDeficient {
            ratio: ratio.as_f64(),
        });
    }
    let root = T::from_usize_lossy(n - 1).sqrt();
    Ok(ScaledSvd {
        u_tilde: svd.u.scale(root),
        singular_values: svd.singular_values,
        v_tilde: svd.v.scale(T::one() / root),
    })
}
