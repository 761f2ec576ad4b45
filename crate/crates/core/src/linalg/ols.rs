//! Multi-response ordinary least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::decomp::{Qr, Svd};
use crate::linalg::stats::mean;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Smallest-to-largest singular value ratio below which a design is rejected.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Below this ratio (but above [`RANK_TOLERANCE`]) the solve goes through the
/// SVD of the triangular factor instead of back substitution.
const SVD_FALLBACK_RATIO: f64 = 1e-7;

/// Result of regressing `m` responses on `q` regressors.
///
/// `coefficients` is `q x m`; column `r` holds the slopes for response `r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LinearFit<T> {
    pub coefficients: Matrix<T>,
    pub intercepts: Vec<T>,
    pub residuals: Matrix<T>,
    pub regressor_names: Vec<String>,
    pub response_names: Vec<String>,
    /// Column means of the design (zeros when fit without intercept).
    pub design_means: Vec<T>,
    /// Column means of the responses (zeros when fit without intercept).
    pub response_means: Vec<T>,
}

impl<T: Real> LinearFit<T> {
    pub fn with_names(mut self, regressors: Vec<String>, responses: Vec<String>) -> Self {
        self.regressor_names = regressors;
        self.response_names = responses;
        self
    }

    /// Fitted values `intercepts + design * coefficients` for new rows.
    pub fn predict(&self, design: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = design.matmul(&self.coefficients)?;
        for i in 0..out.rows() {
            for (v, &b) in out.row_mut(i).iter_mut().zip(&self.intercepts) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Slopes for one response column.
    pub fn slopes(&self, response: usize) -> Vec<T> {
        self.coefficients.column(response)
    }
}

/// Least-squares fit of every response column on the design.
///
/// With `intercept` the design and responses are centered first, which is
/// equivalent to appending a constant column; residuals are then orthogonal to
/// the constant and to every design column.
pub fn ols_fit<T: Real>(
    design: &Matrix<T>,
    responses: &Matrix<T>,
    intercept: bool,
) -> Result<LinearFit<T>> {
    let (n, q) = design.shape();
    let m = responses.cols();
    if responses.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows, responses {}",
            responses.rows()
        )));
    }
    let needed = if intercept { q + 2 } else { q + 1 };
    if n < needed {
        return Err(Error::InsufficientRows { needed, got: n });
    }

    let (design_means, response_means) = if intercept {
        (
            (0..q).map(|j| mean(&design.column(j))).collect::<Vec<_>>(),
            (0..m).map(|j| mean(&responses.column(j))).collect::<Vec<_>>(),
        )
    } else {
        (vec![T::zero(); q], vec![T::zero(); m])
    };
    let xc = center(design, &design_means);
    let yc = center(responses, &response_means);

    let coefficients = if q == 0 {
        Matrix::zeros(0, m)
    } else {
        solve(&xc, &yc)?
    };

    let mut residuals = yc;
    let fitted = xc.matmul(&coefficients)?;
    for i in 0..n {
        for (r, &f) in residuals.row_mut(i).iter_mut().zip(fitted.row(i)) {
            *r -= f;
        }
    }

    let intercepts = (0..m)
        .map(|r| {
            let shift: T = (0..q)
                .map(|j| design_means[j] * coefficients[(j, r)])
                .sum();
            response_means[r] - shift
        })
        .collect();

    Ok(LinearFit {
        coefficients,
        intercepts,
        residuals,
        regressor_names: (1..=q).map(|j| format!("d{j}")).collect(),
        response_names: (1..=m).map(|j| format!("r{j}")).collect(),
        design_means,
        response_means,
    })
}

fn center<T: Real>(m: &Matrix<T>, means: &[T]) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        for (v, &mu) in out.row_mut(i).iter_mut().zip(means) {
            *v -= mu;
        }
    }
    out
}

fn solve<T: Real>(design: &Matrix<T>, responses: &Matrix<T>) -> Result<Matrix<T>> {
    let q = design.cols();
    let qr = Qr::new(design)?;
    let r = qr.r();
    let svd = Svd::new(&r)?;
    let ratio = svd.condition_ratio();
    if !(ratio >= T::lit(RANK_TOLERANCE)) {
        return Err(Error::RankDeficient {
            ratio: ratio.as_f64(),
        });
    }
    if ratio >= T::lit(SVD_FALLBACK_RATIO) {
        return qr.solve_least_squares(responses);
    }
    // R = U S V^T, so beta = V S^-1 U^T (Q^T y)[..q].
    let mut qty = responses.clone();
    qr.apply_qt(&mut qty);
    let top = qty.row_range(0, q);
    let mut projected = svd.u.transpose().matmul(&top)?;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        for v in projected.row_mut(i) {
            *v /= s;
        }
    }
    svd.v.matmul(&projected)
}
