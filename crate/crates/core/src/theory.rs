//! Closed-form population quantities for the linear anticausal model.
//!
//! With standardized variables the model is
//! `X = Gamma_XA A + Gamma_XY Y + W_X`, `Y = Gamma_YA A + W_Y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_spd, nested, Matrix};
use crate::scalar::Real;

/// Tolerance on `|Var(Y) - 1|` for the standardized-mode check.
pub const STANDARDIZED_TOL: f64 = 1e-8;

/// Path coefficients and noise covariances of a standardized linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TheoryParams<T> {
    pub gamma_xy: Vec<T>,
    #[serde(with = "nested")]
    pub gamma_xa: Matrix<T>,
    pub gamma_ya: Vec<T>,
    #[serde(with = "nested")]
    pub cov_a: Matrix<T>,
    #[serde(with = "nested")]
    pub sigma_w: Matrix<T>,
    /// Variance of `W_Y`. When absent it is taken to be whatever makes
    /// `Var(Y) = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_wy: Option<T>,
}

impl<T: Real> TheoryParams<T> {
    pub fn p(&self) -> usize {
        self.gamma_xy.len()
    }

    pub fn k(&self) -> usize {
        self.gamma_ya.len()
    }

    /// `Gamma_YA Cov(A) Gamma_YA^T`, the share of `Var(Y)` explained by `A`.
    pub fn explained_y(&self) -> T {
        let ca = self
            .cov_a
            .mat_vec(&self.gamma_ya)
            .expect("shape checked in validate");
        dot(&self.gamma_ya, &ca)
    }

    pub fn implied_var_wy(&self) -> T {
        self.var_wy.unwrap_or_else(|| T::one() - self.explained_y())
    }

    /// Checks shapes, positive definiteness and `Var(Y) = 1`.
    pub fn validate(&self) -> Result<()> {
        let (p, k) = (self.p(), self.k());
        if p == 0 || k == 0 {
            return Err(Error::InvalidParam("need at least one feature and one confounder".into()));
        }
        if self.gamma_xa.shape() != (p, k)
            || self.cov_a.shape() != (k, k)
            || self.sigma_w.shape() != (p, p)
        {
            return Err(Error::DimensionMismatch(format!(
                "gamma_xa {:?}, cov_a {:?}, sigma_w {:?} for p = {p}, k = {k}",
                self.gamma_xa.shape(),
                self.cov_a.shape(),
                self.sigma_w.shape()
            )));
        }
        check_spd(&self.cov_a, "cov_a")?;
        check_spd(&self.sigma_w, "sigma_w")?;
        let s = self.explained_y();
        let tol = T::lit(STANDARDIZED_TOL);
        let var_y = s + self.implied_var_wy();
        if self.implied_var_wy() < -tol || (var_y - T::one()).abs() > tol {
            return Err(Error::NotStandardized {
                var_y: (s + self.var_wy.unwrap_or(T::zero())).as_f64(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClosedFormCovariances<T> {
    pub cov_x_y: Vec<T>,
    pub cov_xc_y: Vec<T>,
    pub cov_xr_y: Vec<T>,
    #[serde(with = "nested")]
    pub cov_x: Matrix<T>,
    #[serde(with = "nested")]
    pub cov_xc: Matrix<T>,
    #[serde(with = "nested")]
    pub cov_xr: Matrix<T>,
}

pub fn closed_form_covariances<T: Real>(p: &TheoryParams<T>) -> Result<ClosedFormCovariances<T>> {
    p.validate()?;
    let s = p.explained_y();
    // Cov(A, Y) as a k-vector.
    let cov_a_y = p.cov_a.mat_vec(&p.gamma_ya)?;
    let indirect = p.gamma_xa.mat_vec(&cov_a_y)?;
    let cov_x_y: Vec<T> = p.gamma_xy.iter().zip(&indirect).map(|(&g, &i)| g + i).collect();
    let cov_xc_y = p.gamma_xy.clone();
    let cov_xr_y: Vec<T> = p.gamma_xy.iter().map(|&g| g * (T::one() - s)).collect();

    let g = Matrix::column_vector(p.gamma_xy.clone());
    let ggt = g.matmul(&g.transpose())?;
    let cov_xc = ggt.add(&p.sigma_w)?;
    // Cov(X_c) - 2 G Cov(Y,A) Gamma_YA^T G^T + G Gamma_YA Cov(A) Gamma_YA^T G^T;
    // both scalar middles equal s.
    let cross = dot(&cov_a_y, &p.gamma_ya);
    let cov_xr = cov_xc
        .sub(&ggt.scale(T::lit(2.0) * cross))?
        .add(&ggt.scale(s))?;

    // Cov(X) = Gamma_XA Cov(A) Gamma_XA^T + 2 sym(Gamma_XA Cov(A,Y) G^T) + G G^T + Sigma_W.
    let gca = p.gamma_xa.matmul(&p.cov_a)?.matmul(&p.gamma_xa.transpose())?;
    let ind = Matrix::column_vector(indirect);
    let sym = ind.matmul(&g.transpose())?;
    let cov_x = gca
        .add(&sym)?
        .add(&sym.transpose())?
        .add(&ggt)?
        .add(&p.sigma_w)?;

    Ok(ClosedFormCovariances {
        cov_x_y,
        cov_xc_y,
        cov_xr_y,
        cov_x,
        cov_xc,
        cov_xr,
    })
}

/// Per-feature `|Cov(X_c,j, Y)| >= |Cov(X_r,j, Y)|`.
pub fn theorem2_check<T: Real>(p: &TheoryParams<T>) -> Result<Vec<bool>> {
    let c = closed_form_covariances(p)?;
    Ok(c.cov_xc_y
        .iter()
        .zip(&c.cov_xr_y)
        .map(|(c, r)| c.abs() >= r.abs())
        .collect())
}

/// Expected test MSE of the population least-squares predictor:
/// `var_y - cov_x_y^T cov_x^{-1} cov_x_y`.
pub fn expected_mse_general<T: Real>(cov_x: &Matrix<T>, cov_x_y: &[T], var_y: T) -> Result<T> {
    if cov_x_y.len() != cov_x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "cov_x is {:?}, cov_x_y has {} entries",
            cov_x.shape(),
            cov_x_y.len()
        )));
    }
    let chol = check_spd(cov_x, "cov_x")?;
    let beta = chol.solve(cov_x_y);
    Ok(var_y - dot(cov_x_y, &beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePair<T> {
    pub mse_c: T,
    pub mse_r: T,
}

/// Expected MSE of both approaches for an arbitrary standardized model.
pub fn expected_mse<T: Real>(p: &TheoryParams<T>) -> Result<MsePair<T>> {
    let c = closed_form_covariances(p)?;
    Ok(MsePair {
        mse_c: expected_mse_general(&c.cov_xc, &c.cov_xc_y, T::one())?,
        mse_r: expected_mse_general(&c.cov_xr, &c.cov_xr_y, T::one())?,
    })
}

/// One feature with path coefficient `gamma`, error variance `sigma2`, and
/// `phi^2` the share of `Var(Y)` explained by the confounders.
pub fn expected_mse_single<T: Real>(gamma: T, phi: T, sigma2: T) -> Result<MsePair<T>> {
    if !(phi.abs() <= T::one()) {
        return Err(Error::InvalidParam(format!("|phi| must be at most 1, got {phi}")));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidParam(format!("sigma2 must be positive, got {sigma2}")));
    }
    let g2 = gamma * gamma;
    let keep = T::one() - phi * phi;
    Ok(MsePair {
        mse_c: T::one() - g2 / (sigma2 + g2),
        mse_r: T::one() - g2 * keep * keep / (sigma2 + g2 * keep),
    })
}

/// Two features sharing the confounding share `phi^2`, with error covariance
/// `[[sigma11, sigma12], [sigma12, sigma22]]`.
pub fn expected_mse_two<T: Real>(
    gamma1: T,
    gamma2: T,
    phi: T,
    sigma11: T,
    sigma12: T,
    sigma22: T,
) -> Result<MsePair<T>> {
    let det = sigma11 * sigma22 - sigma12 * sigma12;
    if !(sigma11 > T::zero() && det > T::zero()) {
        return Err(Error::NotPositiveDefinite(format!(
            "error covariance with det {det}"
        )));
    }
    if !(phi.abs() <= T::one()) {
        return Err(Error::InvalidParam(format!("|phi| must be at most 1, got {phi}")));
    }
    let two = T::lit(2.0);
    let q = sigma11 * gamma2 * gamma2 + sigma22 * gamma1 * gamma1 - two * gamma1 * gamma2 * sigma12;
    let keep = T::one() - phi * phi;
    Ok(MsePair {
        mse_c: T::one() - q / (det + q),
        mse_r: T::one() - q * keep * keep / (det + q * keep),
    })
}

/// Single-feature shift model `X = beta_xy Y + beta_xa A + U_X` with a test
/// distribution `(A, Y) ~ N(0, [[sigma_aa, sigma_ay], [sigma_ay, sigma_yy]])`
/// and a model coefficient `beta_hat_tr` frozen at training time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftTheoryParams<T> {
    pub beta_xy: T,
    pub beta_xa: T,
    pub sigma2_x: T,
    pub sigma_aa: T,
    pub sigma_ay: T,
    pub sigma_yy: T,
    pub beta_hat_tr: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    CausalityAware,
    Residualization,
}

/// Expected test MSE of the frozen model under the shifted `(A, Y)` law.
///
/// For residualization the adjustment coefficient is the one that holds on
/// the test distribution itself.
pub fn expected_mse_shift<T: Real>(p: &ShiftTheoryParams<T>, method: Approach) -> Result<T> {
    let det = p.sigma_aa * p.sigma_yy - p.sigma_ay * p.sigma_ay;
    if !(p.sigma_aa > T::zero() && det > T::zero()) {
        return Err(Error::NotPositiveDefinite(format!(
            "(A, Y) covariance with det {det}"
        )));
    }
    if !(p.sigma2_x > T::zero()) {
        return Err(Error::InvalidParam(format!(
            "sigma2_x must be positive, got {}",
            p.sigma2_x
        )));
    }
    let b = p.beta_hat_tr;
    let two = T::lit(2.0);
    let (var_x, cov_xy) = match method {
        Approach::CausalityAware => (
            p.sigma2_x + p.beta_xy * p.beta_xy * p.sigma_yy,
            p.beta_xy * p.sigma_yy,
        ),
        Approach::Residualization => {
            let lost = p.sigma_ay * p.sigma_ay / p.sigma_aa;
            (
                p.sigma2_x + p.beta_xy * p.beta_xy * p.sigma_yy - p.beta_xy * p.beta_xy * lost,
                p.beta_xy * p.sigma_yy - p.beta_xy * lost,
            )
        }
    };
    Ok(p.sigma_yy + b * b * var_x - two * b * cov_xy)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
