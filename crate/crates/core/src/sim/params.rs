use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::theory::TheoryParams;

/// Two confounders, one real outcome and two features.
///
/// `beta_xa[j][i]` is the effect of confounder `i` on feature `j`. With
/// `mispecified` set, `A_i` and `Y` enter the structural equations squared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmRegressionParams {
    pub mu_a: [f64; 2],
    pub mu_y: f64,
    pub mu_x: [f64; 2],
    pub beta_ya: [f64; 2],
    pub beta_xy: [f64; 2],
    pub beta_xa: [[f64; 2]; 2],
    pub sigma2_y: f64,
    pub rho_a: f64,
    pub rho_x: f64,
    pub mispecified: bool,
}

impl ScmRegressionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_a.abs() < 1.0 && self.rho_x.abs() < 1.0) {
            return Err(Error::InvalidParam(format!(
                "correlations must lie in (-1, 1): rho_a = {}, rho_x = {}",
                self.rho_a, self.rho_x
            )));
        }
        if !(self.sigma2_y > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma2_y must be positive, got {}",
                self.sigma2_y
            )));
        }
        Ok(())
    }

    /// Standardized path coefficients implied by the correct (linear) model.
    pub fn theory_params(&self) -> Result<TheoryParams<f64>> {
        self.validate()?;
        if self.mispecified {
            return Err(Error::InvalidParam(
                "path coefficients exist only for the linear model".into(),
            ));
        }
        let cov_a = [[1.0, self.rho_a], [self.rho_a, 1.0]];
        let cov_ay = [
            cov_a[0][0] * self.beta_ya[0] + cov_a[0][1] * self.beta_ya[1],
            cov_a[1][0] * self.beta_ya[0] + cov_a[1][1] * self.beta_ya[1],
        ];
        let var_y = self.beta_ya[0] * cov_ay[0] + self.beta_ya[1] * cov_ay[1] + self.sigma2_y;
        let sd_y = var_y.sqrt();
        let sigma_wx = [[1.0, self.rho_x], [self.rho_x, 1.0]];

        let b = &self.beta_xa;
        let c = &self.beta_xy;
        let mut cov_x = [[0.0; 2]; 2];
        for j in 0..2 {
            for l in 0..2 {
                let mut v = 0.0;
                for i in 0..2 {
                    for m in 0..2 {
                        v += b[j][i] * cov_a[i][m] * b[l][m];
                    }
                }
                v += c[l] * (b[j][0] * cov_ay[0] + b[j][1] * cov_ay[1]);
                v += c[j] * (b[l][0] * cov_ay[0] + b[l][1] * cov_ay[1]);
                v += c[j] * c[l] * var_y + sigma_wx[j][l];
                cov_x[j][l] = v;
            }
        }
        let sd_x = [cov_x[0][0].sqrt(), cov_x[1][1].sqrt()];

        Ok(TheoryParams {
            gamma_xy: vec![c[0] * sd_y / sd_x[0], c[1] * sd_y / sd_x[1]],
            gamma_xa: Matrix::from_row_major(
                2,
                2,
                vec![
                    b[0][0] / sd_x[0],
                    b[0][1] / sd_x[0],
                    b[1][0] / sd_x[1],
                    b[1][1] / sd_x[1],
                ],
            )?,
            gamma_ya: vec![self.beta_ya[0] / sd_y, self.beta_ya[1] / sd_y],
            cov_a: Matrix::from_row_major(2, 2, vec![1.0, self.rho_a, self.rho_a, 1.0])?,
            sigma_w: Matrix::from_row_major(
                2,
                2,
                vec![
                    1.0 / cov_x[0][0],
                    self.rho_x / (sd_x[0] * sd_x[1]),
                    self.rho_x / (sd_x[0] * sd_x[1]),
                    1.0 / cov_x[1][1],
                ],
            )?,
            var_wy: Some(self.sigma2_y / var_y),
        })
    }
}

/// Binary confounders and outcome with two real features.
///
/// `p_cell` holds `(p11, p10, p01, p00)`. The mispecified variant builds the
/// features from the interactions `Y A_i` only, with coefficients `beta_xya`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmClassificationParams {
    pub mu_y: f64,
    pub mu_x: [f64; 2],
    pub beta_ya: [f64; 2],
    pub beta_xy: [f64; 2],
    pub beta_xa: [[f64; 2]; 2],
    pub beta_xya: [[f64; 2]; 2],
    pub p_cell: [f64; 4],
    pub rho_x: f64,
    pub mispecified: bool,
}

impl ScmClassificationParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_cell.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParam("cell probabilities must be nonnegative".into()));
        }
        let total: f64 = self.p_cell.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "cell probabilities sum to {total}"
            )));
        }
        if !(self.rho_x.abs() < 1.0) {
            return Err(Error::InvalidParam(format!("rho_x = {}", self.rho_x)));
        }
        Ok(())
    }

    /// `Cov(A1, A2) = p11 p00 - p01 p10`.
    pub fn confounder_covariance(&self) -> f64 {
        let [p11, p10, p01, p00] = self.p_cell;
        p11 * p00 - p01 * p10
    }
}

/// One feature, one confounder; only the law of `(A, Y)` changes between
/// environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScmParams {
    pub beta_xy: f64,
    pub beta_xa: f64,
    pub sigma2_x: f64,
    /// `[[sigma_aa, sigma_ay], [sigma_ay, sigma_yy]]`.
    pub train_cov: [[f64; 2]; 2],
    pub test_covs: Vec<[[f64; 2]; 2]>,
}

impl ShiftScmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_x > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma2_x must be positive, got {}",
                self.sigma2_x
            )));
        }
        for (name, c) in std::iter::once(("train", &self.train_cov))
            .chain(self.test_covs.iter().map(|c| ("test", c)))
        {
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            if c[0][1] != c[1][0] || !(c[0][0] > 0.0 && c[1][1] > 0.0 && det > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "{name} covariance {c:?}"
                )));
            }
        }
        Ok(())
    }
}

fn unif<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Intercepts from `U(-3, 3)`, effects and `sigma2_y` from `U(1, 3)`,
/// correlations from `U(-0.8, 0.8)`.
pub fn sample_regression_params<R: Rng + ?Sized>(
    rng: &mut R,
    mispecified: bool,
) -> ScmRegressionParams {
    let mu_a = [unif(rng, -3.0, 3.0), unif(rng, -3.0, 3.0)];
    let mu_y = unif(rng, -3.0, 3.0);
    let mu_x = [unif(rng, -3.0, 3.0), unif(rng, -3.0, 3.0)];
    let beta_ya = [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)];
    let beta_xy = [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)];
    let beta_xa = [
        [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)],
        [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)],
    ];
    let sigma2_y = unif(rng, 1.0, 3.0);
    let rho_a = unif(rng, -0.8, 0.8);
    let rho_x = unif(rng, -0.8, 0.8);
    ScmRegressionParams {
        mu_a,
        mu_y,
        mu_x,
        beta_ya,
        beta_xy,
        beta_xa,
        sigma2_y,
        rho_a,
        rho_x,
        mispecified,
    }
}

/// Cell probabilities are the four pieces of `(0, 1)` cut at three sorted
/// uniform points; other ranges as for regression.
pub fn sample_classification_params<R: Rng + ?Sized>(
    rng: &mut R,
    mispecified: bool,
) -> ScmClassificationParams {
    let mu_y = unif(rng, -3.0, 3.0);
    let mu_x = [unif(rng, -3.0, 3.0), unif(rng, -3.0, 3.0)];
    let beta_ya = [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)];
    let beta_xy = [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)];
    let beta_xa = [
        [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)],
        [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)],
    ];
    let beta_xya = [
        [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)],
        [unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0)],
    ];
    let rho_x = unif(rng, -0.8, 0.8);
    let mut cuts = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let p11 = cuts[0];
    let p10 = cuts[1] - cuts[0];
    let p01 = cuts[2] - cuts[1];
    // Last piece by complement so the cells sum to one exactly.
    let p00 = 1.0 - (p11 + p10 + p01);
    ScmClassificationParams {
        mu_y,
        mu_x,
        beta_ya,
        beta_xy,
        beta_xa,
        beta_xya,
        p_cell: [p11, p10, p01, p00],
        rho_x,
        mispecified,
    }
}

/// Effects from `U(-3, 3)`, training `sigma_ay` from `U(-0.8, 0.8)` with unit
/// variances, unit feature noise.
pub fn sample_shift_params<R: Rng + ?Sized>(
    rng: &mut R,
    test_covs: Vec<[[f64; 2]; 2]>,
) -> ShiftScmParams {
    let beta_xy = unif(rng, -3.0, 3.0);
    let beta_xa = unif(rng, -3.0, 3.0);
    let s = unif(rng, -0.8, 0.8);
    ShiftScmParams {
        beta_xy,
        beta_xa,
        sigma2_x: 1.0,
        train_cov: [[1.0, s], [s, 1.0]],
        test_covs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_regression_params(&mut ChaCha12Rng::seed_from_u64(4), false);
        let b = sample_regression_params(&mut ChaCha12Rng::seed_from_u64(4), false);
        assert_eq!(a, b);
        let a = sample_classification_params(&mut ChaCha12Rng::seed_from_u64(4), true);
        let b = sample_classification_params(&mut ChaCha12Rng::seed_from_u64(4), true);
        assert_eq!(a, b);
    }

    #[test]
    fn regression_ranges() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut mu_y_sum = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let p = sample_regression_params(&mut rng, false);
            let betas = p
                .beta_ya
                .iter()
                .chain(&p.beta_xy)
                .chain(p.beta_xa.iter().flatten())
                .chain(std::iter::once(&p.sigma2_y));
            assert!(betas.into_iter().all(|&b| b > 1.0 && b < 3.0));
            assert!(p.rho_a.abs() < 0.8 && p.rho_x.abs() < 0.8);
            mu_y_sum += p.mu_y;
        }
        // U(-3, 3) has mean 0 and sd sqrt(3): 0.1 is about 5.8 standard errors.
        assert!((mu_y_sum / n as f64).abs() < 0.1);
    }

    #[test]
    fn cell_probabilities_partition_unity() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 10_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let p = sample_classification_params(&mut rng, false);
            assert_eq!(p.p_cell.iter().sum::<f64>(), 1.0);
            p.validate().unwrap();
            for (s, v) in sums.iter_mut().zip(p.p_cell) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn theory_mapping_is_standardized() {
        let p = sample_regression_params(&mut ChaCha12Rng::seed_from_u64(6), false);
        let t = p.theory_params().unwrap();
        t.validate().unwrap();
        let mut mis = p.clone();
        mis.mispecified = true;
        assert!(mis.theory_params().is_err());
    }

    #[test]
    fn shift_covariances_are_checked() {
        let mut p = sample_shift_params(&mut ChaCha12Rng::seed_from_u64(3), vec![]);
        p.validate().unwrap();
        p.test_covs.push([[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(p.validate(), Err(Error::NotPositiveDefinite(_))));
    }
}
