//! Confounding adjustments: residualization and causality-aware
//! counterfactual features, each in a linear and an additive variant.
//!
//! All adjusted features are centered: linear fits always carry an intercept
//! that is removed from the output, and additive fits drop their intercept.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{backfit, ols_fit, scaled_svd, AdditiveFit, LinearFit, Matrix};
use crate::scalar::Real;
use crate::sim::Dataset;
pub use crate::theory::Approach;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdjustmentMethod {
    #[serde(rename = "linear-ca")]
    LinearCa,
    #[serde(rename = "linear-res")]
    LinearRes,
    #[serde(rename = "additive-ca")]
    AdditiveCa,
    #[serde(rename = "additive-res")]
    AdditiveRes,
}

impl AdjustmentMethod {
    pub const ALL: [AdjustmentMethod; 4] = [
        AdjustmentMethod::LinearCa,
        AdjustmentMethod::LinearRes,
        AdjustmentMethod::AdditiveCa,
        AdjustmentMethod::AdditiveRes,
    ];

    pub fn approach(self) -> Approach {
        match self {
            AdjustmentMethod::LinearCa | AdjustmentMethod::AdditiveCa => Approach::CausalityAware,
            AdjustmentMethod::LinearRes | AdjustmentMethod::AdditiveRes => {
                Approach::Residualization
            }
        }
    }

    pub fn is_additive(self) -> bool {
        matches!(self, AdjustmentMethod::AdditiveCa | AdjustmentMethod::AdditiveRes)
    }

    pub fn name(self) -> &'static str {
        match self {
            AdjustmentMethod::LinearCa => "linear-ca",
            AdjustmentMethod::LinearRes => "linear-res",
            AdjustmentMethod::AdditiveCa => "additive-ca",
            AdjustmentMethod::AdditiveRes => "additive-res",
        }
    }

    /// The method with the same model class and the other approach.
    pub fn counterpart(self) -> Self {
        match self {
            AdjustmentMethod::LinearCa => AdjustmentMethod::LinearRes,
            AdjustmentMethod::LinearRes => AdjustmentMethod::LinearCa,
            AdjustmentMethod::AdditiveCa => AdjustmentMethod::AdditiveRes,
            AdjustmentMethod::AdditiveRes => AdjustmentMethod::AdditiveCa,
        }
    }
}

impl fmt::Display for AdjustmentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdjustmentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown adjustment method `{s}`")))
    }
}

/// The fitted models an adjustment used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", rename_all = "snake_case")]
pub enum FitArtifacts<T> {
    Linear(LinearFit<T>),
    /// One additive fit per feature.
    Additive(Vec<AdditiveFit<T>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdjustedPair<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub method: AdjustmentMethod,
    pub artifacts: FitArtifacts<T>,
}

pub fn adjust<T: Real>(
    method: AdjustmentMethod,
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<AdjustedPair<T>> {
    match method {
        AdjustmentMethod::LinearCa => causality_aware(train, test),
        AdjustmentMethod::LinearRes => residualize(train, test),
        AdjustmentMethod::AdditiveCa => additive_causality_aware(train, test),
        AdjustmentMethod::AdditiveRes => additive_residualize(train, test),
    }
}

fn check_compatible<T: Real>(train: &Dataset<T>, test: &Dataset<T>) -> Result<()> {
    if train.p() != test.p() || train.k() != test.k() {
        return Err(Error::DimensionMismatch(format!(
            "train has p = {}, k = {}; test has p = {}, k = {}",
            train.p(),
            train.k(),
            test.p(),
            test.k()
        )));
    }
    if train.p() == 0 || train.k() == 0 {
        return Err(Error::InvalidParam("need at least one feature and one confounder".into()));
    }
    Ok(())
}

/// Regresses the pooled train+test features on the pooled confounders and
/// keeps the residuals.
pub fn residualize<T: Real>(train: &Dataset<T>, test: &Dataset<T>) -> Result<AdjustedPair<T>> {
    check_compatible(train, test)?;
    let a = train.a.vstack(&test.a)?;
    let x = train.x.vstack(&test.x)?;
    let fit = ols_fit(&a, &x, true)?;
    let n = train.n();
    let r = &fit.residuals;
    Ok(AdjustedPair {
        train: train.with_x(r.row_range(0, n))?,
        test: test.with_x(r.row_range(n, r.rows()))?,
        method: AdjustmentMethod::LinearRes,
        artifacts: FitArtifacts::Linear(fit.with_names(a_names(train.k()), x_names(train.p()))),
    })
}

/// Fits `X ~ A + Y` on the training split. Training features are
/// `Gamma_XY (Y - mean) + residual`; test features are
/// `(X - mean) - Gamma_XA (A - mean)` with training means and coefficients.
/// The test outcome is never read.
pub fn causality_aware<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<AdjustedPair<T>> {
    check_compatible(train, test)?;
    let k = train.k();
    let design = train.a.hstack(&Matrix::column_vector(train.y.clone()))?;
    let fit = ols_fit(&design, &train.x, true)?;
    let mut names = a_names(k);
    names.push("y".into());
    let fit = fit.with_names(names, x_names(train.p()));

    let y_mean = fit.design_means[k];
    let mut x_train = fit.residuals.clone();
    for i in 0..train.n() {
        let dy = train.y[i] - y_mean;
        for (j, v) in x_train.row_mut(i).iter_mut().enumerate() {
            *v += fit.coefficients[(k, j)] * dy;
        }
    }
    let x_test = remove_confounder_part(&fit, &test.x, &test.a)?;
    Ok(AdjustedPair {
        train: train.with_x(x_train)?,
        test: test.with_x(x_test)?,
        method: AdjustmentMethod::LinearCa,
        artifacts: FitArtifacts::Linear(fit),
    })
}

/// `(X - mean_X) - (A - mean_A) Gamma_XA` using the first `k` rows of the fit.
pub fn remove_confounder_part<T: Real>(
    fit: &LinearFit<T>,
    x: &Matrix<T>,
    a: &Matrix<T>,
) -> Result<Matrix<T>> {
    let k = a.cols();
    let p = x.cols();
    if fit.coefficients.cols() != p || fit.coefficients.rows() < k || x.rows() != a.rows() {
        return Err(Error::DimensionMismatch("fit does not match features".into()));
    }
    let mut out = x.clone();
    for i in 0..x.rows() {
        let arow = a.row(i);
        for j in 0..p {
            let mut conf = T::zero();
            for r in 0..k {
                conf += (arow[r] - fit.design_means[r]) * fit.coefficients[(r, j)];
            }
            out[(i, j)] = x[(i, j)] - fit.response_means[j] - conf;
        }
    }
    Ok(out)
}

/// Additive model of each pooled feature on the pooled confounders; the
/// residuals `X - mu - sum f(A)` are the adjusted features.
pub fn additive_residualize<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<AdjustedPair<T>> {
    check_compatible(train, test)?;
    let a = train.a.vstack(&test.a)?;
    let x = train.x.vstack(&test.x)?;
    let n = train.n();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut fits = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let fit = backfit(&x.column(j), &a)?;
        out.set_column(j, &fit.residuals);
        fits.push(fit);
    }
    Ok(AdjustedPair {
        train: train.with_x(out.row_range(0, n))?,
        test: test.with_x(out.row_range(n, out.rows()))?,
        method: AdjustmentMethod::AdditiveRes,
        artifacts: FitArtifacts::Additive(fits),
    })
}

/// Additive model of each training feature on `(Y, A_1..A_k)`. Training
/// features are `f_Y(Y) + residual`; test features subtract the intercept
/// and the confounder curves evaluated at the test confounders.
pub fn additive_causality_aware<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<AdjustedPair<T>> {
    check_compatible(train, test)?;
    let covariates = Matrix::column_vector(train.y.clone()).hstack(&train.a)?;
    let p = train.p();
    let k = train.k();
    let mut x_train = Matrix::zeros(train.n(), p);
    let mut x_test = Matrix::zeros(test.n(), p);
    let mut fits = Vec::with_capacity(p);
    for j in 0..p {
        let fit = backfit(&train.x.column(j), &covariates)?;
        let f_y = fit.fitted_components.column(0);
        let col: Vec<T> = f_y.iter().zip(&fit.residuals).map(|(&f, &r)| f + r).collect();
        x_train.set_column(j, &col);

        let mut col = test.x.column(j);
        for v in col.iter_mut() {
            *v -= fit.intercept;
        }
        for i in 0..k {
            let curve = fit.component(i + 1, &test.a.column(i));
            for (v, c) in col.iter_mut().zip(curve) {
                *v -= c;
            }
        }
        x_test.set_column(j, &col);
        fits.push(fit);
    }
    Ok(AdjustedPair {
        train: train.with_x(x_train)?,
        test: test.with_x(x_test)?,
        method: AdjustmentMethod::AdditiveCa,
        artifacts: FitArtifacts::Additive(fits),
    })
}

/// Replaces the confounders of both splits by the scaled left singular
/// vectors of the pooled, centered confounder matrix.
pub fn svd_reparameterize<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Dataset<T>, Dataset<T>)> {
    check_compatible(train, test)?;
    let mut pooled = train.a.vstack(&test.a)?;
    let n_all = pooled.rows();
    for j in 0..pooled.cols() {
        let col = pooled.column(j);
        let m = col.iter().copied().sum::<T>() / T::from_usize_lossy(n_all);
        let centered: Vec<T> = col.iter().map(|&v| v - m).collect();
        pooled.set_column(j, &centered);
    }
    let svd = scaled_svd(&pooled)?;
    let n = train.n();
    let mut tr = train.clone();
    let mut ts = test.clone();
    tr.a = svd.u_tilde.row_range(0, n);
    ts.a = svd.u_tilde.row_range(n, n_all);
    Ok((tr, ts))
}

fn x_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn a_names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("a{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{correlation, covariance};
    use crate::sim::{gen_linear_scm, gen_regression_pair, sample_regression_params, rng, Split};
    use crate::theory::TheoryParams;

    fn chain(gxy: f64, gxa: f64, gya: f64) -> TheoryParams<f64> {
        TheoryParams {
            gamma_xy: vec![gxy],
            gamma_xa: Matrix::from_row_major(1, 1, vec![gxa]).unwrap(),
            gamma_ya: vec![gya],
            cov_a: Matrix::identity(1),
            sigma_w: Matrix::identity(1),
            var_wy: None,
        }
    }

    fn pair(p: &TheoryParams<f64>, n: usize, seed: u64) -> (Dataset<f64>, Dataset<f64>) {
        (
            gen_linear_scm(p, n, Split::Train, &mut rng::stream(seed, 0, rng::TRAIN)).unwrap(),
            gen_linear_scm(p, n, Split::Test, &mut rng::stream(seed, 0, rng::TEST)).unwrap(),
        )
    }

    #[test]
    fn method_names_roundtrip() {
        for m in AdjustmentMethod::ALL {
            assert_eq!(m.name().parse::<AdjustmentMethod>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
            assert_eq!(m.counterpart().counterpart(), m);
        }
        assert!("ca".parse::<AdjustmentMethod>().is_err());
    }

    #[test]
    fn both_forms_of_training_features_agree() {
        let (tr, ts) = pair(&chain(0.5, 0.3, 0.4), 2000, 1);
        let adj = causality_aware(&tr, &ts).unwrap();
        let FitArtifacts::Linear(fit) = &adj.artifacts else { panic!() };
        let other = remove_confounder_part(fit, &tr.x, &tr.a).unwrap();
        assert!(adj.train.x.sub(&other).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn residualized_features_are_orthogonal_to_confounders() {
        let p = sample_regression_params(&mut rng::stream(3, 0, rng::PARAMS), false);
        let (tr, ts): (Dataset<f64>, Dataset<f64>) = gen_regression_pair(
            &p,
            1000,
            1000,
            &mut rng::stream(3, 0, rng::TRAIN),
            &mut rng::stream(3, 0, rng::TEST),
        )
        .unwrap();
        let adj = residualize(&tr, &ts).unwrap();
        let x = adj.train.x.vstack(&adj.test.x).unwrap();
        let a = tr.a.vstack(&ts.a).unwrap();
        for j in 0..2 {
            for i in 0..2 {
                assert!(correlation(&x.column(j), &a.column(i)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn test_outcome_is_never_read() {
        let (tr, ts) = pair(&chain(0.5, 0.3, 0.4), 500, 2);
        let mut scrambled = ts.clone();
        scrambled.y.iter_mut().for_each(|v| *v = -3.0 * *v + 7.0);
        for m in AdjustmentMethod::ALL {
            let a = adjust(m, &tr, &ts).unwrap();
            let b = adjust(m, &tr, &scrambled).unwrap();
            assert_eq!(a.test.x, b.test.x, "{m}");
        }
    }

    #[test]
    fn no_confounding_leaves_features_nearly_unchanged() {
        let (tr, ts) = pair(&chain(0.5, 0.0, 0.0), 20_000, 4);
        let c = causality_aware(&tr, &ts).unwrap();
        let r = residualize(&tr, &ts).unwrap();
        let centered = |m: &Matrix<f64>| {
            let mu = m.column(0).iter().sum::<f64>() / m.rows() as f64;
            m.map(|v| v - mu)
        };
        let diff = c.test.x.sub(&centered(&ts.x)).unwrap().max_abs();
        assert!(diff < 0.05, "{diff}");
        let diff = c.test.x.sub(&r.test.x).unwrap().max_abs();
        assert!(diff < 0.05, "{diff}");
    }

    #[test]
    fn svd_reparameterization_leaves_adjustments_unchanged() {
        let p = sample_regression_params(&mut rng::stream(5, 0, rng::PARAMS), false);
        let (tr, ts): (Dataset<f64>, Dataset<f64>) = gen_regression_pair(
            &p,
            800,
            800,
            &mut rng::stream(5, 0, rng::TRAIN),
            &mut rng::stream(5, 0, rng::TEST),
        )
        .unwrap();
        let (tr2, ts2) = svd_reparameterize(&tr, &ts).unwrap();
        for m in [AdjustmentMethod::LinearCa, AdjustmentMethod::LinearRes] {
            let a = adjust(m, &tr, &ts).unwrap();
            let b = adjust(m, &tr2, &ts2).unwrap();
            assert!(a.train.x.sub(&b.train.x).unwrap().max_abs() < 1e-8);
            assert!(a.test.x.sub(&b.test.x).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn additive_variants_track_linear_ones_on_linear_data() {
        let (tr, ts) = pair(&chain(0.5, 0.3, 0.4), 10_000, 6);
        for (m, am) in [
            (AdjustmentMethod::LinearCa, AdjustmentMethod::AdditiveCa),
            (AdjustmentMethod::LinearRes, AdjustmentMethod::AdditiveRes),
        ] {
            let lin = adjust(m, &tr, &ts).unwrap();
            let add = adjust(am, &tr, &ts).unwrap();
            for (l, a) in [(&lin.train, &add.train), (&lin.test, &add.test)] {
                // Compare the per-feature covariance with Y, which is what
                // the learners see.
                let cl = covariance(&l.x.column(0), &l.y);
                let ca = covariance(&a.x.column(0), &a.y);
                assert!((cl - ca).abs() < 1e-3, "{m}: {cl} vs {ca}");
            }
        }
    }

    #[test]
    fn mismatched_splits_are_rejected() {
        let (tr, _) = pair(&chain(0.5, 0.3, 0.4), 200, 7);
        let mut ts = tr.clone();
        ts.a = ts.a.hstack(&ts.a).unwrap();
        assert!(matches!(residualize(&tr, &ts), Err(Error::DimensionMismatch(_))));
    }
}
