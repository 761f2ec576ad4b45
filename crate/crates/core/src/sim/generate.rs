use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{check_spd, Matrix};
use crate::scalar::Real;
use crate::sim::dataset::{standardize_dataset, standardize_jointly, Dataset, Split};
use crate::sim::params::{ScmClassificationParams, ScmRegressionParams, ShiftScmParams};
use crate::theory::TheoryParams;

const MIN_ROWS: usize = 100;

fn check_rows(n: usize) -> Result<()> {
    if n < MIN_ROWS {
        return Err(Error::InsufficientRows {
            needed: MIN_ROWS,
            got: n,
        });
    }
    Ok(())
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Unit-variance bivariate normal pair with correlation `rho`.
fn correlated_pair<R: Rng + ?Sized>(rng: &mut R, rho: f64) -> [f64; 2] {
    let z1 = normal(rng);
    let z2 = normal(rng);
    [z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2]
}

fn build<T: Real>(cols_x: [Vec<f64>; 2], cols_a: [Vec<f64>; 2], y: Vec<f64>, split: Split) -> Result<Dataset<T>> {
    let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
    let [x1, x2] = cols_x;
    let [a1, a2] = cols_a;
    Dataset::new(
        Matrix::from_columns(&[conv(x1), conv(x2)])?,
        Matrix::from_columns(&[conv(a1), conv(a2)])?,
        conv(y),
        split,
    )
}

/// Draws from the regression model on the original (unstandardized) scale.
pub fn gen_regression_raw<T: Real, R: Rng + ?Sized>(
    params: &ScmRegressionParams,
    n: usize,
    split: Split,
    rng: &mut R,
) -> Result<Dataset<T>> {
    params.validate()?;
    check_rows(n)?;
    let f = |v: f64| if params.mispecified { v * v } else { v };
    let sd_y = params.sigma2_y.sqrt();
    let mut a = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut x = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let wa = correlated_pair(rng, params.rho_a);
        let av = [params.mu_a[0] + wa[0], params.mu_a[1] + wa[1]];
        let yv = params.mu_y
            + params.beta_ya[0] * f(av[0])
            + params.beta_ya[1] * f(av[1])
            + sd_y * normal(rng);
        let wx = correlated_pair(rng, params.rho_x);
        for j in 0..2 {
            let b = &params.beta_xa[j];
            x[j].push(
                params.mu_x[j] + b[0] * f(av[0]) + b[1] * f(av[1]) + params.beta_xy[j] * f(yv) + wx[j],
            );
        }
        a[0].push(av[0]);
        a[1].push(av[1]);
        y.push(yv);
    }
    build(x, a, y, split)
}

/// One standardized sample from the regression model.
pub fn gen_regression<T: Real, R: Rng + ?Sized>(
    params: &ScmRegressionParams,
    n: usize,
    rng: &mut R,
) -> Result<Dataset<T>> {
    standardize_dataset(&gen_regression_raw(params, n, Split::Train, rng)?)
}

/// Train and test samples from independent streams, standardized jointly.
pub fn gen_regression_pair<T: Real, R: Rng + ?Sized>(
    params: &ScmRegressionParams,
    n_train: usize,
    n_test: usize,
    rng_train: &mut R,
    rng_test: &mut R,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let train = gen_regression_raw(params, n_train, Split::Train, rng_train)?;
    let test = gen_regression_raw(params, n_test, Split::Test, rng_test)?;
    standardize_jointly(&train, &test)
}

/// Draws from the classification model with `y` in `{0, 1}`, unstandardized.
pub fn gen_classification_raw<T: Real, R: Rng + ?Sized>(
    params: &ScmClassificationParams,
    n: usize,
    split: Split,
    rng: &mut R,
) -> Result<Dataset<T>> {
    params.validate()?;
    check_rows(n)?;
    const CELLS: [[f64; 2]; 4] = [[1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
    let mut a = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut x = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cell = 3;
        for (c, &p) in params.p_cell.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = c;
                break;
            }
        }
        let av = CELLS[cell];
        let eta = params.mu_y + params.beta_ya[0] * av[0] + params.beta_ya[1] * av[1];
        let prob = 1.0 / (1.0 + (-eta).exp());
        let yv = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
        let wx = correlated_pair(rng, params.rho_x);
        for j in 0..2 {
            let signal = if params.mispecified {
                let b = &params.beta_xya[j];
                b[0] * yv * av[0] + b[1] * yv * av[1]
            } else {
                let b = &params.beta_xa[j];
                b[0] * av[0] + b[1] * av[1] + params.beta_xy[j] * yv
            };
            x[j].push(params.mu_x[j] + signal + wx[j]);
        }
        a[0].push(av[0]);
        a[1].push(av[1]);
        y.push(yv);
    }
    build(x, a, y, split)
}

/// One sample with `x` and `a` standardized and `y` left as 0/1.
pub fn gen_classification<T: Real, R: Rng + ?Sized>(
    params: &ScmClassificationParams,
    n: usize,
    rng: &mut R,
) -> Result<Dataset<T>> {
    standardize_dataset(&gen_classification_raw(params, n, Split::Train, rng)?)
}

pub fn gen_classification_pair<T: Real, R: Rng + ?Sized>(
    params: &ScmClassificationParams,
    n_train: usize,
    n_test: usize,
    rng_train: &mut R,
    rng_test: &mut R,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let train = gen_classification_raw(params, n_train, Split::Train, rng_train)?;
    let test = gen_classification_raw(params, n_test, Split::Test, rng_test)?;
    standardize_jointly(&train, &test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    Train,
    Test(usize),
}

/// Shift-model data for one environment; never standardized.
pub fn gen_shift_data<T: Real, R: Rng + ?Sized>(
    params: &ShiftScmParams,
    which: Environment,
    n: usize,
    rng: &mut R,
) -> Result<Dataset<T>> {
    params.validate()?;
    check_rows(n)?;
    let (cov, split) = match which {
        Environment::Train => (params.train_cov, Split::Train),
        Environment::Test(e) => (
            *params.test_covs.get(e).ok_or_else(|| {
                Error::InvalidParam(format!(
                    "environment {e} out of range ({} defined)",
                    params.test_covs.len()
                ))
            })?,
            Split::Test,
        ),
    };
    let l = check_spd(
        &Matrix::from_row_major(2, 2, vec![cov[0][0], cov[0][1], cov[1][0], cov[1][1]])?,
        "(A, Y) covariance",
    )?;
    let l = l.factor();
    let sd_x = params.sigma2_x.sqrt();
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z1 = normal(rng);
        let z2 = normal(rng);
        let av = l[(0, 0)] * z1;
        let yv = l[(1, 0)] * z1 + l[(1, 1)] * z2;
        x.push(T::lit(params.beta_xa * av + params.beta_xy * yv + sd_x * normal(rng)));
        a.push(T::lit(av));
        y.push(T::lit(yv));
    }
    Dataset::new(Matrix::column_vector(x), Matrix::column_vector(a), y, split)
}

/// Draws from the standardized linear model described by path coefficients:
/// `A ~ N(0, cov_a)`, `Y = Gamma_YA A + W_Y`, `X = Gamma_XA A + Gamma_XY Y + W_X`.
pub fn gen_linear_scm<T: Real, R: Rng + ?Sized>(
    params: &TheoryParams<f64>,
    n: usize,
    split: Split,
    rng: &mut R,
) -> Result<Dataset<T>> {
    params.validate()?;
    let (p, k) = (params.p(), params.k());
    let la = check_spd(&params.cov_a, "cov_a")?;
    let lw = check_spd(&params.sigma_w, "sigma_w")?;
    let (la, lw) = (la.factor(), lw.factor());
    let sd_wy = params.implied_var_wy().max(0.0).sqrt();
    let mut x = Matrix::zeros(n, p);
    let mut a = Matrix::zeros(n, k);
    let mut y = Vec::with_capacity(n);
    let mut za = vec![0.0; k];
    let mut zw = vec![0.0; p];
    for i in 0..n {
        za.iter_mut().for_each(|z| *z = normal(rng));
        let av: Vec<f64> = (0..k)
            .map(|r| (0..=r).map(|c| la[(r, c)] * za[c]).sum())
            .collect();
        let yv: f64 = params.gamma_ya.iter().zip(&av).map(|(g, v)| g * v).sum::<f64>()
            + sd_wy * normal(rng);
        zw.iter_mut().for_each(|z| *z = normal(rng));
        for j in 0..p {
            let w: f64 = (0..=j).map(|c| lw[(j, c)] * zw[c]).sum();
            let conf: f64 = (0..k).map(|r| params.gamma_xa[(j, r)] * av[r]).sum();
            x[(i, j)] = T::lit(conf + params.gamma_xy[j] * yv + w);
        }
        for (r, v) in av.iter().enumerate() {
            a[(i, r)] = T::lit(*v);
        }
        y.push(T::lit(yv));
    }
    Dataset::new(x, a, y, split)
}
