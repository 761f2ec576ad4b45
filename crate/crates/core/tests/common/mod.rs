#![allow(dead_code)]

use deconfound::{Matrix, TheoryParams};
use rand::Rng;

/// Random correlation matrix from `B B^T + 0.1 I`, rescaled to unit diagonal.
pub fn random_correlation<R: Rng>(rng: &mut R, k: usize) -> Matrix {
    let b = Matrix::from_row_major(k, k, (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let c = b.matmul(&b.transpose()).unwrap().add(&Matrix::identity(k).scale(0.1)).unwrap();
    let mut out = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            out[(i, j)] = c[(i, j)] / (c[(i, i)] * c[(j, j)]).sqrt();
        }
    }
    out
}

/// Valid standardized path coefficients with `p` features and `k`
/// confounders; the confounders explain between 0 and 90% of `Var(Y)`.
pub fn random_theory_params<R: Rng>(rng: &mut R, p: usize, k: usize) -> TheoryParams {
    let cov_a = random_correlation(rng, k);
    let mut gamma_ya: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ca = cov_a.mat_vec(&gamma_ya).unwrap();
    let s: f64 = gamma_ya.iter().zip(&ca).map(|(g, c)| g * c).sum();
    let target: f64 = rng.random_range(0.0..0.9);
    let f = (target / s).sqrt();
    gamma_ya.iter_mut().for_each(|g| *g *= f);

    let noise = random_correlation(rng, p).scale(rng.random_range(0.2..2.0));
    TheoryParams {
        gamma_xy: (0..p).map(|_| rng.random_range(-1.5..1.5)).collect(),
        gamma_xa: Matrix::from_row_major(p, k, (0..p * k).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap(),
        gamma_ya,
        cov_a,
        sigma_w: noise,
        var_wy: None,
    }
}

pub fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    deconfound::linalg::covariance(a, b)
}
