//! Downstream learners: linear regression and logistic regression, plus the
//! test metrics (MSE and accuracy).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols_fit, Cholesky, Matrix};
use crate::scalar::Real;
use crate::sim::Dataset;

pub const LOGISTIC_MAX_ITER: usize = 100;
pub const LOGISTIC_SCORE_TOL: f64 = 1e-8;
pub const SEPARATION_NORM: f64 = 1e3;
const RIDGE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainedModel<T> {
    pub kind: ModelKind,
    pub weights: Vec<T>,
    pub intercept: T,
}

impl<T: Real> TrainedModel<T> {
    /// Linear predictor `intercept + x w` per row.
    pub fn linear_predictor(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if x.cols() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} weights, data has {} features",
                self.weights.len(),
                x.cols()
            )));
        }
        Ok((0..x.rows())
            .map(|i| {
                self.intercept
                    + x.row(i)
                        .iter()
                        .zip(&self.weights)
                        .map(|(&v, &w)| v * w)
                        .sum::<T>()
            })
            .collect())
    }

    /// Predicted outcome (linear) or class-1 probability (logistic).
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        let eta = self.linear_predictor(x)?;
        Ok(match self.kind {
            ModelKind::Linear => eta,
            ModelKind::Logistic => eta.into_iter().map(sigmoid).collect(),
        })
    }
}

/// Test metrics with the raw predictions kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MetricReport<T> {
    pub kind: ModelKind,
    pub mse: Option<T>,
    pub accuracy: Option<T>,
    /// Predicted outcomes, or predicted class-1 probabilities.
    pub predictions: Vec<T>,
}

impl<T: Real> MetricReport<T> {
    /// MSE for a linear model, accuracy for a logistic one.
    pub fn value(&self) -> T {
        self.mse.or(self.accuracy).unwrap_or_else(T::nan)
    }
}

pub fn sigmoid<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// Ordinary least squares with intercept.
pub fn fit_linear<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<TrainedModel<T>> {
    let fit = ols_fit(x, &Matrix::column_vector(y.to_vec()), true)?;
    Ok(TrainedModel {
        kind: ModelKind::Linear,
        weights: fit.coefficients.column(0),
        intercept: fit.intercepts[0],
    })
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares, starting from zero.
pub fn fit_logistic<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<TrainedModel<T>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("x has {n} rows, y has {}", y.len())));
    }
    if y.iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::InvalidParam("logistic outcome must be 0/1".into()));
    }
    let ones = y.iter().filter(|&&v| v == T::one()).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass);
    }

    let q = p + 1;
    // Coefficients are stored as [intercept, w_1..w_p].
    let mut beta = vec![T::zero(); q];
    let jitter = T::lit(RIDGE_JITTER);
    let tol = T::lit(LOGISTIC_SCORE_TOL);
    for _ in 0..LOGISTIC_MAX_ITER {
        let mut hess = Matrix::zeros(q, q);
        let mut score = vec![T::zero(); q];
        let mut z = vec![T::one(); q];
        for i in 0..n {
            z[1..].copy_from_slice(x.row(i));
            let eta: T = z.iter().zip(&beta).map(|(&a, &b)| a * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (T::one() - mu);
            let r = y[i] - mu;
            for a in 0..q {
                score[a] += z[a] * r;
                let wa = w * z[a];
                for b in 0..=a {
                    hess[(a, b)] += wa * z[b];
                }
            }
        }
        if score.iter().all(|s| s.abs() <= tol) {
            break;
        }
        for a in 0..q {
            hess[(a, a)] += jitter;
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = Cholesky::new(&hess)
            .map_err(|_| Error::Separation { norm: f64::INFINITY })?
            .solve(&score);
        for (b, s) in beta.iter_mut().zip(step) {
            *b += s;
        }
        let norm = beta.iter().map(|&b| b * b).sum::<T>().sqrt();
        if !norm.is_finite() || norm > T::lit(SEPARATION_NORM) {
            return Err(Error::Separation { norm: norm.as_f64() });
        }
    }
    let model = TrainedModel {
        kind: ModelKind::Logistic,
        intercept: beta[0],
        weights: beta[1..].to_vec(),
    };
    // A linear predictor that classifies every training row correctly means
    // the classes are separable and no finite maximum exists; saturated
    // probabilities can make the score vanish before the norm blows up.
    let eta = model.linear_predictor(x)?;
    let separated = eta
        .iter()
        .zip(y)
        .all(|(&e, &v)| (e > T::zero()) == (v == T::one()) && e != T::zero());
    if separated {
        let norm = beta.iter().map(|&b| b * b).sum::<T>().sqrt();
        return Err(Error::Separation { norm: norm.as_f64() });
    }
    Ok(model)
}

/// Scores `model` on a dataset. A probability of exactly 0.5 counts as class 0.
pub fn evaluate<T: Real>(model: &TrainedModel<T>, data: &Dataset<T>) -> Result<MetricReport<T>> {
    let predictions = model.predict(&data.x)?;
    let n = T::from_usize_lossy(data.n());
    let (mse, accuracy) = match model.kind {
        ModelKind::Linear => {
            let sse: T = predictions
                .iter()
                .zip(&data.y)
                .map(|(&p, &y)| (p - y) * (p - y))
                .sum();
            (Some(sse / n), None)
        }
        ModelKind::Logistic => {
            if !data.binary_outcome() {
                return Err(Error::InvalidParam("accuracy needs a 0/1 outcome".into()));
            }
            let half = T::lit(0.5);
            let hits = predictions
                .iter()
                .zip(&data.y)
                .filter(|(&p, &y)| (p > half) == (y == T::one()))
                .count();
            (None, Some(T::from_usize_lossy(hits) / n))
        }
    };
    Ok(MetricReport {
        kind: model.kind,
        mse,
        accuracy,
        predictions,
    })
}

/// Fits the learner matching the outcome type: logistic for 0/1, else linear.
pub fn fit_for<T: Real>(data: &Dataset<T>) -> Result<TrainedModel<T>> {
    if data.binary_outcome() {
        fit_logistic(&data.x, &data.y)
    } else {
        fit_linear(&data.x, &data.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mean, variance};
    use crate::sim::Split;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn normals(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let m = fit_linear(&Matrix::column_vector(x), &y).unwrap();
        assert!((m.weights[0] - 3.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn independent_outcome_gives_small_weight() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = normals(&mut rng, 100_000);
        let y = normals(&mut rng, 100_000);
        let m = fit_linear(&Matrix::column_vector(x), &y).unwrap();
        assert!(m.weights[0].abs() <= 0.02);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let design = Matrix::from_columns(&[x.clone(), x.iter().map(|v| 2.0 * v).collect()]).unwrap();
        assert!(matches!(fit_linear(&design, &x), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn separable_data_is_detected() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 - 99.5).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(
            fit_logistic(&Matrix::column_vector(x), &y),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::column_vector(vec![0.1f64, 0.2, 0.3]);
        assert!(matches!(fit_logistic(&x, &[1.0, 1.0, 1.0]), Err(Error::SingleClass)));
    }

    #[test]
    fn coin_flips_give_null_model() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = normals(&mut rng, 100_000);
        let y: Vec<f64> = (0..100_000).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let m = fit_logistic(&Matrix::column_vector(x), &y).unwrap();
        assert!(m.intercept.abs() <= 0.02);
        assert!(m.weights[0].abs() <= 0.05);
    }

    #[test]
    fn recovers_generating_logistic_model() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 1_000_000;
        let x = normals(&mut rng, n);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| f64::from(u8::from(rng.random::<f64>() < sigmoid(1.5 * v - 0.5))))
            .collect();
        let m = fit_logistic(&Matrix::column_vector(x), &y).unwrap();
        assert!((m.weights[0] - 1.5).abs() <= 0.02, "{}", m.weights[0]);
        assert!((m.intercept + 0.5).abs() <= 0.02, "{}", m.intercept);
    }

    #[test]
    fn perfect_predictions() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v).collect();
        let d = Dataset::new(Matrix::column_vector(x), Matrix::column_vector(vec![0.0; 50]), y, Split::Test)
            .unwrap();
        let m = fit_linear(&d.x, &d.y).unwrap();
        assert!(evaluate(&m, &d).unwrap().mse.unwrap() < 1e-20);

        let lm = TrainedModel { kind: ModelKind::Logistic, weights: vec![100.0], intercept: -250.0 };
        let mut c = d.clone();
        c.y = d.x.column(0).iter().map(|&v| if v > 2.5 { 1.0 } else { 0.0 }).collect();
        assert_eq!(evaluate(&lm, &c).unwrap().accuracy, Some(1.0));
    }

    #[test]
    fn constant_predictor_mse_is_biased_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let y = normals(&mut rng, 500);
        let m = TrainedModel { kind: ModelKind::Linear, weights: vec![0.0], intercept: mean(&y) };
        let d = Dataset::new(Matrix::column_vector(normals(&mut rng, 500)), Matrix::column_vector(vec![0.0; 500]), y.clone(), Split::Test)
            .unwrap();
        let mse = evaluate(&m, &d).unwrap().mse.unwrap();
        assert!((mse - variance(&y) * 499.0 / 500.0).abs() < 1e-12);
    }

    #[test]
    fn half_probability_is_class_zero() {
        let m = TrainedModel { kind: ModelKind::Logistic, weights: vec![0.0], intercept: 0.0 };
        let d = Dataset::new(
            Matrix::column_vector(vec![1.0, 2.0]),
            Matrix::column_vector(vec![0.0, 0.0]),
            vec![0.0, 1.0],
            Split::Test,
        )
        .unwrap();
        let r = evaluate(&m, &d).unwrap();
        assert_eq!(r.accuracy, Some(0.5));
        assert_eq!(r.predictions, vec![0.5, 0.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = TrainedModel { kind: ModelKind::Linear, weights: vec![1.0, 2.0], intercept: 0.0 };
        let d = Dataset::new(Matrix::column_vector(vec![1.0]), Matrix::column_vector(vec![0.0]), vec![1.0], Split::Test)
            .unwrap();
        assert!(matches!(evaluate(&m, &d), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn single_precision_linear_fit() {
        let x: Vec<f32> = (0..40).map(|i| i as f32 / 8.0).collect();
        let y: Vec<f32> = x.iter().map(|v| 0.5 * v + 1.0).collect();
        let m = fit_linear(&Matrix::column_vector(x), &y).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-4);
        assert!((m.intercept - 1.0).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn least_squares_beats_constants(seed in any::<u64>(), c in -3.0f64..3.0) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let x = Matrix::from_columns(&[normals(&mut rng, 60), normals(&mut rng, 60)]).unwrap();
            let y: Vec<f64> = (0..60).map(|i| x[(i, 0)] - 0.3 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
            let d = Dataset::new(x.clone(), Matrix::column_vector(vec![0.0; 60]), y.clone(), Split::Train).unwrap();
            let fitted = evaluate(&fit_linear(&x, &y).unwrap(), &d).unwrap().mse.unwrap();
            let flat = TrainedModel { kind: ModelKind::Linear, weights: vec![0.0, 0.0], intercept: c };
            prop_assert!(fitted <= evaluate(&flat, &d).unwrap().mse.unwrap() + 1e-12);
        }

        #[test]
        fn logistic_score_equation(seed in any::<u64>(), w in -1.5f64..1.5, b in -1.0f64..1.0) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let x = normals(&mut rng, 400);
            let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(rng.random::<f64>() < sigmoid(w * v + b)))).collect();
            prop_assume!(y.contains(&1.0) && y.contains(&0.0));
            let xm = Matrix::column_vector(x);
            let m = fit_logistic(&xm, &y).unwrap();
            let probs = m.predict(&xm).unwrap();
            prop_assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
            prop_assert!((mean(&probs) - mean(&y)).abs() <= 1e-6);
        }
    }
}
