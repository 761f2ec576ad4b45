use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols_fit, Matrix};
use crate::scalar::Real;

/// Per-column location and scale used to standardize a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StandardizationStats<T> {
    pub means: Vec<T>,
    pub sds: Vec<T>,
}

impl<T: Real> StandardizationStats<T> {
    /// Maps standardized values back to the original scale.
    pub fn invert(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        if m.cols() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns, stats for {}",
                m.cols(),
                self.means.len()
            )));
        }
        let mut out = m.clone();
        for i in 0..m.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.sds[j] + self.means[j];
            }
        }
        Ok(out)
    }
}

pub fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
}

/// Sample variance with denominator `n - 1`.
pub fn variance<T: Real>(v: &[T]) -> T {
    covariance(v, v)
}

/// Sample covariance with denominator `n - 1`.
pub fn covariance<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let s: T = a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).sum();
    s / T::from_usize_lossy(a.len() - 1)
}

/// Pearson correlation; zero when either input has no spread.
pub fn correlation<T: Real>(a: &[T], b: &[T]) -> T {
    let va = variance(a);
    let vb = variance(b);
    if va <= T::zero() || vb <= T::zero() {
        return T::zero();
    }
    clamp_unit(covariance(a, b) / (va * vb).sqrt())
}

fn clamp_unit<T: Real>(r: T) -> T {
    r.max(-T::one()).min(T::one())
}

fn is_constant<T: Real>(col: &[T]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Centers and scales each column (denominator `n - 1`), or applies `stats`.
pub fn standardize<T: Real>(
    m: &Matrix<T>,
    stats: Option<&StandardizationStats<T>>,
) -> Result<(Matrix<T>, StandardizationStats<T>)> {
    let stats = match stats {
        Some(s) => {
            if s.means.len() != m.cols() || s.sds.len() != m.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "{} columns, stats for {}",
                    m.cols(),
                    s.means.len()
                )));
            }
            s.clone()
        }
        None => {
            if m.rows() < 2 {
                return Err(Error::InsufficientRows {
                    needed: 2,
                    got: m.rows(),
                });
            }
            let mut means = Vec::with_capacity(m.cols());
            let mut sds = Vec::with_capacity(m.cols());
            for j in 0..m.cols() {
                let col = m.column(j);
                let sd = variance(&col).sqrt();
                if is_constant(&col) || !(sd > T::zero()) {
                    return Err(Error::ConstantColumn {
                        column: format!("column {}", j + 1),
                    });
                }
                means.push(mean(&col));
                sds.push(sd);
            }
            StandardizationStats { means, sds }
        }
    };
    let mut out = m.clone();
    for i in 0..m.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - stats.means[j]) / stats.sds[j];
        }
    }
    Ok((out, stats))
}

/// Sample covariance matrix of the columns (centered, denominator `n - 1`).
pub fn moments<T: Real>(cols: &Matrix<T>) -> Result<Matrix<T>> {
    let n = cols.rows();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    let means: Vec<T> = (0..cols.cols()).map(|j| mean(&cols.column(j))).collect();
    let centered = {
        let mut c = cols.clone();
        for i in 0..n {
            for (j, v) in c.row_mut(i).iter_mut().enumerate() {
                *v -= means[j];
            }
        }
        c
    };
    Ok(centered.gram().scale(T::one() / T::from_usize_lossy(n - 1)))
}

/// Partial correlation of `x` and `y` given a single conditioning vector `z`,
/// computed as the correlation of their OLS residuals on `z`.
pub fn partial_correlation<T: Real>(x: &[T], y: &[T], z: &[T]) -> Result<T> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "lengths {}, {}, {}",
            n,
            y.len(),
            z.len()
        )));
    }
    if n < 4 {
        return Err(Error::InsufficientRows { needed: 4, got: n });
    }
    if is_constant(z) {
        return Err(Error::ConstantColumn {
            column: "conditioning variable".into(),
        });
    }
    let design = Matrix::column_vector(z.to_vec());
    let responses = Matrix::from_columns(&[x.to_vec(), y.to_vec()])?;
    let fit = ols_fit(&design, &responses, true)?;
    let rx = fit.residuals.column(0);
    let ry = fit.residuals.column(1);
    for (resid, orig) in [(&rx, x), (&ry, y)] {
        let total = variance(orig);
        let ratio = if total > T::zero() {
            variance(resid) / total
        } else {
            T::zero()
        };
        if !(ratio >= T::lit(1e-12)) {
            return Err(Error::DegenerateResidual {
                ratio: ratio.as_f64(),
            });
        }
    }
    Ok(clamp_unit(
        covariance(&rx, &ry) / (variance(&rx) * variance(&ry)).sqrt(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_three_points() {
        let m = Matrix::column_vector(vec![1.0, 2.0, 3.0]);
        let (s, stats) = standardize(&m, None).unwrap();
        assert_eq!(s.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(stats.means, vec![2.0]);
        assert_eq!(stats.sds, vec![1.0]);
    }

    #[test]
    fn already_standard_column_is_unchanged() {
        let col: Vec<f64> = vec![-1.0, 0.0, 1.0];
        let (s, _) = standardize(&Matrix::column_vector(col.clone()), None).unwrap();
        for (a, b) in s.column(0).iter().zip(&col) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_is_rejected() {
        let m = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]).unwrap();
        match standardize(&m, None) {
            Err(Error::ConstantColumn { column }) => assert_eq!(column, "column 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stats_dimension_mismatch() {
        let m = Matrix::column_vector(vec![1.0, 2.0, 3.0]);
        let (_, stats) = standardize(&m, None).unwrap();
        let wide = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(
            standardize(&wide, Some(&stats)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn moments_of_duplicated_and_negated_columns() {
        let c: Vec<f64> = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let v = variance(&c);
        let dup = moments(&Matrix::from_columns(&[c.clone(), c.clone()]).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((dup[(i, j)] - v).abs() < 1e-12);
            }
        }
        let neg: Vec<f64> = c.iter().map(|x| -x).collect();
        let m = moments(&Matrix::from_columns(&[c, neg]).unwrap()).unwrap();
        assert!((m[(0, 1)] + v).abs() < 1e-12);
        assert!(matches!(
            moments(&Matrix::<f64>::zeros(1, 2)),
            Err(Error::InsufficientRows { .. })
        ));
    }

    #[test]
    fn partial_correlation_degenerate_when_x_equals_z() {
        let z = vec![0.3, -1.2, 2.2, 0.7, -0.1, 1.4];
        let y = vec![1.0, 0.5, -0.3, 2.0, 0.1, -1.0];
        assert!(matches!(
            partial_correlation(&z, &y, &z),
            Err(Error::DegenerateResidual { .. })
        ));
        assert!(matches!(
            partial_correlation(&y, &z, &[1.0; 6]),
            Err(Error::ConstantColumn { .. })
        ));
    }

    fn standardized(v: &[f64]) -> Vec<f64> {
        let (s, _) = standardize(&Matrix::column_vector(v.to_vec()), None).unwrap();
        s.column(0)
    }

    proptest! {
        #[test]
        fn standardize_roundtrip(values in prop::collection::vec(-1e3f64..1e3, 3..40)) {
            prop_assume!(values.windows(2).any(|w| w[0] != w[1]));
            let m = Matrix::column_vector(values.clone());
            let (s, stats) = standardize(&m, None).unwrap();
            let back = stats.invert(&s).unwrap();
            let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for (a, b) in back.column(0).iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-10 * scale);
            }
        }

        // On standardized triples the residual covariance is the closed form
        // Cov(X,Y) - Cov(X,Z) Cov(Z,Y), so the partial correlation is that
        // quantity over the product of the residual standard deviations.
        #[test]
        fn partial_correlation_matches_standardized_closed_form(
            raw in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 8..60)
        ) {
            let z: Vec<f64> = raw.iter().map(|t| t.2).collect();
            let x: Vec<f64> = raw.iter().map(|t| t.0 + 0.5 * t.2).collect();
            let y: Vec<f64> = raw.iter().map(|t| t.1 - 0.7 * t.2 + 0.2 * t.0).collect();
            let (x, y, z) = (standardized(&x), standardized(&y), standardized(&z));
            let pc = match partial_correlation(&x, &y, &z) {
                Ok(v) => v,
                Err(_) => return Ok(()),
            };
            let (cxy, cxz, czy) = (covariance(&x, &y), covariance(&x, &z), covariance(&z, &y));
            let closed = (cxy - cxz * czy) / ((1.0 - cxz * cxz) * (1.0 - czy * czy)).sqrt();
            prop_assert!((pc - closed).abs() <= 1e-10, "{pc} vs {closed}");
        }
    }
}
