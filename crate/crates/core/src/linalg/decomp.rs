//! Householder QR, one-sided Jacobi SVD and Cholesky factorizations.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Compact Householder QR of a tall matrix.
///
/// The reflectors are kept in the strict lower part of `packed`; `R` lives in
/// the upper triangle with its diagonal in `r_diag`.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    packed: Matrix<T>,
    r_diag: Vec<T>,
}

impl<T: Real> Qr<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(Error::InsufficientRows { needed: n, got: m });
        }
        let mut qr = a.clone();
        let mut r_diag = vec![T::zero(); n];
        for k in 0..n {
            let mut norm = T::zero();
            for i in k..m {
                norm = norm.hypot(qr[(i, k)]);
            }
            if norm != T::zero() {
                if qr[(k, k)] < T::zero() {
                    norm = -norm;
                }
                for i in k..m {
                    qr[(i, k)] /= norm;
                }
                qr[(k, k)] += T::one();
                for j in (k + 1)..n {
                    let mut s = T::zero();
                    for i in k..m {
                        s += qr[(i, k)] * qr[(i, j)];
                    }
                    s = -s / qr[(k, k)];
                    for i in k..m {
                        let v = qr[(i, k)];
                        qr[(i, j)] += s * v;
                    }
                }
            }
            r_diag[k] = -norm;
        }
        Ok(Self { packed: qr, r_diag })
    }

    /// The `n x n` upper-triangular factor.
    pub fn r(&self) -> Matrix<T> {
        let n = self.packed.cols();
        let mut r = Matrix::zeros(n, n);
        for i in 0..n {
            r[(i, i)] = self.r_diag[i];
            for j in (i + 1)..n {
                r[(i, j)] = self.packed[(i, j)];
            }
        }
        r
    }

    /// Applies `Q^T` to every column of `b` in place.
    pub fn apply_qt(&self, b: &mut Matrix<T>) {
        let (m, n) = self.packed.shape();
        assert_eq!(b.rows(), m);
        for k in 0..n {
            if self.packed[(k, k)] == T::zero() {
                continue;
            }
            for j in 0..b.cols() {
                let mut s = T::zero();
                for i in k..m {
                    s += self.packed[(i, k)] * b[(i, j)];
                }
                s = -s / self.packed[(k, k)];
                for i in k..m {
                    b[(i, j)] += s * self.packed[(i, k)];
                }
            }
        }
    }

    /// Least-squares solution of `a x = b` by back substitution on `R`.
    pub fn solve_least_squares(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.packed.cols();
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        let mut x = Matrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            for i in (0..n).rev() {
                let mut s = qtb[(i, j)];
                for l in (i + 1)..n {
                    s -= self.packed[(i, l)] * x[(l, j)];
                }
                if self.r_diag[i] == T::zero() {
                    return Err(Error::RankDeficient { ratio: 0.0 });
                }
                x[(i, j)] = s / self.r_diag[i];
            }
        }
        Ok(x)
    }
}

/// Thin singular value decomposition `a = u diag(s) v^T`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    /// One-sided (Hestenes) Jacobi SVD of an `m x n` matrix with `m >= n`.
    ///
    /// Singular values come out nonincreasing. Each column of `v` is signed so
    /// that its largest-magnitude entry is positive.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(Error::InsufficientRows { needed: n, got: m });
        }
        let mut work = a.columns();
        let mut v = Matrix::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let (alpha, beta, gamma) = column_products(&work[p], &work[q]);
                    if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    let (lo, hi) = work.split_at_mut(q);
                    rotate(&mut lo[p], &mut hi[0], c, s);
                    for i in 0..n {
                        let vp = v[(i, p)];
                        let vq = v[(i, q)];
                        v[(i, p)] = c * vp - s * vq;
                        v[(i, q)] = s * vp + c * vq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let norms: Vec<T> = work
            .iter()
            .map(|c| c.iter().map(|&x| x * x).sum::<T>().sqrt())
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

        let mut u = Matrix::zeros(m, n);
        let mut v_sorted = Matrix::zeros(n, n);
        let mut singular_values = Vec::with_capacity(n);
        for (dst, &src) in order.iter().enumerate() {
            let sigma = norms[src];
            let mut sign = T::one();
            let mut biggest = T::zero();
            for i in 0..n {
                if v[(i, src)].abs() > biggest {
                    biggest = v[(i, src)].abs();
                    sign = v[(i, src)].signum();
                }
            }
            for i in 0..n {
                v_sorted[(i, dst)] = sign * v[(i, src)];
            }
            if sigma > T::zero() {
                for i in 0..m {
                    u[(i, dst)] = sign * work[src][i] / sigma;
                }
            }
            singular_values.push(sigma);
        }
        Ok(Self {
            u,
            singular_values,
            v: v_sorted,
        })
    }

    /// Ratio of smallest to largest singular value (0 for an all-zero matrix).
    pub fn condition_ratio(&self) -> T {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if hi > T::zero() => lo / hi,
            _ => T::zero(),
        }
    }
}

fn column_products<T: Real>(a: &[T], b: &[T]) -> (T, T, T) {
    let mut alpha = T::zero();
    let mut beta = T::zero();
    let mut gamma = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        alpha += x * x;
        beta += y * y;
        gamma += x * y;
    }
    (alpha, beta, gamma)
}

fn rotate<T: Real>(p: &mut [T], q: &mut [T], c: T, s: T) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch("Cholesky of a non-square matrix".into()));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!("pivot {j} is {d}")));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                let yk = y[k];
                y[i] -= lik * yk;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                let yk = y[k];
                y[i] -= lki * yk;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    pub fn determinant(&self) -> T {
        let n = self.l.rows();
        (0..n).map(|i| self.l[(i, i)] * self.l[(i, i)]).fold(T::one(), |a, b| a * b)
    }
}

/// Checks that `a` is symmetric (to `1e-10` relative) and positive definite.
pub fn check_spd<T: Real>(a: &Matrix<T>, what: &str) -> Result<Cholesky<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!("{what} is not square")));
    }
    let tol = T::lit(1e-10) * (T::one() + a.max_abs());
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
            }
        }
    }
    Cholesky::new(a).map_err(|_| Error::NotPositiveDefinite(what.to_string()))
}
