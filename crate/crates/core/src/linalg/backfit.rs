//! Additive models fit by backfitting with a penalized cubic B-spline smoother.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::decomp::Cholesky;
use crate::linalg::stats::{mean, variance};
use crate::linalg::Matrix;
use crate::scalar::Real;

const DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackfitOptions {
    pub interior_knots: usize,
    pub lambda: f64,
    /// Convergence threshold on the largest change of any component, relative
    /// to the standard deviation of the target.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        Self {
            interior_knots: 10,
            lambda: 1.0,
            tol: 1e-6,
            max_sweeps: 2000,
        }
    }
}

/// Clamped cubic B-spline on a covariate rescaled to mean 0 and sd 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SplineCurve<T> {
    pub center: T,
    pub scale: T,
    pub knots: Vec<T>,
    pub coefficients: Vec<T>,
}

impl<T: Real> SplineCurve<T> {
    fn lo(&self) -> T {
        self.knots[0]
    }

    fn hi(&self) -> T {
        self.knots[self.knots.len() - 1]
    }

    pub fn eval(&self, x: T) -> T {
        let z = (x - self.center) / self.scale;
        let c = &self.coefficients;
        let t = &self.knots;
        let m = c.len();
        let three = T::lit(3.0);
        if z < self.lo() {
            let slope = three * (c[1] - c[0]) / (t[4] - t[1]);
            return c[0] + slope * (z - self.lo());
        }
        if z > self.hi() {
            let slope = three * (c[m - 1] - c[m - 2]) / (t[m + 2] - t[m - 1]);
            return c[m - 1] + slope * (z - self.hi());
        }
        let (start, vals) = basis_row(t, m, z);
        vals.iter().enumerate().map(|(r, &v)| v * c[start + r]).sum()
    }
}

/// Step function over the (at most two) observed levels of a covariate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StepCurve<T> {
    pub levels: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> StepCurve<T> {
    /// Value at the nearest observed level (ties go to the lower level).
    pub fn eval(&self, x: T) -> T {
        let mut best = 0;
        for (i, &l) in self.levels.iter().enumerate() {
            if (x - l).abs() < (x - self.levels[best]).abs() {
                best = i;
            }
        }
        self.values[best]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum Component<T> {
    Spline(SplineCurve<T>),
    Step(StepCurve<T>),
}

impl<T: Real> Component<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            Component::Spline(s) => s.eval(x),
            Component::Step(s) => s.eval(x),
        }
    }

    pub fn eval_all(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// `target = intercept + sum_j f_j(covariate_j) + residual`, each `f_j` centered
/// over the fitting sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdditiveFit<T> {
    pub intercept: T,
    pub components: Vec<Component<T>>,
    /// `n x q` matrix of `f_j` evaluated at the fitting sample.
    pub fitted_components: Matrix<T>,
    pub residuals: Vec<T>,
    pub sweeps: usize,
}

impl<T: Real> AdditiveFit<T> {
    /// Evaluates component `j` at new covariate values.
    pub fn component(&self, j: usize, xs: &[T]) -> Vec<T> {
        self.components[j].eval_all(xs)
    }

    pub fn predict(&self, covariates: &Matrix<T>) -> Result<Vec<T>> {
        if covariates.cols() != self.components.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariates, fit has {}",
                covariates.cols(),
                self.components.len()
            )));
        }
        Ok((0..covariates.rows())
            .map(|i| {
                self.intercept
                    + covariates
                        .row(i)
                        .iter()
                        .zip(&self.components)
                        .map(|(&x, c)| c.eval(x))
                        .sum::<T>()
            })
            .collect())
    }
}

pub fn backfit<T: Real>(target: &[T], covariates: &Matrix<T>) -> Result<AdditiveFit<T>> {
    backfit_with(target, covariates, &BackfitOptions::default())
}

/// Sparse design row: up to four consecutive nonzero basis values.
#[derive(Clone, Copy)]
struct Row<T> {
    start: usize,
    len: usize,
    vals: [T; 4],
}

enum Smoother<T> {
    Spline { center: T, scale: T, knots: Vec<T> },
    Step { levels: Vec<T> },
}

struct Block<T> {
    smoother: Smoother<T>,
    rows: Vec<Row<T>>,
    size: usize,
    /// Column means of the basis, used to center the fitted curve.
    basis_means: Vec<T>,
    system: Cholesky<T>,
}

pub fn backfit_with<T: Real>(
    target: &[T],
    covariates: &Matrix<T>,
    opts: &BackfitOptions,
) -> Result<AdditiveFit<T>> {
    let (n, q) = covariates.shape();
    if target.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "target length {} vs {n} rows",
            target.len()
        )));
    }
    if n < 50 {
        return Err(Error::InsufficientRows { needed: 50, got: n });
    }
    if q == 0 {
        return Err(Error::InvalidParam("backfit needs at least one covariate".into()));
    }

    let lambda = T::lit(opts.lambda);
    let mut blocks = Vec::with_capacity(q);
    for j in 0..q {
        blocks.push(build_block(&covariates.column(j), j, opts.interior_knots, lambda)?);
    }

    let intercept = mean(target);
    let centered: Vec<T> = target.iter().map(|&y| y - intercept).collect();
    let rhs0: Vec<Vec<T>> = blocks.iter().map(|b| project(b, &centered)).collect();
    let cross: Vec<Vec<Option<Matrix<T>>>> = (0..q)
        .map(|j| {
            (0..q)
                .map(|k| (j != k).then(|| cross_gram(&blocks[j], &blocks[k])))
                .collect()
        })
        .collect();

    let sd = variance(target).sqrt();
    let tol = T::lit(opts.tol) * if sd > T::zero() { sd } else { T::one() };
    let mut coefs: Vec<Vec<T>> = blocks.iter().map(|b| vec![T::zero(); b.size]).collect();
    let mut sweeps = 0;
    let mut last_change = T::infinity();
    while last_change > tol {
        if sweeps == opts.max_sweeps {
            return Err(Error::NoConvergence {
                sweeps,
                last_change: last_change.as_f64(),
            });
        }
        sweeps += 1;
        last_change = T::zero();
        for j in 0..q {
            let mut rhs = rhs0[j].clone();
            for (k, coef_k) in coefs.iter().enumerate() {
                if let Some(g) = &cross[j][k] {
                    for (r, v) in rhs.iter_mut().enumerate() {
                        let s: T = g.row(r).iter().zip(coef_k).map(|(&a, &b)| a * b).sum();
                        *v -= s;
                    }
                }
            }
            let mut next = blocks[j].system.solve(&rhs);
            let shift: T = next
                .iter()
                .zip(&blocks[j].basis_means)
                .map(|(&c, &w)| c * w)
                .sum();
            for c in next.iter_mut() {
                *c -= shift;
            }
            // Basis functions are nonnegative and sum to one, so the largest
            // coefficient change bounds the sup-change of the curve.
            for (a, b) in next.iter().zip(&coefs[j]) {
                last_change = last_change.max((*a - *b).abs());
            }
            coefs[j] = next;
        }
    }

    let mut fitted_components = Matrix::zeros(n, q);
    let mut residuals = centered;
    for (j, block) in blocks.iter().enumerate() {
        for (i, row) in block.rows.iter().enumerate() {
            let v: T = (0..row.len).map(|r| row.vals[r] * coefs[j][row.start + r]).sum();
            fitted_components[(i, j)] = v;
            residuals[i] -= v;
        }
    }
    let components = blocks
        .into_iter()
        .zip(coefs)
        .map(|(b, c)| match b.smoother {
            Smoother::Spline { center, scale, knots } => Component::Spline(SplineCurve {
                center,
                scale,
                knots,
                coefficients: c,
            }),
            Smoother::Step { levels } => Component::Step(StepCurve { levels, values: c }),
        })
        .collect();

    Ok(AdditiveFit {
        intercept,
        components,
        fitted_components,
        residuals,
        sweeps,
    })
}

fn build_block<T: Real>(x: &[T], j: usize, interior: usize, lambda: T) -> Result<Block<T>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite covariate"));
    let mut levels = sorted.clone();
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::ConstantColumn {
            column: format!("covariate {}", j + 1),
        });
    }

    let (smoother, rows, size, penalty): (Smoother<T>, Vec<Row<T>>, usize, Option<Matrix<T>>) = if levels.len() == 2 {
        let rows = x
            .iter()
            .map(|&v| {
                let mut vals = [T::zero(); 4];
                vals[0] = T::one();
                Row {
                    start: usize::from(v == levels[1]),
                    len: 1,
                    vals,
                }
            })
            .collect();
        (Smoother::Step { levels }, rows, 2, None)
    } else {
        let center = mean(x);
        let scale = variance(x).sqrt();
        let z: Vec<T> = sorted.iter().map(|&v| (v - center) / scale).collect();
        let knots = knot_vector(&z, interior);
        let size = knots.len() - DEGREE - 1;
        let rows = x
            .iter()
            .map(|&v| {
                let (start, vals) = basis_row(&knots, size, (v - center) / scale);
                Row { start, len: 4, vals }
            })
            .collect();
        let penalty = greville_penalty(&knots, size).scale(lambda);
        (Smoother::Spline { center, scale, knots }, rows, size, Some(penalty))
    };

    let n = T::from_usize_lossy(x.len());
    let mut gram = Matrix::zeros(size, size);
    let mut basis_means = vec![T::zero(); size];
    for row in &rows {
        for a in 0..row.len {
            basis_means[row.start + a] += row.vals[a] / n;
            for b in 0..row.len {
                gram[(row.start + a, row.start + b)] += row.vals[a] * row.vals[b];
            }
        }
    }
    let system = match penalty {
        Some(p) => gram.add(&p)?,
        None => gram,
    };
    let system = Cholesky::new(&system).map_err(|_| Error::RankDeficient { ratio: 0.0 })?;
    Ok(Block {
        smoother,
        rows,
        size,
        basis_means,
        system,
    })
}

/// Clamped knot vector with interior knots at equally spaced sample quantiles.
fn knot_vector<T: Real>(sorted: &[T], interior: usize) -> Vec<T> {
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let mut inner: Vec<T> = (1..=interior)
        .map(|i| quantile(sorted, i as f64 / (interior + 1) as f64))
        .filter(|&k| k > lo && k < hi)
        .collect();
    inner.dedup();
    let mut knots = vec![lo; DEGREE + 1];
    knots.extend(inner);
    knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
    knots
}

/// Linear-interpolation quantile of sorted data.
fn quantile<T: Real>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = T::lit(pos - i as f64);
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Nonzero cubic B-spline values at `z` (clamped into the knot range).
fn basis_row<T: Real>(t: &[T], size: usize, z: T) -> (usize, [T; 4]) {
    let z = z.max(t[0]).min(t[t.len() - 1]);
    // Span s with t[s] <= z < t[s+1], restricted to DEGREE..size-1.
    let mut lo = DEGREE;
    let mut hi = size;
    if z >= t[size] {
        lo = size - 1;
    } else {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if z < t[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let s = lo;
    let mut n = [T::zero(); 4];
    let mut left = [T::zero(); 4];
    let mut right = [T::zero(); 4];
    n[0] = T::one();
    for j in 1..=DEGREE {
        left[j] = z - t[s + 1 - j];
        right[j] = t[s + j] - z;
        let mut saved = T::zero();
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    (s - DEGREE, n)
}

/// Second divided differences of the coefficients over the Greville abscissae,
/// scaled by the mean abscissa spacing. Its null space is exactly the linear
/// functions, also for unevenly spaced knots.
fn greville_penalty<T: Real>(t: &[T], size: usize) -> Matrix<T> {
    let three = T::lit(3.0);
    let g: Vec<T> = (0..size).map(|i| (t[i + 1] + t[i + 2] + t[i + 3]) / three).collect();
    let h_bar = (g[size - 1] - g[0]) / T::from_usize_lossy(size - 1);
    let mut d = Matrix::zeros(size - 2, size);
    for i in 0..size - 2 {
        let h0 = g[i + 1] - g[i];
        let h1 = g[i + 2] - g[i + 1];
        d[(i, i)] = h_bar / h0;
        d[(i, i + 1)] = -h_bar / h0 - h_bar / h1;
        d[(i, i + 2)] = h_bar / h1;
    }
    d.gram()
}

fn project<T: Real>(block: &Block<T>, v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); block.size];
    for (row, &y) in block.rows.iter().zip(v) {
        for a in 0..row.len {
            out[row.start + a] += row.vals[a] * y;
        }
    }
    out
}

fn cross_gram<T: Real>(a: &Block<T>, b: &Block<T>) -> Matrix<T> {
    let mut g = Matrix::zeros(a.size, b.size);
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        for i in 0..ra.len {
            for k in 0..rb.len {
                g[(ra.start + i, rb.start + k)] += ra.vals[i] * rb.vals[k];
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ols_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn normals(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn basis_is_partition_of_unity() {
        let z: Vec<f64> = (0..200).map(|i| ((i * i) as f64).sqrt() / 7.0 - 3.0).collect();
        let t = knot_vector(&z, 10);
        let size = t.len() - 4;
        for &x in &[-3.0, -2.2, 0.0, 0.5, 1.7, z[199]] {
            let (_, vals) = basis_row(&t, size, x);
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn penalty_annihilates_linear_coefficients() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut z: Vec<f64> = normals(&mut rng, 500).into_iter().map(|v: f64| v.exp()).collect();
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let t = knot_vector(&z, 10);
        let size = t.len() - 4;
        let p = greville_penalty(&t, size);
        let g: Vec<f64> = (0..size).map(|i| (t[i + 1] + t[i + 2] + t[i + 3]) / 3.0).collect();
        let c: Vec<f64> = g.iter().map(|v| 2.0 - 0.7 * v).collect();
        let pc = p.mat_vec(&c).unwrap();
        assert!(pc.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn linear_target_gives_linear_component() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let c = normals(&mut rng, 300);
        let y: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let fit = backfit(&y, &Matrix::column_vector(c.clone())).unwrap();
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-6));
        let f = &fit.components[0];
        let slope = (f.eval(1.0) - f.eval(-1.0)) / 2.0;
        assert!((slope - 2.0).abs() < 1e-6);
        // Linear extrapolation beyond the data range.
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((f.eval(lo - 1.0) - f.eval(lo) + 2.0).abs() < 1e-5);
    }

    #[test]
    fn squared_covariate_is_captured() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let c = normals(&mut rng, 5000);
        let y: Vec<f64> = c.iter().map(|v| v * v).collect();
        let fit = backfit(&y, &Matrix::column_vector(c.clone())).unwrap();
        let resid_share = variance(&fit.residuals) / variance(&y);
        // Direct quadratic regression on the known term leaves no residual at
        // all; the spline must come within 1% of the target variance.
        let design = Matrix::from_columns(&[c.clone(), y.clone()]).unwrap();
        let poly = ols_fit(&design, &Matrix::column_vector(y.clone()), true).unwrap();
        assert!(poly.residuals.max_abs() < 1e-8);
        assert!(resid_share <= 0.01, "{resid_share}");
    }

    #[test]
    fn binary_covariate_gives_group_means() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let b: Vec<f64> = (0..400).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let e = normals(&mut rng, 400);
        let y: Vec<f64> = b.iter().zip(&e).map(|(b, e)| 1.5 * b + e).collect();
        let fit = backfit(&y, &Matrix::column_vector(b.clone())).unwrap();
        let group = |lvl: f64| {
            let v: Vec<f64> = y.iter().zip(&b).filter(|(_, &x)| x == lvl).map(|(y, _)| *y).collect();
            mean(&v)
        };
        let f = &fit.components[0];
        assert!((fit.intercept + f.eval(0.0) - group(0.0)).abs() < 1e-10);
        assert!((fit.intercept + f.eval(1.0) - group(1.0)).abs() < 1e-10);
        assert!((f.eval(0.2) - f.eval(0.0)).abs() == 0.0);
    }

    #[test]
    fn matches_ols_on_linear_data_with_correlated_covariates() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 2000;
        let a = normals(&mut rng, n);
        let e = normals(&mut rng, n);
        let b: Vec<f64> = a.iter().zip(&e).map(|(a, e)| 0.9 * a + 0.3 * e).collect();
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 0.4 + 1.3 * a - 0.8 * b).collect();
        let x = Matrix::from_columns(&[a, b]).unwrap();
        let fit = backfit(&y, &x).unwrap();
        let ols = ols_fit(&x, &Matrix::column_vector(y), true).unwrap();
        for j in 0..2 {
            let f = &fit.components[j];
            let slope = f.eval(1.0) - f.eval(0.0);
            assert!((slope - ols.coefficients[(j, 0)]).abs() < 1e-4, "{slope}");
        }
        let at_origin = fit.predict(&Matrix::zeros(1, 2)).unwrap()[0];
        assert!((at_origin - ols.intercepts[0]).abs() < 1e-4);
    }

    #[test]
    fn components_are_centered() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = normals(&mut rng, 800);
        let b = normals(&mut rng, 800);
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a.sin() + b * b).collect();
        let fit = backfit(&y, &Matrix::from_columns(&[a, b]).unwrap()).unwrap();
        for j in 0..2 {
            assert!(mean(&fit.fitted_components.column(j)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_constant_and_short_input() {
        let y = vec![1.0; 60];
        let x = Matrix::column_vector(vec![2.0; 60]);
        assert!(matches!(backfit(&y, &x), Err(Error::ConstantColumn { .. })));
        let x = Matrix::column_vector((0..10).map(f64::from).collect());
        assert!(matches!(
            backfit(&y[..10], &x),
            Err(Error::InsufficientRows { .. })
        ));
    }
}
