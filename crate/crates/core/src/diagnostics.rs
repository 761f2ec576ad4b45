//! Conditional independence pattern checks on (prediction, outcome,
//! confounder) triples.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{correlation, partial_correlation, Matrix};
use crate::scalar::Real;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const MIN_ROWS: usize = 20;

/// One value per relation among prediction `yhat`, outcome `y` and a
/// confounder `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relations<V> {
    pub yhat_y: V,
    pub yhat_a: V,
    pub a_y: V,
    pub yhat_y_given_a: V,
    pub yhat_a_given_y: V,
    pub a_y_given_yhat: V,
}

impl<V: Copy> Relations<V> {
    pub fn to_array(&self) -> [V; 6] {
        [
            self.yhat_y,
            self.yhat_a,
            self.a_y,
            self.yhat_y_given_a,
            self.yhat_a_given_y,
            self.a_y_given_yhat,
        ]
    }

    pub fn map<W>(&self, mut f: impl FnMut(V, bool) -> W) -> Relations<W> {
        Relations {
            yhat_y: f(self.yhat_y, false),
            yhat_a: f(self.yhat_a, false),
            a_y: f(self.a_y, false),
            yhat_y_given_a: f(self.yhat_y_given_a, true),
            yhat_a_given_y: f(self.yhat_a_given_y, true),
            a_y_given_yhat: f(self.a_y_given_yhat, true),
        }
    }
}

pub const RELATION_NAMES: [&str; 6] = [
    "cor(yhat,y)",
    "cor(yhat,a)",
    "cor(a,y)",
    "cor(yhat,y|a)",
    "cor(yhat,a|y)",
    "cor(a,y|yhat)",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConfounderDiagnostics<T> {
    pub correlations: Relations<T>,
    /// Two-sided Fisher z p-values.
    pub p_values: Relations<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DiagnosticReport<T> {
    pub n: usize,
    /// One entry per confounder column.
    pub confounders: Vec<ConfounderDiagnostics<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Deconfounded,
    Confounded,
    ResidualUnfaithful,
    Indeterminate,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::Deconfounded,
        Verdict::Confounded,
        Verdict::ResidualUnfaithful,
        Verdict::Indeterminate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Deconfounded => "deconfounded",
            Verdict::Confounded => "confounded",
            Verdict::ResidualUnfaithful => "residual_unfaithful",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

/// Two-sided p-value of `H0: rho = 0` from the Fisher z transform with
/// `df` effective degrees of freedom.
pub fn fisher_z_p_value(r: f64, df: usize) -> f64 {
    if !r.is_finite() {
        return f64::NAN;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let z = r.atanh() * (df as f64).sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Computes the six marginal and partial correlations for every confounder
/// column, with Fisher z p-values (`n - 3` degrees of freedom for marginal,
/// `n - 4` for partial correlations).
pub fn ci_pattern<T: Real>(y_hat: &[T], y: &[T], a: &Matrix<T>) -> Result<DiagnosticReport<T>> {
    let n = y.len();
    if y_hat.len() != n || a.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "y_hat has {}, y has {n}, a has {} rows",
            y_hat.len(),
            a.rows()
        )));
    }
    if n < MIN_ROWS {
        return Err(Error::InsufficientRows { needed: MIN_ROWS, got: n });
    }
    if a.cols() == 0 {
        return Err(Error::InvalidParam("no confounder columns".into()));
    }
    let confounders = a
        .columns()
        .iter()
        .map(|col| {
            let correlations = Relations {
                yhat_y: correlation(y_hat, y),
                yhat_a: correlation(y_hat, col),
                a_y: correlation(col, y),
                yhat_y_given_a: partial_correlation(y_hat, y, col)?,
                yhat_a_given_y: partial_correlation(y_hat, col, y)?,
                a_y_given_yhat: partial_correlation(col, y, y_hat)?,
            };
            let p_values = correlations.map(|r, partial| {
                fisher_z_p_value(r.as_f64(), n - if partial { 4 } else { 3 })
            });
            Ok(ConfounderDiagnostics { correlations, p_values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticReport { n, confounders })
}

/// Classifies each confounder's pattern at level `alpha`.
pub fn classify_pattern<T: Real>(report: &DiagnosticReport<T>, alpha: f64) -> Result<Vec<Verdict>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(report
        .confounders
        .iter()
        .map(|c| classify_one(&c.p_values, alpha))
        .collect())
}

/// One verdict for a whole prediction: deconfounded only when every
/// confounder is, confounded when any confounder is, residual-unfaithful when
/// every confounder is, indeterminate otherwise.
pub fn combine_verdicts(verdicts: &[Verdict]) -> Verdict {
    let all = |v: Verdict| !verdicts.is_empty() && verdicts.iter().all(|&x| x == v);
    if all(Verdict::Deconfounded) {
        Verdict::Deconfounded
    } else if verdicts.contains(&Verdict::Confounded) {
        Verdict::Confounded
    } else if all(Verdict::ResidualUnfaithful) {
        Verdict::ResidualUnfaithful
    } else {
        Verdict::Indeterminate
    }
}

fn classify_one(p: &Relations<f64>, alpha: f64) -> Verdict {
    let sig = p.map(|v, _| v < alpha);
    let others = [sig.yhat_y, sig.yhat_a, sig.a_y, sig.yhat_y_given_a, sig.a_y_given_yhat];
    if !sig.yhat_a_given_y && others.iter().all(|&s| s) {
        Verdict::Deconfounded
    } else if !sig.yhat_a && sig.yhat_a_given_y {
        Verdict::ResidualUnfaithful
    } else if sig.yhat_a && sig.yhat_a_given_y {
        Verdict::Confounded
    } else {
        Verdict::Indeterminate
    }
}
