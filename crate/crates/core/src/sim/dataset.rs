use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, standardize, variance, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split `{other}`"))),
        }
    }
}

/// How the numeric columns were scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Raw,
    /// Every `x`, `a` and real-valued `y` column has mean 0 and variance 1.
    Standardized,
    /// Standardized on the concatenation with the partner split.
    JointlyStandardized,
}

/// Inputs `x` (n x p), confounders `a` (n x k) and outcome `y` for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub a: Matrix<T>,
    pub y: Vec<T>,
    pub split: Split,
    pub scaling: Scaling,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: Matrix<T>, a: Matrix<T>, y: Vec<T>, split: Split) -> Result<Self> {
        if x.rows() != y.len() || a.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "x has {} rows, a has {}, y has {}",
                x.rows(),
                a.rows(),
                y.len()
            )));
        }
        Ok(Self {
            x,
            a,
            y,
            split,
            scaling: Scaling::Raw,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.a.cols()
    }

    /// True when `y` only takes the values 0 and 1.
    pub fn binary_outcome(&self) -> bool {
        self.y.iter().all(|&v| v == T::zero() || v == T::one())
    }

    pub fn with_x(&self, x: Matrix<T>) -> Result<Self> {
        let mut out = self.clone();
        if x.rows() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "replacement x has {} rows, dataset {}",
                x.rows(),
                self.n()
            )));
        }
        out.x = x;
        Ok(out)
    }

    /// Checks the standardized-column invariant (mean within `1e-8`, variance
    /// within `1e-6` of 1). A binary outcome is exempt.
    pub fn check_standardized(&self) -> bool {
        let ok = |c: &[T]| {
            mean(c).abs() <= T::lit(1e-8) && (variance(c) - T::one()).abs() <= T::lit(1e-6)
        };
        self.x.columns().iter().all(|c| ok(c))
            && self.a.columns().iter().all(|c| ok(c))
            && (self.binary_outcome() || ok(&self.y))
    }

    /// Column names in CSV order.
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        h.extend((1..=self.k()).map(|j| format!("a{j}")));
        h.push("y".into());
        h.push("split".into());
        h
    }
}

/// Standardizes `x`, `a` and (unless binary) `y` of both splits using moments
/// of their concatenation.
pub fn standardize_jointly<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let binary = train.binary_outcome() && test.binary_outcome();
    let block = |d: &Dataset<T>| -> Result<Matrix<T>> {
        let m = d.x.hstack(&d.a)?;
        if binary {
            Ok(m)
        } else {
            m.hstack(&Matrix::column_vector(d.y.clone()))
        }
    };
    let pooled = block(train)?.vstack(&block(test)?)?;
    let (_, stats) = standardize(&pooled, None)?;
    let rebuild = |d: &Dataset<T>| -> Result<Dataset<T>> {
        let (s, _) = standardize(&block(d)?, Some(&stats))?;
        let (p, k) = (d.p(), d.k());
        let cols = s.columns();
        let x = Matrix::from_columns(&cols[..p])?;
        let a = Matrix::from_columns(&cols[p..p + k])?;
        let y = if binary { d.y.clone() } else { cols[p + k].clone() };
        let mut out = Dataset::new(x, a, y, d.split)?;
        out.scaling = Scaling::JointlyStandardized;
        Ok(out)
    };
    Ok((rebuild(train)?, rebuild(test)?))
}

/// Standardizes a single split on its own moments.
pub fn standardize_dataset<T: Real>(d: &Dataset<T>) -> Result<Dataset<T>> {
    let (x, _) = standardize(&d.x, None)?;
    let (a, _) = standardize(&d.a, None)?;
    let y = if d.binary_outcome() {
        d.y.clone()
    } else {
        standardize(&Matrix::column_vector(d.y.clone()), None)?.0.column(0)
    };
    let mut out = Dataset::new(x, a, y, d.split)?;
    out.scaling = Scaling::Standardized;
    Ok(out)
}

/// Writes one or more splits under a shared header.
pub fn write_csv<T: Real, W: Write>(sets: &[&Dataset<T>], out: W) -> Result<()> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidParam("no datasets to write".into()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(first.header())?;
    for d in sets {
        if d.p() != first.p() || d.k() != first.k() {
            return Err(Error::DimensionMismatch("splits disagree on p or k".into()));
        }
        for i in 0..d.n() {
            let mut rec: Vec<String> = d.x.row(i).iter().map(|v| format_float(*v)).collect();
            rec.extend(d.a.row(i).iter().map(|v| format_float(*v)));
            rec.push(format_float(d.y[i]));
            rec.push(d.split.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path<T: Real>(sets: &[&Dataset<T>], path: impl AsRef<Path>) -> Result<()> {
    write_csv(sets, std::fs::File::create(path)?)
}

/// 17 significant digits.
pub fn format_float<T: Real>(v: T) -> String {
    format!("{v:.16e}")
}

/// Reads a CSV with header `x1..xp,a1..ak,y,split` and returns the splits
/// present, train first.
pub fn read_csv<T: Real, R: Read>(input: R) -> Result<Vec<Dataset<T>>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let p = header.iter().filter(|h| is_indexed(h, 'x')).count();
    let k = header.iter().filter(|h| is_indexed(h, 'a')).count();
    let mut expected: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    expected.extend((1..=k).map(|j| format!("a{j}")));
    expected.push("y".into());
    expected.push("split".into());
    if header != expected {
        return Err(Error::Parse(format!(
            "expected header {}, found {}",
            expected.join(","),
            header.join(",")
        )));
    }

    let mut rows: [Vec<Vec<T>>; 2] = [Vec::new(), Vec::new()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let split: Split = rec[p + k + 1].parse()?;
        let values = (0..=p + k)
            .map(|j| {
                rec[j].trim().parse::<f64>().map(T::lit).map_err(|e| {
                    Error::Parse(format!("row {}, column {}: {e}", line + 2, header[j]))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows[usize::from(split == Split::Test)].push(values);
    }

    let mut out = Vec::new();
    for (idx, split) in [Split::Train, Split::Test].into_iter().enumerate() {
        let block = &rows[idx];
        if block.is_empty() {
            continue;
        }
        let n = block.len();
        let take = |lo: usize, hi: usize| -> Result<Matrix<T>> {
            let data = block.iter().flat_map(|r| r[lo..hi].iter().copied()).collect();
            Matrix::from_row_major(n, hi - lo, data)
        };
        out.push(Dataset::new(
            take(0, p)?,
            take(p, p + k)?,
            block.iter().map(|r| r[p + k]).collect(),
            split,
        )?);
    }
    Ok(out)
}

pub fn read_csv_path<T: Real>(path: impl AsRef<Path>) -> Result<Vec<Dataset<T>>> {
    read_csv(std::fs::File::open(path)?)
}

fn is_indexed(h: &str, prefix: char) -> bool {
    h.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}
