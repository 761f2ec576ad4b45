use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjust::AdjustmentMethod;
use crate::diagnostics::DEFAULT_ALPHA;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
    Shift,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::A,
        Family::B,
        Family::C,
        Family::D,
        Family::E,
        Family::F,
        Family::G,
    ];

    pub fn task(self) -> Task {
        match self {
            Family::A | Family::B | Family::E => Task::Regression,
            Family::C | Family::D => Task::Classification,
            Family::F | Family::G => Task::Shift,
        }
    }

    /// Data-generating scenarios run in every replication.
    pub fn scenarios(self) -> &'static [&'static str] {
        match self {
            Family::A | Family::C => &["correct"],
            Family::B | Family::D => &["mispecified"],
            Family::E => &["correct", "mispecified"],
            Family::F => &["shift_fixed_var_y"],
            Family::G => &["shift_varying_var_y"],
        }
    }

    pub fn default_methods(self) -> Vec<AdjustmentMethod> {
        match self {
            Family::E => AdjustmentMethod::ALL.to_vec(),
            _ => vec![AdjustmentMethod::LinearCa, AdjustmentMethod::LinearRes],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown family `{s}` (expected A..G)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub replications: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub master_seed: u64,
    pub adjustment_methods: Vec<AdjustmentMethod>,
    pub alpha: f64,
    /// Where to write result files; `None` keeps everything in memory.
    pub output_dir: Option<PathBuf>,
    /// Keep the eight-value `sigma_ay` list for the shift grid, with the
    /// ninth environment reusing 0.8.
    pub paper_literal_grid: bool,
}

impl ExperimentConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            replications: 200,
            n_train: 10_000,
            n_test: 10_000,
            master_seed: 0,
            adjustment_methods: family.default_methods(),
            alpha: DEFAULT_ALPHA,
            output_dir: None,
            paper_literal_grid: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParam("replications must be at least 1".into()));
        }
        if self.n_train < 100 || self.n_test < 100 {
            return Err(Error::InvalidParam(format!(
                "n_train and n_test must be at least 100, got {} and {}",
                self.n_train, self.n_test
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.adjustment_methods.is_empty() {
            return Err(Error::InvalidParam("no adjustment methods selected".into()));
        }
        if self.family.task() == Task::Shift
            && self.adjustment_methods.iter().any(|m| m.is_additive())
        {
            return Err(Error::InvalidParam(
                "shift families support linear-ca and linear-res only".into(),
            ));
        }
        Ok(())
    }
}

/// One test environment of the shift grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub sigma_aa: f64,
    pub sigma_ay: f64,
    pub sigma_yy: f64,
}

impl EnvironmentSpec {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        [[self.sigma_aa, self.sigma_ay], [self.sigma_ay, self.sigma_yy]]
    }
}

pub const SIGMA_AY_GRID: [f64; 9] = [-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8];
pub const SIGMA_AY_GRID_LITERAL: [f64; 8] = [-0.8, -0.6, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8];

/// The nine test environments. `sigma_aa` runs 1.00..3.00 in steps of 0.25;
/// `sigma_yy` follows it when `vary_y` is set and stays at 1 otherwise.
pub fn shift_grid(vary_y: bool, paper_literal: bool) -> Vec<EnvironmentSpec> {
    (0..9)
        .map(|e| {
            let sigma_ay = if paper_literal {
                SIGMA_AY_GRID_LITERAL[e.min(7)]
            } else {
                SIGMA_AY_GRID[e]
            };
            let step = 1.0 + 0.25 * e as f64;
            EnvironmentSpec {
                sigma_aa: step,
                sigma_ay,
                sigma_yy: if vary_y { step } else { 1.0 },
            }
        })
        .collect()
}
