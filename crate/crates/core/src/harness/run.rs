use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use super::config::{shift_grid, ExperimentConfig, Family, Task};
use super::output::write_outputs;
use super::summary::{summarize, Summary};
use crate::adjust::{adjust, causality_aware, remove_confounder_part, AdjustmentMethod, FitArtifacts};
use crate::diagnostics::{ci_pattern, classify_pattern, Verdict};
use crate::error::{Error, Result};
use crate::learners::{evaluate, fit_for, fit_linear, ModelKind};
use crate::linalg::{covariance, ols_fit};
use crate::sim::{
    gen_classification_pair, gen_regression_pair, gen_shift_data, rng, sample_classification_params,
    sample_regression_params, sample_shift_params, Dataset, Environment,
};
use crate::theory::{expected_mse, expected_mse_shift, ShiftTheoryParams};

/// Names used in the `quantity` column of result files.
pub mod quantity {
    pub const MSE: &str = "mse";
    pub const ACCURACY: &str = "accuracy";
    pub const COV_XY: &str = "cov_xy";
    pub const MSE_EXPECTED: &str = "mse_expected";
    pub const MSE_ENV: &str = "mse_env";
    pub const MSE_ENV_EXPECTED: &str = "mse_env_expected";
    pub const STABILITY_ERROR: &str = "stability_error";
    pub const WEIGHT: &str = "weight";
    pub const PARAM: &str = "param";
    pub const ERROR: &str = "error";
    pub const COR_PREFIX: &str = "cor_";
    pub const P_PREFIX: &str = "p_";
    pub const VERDICT_PREFIX: &str = "verdict_";
}

/// One long-format result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: String,
    pub method: String,
    pub quantity: String,
    pub component: String,
    pub value: f64,
}

impl Record {
    fn new(scenario: &str, method: &str, quantity: &str, component: &str, value: f64) -> Self {
        Self {
            scenario: scenario.into(),
            method: method.into(),
            quantity: quantity.into(),
            component: component.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub records: Vec<Record>,
    /// Set when the replication aborted; `records` is then empty.
    pub error: Option<String>,
}

impl ReplicationResult {
    pub fn value(&self, scenario: &str, method: &str, quantity: &str, component: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| {
                r.scenario == scenario
                    && r.method == method
                    && r.quantity == quantity
                    && r.component == component
            })
            .map(|r| r.value)
    }

    /// `(component, value)` pairs in recorded order.
    pub fn values(&self, scenario: &str, method: &str, quantity: &str) -> Vec<(String, f64)> {
        self.records
            .iter()
            .filter(|r| r.scenario == scenario && r.method == method && r.quantity == quantity)
            .map(|r| (r.component.clone(), r.value))
            .collect()
    }

    /// Main metric: MSE for regression, accuracy for classification.
    pub fn metric(&self, scenario: &str, method: AdjustmentMethod) -> Option<f64> {
        let m = method.name();
        self.value(scenario, m, quantity::MSE, "")
            .or_else(|| self.value(scenario, m, quantity::ACCURACY, ""))
    }

    pub fn covariances(&self, scenario: &str, method: AdjustmentMethod) -> Vec<f64> {
        self.values(scenario, method.name(), quantity::COV_XY)
            .into_iter()
            .map(|(_, v)| v)
            .collect()
    }

    pub fn stability_error(&self, scenario: &str, method: AdjustmentMethod) -> Option<f64> {
        self.value(scenario, method.name(), quantity::STABILITY_ERROR, "")
    }

    pub fn environment_mses(&self, scenario: &str, method: AdjustmentMethod) -> Vec<f64> {
        self.values(scenario, method.name(), quantity::MSE_ENV)
            .into_iter()
            .map(|(_, v)| v)
            .collect()
    }

    /// One verdict per confounder, in confounder order.
    pub fn verdicts(&self, scenario: &str, method: AdjustmentMethod) -> Vec<Verdict> {
        let mut out: Vec<(String, Verdict)> = Vec::new();
        for v in Verdict::ALL {
            let q = format!("{}{}", quantity::VERDICT_PREFIX, v.name());
            for (comp, val) in self.values(scenario, method.name(), &q) {
                if val == 1.0 {
                    out.push((comp, v));
                }
            }
        }
        out.sort_by_key(|(c, _)| confounder_index(c));
        out.into_iter().map(|(_, v)| v).collect()
    }
}

/// `"a3"` -> 3; anything else sorts last.
pub(crate) fn confounder_index(c: &str) -> usize {
    c.strip_prefix('a').and_then(|s| s.parse().ok()).unwrap_or(usize::MAX)
}

#[derive(Debug, Clone)]
pub struct FamilyRun {
    pub config: ExperimentConfig,
    pub results: Vec<ReplicationResult>,
    pub summary: Summary,
    /// `output_dir/family_X` when files were written.
    pub output: Option<PathBuf>,
}

/// Runs every replication (in parallel), summarizes, and writes result files
/// when the config names an output directory.
pub fn run_family(config: &ExperimentConfig) -> Result<FamilyRun> {
    config.validate()?;
    let results: Vec<ReplicationResult> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect();
    let summary = summarize(config.family, &results)?;
    let mut run = FamilyRun {
        config: config.clone(),
        results,
        summary,
        output: None,
    };
    if let Some(dir) = &config.output_dir {
        run.output = Some(write_outputs(&run, dir)?);
    }
    Ok(run)
}

/// Runs one replication; errors are captured in the result.
pub fn run_replication(config: &ExperimentConfig, replication: usize) -> ReplicationResult {
    let outcome = match config.family.task() {
        Task::Regression | Task::Classification => run_standard(config, replication),
        Task::Shift => run_shift(config, replication),
    };
    match outcome {
        Ok(records) => ReplicationResult {
            replication,
            records,
            error: None,
        },
        Err(e) => ReplicationResult {
            replication,
            records: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

fn run_standard(config: &ExperimentConfig, r: usize) -> Result<Vec<Record>> {
    let seed = config.master_seed;
    let rep = r as u64;
    let mut records = Vec::new();
    // Both scenarios of a replication share their random streams, so family E
    // compares the two generators on common random numbers.
    for &scenario in config.family.scenarios() {
        let mispecified = scenario == "mispecified";
        let mut prng = rng::stream(seed, rep, rng::PARAMS);
        let mut rtr = rng::stream(seed, rep, rng::TRAIN);
        let mut rts = rng::stream(seed, rep, rng::TEST);
        let (train, test) = if config.family.task() == Task::Regression {
            let params = sample_regression_params(&mut prng, mispecified);
            push_params(&mut records, scenario, &params)?;
            if !mispecified {
                let mse = expected_mse(&params.theory_params()?)?;
                for (m, v) in [
                    (AdjustmentMethod::LinearCa, mse.mse_c),
                    (AdjustmentMethod::LinearRes, mse.mse_r),
                ] {
                    records.push(Record::new(scenario, m.name(), quantity::MSE_EXPECTED, "", v));
                }
            }
            gen_regression_pair::<f64, _>(&params, config.n_train, config.n_test, &mut rtr, &mut rts)?
        } else {
            let params = sample_classification_params(&mut prng, mispecified);
            push_params(&mut records, scenario, &params)?;
            gen_classification_pair::<f64, _>(&params, config.n_train, config.n_test, &mut rtr, &mut rts)?
        };
        for &method in &config.adjustment_methods {
            evaluate_method(&mut records, scenario, method, &train, &test, config.alpha)?;
        }
    }
    Ok(records)
}

fn evaluate_method(
    records: &mut Vec<Record>,
    scenario: &str,
    method: AdjustmentMethod,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    alpha: f64,
) -> Result<()> {
    let m = method.name();
    let adj = adjust(method, train, test)?;
    for (j, col) in adj.test.x.columns().iter().enumerate() {
        let c = covariance(col, &adj.test.y);
        records.push(Record::new(scenario, m, quantity::COV_XY, &format!("x{}", j + 1), c));
    }
    let model = fit_for(&adj.train)?;
    let report = evaluate(&model, &adj.test)?;
    let q = match model.kind {
        ModelKind::Linear => quantity::MSE,
        ModelKind::Logistic => quantity::ACCURACY,
    };
    records.push(Record::new(scenario, m, q, "", report.value()));

    let diag = ci_pattern(&report.predictions, &adj.test.y, &adj.test.a)?;
    let verdicts = classify_pattern(&diag, alpha)?;
    for (i, (conf, verdict)) in diag.confounders.iter().zip(verdicts).enumerate() {
        let comp = format!("a{}", i + 1);
        let rel = ["yhat_y", "yhat_a", "a_y", "yhat_y_given_a", "yhat_a_given_y", "a_y_given_yhat"];
        for ((name, c), p) in rel
            .iter()
            .zip(conf.correlations.to_array())
            .zip(conf.p_values.to_array())
        {
            records.push(Record::new(scenario, m, &format!("{}{name}", quantity::COR_PREFIX), &comp, c));
            records.push(Record::new(scenario, m, &format!("{}{name}", quantity::P_PREFIX), &comp, p));
        }
        for v in Verdict::ALL {
            let q = format!("{}{}", quantity::VERDICT_PREFIX, v.name());
            records.push(Record::new(scenario, m, &q, &comp, f64::from(u8::from(v == verdict))));
        }
    }
    Ok(())
}

fn run_shift(config: &ExperimentConfig, r: usize) -> Result<Vec<Record>> {
    let seed = config.master_seed;
    let rep = r as u64;
    let scenario = config.family.scenarios()[0];
    let grid = shift_grid(config.family == Family::G, config.paper_literal_grid);
    let params = sample_shift_params(
        &mut rng::stream(seed, rep, rng::PARAMS),
        grid.iter().map(|e| e.covariance()).collect(),
    );
    let mut records = Vec::new();
    push_params(&mut records, scenario, &params)?;

    let train: Dataset<f64> =
        gen_shift_data(&params, Environment::Train, config.n_train, &mut rng::stream(seed, rep, rng::TRAIN))?;
    let tests = (0..grid.len())
        .map(|e| {
            gen_shift_data(
                &params,
                Environment::Test(e),
                config.n_test,
                &mut rng::stream(seed, rep, rng::environment(e)),
            )
        })
        .collect::<Result<Vec<Dataset<f64>>>>()?;

    for &method in &config.adjustment_methods {
        let m = method.name();
        // Test features per environment, plus the learner trained once.
        let (model, test_sets) = match method {
            AdjustmentMethod::LinearCa => {
                let adj = causality_aware(&train, &tests[0])?;
                let FitArtifacts::Linear(fit) = &adj.artifacts else {
                    return Err(Error::InvalidParam("expected a linear fit".into()));
                };
                let model = fit_linear(&adj.train.x, &adj.train.y)?;
                let sets = tests
                    .iter()
                    .map(|t| t.with_x(remove_confounder_part(fit, &t.x, &t.a)?))
                    .collect::<Result<Vec<_>>>()?;
                (model, sets)
            }
            AdjustmentMethod::LinearRes => {
                let own = ols_fit(&train.a, &train.x, true)?;
                let model = fit_linear(&own.residuals, &train.y)?;
                let sets = tests
                    .iter()
                    .map(|t| Ok(adjust(method, &train, t)?.test))
                    .collect::<Result<Vec<_>>>()?;
                (model, sets)
            }
            other => {
                return Err(Error::InvalidParam(format!("{other} is not supported for shift families")))
            }
        };
        records.push(Record::new(scenario, m, quantity::WEIGHT, "x1", model.weights[0]));
        let mut mses = Vec::with_capacity(test_sets.len());
        for (e, (t, spec)) in test_sets.iter().zip(&grid).enumerate() {
            let comp = format!("e{}", e + 1);
            let mse = evaluate(&model, t)?.value();
            mses.push(mse);
            records.push(Record::new(scenario, m, quantity::MSE_ENV, &comp, mse));
            let theory = ShiftTheoryParams {
                beta_xy: params.beta_xy,
                beta_xa: params.beta_xa,
                sigma2_x: params.sigma2_x,
                sigma_aa: spec.sigma_aa,
                sigma_ay: spec.sigma_ay,
                sigma_yy: spec.sigma_yy,
                beta_hat_tr: model.weights[0],
            };
            let expected = expected_mse_shift(&theory, method.approach())?;
            records.push(Record::new(scenario, m, quantity::MSE_ENV_EXPECTED, &comp, expected));
        }
        records.push(Record::new(scenario, m, quantity::STABILITY_ERROR, "", mses.std_dev()));
    }
    Ok(records)
}

/// Flattens a parameter struct into `param` rows keyed by field path.
fn push_params<P: Serialize>(records: &mut Vec<Record>, scenario: &str, params: &P) -> Result<()> {
    fn walk(v: &serde_json::Value, path: String, out: &mut Vec<(String, f64)>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    walk(v, p, out);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(v, format!("{path}[{i}]"), out);
                }
            }
            serde_json::Value::Number(n) => out.push((path, n.as_f64().unwrap_or(f64::NAN))),
            serde_json::Value::Bool(b) => out.push((path, f64::from(u8::from(*b)))),
            _ => {}
        }
    }
    let mut flat = Vec::new();
    walk(&serde_json::to_value(params)?, String::new(), &mut flat);
    records.extend(
        flat.into_iter()
            .map(|(k, v)| Record::new(scenario, "", quantity::PARAM, &k, v)),
    );
    Ok(())
}
