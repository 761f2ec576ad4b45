use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use super::config::Family;
use super::run::{confounder_index, quantity, ReplicationResult};
use crate::adjust::AdjustmentMethod;
use crate::diagnostics::Verdict;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    pub message: String,
}

/// Distribution of one recorded quantity across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantitySummary {
    pub scenario: String,
    pub method: String,
    pub quantity: String,
    pub component: String,
    pub count: usize,
    pub mean: f64,
    /// Absent with fewer than two values.
    pub sd: Option<f64>,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

/// Fraction of comparisons where the causality-aware method is at least as
/// good as residualization within the same model class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub scenario: String,
    pub model: String,
    pub quantity: String,
    pub wins: usize,
    pub comparisons: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCount {
    pub scenario: String,
    pub method: String,
    pub confounder: String,
    pub verdict: Verdict,
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub family: Family,
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<Failure>,
    pub quantities: Vec<QuantitySummary>,
    pub win_rates: Vec<WinRate>,
    pub verdict_counts: Vec<VerdictCount>,
}

impl Summary {
    pub fn quantity(&self, scenario: &str, method: &str, quantity: &str, component: &str) -> Option<&QuantitySummary> {
        self.quantities.iter().find(|q| {
            q.scenario == scenario && q.method == method && q.quantity == quantity && q.component == component
        })
    }

    pub fn win_rate(&self, scenario: &str, model: &str, quantity: &str) -> Option<&WinRate> {
        self.win_rates
            .iter()
            .find(|w| w.scenario == scenario && w.model == model && w.quantity == quantity)
    }

    /// Share of successful replications with `verdict` for `confounder`.
    pub fn verdict_rate(&self, scenario: &str, method: &str, confounder: &str, verdict: Verdict) -> Option<f64> {
        self.verdict_counts
            .iter()
            .find(|v| {
                v.scenario == scenario && v.method == method && v.confounder == confounder && v.verdict == verdict
            })
            .map(|v| v.rate)
    }
}

/// `(ca, res, model-class name)` pairs present in both method lists.
pub fn method_pairs() -> [(AdjustmentMethod, AdjustmentMethod, &'static str); 2] {
    [
        (AdjustmentMethod::LinearCa, AdjustmentMethod::LinearRes, "linear"),
        (AdjustmentMethod::AdditiveCa, AdjustmentMethod::AdditiveRes, "additive"),
    ]
}

/// Aggregates replication records. Uses nothing beyond what the
/// per-replication CSV files hold.
pub fn summarize(family: Family, results: &[ReplicationResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let ok: Vec<&ReplicationResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let failure_messages: Vec<Failure> = results
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|m| Failure {
                replication: r.replication,
                message: m.clone(),
            })
        })
        .collect();

    let mut groups: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    let mut verdicts: BTreeMap<(String, String, String, Verdict), usize> = BTreeMap::new();
    for r in &ok {
        for rec in &r.records {
            if rec.quantity == quantity::PARAM {
                continue;
            }
            if let Some(name) = rec.quantity.strip_prefix(quantity::VERDICT_PREFIX) {
                if let Some(v) = Verdict::ALL.into_iter().find(|v| v.name() == name) {
                    *verdicts
                        .entry((rec.scenario.clone(), rec.method.clone(), rec.component.clone(), v))
                        .or_default() += usize::from(rec.value == 1.0);
                }
                continue;
            }
            groups
                .entry((rec.scenario.clone(), rec.method.clone(), rec.quantity.clone(), rec.component.clone()))
                .or_default()
                .push(rec.value);
        }
    }

    let quantities = groups
        .into_iter()
        .map(|((scenario, method, quantity, component), values)| describe(scenario, method, quantity, component, values))
        .collect();

    let mut verdict_counts: Vec<VerdictCount> = verdicts
        .into_iter()
        .map(|((scenario, method, confounder, verdict), count)| VerdictCount {
            scenario,
            method,
            confounder,
            verdict,
            count,
            rate: count as f64 / ok.len() as f64,
        })
        .collect();
    verdict_counts.sort_by(|a, b| {
        (&a.scenario, &a.method, confounder_index(&a.confounder), a.verdict)
            .cmp(&(&b.scenario, &b.method, confounder_index(&b.confounder), b.verdict))
    });

    Ok(Summary {
        family,
        replications: results.len(),
        failures: failure_messages.len(),
        failure_messages,
        quantities,
        win_rates: win_rates(&ok),
        verdict_counts,
    })
}

fn describe(scenario: String, method: String, quantity: String, component: String, values: Vec<f64>) -> QuantitySummary {
    let count = values.len();
    let mean = values.iter().mean();
    let sd = (count >= 2).then(|| values.iter().std_dev());
    let mut data = Data::new(values);
    QuantitySummary {
        scenario,
        method,
        quantity,
        component,
        count,
        mean,
        sd,
        min: data.quantile(0.0),
        q05: data.quantile(0.05),
        q25: data.quantile(0.25),
        median: data.median(),
        q75: data.quantile(0.75),
        q95: data.quantile(0.95),
        max: data.quantile(1.0),
    }
}

fn win_rates(ok: &[&ReplicationResult]) -> Vec<WinRate> {
    let scenarios: BTreeSet<&str> = ok
        .iter()
        .flat_map(|r| r.records.iter().map(|rec| rec.scenario.as_str()))
        .collect();
    let mut out = Vec::new();
    for scenario in scenarios {
        for (ca, res, model) in method_pairs() {
            // Lower is better for MSE and stability error, higher for accuracy.
            for (q, higher_better) in [
                (quantity::MSE, false),
                (quantity::ACCURACY, true),
                (quantity::STABILITY_ERROR, false),
            ] {
                let mut wins = 0;
                let mut total = 0;
                for r in ok {
                    let (Some(c), Some(s)) = (r.value(scenario, ca.name(), q, ""), r.value(scenario, res.name(), q, ""))
                    else {
                        continue;
                    };
                    total += 1;
                    wins += usize::from(if higher_better { c >= s } else { c <= s });
                }
                if total > 0 {
                    out.push(WinRate {
                        scenario: scenario.to_string(),
                        model: model.to_string(),
                        quantity: q.to_string(),
                        wins,
                        comparisons: total,
                        rate: wins as f64 / total as f64,
                    });
                }
            }
            // Covariance magnitude, one comparison per feature.
            let mut wins = 0;
            let mut total = 0;
            for r in ok {
                let c = r.covariances(scenario, ca);
                let s = r.covariances(scenario, res);
                if c.len() != s.len() {
                    continue;
                }
                for (c, s) in c.iter().zip(&s) {
                    total += 1;
                    wins += usize::from(c.abs() >= s.abs());
                }
            }
            if total > 0 {
                out.push(WinRate {
                    scenario: scenario.to_string(),
                    model: model.to_string(),
                    quantity: quantity::COV_XY.to_string(),
                    wins,
                    comparisons: total,
                    rate: wins as f64 / total as f64,
                });
            }
        }
    }
    out
}
