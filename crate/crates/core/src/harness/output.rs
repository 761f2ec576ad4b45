use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{shift_grid, Family, Task};
use super::run::{quantity, FamilyRun, Record, ReplicationResult};
use super::summary::method_pairs;
use crate::adjust::AdjustmentMethod;
use crate::error::{Error, Result};
use crate::sim::format_float;

pub const RESULT_HEADER: [&str; 5] = ["scenario", "method", "quantity", "component", "value"];

pub fn family_dir(output_dir: &Path, family: Family) -> PathBuf {
    output_dir.join(format!("family_{family}"))
}

pub fn replication_file_name(replication: usize) -> String {
    format!("replication_{replication:04}.csv")
}

/// Writes per-replication CSVs, `summary.json` and the plot tables; returns
/// the family directory.
pub fn write_outputs(run: &FamilyRun, output_dir: &Path) -> Result<PathBuf> {
    let dir = family_dir(output_dir, run.config.family);
    fs::create_dir_all(&dir)?;
    for r in &run.results {
        write_replication(r, fs::File::create(dir.join(replication_file_name(r.replication)))?)?;
    }
    let mut summary = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut summary, &run.summary)?;
    summary.write_all(b"\n")?;

    if run.config.family.task() == Task::Shift {
        write_metric_table(run, &dir)?;
        write_stability_table(run, &dir)?;
    } else {
        write_cov_table(run, &dir)?;
        write_metric_table(run, &dir)?;
        write_diagnostics_table(run, &dir)?;
    }
    Ok(dir)
}

pub fn write_replication<W: Write>(r: &ReplicationResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    if let Some(msg) = &r.error {
        w.write_record(["", "", quantity::ERROR, msg.as_str(), "NaN"])?;
    }
    for rec in &r.records {
        w.write_record([
            rec.scenario.as_str(),
            rec.method.as_str(),
            rec.quantity.as_str(),
            rec.component.as_str(),
            &format_float(rec.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replication<R: std::io::Read>(replication: usize, input: R) -> Result<ReplicationResult> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(RESULT_HEADER) {
        return Err(Error::Parse("unexpected result file header".into()));
    }
    let mut out = ReplicationResult {
        replication,
        records: Vec::new(),
        error: None,
    };
    for row in rd.records() {
        let row = row?;
        if &row[2] == quantity::ERROR {
            out.error = Some(row[3].to_string());
            continue;
        }
        let value = row[4]
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("value `{}`: {e}", &row[4])))?;
        out.records.push(Record {
            scenario: row[0].to_string(),
            method: row[1].to_string(),
            quantity: row[2].to_string(),
            component: row[3].to_string(),
            value,
        });
    }
    Ok(out)
}

/// Reads every `replication_NNNN.csv` in a family directory, in index order.
pub fn read_results(dir: &Path) -> Result<Vec<ReplicationResult>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(idx) = name
            .strip_prefix("replication_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            found.push((idx, path));
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|(idx, path)| read_replication(idx, fs::File::open(path)?))
        .collect()
}

fn scenarios(run: &FamilyRun) -> &'static [&'static str] {
    run.config.family.scenarios()
}

fn has(run: &FamilyRun, m: AdjustmentMethod) -> bool {
    run.config.adjustment_methods.contains(&m)
}

fn write_cov_table(run: &FamilyRun, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("plotdata_cov.csv"))?;
    w.write_record(["replication", "scenario", "model", "feature", "cov_c", "cov_r"])?;
    for r in run.results.iter().filter(|r| r.error.is_none()) {
        for &s in scenarios(run) {
            for (ca, res, model) in method_pairs() {
                if !(has(run, ca) && has(run, res)) {
                    continue;
                }
                let c = r.values(s, ca.name(), quantity::COV_XY);
                let v = r.covariances(s, res);
                for ((feature, c), v) in c.iter().zip(v) {
                    w.write_record([
                        &r.replication.to_string(),
                        s,
                        model,
                        feature,
                        &format_float(*c),
                        &format_float(v),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_metric_table(run: &FamilyRun, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("plotdata_metric.csv"))?;
    w.write_record(["replication", "scenario", "model", "metric", "value_c", "value_r"])?;
    for r in run.results.iter().filter(|r| r.error.is_none()) {
        for &s in scenarios(run) {
            for (ca, res, model) in method_pairs() {
                for q in [quantity::MSE, quantity::ACCURACY, quantity::STABILITY_ERROR] {
                    if let (Some(c), Some(v)) = (r.value(s, ca.name(), q, ""), r.value(s, res.name(), q, "")) {
                        w.write_record([
                            &r.replication.to_string(),
                            s,
                            model,
                            q,
                            &format_float(c),
                            &format_float(v),
                        ])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_diagnostics_table(run: &FamilyRun, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("plotdata_diagnostics.csv"))?;
    w.write_record([
        "replication",
        "scenario",
        "method",
        "confounder",
        "relation",
        "correlation",
        "p_value",
        "verdict",
    ])?;
    for r in run.results.iter().filter(|r| r.error.is_none()) {
        for &s in scenarios(run) {
            for &m in &run.config.adjustment_methods {
                let verdicts = r.verdicts(s, m);
                for rec in r.records.iter().filter(|rec| {
                    rec.scenario == s && rec.method == m.name() && rec.quantity.starts_with(quantity::COR_PREFIX)
                }) {
                    let relation = &rec.quantity[quantity::COR_PREFIX.len()..];
                    let p = r
                        .value(s, m.name(), &format!("{}{relation}", quantity::P_PREFIX), &rec.component)
                        .unwrap_or(f64::NAN);
                    let idx = super::run::confounder_index(&rec.component);
                    let verdict = idx
                        .checked_sub(1)
                        .and_then(|i| verdicts.get(i))
                        .map_or("", |v| v.name());
                    w.write_record([
                        &r.replication.to_string(),
                        s,
                        m.name(),
                        &rec.component,
                        relation,
                        &format_float(rec.value),
                        &format_float(p),
                        verdict,
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_stability_table(run: &FamilyRun, dir: &Path) -> Result<()> {
    let grid = shift_grid(run.config.family == Family::G, run.config.paper_literal_grid);
    let mut w = csv::Writer::from_path(dir.join("plotdata_stability.csv"))?;
    w.write_record([
        "replication",
        "method",
        "environment",
        "sigma_aa",
        "sigma_ay",
        "sigma_yy",
        "mse",
        "mse_expected",
    ])?;
    let s = scenarios(run)[0];
    for r in run.results.iter().filter(|r| r.error.is_none()) {
        for &m in &run.config.adjustment_methods {
            for (e, spec) in grid.iter().enumerate() {
                let comp = format!("e{}", e + 1);
                let mse = r.value(s, m.name(), quantity::MSE_ENV, &comp).unwrap_or(f64::NAN);
                let exp = r.value(s, m.name(), quantity::MSE_ENV_EXPECTED, &comp).unwrap_or(f64::NAN);
                w.write_record([
                    r.replication.to_string(),
                    m.name().to_string(),
                    (e + 1).to_string(),
                    format_float(spec.sigma_aa),
                    format_float(spec.sigma_ay),
                    format_float(spec.sigma_yy),
                    format_float(mse),
                    format_float(exp),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replication_roundtrip() {
        let r = ReplicationResult {
            replication: 3,
            records: vec![Record {
                scenario: "correct".into(),
                method: "linear-ca".into(),
                quantity: "cov_xy".into(),
                component: "x1".into(),
                value: 1.0 / 3.0,
            }],
            error: None,
        };
        let mut buf = Vec::new();
        write_replication(&r, &mut buf).unwrap();
        assert_eq!(read_replication(3, buf.as_slice()).unwrap(), r);

        let failed = ReplicationResult {
            replication: 4,
            records: vec![],
            error: Some("perfect separation, weight norm 1e3".into()),
        };
        let mut buf = Vec::new();
        write_replication(&failed, &mut buf).unwrap();
        assert_eq!(read_replication(4, buf.as_slice()).unwrap(), failed);
    }
}
