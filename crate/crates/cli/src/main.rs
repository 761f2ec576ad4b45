use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use deconfound::adjust::{adjust, AdjustmentMethod, Approach};
use deconfound::diagnostics::{ci_pattern, classify_pattern, combine_verdicts, Verdict, DEFAULT_ALPHA, RELATION_NAMES};
use deconfound::harness::{run_family, shift_grid, ExperimentConfig, Family};
use deconfound::learners::{evaluate, fit_for, fit_linear, fit_logistic};
use deconfound::sim::{
    gen_classification_pair, gen_regression_pair, gen_shift_data, read_csv_path, rng, sample_classification_params,
    sample_regression_params, sample_shift_params, write_csv_path, Environment, ScmClassificationParams,
    ScmRegressionParams, ShiftScmParams, Split,
};
use deconfound::theory::{
    closed_form_covariances, expected_mse, expected_mse_shift, expected_mse_single, expected_mse_two,
    theorem2_check,
};
use deconfound::{Dataset, Matrix, ShiftTheoryParams, TheoryParams};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Exit status when `diagnose` finds a confounder that is not deconfounded.
const NOT_DECONFOUNDED: u8 = 2;

#[derive(Parser)]
#[command(name = "deconfound", version, about = "Confounding adjustment for anticausal prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw train and test data from one of the simulation models.
    Simulate(SimulateArgs),
    /// Adjust features for the confounders.
    Adjust(AdjustArgs),
    /// Fit a learner on training data and score it on test data.
    TrainEval(TrainEvalArgs),
    /// Conditional-independence diagnostics for a prediction.
    Diagnose(DiagnoseArgs),
    /// Closed-form covariances and expected errors as JSON.
    Theory(TheoryArgs),
    /// Run an experiment family.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimModel {
    Regression,
    Classification,
    Shift,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: SimModel,
    /// Use the nonlinear variant of the regression or classification model.
    #[arg(long)]
    mispecified: bool,
    #[arg(long, default_value_t = 10_000)]
    n_train: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replication index; selects the same streams the experiment runner uses.
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Parameters as JSON instead of sampling them.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Shift model: test environment, 1 to 9.
    #[arg(long, default_value_t = 1)]
    environment: usize,
    /// Shift model: vary Var(Y) across environments as well.
    #[arg(long)]
    vary_y: bool,
    #[arg(long)]
    paper_literal_grid: bool,
    /// Output CSV with both splits.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the parameters used.
    #[arg(long)]
    params_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AdjustArgs {
    #[arg(long)]
    method: AdjustmentMethod,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Writes `<prefix>_train.csv`, `<prefix>_test.csv` and `<prefix>_fit.json`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Learner {
    /// Logistic for a 0/1 outcome, linear otherwise.
    Auto,
    Linear,
    Logistic,
}

#[derive(clap::Args)]
struct TrainEvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    learner: Learner,
    /// Test predictions as `y_hat,y,a1..ak`, ready for `diagnose`.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// CSV with columns `y_hat,y,a1..ak`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TheoryArgs {
    #[arg(long)]
    params: PathBuf,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 10_000)]
    n_train: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated; defaults depend on the family.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<AdjustmentMethod>>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    paper_literal_grid: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Adjust(a) => adjust_cmd(a),
        Command::TrainEval(a) => train_eval(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Theory(a) => theory(a),
        Command::Experiment(a) => experiment(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    Ok(serde_json::from_reader(fs::File::open(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> CliResult<ExitCode> {
    let (seed, rep) = (args.seed, args.replication);
    let mut prng = rng::stream(seed, rep, rng::PARAMS);
    let mut rtr = rng::stream(seed, rep, rng::TRAIN);
    let (train, test, params): (Dataset, Dataset, Value) = match args.model {
        SimModel::Regression => {
            let p: ScmRegressionParams = match &args.params {
                Some(path) => read_json(path)?,
                None => sample_regression_params(&mut prng, args.mispecified),
            };
            let mut rts = rng::stream(seed, rep, rng::TEST);
            let (tr, ts) = gen_regression_pair(&p, args.n_train, args.n_test, &mut rtr, &mut rts)?;
            (tr, ts, serde_json::to_value(&p)?)
        }
        SimModel::Classification => {
            let p: ScmClassificationParams = match &args.params {
                Some(path) => read_json(path)?,
                None => sample_classification_params(&mut prng, args.mispecified),
            };
            let mut rts = rng::stream(seed, rep, rng::TEST);
            let (tr, ts) = gen_classification_pair(&p, args.n_train, args.n_test, &mut rtr, &mut rts)?;
            (tr, ts, serde_json::to_value(&p)?)
        }
        SimModel::Shift => {
            let p: ShiftScmParams = match &args.params {
                Some(path) => read_json(path)?,
                None => {
                    let covs = shift_grid(args.vary_y, args.paper_literal_grid)
                        .iter()
                        .map(|e| e.covariance())
                        .collect();
                    sample_shift_params(&mut prng, covs)
                }
            };
            let e = args
                .environment
                .checked_sub(1)
                .filter(|&e| e < p.test_covs.len())
                .ok_or_else(|| format!("environment must lie in 1..={}", p.test_covs.len()))?;
            let tr = gen_shift_data(&p, Environment::Train, args.n_train, &mut rtr)?;
            let mut rts = rng::stream(seed, rep, rng::environment(e));
            let ts = gen_shift_data(&p, Environment::Test(e), args.n_test, &mut rts)?;
            (tr, ts, serde_json::to_value(&p)?)
        }
    };
    write_csv_path(&[&train, &test], &args.out)?;
    if let Some(path) = &args.params_out {
        write_json(path, &params)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Takes the rows of `split` from a data file; a file holding a single split
/// is accepted whatever its label.
fn load_split(path: &Path, split: Split) -> CliResult<Dataset> {
    let mut sets: Vec<Dataset> = read_csv_path(path)?;
    if let Some(i) = sets.iter().position(|d| d.split == split) {
        return Ok(sets.swap_remove(i));
    }
    match sets.len() {
        1 => {
            let mut d = sets.remove(0);
            d.split = split;
            Ok(d)
        }
        0 => Err(format!("{}: no rows", path.display()).into()),
        _ => Err(format!("{}: no {split} rows", path.display()).into()),
    }
}

fn adjust_cmd(args: AdjustArgs) -> CliResult<ExitCode> {
    let train = load_split(&args.train, Split::Train)?;
    let test = load_split(&args.test, Split::Test)?;
    let pair = adjust(args.method, &train, &test)?;
    write_csv_path(&[&pair.train], format!("{}_train.csv", args.out_prefix))?;
    write_csv_path(&[&pair.test], format!("{}_test.csv", args.out_prefix))?;
    write_json(
        Path::new(&format!("{}_fit.json", args.out_prefix)),
        &json!({ "method": pair.method, "artifacts": pair.artifacts }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn train_eval(args: TrainEvalArgs) -> CliResult<ExitCode> {
    let train = load_split(&args.train, Split::Train)?;
    let test = load_split(&args.test, Split::Test)?;
    let model = match args.learner {
        Learner::Auto => fit_for(&train)?,
        Learner::Linear => fit_linear(&train.x, &train.y)?,
        Learner::Logistic => fit_logistic(&train.x, &train.y)?,
    };
    let report = evaluate(&model, &test)?;
    if let Some(path) = &args.predictions {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y_hat".to_string(), "y".to_string()];
        header.extend((1..=test.k()).map(|i| format!("a{i}")));
        w.write_record(&header)?;
        for i in 0..test.n() {
            let mut row = vec![report.predictions[i].to_string(), test.y[i].to_string()];
            row.extend(test.a.row(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    print_json(&json!({
        "model": model,
        "mse": report.mse,
        "accuracy": report.accuracy,
    }))?;
    Ok(ExitCode::SUCCESS)
}

/// Reads `y_hat,y,a1..ak`.
fn read_predictions(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>, Matrix)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let k = header.len().saturating_sub(2);
    let mut expected = vec!["y_hat".to_string(), "y".to_string()];
    expected.extend((1..=k).map(|i| format!("a{i}")));
    if k == 0 || header != expected {
        return Err(format!("expected header {}, found {}", expected.join(","), header.join(",")).into());
    }
    let (mut y_hat, mut y, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("row {}: {e}", line + 2))?;
        y_hat.push(vals[0]);
        y.push(vals[1]);
        a.extend_from_slice(&vals[2..]);
    }
    let n = y.len();
    Ok((y_hat, y, Matrix::from_row_major(n, k, a)?))
}

fn diagnose(args: DiagnoseArgs) -> CliResult<ExitCode> {
    let (y_hat, y, a) = read_predictions(&args.input)?;
    let report = ci_pattern(&y_hat, &y, &a)?;
    let verdicts = classify_pattern(&report, args.alpha)?;
    let overall = combine_verdicts(&verdicts);
    let confounders: Vec<Value> = report
        .confounders
        .iter()
        .zip(&verdicts)
        .enumerate()
        .map(|(i, (c, v))| {
            let cor = c.correlations.to_array();
            let p = c.p_values.to_array();
            let relations: serde_json::Map<String, Value> = RELATION_NAMES
                .iter()
                .enumerate()
                .map(|(j, name)| (name.to_string(), json!({ "correlation": cor[j], "p_value": p[j] })))
                .collect();
            json!({ "confounder": format!("a{}", i + 1), "relations": relations, "verdict": v })
        })
        .collect();
    let out = json!({
        "n": report.n,
        "alpha": args.alpha,
        "confounders": confounders,
        "verdict": overall,
    });
    match &args.out {
        Some(path) => write_json(path, &out)?,
        None => print_json(&out)?,
    }
    Ok(if overall == Verdict::Deconfounded {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NOT_DECONFOUNDED)
    })
}

#[derive(Deserialize)]
struct SingleInput {
    gamma: f64,
    phi: f64,
    sigma2: f64,
}

#[derive(Deserialize)]
struct TwoInput {
    gamma1: f64,
    gamma2: f64,
    phi: f64,
    sigma11: f64,
    sigma12: f64,
    sigma22: f64,
}

/// Any subset of the sections may be given. A bare path-coefficient object
/// is read as `general`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TheoryInput {
    general: Option<TheoryParams>,
    single: Option<SingleInput>,
    two: Option<TwoInput>,
    shift: Option<ShiftTheoryParams>,
}

fn theory(args: TheoryArgs) -> CliResult<ExitCode> {
    let raw: Value = read_json(&args.params)?;
    let input: TheoryInput = if raw.get("gamma_xy").is_some() {
        TheoryInput {
            general: Some(serde_json::from_value(raw)?),
            single: None,
            two: None,
            shift: None,
        }
    } else {
        serde_json::from_value(raw)?
    };
    let mut out = serde_json::Map::new();
    if let Some(p) = &input.general {
        out.insert(
            "general".into(),
            json!({
                "covariances": closed_form_covariances(p)?,
                "expected_mse": expected_mse(p)?,
                "ca_covariance_at_least_res": theorem2_check(p)?,
            }),
        );
    }
    if let Some(s) = &input.single {
        out.insert("single".into(), serde_json::to_value(expected_mse_single(s.gamma, s.phi, s.sigma2)?)?);
    }
    if let Some(t) = &input.two {
        let m = expected_mse_two(t.gamma1, t.gamma2, t.phi, t.sigma11, t.sigma12, t.sigma22)?;
        out.insert("two".into(), serde_json::to_value(m)?);
    }
    if let Some(s) = &input.shift {
        out.insert(
            "shift".into(),
            json!({
                "mse_c": expected_mse_shift(s, Approach::CausalityAware)?,
                "mse_r": expected_mse_shift(s, Approach::Residualization)?,
            }),
        );
    }
    if out.is_empty() {
        return Err("params file has none of general, single, two, shift".into());
    }
    print_json(&out)?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(args: ExperimentArgs) -> CliResult<ExitCode> {
    let mut config = ExperimentConfig::new(args.family);
    config.replications = args.replications;
    config.n_train = args.n_train;
    config.n_test = args.n_test;
    config.master_seed = args.seed;
    config.alpha = args.alpha;
    config.paper_literal_grid = args.paper_literal_grid;
    config.output_dir = Some(args.out);
    if let Some(m) = args.methods {
        config.adjustment_methods = m;
    }
    let run = run_family(&config)?;
    let s = &run.summary;
    let rates: Vec<Value> = s
        .win_rates
        .iter()
        .map(|w| json!({ "scenario": w.scenario, "model": w.model, "quantity": w.quantity, "rate": w.rate }))
        .collect();
    print_json(&json!({
        "family": s.family,
        "replications": s.replications,
        "failures": s.failures,
        "output": run.output,
        "win_rates": rates,
    }))?;
    Ok(ExitCode::SUCCESS)
}
