use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use covshrink::estimators::estimate;
use covshrink::hdtest::{power_simulation, run_test, PowerConfig, TestMethod};
use covshrink::io::{read_csv, CsvOptions, ReportDocument};
use covshrink::loss_risk::{min_risk, monte_carlo_risk, RiskKind};
use covshrink::rmt::MpModel;
use covshrink::runner::Parallelism;
use covshrink::sim::{make_sigma, run_experiment, ExperimentConfig, PopulationModel};
use covshrink::{Error, Method, NConvention};
use nalgebra::DVector;
use serde_json::{json, Value};

/// Environment variable read when `--seed` is absent.
const SEED_ENV: &str = "COVSHRINK_SEED";
/// Seed used when neither `--seed` nor the environment variable is given.
const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser, Debug)]
#[command(
    name = "covshrink",
    version,
    about = "Covariance estimation, shrinkage and high-dimensional mean tests"
)]
struct Cli {
    /// Base seed for simulations; falls back to COVSHRINK_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs serially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write to this file instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Convention {
    Uncentered,
    Centered,
}

impl From<Convention> for NConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Uncentered => NConvention::Uncentered,
            Convention::Centered => NConvention::Centered,
        }
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV file with one observation per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Skip the first row.
    #[arg(long)]
    header: bool,
}

impl InputArgs {
    fn options(&self) -> Result<CsvOptions, Error> {
        let delimiter = u8::try_from(self.delimiter)
            .map_err(|_| Error::Config(format!("delimiter {:?} is not a single byte", self.delimiter)))?;
        Ok(CsvOptions {
            delimiter,
            header: self.header,
        })
    }
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// identity, ar1:<rho> or spiked:<s1>,<s2>,...
    #[arg(long, default_value = "identity")]
    model: String,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a covariance matrix from CSV data.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "sample")]
        method: Method,
        #[arg(long, value_enum, default_value_t = Convention::Centered)]
        n_convention: Convention,
    },
    /// One-sample test of a zero mean.
    Ttest {
        #[command(flatten)]
        input: InputArgs,
        /// hotelling or decomposite
        #[arg(long, default_value = "hotelling")]
        method: TestMethod,
    },
    /// Marchenko-Pastur density and CDF on a grid.
    Mp {
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Grid start; defaults to the lower support edge.
        #[arg(long)]
        from: Option<f64>,
        /// Grid end; defaults to the upper support edge.
        #[arg(long)]
        to: Option<f64>,
    },
    /// Closed-form minimum risks and Monte Carlo Stein risks.
    Risk {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        closed_form: bool,
        #[arg(long)]
        monte_carlo: bool,
        #[arg(long, default_value = "identity")]
        model: String,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        /// Comma-separated estimator names.
        #[arg(long, value_delimiter = ',', default_value = "sample,stein,dp,tsai")]
        methods: Vec<Method>,
    },
    /// Run experiments from a JSON config (an object or an array of objects).
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Power of a mean test under local alternatives.
    Power {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated δ; defaults to t·e₁ with t from --delta-scale.
        #[arg(long, value_delimiter = ',')]
        delta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.0)]
        delta_scale: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value = "oracle")]
        method: TestMethod,
    },
}

enum Output {
    Json(Value),
    Csv(Vec<Vec<String>>),
}

struct Outcome {
    command: &'static str,
    config: Value,
    results: Value,
    table: Vec<Vec<String>>,
    seed: Option<u64>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, Error> {
    Ok(serde_json::to_value(v)?)
}

fn execute(cli: &Cli) -> Result<Outcome, Error> {
    let parallelism = Parallelism { threads: cli.threads };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Estimate {
            input,
            method,
            n_convention,
        } => {
            let x = read_csv(&input.input, input.options()?)?;
            let est = estimate(&x, *method, (*n_convention).into())?;
            let table = est
                .matrix
                .row_iter()
                .map(|r| r.iter().copied().map(num).collect())
                .collect();
            Ok(Outcome {
                command: "estimate",
                config: json!({
                    "input": input.input,
                    "method": method,
                    "n_convention": NConvention::from(*n_convention),
                    "n": x.n(),
                    "p": x.p(),
                }),
                results: to_value(&est)?,
                table,
                seed: None,
            })
        }
        Command::Ttest { input, method } => {
            if *method == TestMethod::Oracle {
                return Err(Error::Config("ttest runs on data; use hotelling or decomposite".into()));
            }
            let x = read_csv(&input.input, input.options()?)?;
            let r = run_test(&x, *method, None)?;
            Ok(Outcome {
                command: "ttest",
                config: json!({"input": input.input, "method": method, "n": x.n(), "p": x.p()}),
                table: vec![
                    vec!["method".into(), "statistic".into(), "dof".into(), "pvalue".into()],
                    vec![method.to_string(), num(r.statistic), r.dof.to_string(), num(r.pvalue)],
                ],
                results: to_value(&r)?,
                seed: None,
            })
        }
        Command::Mp { c, points, from, to } => {
            let model = MpModel::new(*c)?;
            let lo = from.unwrap_or(model.lambda_minus);
            let hi = to.unwrap_or(model.lambda_plus);
            let nonempty = hi > lo;
            if *points < 2 || !nonempty {
                return Err(Error::Config("need at least 2 points on a nonempty interval".into()));
            }
            let mut table = vec![vec!["x".to_string(), "density".to_string(), "cdf".to_string()]];
            let mut rows = Vec::with_capacity(*points);
            for k in 0..*points {
                let x = lo + (hi - lo) * k as f64 / (*points - 1) as f64;
                let (d, f) = (model.density(x), model.cdf(x)?);
                table.push(vec![num(x), num(d), num(f)]);
                rows.push(json!({"x": x, "density": d, "cdf": f}));
            }
            Ok(Outcome {
                command: "mp",
                config: json!({"c": c, "points": points, "from": lo, "to": hi}),
                results: json!({
                    "lambda_minus": model.lambda_minus,
                    "lambda_plus": model.lambda_plus,
                    "grid": rows,
                }),
                table,
                seed: None,
            })
        }
        Command::Risk {
            n,
            p,
            closed_form,
            monte_carlo,
            model,
            replicates,
            methods,
        } => {
            let (closed_form, monte_carlo) = if !closed_form && !monte_carlo {
                (true, false)
            } else {
                (*closed_form, *monte_carlo)
            };
            let mut results = serde_json::Map::new();
            let mut table = vec![vec![
                "quantity".to_string(),
                "method".to_string(),
                "value".to_string(),
                "std_error".to_string(),
            ]];
            if closed_form {
                let mut cf = serde_json::Map::new();
                for kind in RiskKind::ALL {
                    let v = min_risk(kind, *n, *p)?;
                    let name = match kind {
                        RiskKind::Ml => "ml",
                        RiskKind::Stein => "stein",
                        RiskKind::Dp => "dp",
                    };
                    cf.insert(name.into(), json!(v));
                    table.push(vec!["min_risk".into(), name.into(), num(v), String::new()]);
                }
                results.insert("closed_form".into(), Value::Object(cf));
            }
            if monte_carlo {
                let sigma = make_sigma(&PopulationModel::parse(model, *p)?)?;
                // a method that fails is reported in place; the run fails only if all do
                let mut mc = Vec::new();
                let mut last_err = None;
                for &m in methods {
                    match monte_carlo_risk(m, &sigma, *n, *replicates, seed, parallelism) {
                        Ok(r) => {
                            table.push(vec![
                                "monte_carlo".into(),
                                m.to_string(),
                                num(r.mean_loss),
                                num(r.std_error),
                            ]);
                            mc.push(to_value(&r)?);
                        }
                        Err(e) => {
                            table.push(vec!["monte_carlo".into(), m.to_string(), "error".into(), e.to_string()]);
                            mc.push(json!({"method": m, "error": e.to_string()}));
                            last_err = Some(e);
                        }
                    }
                }
                if let Some(e) = last_err.filter(|_| mc.iter().all(|v| v.get("error").is_some())) {
                    return Err(e);
                }
                results.insert("monte_carlo".into(), Value::Array(mc));
            }
            Ok(Outcome {
                command: "risk",
                config: json!({
                    "n": n, "p": p, "closed_form": closed_form, "monte_carlo": monte_carlo,
                    "model": model, "replicates": replicates, "methods": methods,
                }),
                results: Value::Object(results),
                table,
                seed: monte_carlo.then_some(seed),
            })
        }
        Command::Simulate { config } => {
            let text = std::fs::read_to_string(config)?;
            let parsed: Value = serde_json::from_str(&text)?;
            let items = match parsed {
                Value::Array(items) => items,
                other => vec![other],
            };
            let mut configs: Vec<ExperimentConfig> = items
                .into_iter()
                .map(|v| serde_json::from_value(v).map_err(|e| Error::Config(format!("bad experiment config: {e}"))))
                .collect::<Result<_, _>>()?;
            if let Some(s) = cli.seed {
                configs.iter_mut().for_each(|c| c.seed = s);
            }
            let mut reports = Vec::new();
            let mut table = vec![vec![
                "experiment".to_string(),
                "metric".to_string(),
                "mean".to_string(),
                "std_error".to_string(),
                "count".to_string(),
            ]];
            for (i, c) in configs.iter().enumerate() {
                let report = run_experiment(c, parallelism)?;
                for m in &report.metrics {
                    table.push(vec![
                        i.to_string(),
                        m.name.clone(),
                        num(m.mean),
                        num(m.std_error),
                        m.count.to_string(),
                    ]);
                }
                reports.push(to_value(&report)?);
            }
            Ok(Outcome {
                command: "simulate",
                config: to_value(&configs)?,
                results: Value::Array(reports),
                table,
                seed: cli.seed,
            })
        }
        Command::Power {
            model,
            delta,
            delta_scale,
            alpha,
            replicates,
            method,
        } => {
            let sigma = make_sigma(&PopulationModel::parse(&model.model, model.p)?)?;
            let delta = match delta {
                Some(d) => DVector::from_vec(d.clone()),
                None => {
                    let mut d = DVector::zeros(model.p);
                    d[0] = *delta_scale;
                    d
                }
            };
            let cfg = PowerConfig {
                n: model.n,
                sigma,
                delta,
                alpha: *alpha,
                replicates: *replicates,
                seed,
                method: *method,
            };
            let r = power_simulation(&cfg, parallelism)?;
            Ok(Outcome {
                command: "power",
                config: json!({
                    "model": model.model, "p": model.p, "n": model.n, "delta": r.alternative.delta,
                    "alpha": alpha, "replicates": replicates, "method": method,
                }),
                table: vec![
                    vec![
                        "method".into(),
                        "rejection_rate".into(),
                        "std_error".into(),
                        "predicted_power".into(),
                        "predicted_power_exact".into(),
                    ],
                    vec![
                        method.to_string(),
                        num(r.rejection_rate),
                        num(r.std_error),
                        num(r.predicted_power),
                        num(r.predicted_power_exact),
                    ],
                ],
                results: to_value(&r)?,
                seed: Some(seed),
            })
        }
    }
}

fn render(cli: &Cli, started: String) -> Result<String, Error> {
    let outcome = execute(cli)?;
    let default = if outcome.command == "mp" {
        Format::Csv
    } else {
        Format::Json
    };
    let output = match cli.format.unwrap_or(default) {
        Format::Json => {
            let mut doc = ReportDocument::new(outcome.command, outcome.config, outcome.results, outcome.seed);
            doc.timestamps.insert("started".into(), started);
            doc.timestamps.insert(
                "finished".into(),
                Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            );
            Output::Json(serde_json::to_value(&doc)?)
        }
        Format::Csv => Output::Csv(outcome.table),
    };
    match output {
        Output::Json(v) => Ok(serde_json::to_string_pretty(&v)? + "\n"),
        Output::Csv(rows) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.write_record(&row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            String::from_utf8(bytes).map_err(|e| Error::InvalidData(e.to_string()))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

/// Runs the command line `args` (including the program name), writing the
/// report to `out` or `--output` and diagnostics to `err`. Returns the exit code.
fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    if cli.seed.is_none() {
        if let Some(raw) = env_seed {
            match raw.trim().parse() {
                Ok(seed) => cli.seed = Some(seed),
                Err(_) => {
                    let _ = writeln!(err, "error: {SEED_ENV} must be an unsigned integer, got {raw:?}");
                    return 1;
                }
            }
        }
    }
    let started = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    let text = match render(&cli, started) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let written = match &cli.output {
        Some(path) => std::fs::write(path, text),
        None => out.write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return 1;
    }
    0
}

fn main() -> ExitCode {
    let env_seed = std::env::var(SEED_ENV).ok();
    let code = run(
        std::env::args_os(),
        env_seed.as_deref(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code)
}
