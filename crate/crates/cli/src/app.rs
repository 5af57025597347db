use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use pap_core::gaussian::{discretized_problem, naive_rule_table, CaseStudyConfig, MotivatingConfig, RuleKind};
use pap_core::{ProblemSpec, RuleJson};

use crate::config::{apply_override, decode, digest, read_value, set_path};
use crate::error::{AppError, ErrorKind};
use crate::ops;
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "pap", version, about = "Optimal pre-analysis plans: solves, checks, power curves, case studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal plan for one signal of a discrete problem.
    Solve(SolveArgs),
    /// Size, monotonicity and truthful-message reports for a rule.
    Check(CheckArgs),
    /// Power curves of the motivating rules.
    Power(PowerArgs),
    /// Plan families on a Gaussian design.
    Casestudy(CaseStudyArgs),
    /// Grid version of a motivating config and its naive rule.
    Discretize(DiscretizeArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Override a config field, e.g. `--set mc.seed=7`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub signal: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub rule: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Rules to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = RuleKind::ALL.map(|k| k.label().to_string()))]
    pub kinds: Vec<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CaseStudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Evaluation draws per plan.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also write the best-arms map as CSV.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DiscretizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Cell edges shared by every statistic; defaults to `-8, z, 8` with
    /// `z` the one-sided critical value.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub edges: Option<Vec<f64>>,
    #[arg(long)]
    pub problem_out: PathBuf,
    #[arg(long)]
    pub rule_out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; defaults to `PAP_BIND` or 127.0.0.1:8080.
    #[arg(long)]
    pub bind: Option<String>,
}

/// Output document: the config digest and seed, then the payload.
#[derive(Serialize)]
struct Stamped<'a, T> {
    config_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

/// Parses `argv` and runs the subcommand. Returns the process exit code;
/// failures are reported as one JSON object on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = AppError::usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Check(a) => check(a),
        Command::Power(a) => power(a),
        Command::Casestudy(a) => casestudy(a),
        Command::Discretize(a) => discretize(a),
        Command::Serve(a) => serve(a),
    }
}

/// Reads a config, applies flag and `--set` overrides in that order.
fn load(path: &Path, flags: &[(&str, Option<Value>)], sets: &[String]) -> Result<Value, AppError> {
    let mut v = read_value(path)?;
    for (key, value) in flags {
        if let Some(value) = value {
            set_path(&mut v, key, value.clone())?;
        }
    }
    for s in sets {
        apply_override(&mut v, s)?;
    }
    Ok(v)
}

fn write_out(out: Option<&Path>, contents: &str) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| AppError::new(ErrorKind::Io, format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| AppError::new(ErrorKind::Io, format!("cannot write stdout: {e}"))),
    }
}

fn json_doc<T: Serialize>(digest: &str, seed: u64, body: T) -> String {
    let mut s = serde_json::to_string_pretty(&Stamped { config_sha256: digest, seed, body }).expect("output serializes");
    s.push('\n');
    s
}

fn csv_doc(digest: &str, seed: u64, csv: &str) -> String {
    format!("# config_sha256={digest} seed={seed}\n{csv}")
}

fn num(v: f64) -> Option<Value> {
    serde_json::Number::from_f64(v).map(Value::Number)
}

fn solve(a: SolveArgs) -> Result<(), AppError> {
    let v = load(
        &a.config,
        &[("alpha", a.alpha.and_then(num)), ("mc.seed", a.seed.map(Value::from))],
        &a.common.set,
    )?;
    let d = digest(&v);
    let spec: ProblemSpec = decode(v)?;
    let out = ops::solve(&spec, a.signal)?;
    write_out(a.common.out.as_deref(), &json_doc(&d, spec.mc.seed, out))
}

fn check(a: CheckArgs) -> Result<(), AppError> {
    let problem = load(&a.problem, &[("alpha", a.alpha.and_then(num))], &a.common.set)?;
    let rule = read_value(&a.rule)?;
    let d = digest(&Value::Array(vec![problem.clone(), rule.clone()]));
    let spec: ProblemSpec = decode(problem)?;
    let rule: RuleJson = decode(rule).map_err(|e| AppError { message: format!("rule: {}", e.message), ..e })?;
    if !(a.tol >= 0.0) {
        return Err(AppError::usage("tolerance must be nonnegative"));
    }
    let out = ops::check(&spec, &rule, a.tol)?;
    write_out(a.common.out.as_deref(), &json_doc(&d, spec.mc.seed, out))
}

fn power(a: PowerArgs) -> Result<(), AppError> {
    let v = load(
        &a.config,
        &[
            ("alpha", a.alpha.and_then(num)),
            ("reps", a.reps.map(Value::from)),
            ("seed", a.seed.map(Value::from)),
        ],
        &a.common.set,
    )?;
    let d = digest(&v);
    let config: MotivatingConfig = decode(v)?;
    let kinds = a.kinds.iter().map(|k| k.parse::<RuleKind>()).collect::<Result<Vec<_>, _>>()?;
    let curve = ops::power(&config, &kinds)?;
    write_out(a.common.out.as_deref(), &csv_doc(&d, config.seed, &curve.to_csv()))
}

fn casestudy(a: CaseStudyArgs) -> Result<(), AppError> {
    let v = load(
        &a.config,
        &[
            ("alpha", a.alpha.and_then(num)),
            ("mc.eval_reps", a.reps.map(Value::from)),
            ("mc.seed", a.seed.map(Value::from)),
        ],
        &a.common.set,
    )?;
    let d = digest(&v);
    let config: CaseStudyConfig = decode(v)?;
    if a.map_out.is_some() && config.map.is_none() {
        return Err(AppError::usage("--map-out needs a map section in the config").at("map"));
    }
    let out = ops::casestudy(&config)?;
    let seed = config.settings.mc.seed;
    if let (Some(path), Some(map)) = (&a.map_out, &out.map) {
        write_out(Some(path), &csv_doc(&d, seed, &map.to_csv()))?;
    }
    write_out(a.common.out.as_deref(), &json_doc(&d, seed, out))
}

fn discretize(a: DiscretizeArgs) -> Result<(), AppError> {
    let v = load(&a.config, &[], &a.set)?;
    let d = digest(&v);
    let config: MotivatingConfig = decode(v)?;
    let edges = a.edges.unwrap_or_else(|| vec![-8.0, config.critical_value(), 8.0]);
    let spec = discretized_problem(&config, &edges)?;
    let problem = spec.build()?;
    let rule = naive_rule_table(&config, problem.grid())?;
    write_out(Some(&a.problem_out), &json_doc(&d, config.seed, &spec))?;
    write_out(Some(&a.rule_out), &json_doc(&d, config.seed, rule.to_json()))
}

fn serve(a: ServeArgs) -> Result<(), AppError> {
    let mut config = ServiceConfig::from_env()?;
    if let Some(bind) = a.bind {
        config.bind = bind;
    }
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| AppError::new(ErrorKind::Internal, format!("cannot start runtime: {e}")))?;
    rt.block_on(service::serve(config))
}
