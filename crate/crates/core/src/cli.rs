//! Command-line front end. Exit codes: 0 success, 2 runtime failure,
//! 64 usage error.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    parse_dims, reports_csv, run_2d_suite, run_aggregation_demo, run_hypercube_suite,
    run_hypersphere_suite, snapshot_csv, BenchOptions, BenchReport,
};
use crate::error::{Error, Result};
use crate::metrics::estimate_errors;
use crate::model::{write_atomic, Model};
use crate::paramnet::{fit_parameterized, DEFAULT_HIDDEN};
use crate::polytope::Normalized;
use crate::regions::{parse_region, Region, RegionOracle};
use crate::trainer::{fit, parse_schedule, TrainConfig, TrainHistory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "polyfit", version, about = "Fit polytopes to regions given by support and projection oracles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its history.
    Fit(FitArgs),
    /// Estimate the errors of a model against a region.
    Eval(EvalArgs),
    /// Run a benchmark suite and write its report.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration CSV; evaluations go next to it as `<stem>.eval.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long = "lambda-schedule")]
    pub lambda_schedule: Option<String>,
    /// Fixed parameter for a parameterized region in fixed mode.
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub region: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub dirs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub theta: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// hypercube, hypersphere, shapes2d or aggregation
    pub suite: String,
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 20)]
    pub resources: usize,
    #[arg(long, default_value_t = 6)]
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Fixed,
    Parameterized,
}

/// A run configuration file. Relative paths are taken from the file's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDoc {
    #[serde(default)]
    pub mode: Mode,
    pub region: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    pub hidden: Option<usize>,
    pub theta: Option<Vec<f64>>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        message: e.to_string(),
    }
}

fn classify(e: Error) -> Failure {
    if e.is_usage() {
        usage(e)
    } else {
        runtime(e)
    }
}

/// Parses `"0.5,1"`.
pub fn parse_theta(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(vec![]);
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse(format!("bad theta entry '{s}'")))
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn load_region(path: &Path) -> Result<RegionOracle> {
    parse_region(&read_text(path)?)
}

fn eval_path(history: &Path) -> PathBuf {
    history.with_extension("eval.csv")
}

/// Everything `fit` needs, resolved from the config file and flags.
struct FitPlan {
    mode: Mode,
    region: RegionOracle,
    out: PathBuf,
    history: Option<PathBuf>,
    train: TrainConfig,
    hidden: usize,
    theta: Option<Vec<f64>>,
}

fn plan_fit(args: &FitArgs) -> std::result::Result<FitPlan, Failure> {
    let mut doc = RunConfigDoc::default();
    if let Some(path) = &args.config {
        let text = read_text(path).map_err(usage)?;
        doc = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [&mut doc.region, &mut doc.out, &mut doc.history].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    let region_path = args
        .region
        .clone()
        .or(doc.region.clone())
        .ok_or_else(|| usage("fit needs --region or a config naming one"))?;
    let region = load_region(&region_path).map_err(usage)?;
    let mut train = doc.train.clone();
    if let Some(m) = args.m {
        train.m = Some(m);
    }
    if let Some(s) = args.seed {
        train.seed = s;
    }
    if let Some(s) = &args.lambda_schedule {
        train.phases = parse_schedule(s).map_err(usage)?;
    }
    train.validate().map_err(usage)?;
    let theta = match &args.theta {
        Some(t) => Some(parse_theta(t).map_err(usage)?),
        None => doc.theta.clone(),
    };
    let mode = args.mode.unwrap_or(doc.mode);
    if mode == Mode::Parameterized && region.theta_box().is_none() {
        return Err(usage("parameterized mode needs a region with a theta block"));
    }
    Ok(FitPlan {
        mode,
        region,
        out: args.out.clone().or(doc.out).unwrap_or_else(|| PathBuf::from("model.json")),
        history: args.history.clone().or(doc.history),
        train,
        hidden: doc.hidden.unwrap_or(DEFAULT_HIDDEN),
        theta,
    })
}

fn write_outputs(plan: &FitPlan, model: &Model, history: &TrainHistory) -> std::result::Result<(), Failure> {
    let text = model.to_json().map_err(runtime)?;
    write_atomic(&plan.out, &text).map_err(runtime)?;
    if let Some(h) = &plan.history {
        write_atomic(h, &history.iter_csv()).map_err(runtime)?;
        write_atomic(&eval_path(h), &history.eval_csv()).map_err(runtime)?;
    }
    Ok(())
}

fn report_abort(error: &Error, history: &TrainHistory) -> Failure {
    let mut msg = format!("training aborted: {error}");
    if let Some(e) = history.final_eval() {
        msg.push_str(&format!(
            "\nlast evaluation at iteration {}: mean_feas {:e}, mean_opt {:e}",
            e.iter, e.estimate.mean_feas, e.estimate.mean_opt
        ));
    }
    msg.push_str(&format!("\nlast completed iteration {}", history.last_iter()));
    runtime(msg)
}

pub fn cmd_fit(args: &FitArgs) -> std::result::Result<(), Failure> {
    let plan = plan_fit(args)?;
    let (model, history) = match plan.mode {
        Mode::Fixed => {
            let theta = match (&plan.theta, plan.region.theta_box()) {
                (Some(t), _) => t.clone(),
                (None, Some(b)) => b.center(),
                (None, None) => vec![],
            };
            if let Some(b) = plan.region.theta_box() {
                if !b.contains(&theta) {
                    return Err(usage(format!("theta {theta:?} outside the region's box")));
                }
            } else if !theta.is_empty() {
                return Err(usage("region takes no theta"));
            }
            match fit(&plan.region, &theta, &plan.train) {
                Ok((p, h)) => (Model::Fixed(p), h),
                Err(a) if a.history.iters.is_empty() && a.error.is_usage() => {
                    return Err(usage(a.error))
                }
                Err(a) => return Err(report_abort(&a.error, &a.history)),
            }
        }
        Mode::Parameterized => {
            let bx = plan.region.theta_box().expect("checked in plan").clone();
            match fit_parameterized(&plan.region, &bx, &plan.train, plan.hidden) {
                Ok((net, h)) => (Model::Parameterized(net), h),
                Err(a) if a.history.iters.is_empty() && a.error.is_usage() => {
                    return Err(usage(a.error))
                }
                Err(a) => return Err(report_abort(&a.error, &a.history)),
            }
        }
    };
    write_outputs(&plan, &model, &history)?;
    if let Some(e) = history.final_eval() {
        eprintln!(
            "fit: {} iterations, mean_feas {:e}, mean_opt {:e}",
            history.last_iter(),
            e.estimate.mean_feas,
            e.estimate.mean_opt
        );
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> std::result::Result<String, Failure> {
    let model = Model::read(&args.model).map_err(usage)?;
    let region = load_region(&args.region).map_err(usage)?;
    if region.dim() != model.dim() {
        return Err(usage(format!(
            "model has dimension {}, region {}",
            model.dim(),
            region.dim()
        )));
    }
    if args.dirs == 0 {
        return Err(usage("--dirs must be positive"));
    }
    let theta = match &args.theta {
        Some(t) => parse_theta(t).map_err(usage)?,
        None => vec![],
    };
    if let Some(b) = region.theta_box() {
        if !b.contains(&theta) {
            return Err(usage(format!("theta {theta:?} outside the region's box")));
        }
    }
    let model_theta: &[f64] = if model.theta_dim() > 0 { &theta } else { &[] };
    if let Model::Parameterized(net) = &model {
        if !net.theta_box.contains(model_theta) {
            return Err(usage(format!("theta {theta:?} outside the model's box")));
        }
    }
    let p = model.polytope(model_theta).map_err(classify)?;
    let view = Normalized {
        region: &region,
        norm: p.norm(),
    };
    let est = estimate_errors(&p, &view, &theta, args.dirs, args.seed, Default::default())
        .map_err(classify)?;
    let mut s = serde_json::to_string_pretty(&est).map_err(runtime)?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_bench(args: &BenchArgs) -> std::result::Result<Vec<BenchReport>, Failure> {
    let opts = BenchOptions {
        seed: args.seed,
        ..Default::default()
    };
    let dims = |default: &[usize]| -> std::result::Result<Vec<usize>, Failure> {
        match &args.dims {
            Some(d) => parse_dims(d).map_err(usage),
            None => Ok(default.to_vec()),
        }
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("bench_{}.csv", args.suite)));
    let mut extra: Vec<(PathBuf, String)> = Vec::new();
    let reports: Vec<BenchReport> = match args.suite.as_str() {
        "hypercube" => {
            let d = dims(&[2, 5, 10, 20])?;
            run_hypercube_suite(&d, &opts).map_err(runtime)?.into_iter().map(|r| r.report).collect()
        }
        "hypersphere" => {
            let d = dims(&[2, 5, 10])?;
            run_hypersphere_suite(&d, &opts).map_err(runtime)?.into_iter().map(|r| r.report).collect()
        }
        "shapes2d" => {
            let runs = run_2d_suite(&opts).map_err(runtime)?;
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            for r in &runs {
                let name = format!("{stem}_{}_snapshots.csv", r.report.case);
                extra.push((out.with_file_name(name), snapshot_csv(&r.snapshots).map_err(runtime)?));
            }
            runs.into_iter().map(|r| r.report).collect()
        }
        "aggregation" => {
            if args.resources == 0 || args.horizon == 0 {
                return Err(usage("--resources and --horizon must be positive"));
            }
            let (run, disagg, _) =
                run_aggregation_demo(args.resources, args.horizon, &opts).map_err(runtime)?;
            vec![run.report, disagg]
        }
        other => return Err(usage(format!("unknown suite '{other}'"))),
    };
    write_atomic(&out, &reports_csv(&reports)).map_err(runtime)?;
    for (path, text) in &extra {
        write_atomic(path, text).map_err(runtime)?;
    }
    for r in &reports {
        eprintln!(
            "{}: converged {:e}, check {:e} (limit {:e}) {} in {:.2} s",
            r.case,
            r.converged_error,
            r.check,
            r.limit,
            if r.passed { "pass" } else { "FAIL" },
            r.wall_time
        );
    }
    if args.strict && reports.iter().any(|r| !r.passed) {
        return Err(runtime("one or more cases missed their threshold"));
    }
    Ok(reports)
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a).map(|s| {
            let _ = std::io::stdout().write_all(s.as_bytes());
        }),
        Command::Bench(a) => cmd_bench(a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("polyfit: {}", f.message);
            f.code
        }
    }
}
