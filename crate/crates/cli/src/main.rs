//! Command-line front end: simulate trajectories, run any sensitivity
//! estimator with adaptive stopping, and rebuild the reference benchmark
//! tables at a configurable sample scale.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stochsens::apa::{self, analytic_kernel, ApaConfig};
use stochsens::fdiff::{self, default_h, Coupling, FdConfig};
use stochsens::girsanov;
use stochsens::model::{load_model, validate, Violation};
use stochsens::oracle;
use stochsens::stats::{run_fixed, run_until_target, RunMeta, RunOutput, Sample};
use stochsens::{
    builtin, simulate, Error, EstimateReport, ReactionNetwork, RngStream, RunConfig, SimOptions,
};

#[derive(Parser)]
#[command(
    name = "stochsens",
    version,
    about = "Simulation and unbiased parameter-sensitivity estimation for reaction networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample trajectories of a model and write them as CSV
    Simulate(SimulateArgs),
    /// Estimate d/dtheta E[f(X(T))] with a chosen estimator
    Sensitivity(SensitivityArgs),
    /// Rebuild a reference benchmark table at a configurable sample scale
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file path or built-in name (pure-birth, birth-death, gene-expression)
    model: String,
    /// Time horizon; defaults to the model's own
    #[arg(long = "T")]
    t: Option<f64>,
    /// Number of independent trajectories
    #[arg(long, default_value_t = 1)]
    paths: u64,
    /// RNG seed; defaults to $STOCHSENS_SEED, then 12345
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted); --paths > 1 inserts _0000 style
    /// indices before the extension
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Model file path or built-in name (pure-birth, birth-death, gene-expression)
    model: String,
    /// Estimator to run
    #[arg(long, value_enum)]
    method: Method,
    /// Time horizon; defaults to the model's own
    #[arg(long = "T")]
    t: Option<f64>,
    /// Sensitive-parameter value; defaults to the model's stored value
    #[arg(long)]
    theta: Option<f64>,
    /// Relative 95% confidence half-width to stop at
    #[arg(long = "rel-ci", default_value_t = 0.05)]
    rel_ci: f64,
    /// Finite-difference step; defaults to 0.01 * max(theta, 1e-3)
    #[arg(long)]
    h: Option<f64>,
    /// Auxiliary paths per correction estimate (apa)
    #[arg(long = "M", default_value_t = 50)]
    aux_paths: usize,
    /// Auxiliary horizon extension factor (apa)
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
    /// RNG seed; defaults to $STOCHSENS_SEED, then 12345
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sample fan-out
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Sample cap; hitting it without reaching the target exits 3
    #[arg(long = "n-max", default_value_t = 50_000_000)]
    n_max: u64,
    /// Report file, .json or .csv by extension
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-sample diagnostics as JSON lines (apa only)
    #[arg(long)]
    diag: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Which reference table to rebuild (1-4)
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    table: u8,
    /// Multiplier on every per-cell sample budget
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Directory receiving tableN.csv
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// RNG seed; defaults to $STOCHSENS_SEED, then 12345
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sample fan-out
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Apa,
    ApaExact,
    Girsanov,
    Cfd,
    Crp,
    Crn,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Apa => "apa",
            Method::ApaExact => "apa-exact",
            Method::Girsanov => "girsanov",
            Method::Cfd => "cfd",
            Method::Crp => "crp",
            Method::Crn => "crn",
        }
    }

    fn coupling(self) -> Option<Coupling> {
        match self {
            Method::Cfd => Some(Coupling::Cfd),
            Method::Crp => Some(Coupling::Crp),
            Method::Crn => Some(Coupling::Crn),
            _ => None,
        }
    }
}

enum CliError {
    Core(Error),
    Usage(String),
    OutputIo { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 1 for output I/O, 2 for anything wrong with the request itself,
    /// 3 when a run died on a resource cap.
    fn code(&self) -> u8 {
        match self {
            CliError::OutputIo { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Core(Error::Io(_)) => 1,
            CliError::Core(Error::JumpCapExceeded { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::OutputIo { path, source } => {
                write!(f, "writing {}: {source}", path.display())
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Sensitivity(args) => cmd_sensitivity(args),
        Cmd::Bench(args) => cmd_bench(args),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("STOCHSENS_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Usage(format!(
                "STOCHSENS_SEED must be an unsigned integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(12345),
    }
}

/// Built-in name or model file. Structural violations that make a model
/// meaningless are fatal; the growth warning is printed but tolerated,
/// since it flags a sufficient condition only.
fn resolve_model(arg: &str) -> Result<ReactionNetwork, CliError> {
    if let Some(net) = builtin::by_name(arg) {
        return Ok(net);
    }
    let net = load_model(arg).map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("cannot read model {arg:?}: {io}")),
        other => CliError::Core(other),
    })?;
    let mut hard = 0;
    for v in validate(&net) {
        if matches!(v, Violation::UnstableGain { .. }) {
            eprintln!("warning: {v}");
        } else {
            eprintln!("violation: {v}");
            hard += 1;
        }
    }
    if hard > 0 {
        return Err(CliError::Usage(format!(
            "model {arg:?} failed validation with {hard} violation(s)"
        )));
    }
    Ok(net)
}

fn check_horizon(t: f64) -> Result<(), CliError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "time horizon must be finite and nonnegative, got {t}"
        )))
    }
}

fn indexed_path(path: &Path, i: u64) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i:04}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i:04}"),
    };
    path.with_file_name(name)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, CliError> {
    let net = resolve_model(&args.model)?;
    let theta = net.params.values[&net.params.sensitive];
    let t = args.t.unwrap_or(net.t_horizon);
    check_horizon(t)?;
    if args.paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    if args.paths > 1 && args.out.is_none() {
        return Err(CliError::Usage(
            "--paths > 1 needs --out to derive one file name per path".into(),
        ));
    }
    let seed = resolve_seed(args.seed)?;
    let opts = SimOptions::default();
    for i in 0..args.paths {
        let mut rng = RngStream::new(seed, i).rng();
        let traj = simulate(&net, theta, t, &mut rng, &opts)?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).expect("writing to memory");
        match &args.out {
            None => io::stdout()
                .write_all(&buf)
                .map_err(|source| CliError::OutputIo {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?,
            Some(out) => {
                let path = if args.paths == 1 {
                    out.clone()
                } else {
                    indexed_path(out, i)
                };
                fs::write(&path, &buf).map_err(|source| CliError::OutputIo { path, source })?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Runs one sampler either to a fixed n or to the precision target.
fn drive<F>(
    sampler: F,
    fixed_n: Option<u64>,
    cfg: &RunConfig,
    meta: RunMeta,
) -> Result<RunOutput, Error>
where
    F: Fn(RngStream) -> Result<Sample, Error> + Sync,
{
    match fixed_n {
        Some(n) => run_fixed(sampler, n, cfg, meta),
        None => run_until_target(sampler, cfg, meta),
    }
}

/// Method-specific tunables. `h` falls back to the step heuristic for
/// the finite-difference couplings and is ignored elsewhere; `apa` only
/// matters for the store-backed estimator.
struct MethodTuning {
    h: Option<f64>,
    apa: ApaConfig,
}

/// Dispatches on the method name and runs the cell.
fn run_method(
    net: &ReactionNetwork,
    method: Method,
    theta: f64,
    t: f64,
    tuning: MethodTuning,
    fixed_n: Option<u64>,
    cfg: &RunConfig,
) -> Result<RunOutput, Error> {
    let meta = RunMeta {
        method: method.name(),
        theta,
        t_horizon: t,
    };
    match method {
        Method::Apa => drive(
            apa::sampler(net, theta, t, tuning.apa, cfg.collect_diag),
            fixed_n,
            cfg,
            meta,
        ),
        Method::ApaExact => {
            let kernel = analytic_kernel(net, theta)?;
            drive(
                apa::exact_sampler(net, theta, t, kernel),
                fixed_n,
                cfg,
                meta,
            )
        }
        Method::Girsanov => drive(girsanov::sampler(net, theta, t), fixed_n, cfg, meta),
        Method::Cfd | Method::Crp | Method::Crn => {
            let fd = FdConfig {
                h: tuning.h.unwrap_or_else(|| default_h(theta)),
                coupling: method.coupling().expect("coupling methods only"),
            };
            drive(fdiff::sampler(net, theta, t, fd), fixed_n, cfg, meta)
        }
    }
}

fn print_report(r: &EstimateReport) {
    println!("method      {}", r.method);
    println!("theta       {}", r.theta);
    println!("T           {}", r.t_horizon);
    println!("estimate    {}", r.estimate);
    println!("ci95_half   {}", r.ci_half);
    println!("n           {}", r.n);
    println!("variance    {}", r.sample_variance);
    println!("mean_jumps  {}", r.mean_jumps);
    println!("cost_proxy  {}", r.n as f64 * r.mean_jumps);
    println!("seconds     {:.3}", r.wall_seconds);
    println!("converged   {}", r.converged);
    if let Some(flag) = &r.flag {
        println!("flag        {flag}");
    }
}

/// Report files must be byte-identical across reruns of the same command,
/// so the wall clock stays on stdout only.
fn write_report(path: &Path, report: &EstimateReport) -> Result<(), CliError> {
    let mut r = report.clone();
    r.wall_seconds = 0.0;
    let text = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let mut s = r.to_json();
            s.push('\n');
            s
        }
        Some("csv") => format!("{}\n{}\n", EstimateReport::csv_header(), r.csv_row()),
        _ => {
            return Err(CliError::Usage(format!(
                "unsupported report extension on {} (use .json or .csv)",
                path.display()
            )))
        }
    };
    fs::write(path, text).map_err(|source| CliError::OutputIo {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_sensitivity(args: SensitivityArgs) -> Result<ExitCode, CliError> {
    let net = resolve_model(&args.model)?;
    let theta = args
        .theta
        .unwrap_or_else(|| net.params.values[&net.params.sensitive]);
    let t = args.t.unwrap_or(net.t_horizon);
    check_horizon(t)?;
    if !(args.rel_ci > 0.0 && args.rel_ci.is_finite()) {
        return Err(CliError::Usage(format!(
            "--rel-ci must be a positive number, got {}",
            args.rel_ci
        )));
    }
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    if args.aux_paths == 0 || args.kappa.is_nan() || args.kappa < 1.0 {
        return Err(CliError::Usage(
            "--M must be at least 1 and --kappa at least 1".into(),
        ));
    }
    if args.diag.is_some() && args.method != Method::Apa {
        return Err(CliError::Usage(format!(
            "--diag records auxiliary-path bookkeeping, which the {} method does not produce",
            args.method.name()
        )));
    }
    let cfg = RunConfig {
        rel_target: args.rel_ci,
        n_max: args.n_max,
        workers: args.workers,
        seed: resolve_seed(args.seed)?,
        collect_diag: args.diag.is_some(),
        ..RunConfig::default()
    };
    let apa_cfg = ApaConfig {
        aux_paths: args.aux_paths,
        extension: args.kappa,
        ..ApaConfig::default()
    };
    let tuning = MethodTuning {
        h: args.h,
        apa: apa_cfg,
    };
    let out = run_method(&net, args.method, theta, t, tuning, None, &cfg)?;
    print_report(&out.report);
    if let Some(path) = &args.out {
        write_report(path, &out.report)?;
    }
    if let Some(path) = &args.diag {
        let mut text = out.diag.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(path, text).map_err(|source| CliError::OutputIo {
            path: path.clone(),
            source,
        })?;
    }
    Ok(if out.report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

/// One benchmark table: the parameter grid, the methods to run on it, and
/// the multiplier applied to every per-cell sample budget.
struct BenchSpec {
    table: u8,
    theta_grid: Vec<f64>,
    t_grid: Vec<f64>,
    h_grid: Vec<f64>,
    methods: Vec<Method>,
    scale: f64,
}

impl BenchSpec {
    fn for_table(table: u8, scale: f64) -> Self {
        match table {
            1 => BenchSpec {
                table,
                theta_grid: vec![0.1, 0.01, 0.001, 0.0001],
                t_grid: vec![1.0, 5.0, 10.0, 20.0],
                h_grid: vec![],
                methods: vec![Method::Girsanov, Method::ApaExact],
                scale,
            },
            2 => BenchSpec {
                table,
                theta_grid: vec![0.1, 0.01, 0.001, 0.0001],
                t_grid: vec![5.0, 10.0],
                h_grid: vec![],
                methods: vec![Method::Girsanov, Method::Apa],
                scale,
            },
            3 => BenchSpec {
                table,
                theta_grid: vec![0.0693, 0.0116, 0.0023, 0.0012, 0.0],
                t_grid: vec![5.0, 10.0],
                h_grid: vec![],
                methods: vec![Method::Girsanov, Method::Apa],
                scale,
            },
            4 => BenchSpec {
                table,
                theta_grid: vec![0.0116],
                t_grid: vec![10.0],
                h_grid: vec![1e-2, 1e-3, 1e-4, 1e-5],
                methods: vec![Method::Crn, Method::Crp, Method::Cfd],
                scale,
            },
            _ => unreachable!("--table is range-checked"),
        }
    }

    /// Per-cell sample budget before scaling. Table 1 estimates variances
    /// at a fixed n; the others run to the precision target under a cap
    /// sized for the slowest reference cell.
    fn base_budget(&self) -> f64 {
        match self.table {
            1 => 100_000.0,
            2 | 3 => 50_000_000.0,
            _ => 100_000_000.0,
        }
    }

    fn scaled_budget(&self) -> u64 {
        ((self.base_budget() * self.scale).round() as u64).max(match self.table {
            1 => 100,
            _ => 1000,
        })
    }
}

const BENCH_HEADER: &str =
    "n,estimate,ci_half,sample_variance,mean_jumps,cost_proxy,oracle,ci_covers_oracle,converged,flag";

fn quote_flag(msg: &str) -> String {
    format!("\"{}\"", msg.replace('"', "\"\""))
}

fn bench_row(prefix: &str, outcome: &Result<RunOutput, Error>, oracle: f64) -> String {
    match outcome {
        Ok(out) => {
            let r = &out.report;
            let covers = (r.estimate - oracle).abs() <= r.ci_half;
            format!(
                "{prefix},{},{},{},{},{},{},{oracle},{covers},{},{}",
                r.n,
                r.estimate,
                r.ci_half,
                r.sample_variance,
                r.mean_jumps,
                r.n as f64 * r.mean_jumps,
                r.converged,
                r.flag.as_deref().map(quote_flag).unwrap_or_default(),
            )
        }
        Err(e) => format!("{prefix},,,,,,,{oracle},,,{}", quote_flag(&e.to_string())),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, CliError> {
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(CliError::Usage(format!(
            "--scale must be a positive number, got {}",
            args.scale
        )));
    }
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let spec = BenchSpec::for_table(args.table, args.scale);
    let seed = resolve_seed(args.seed)?;
    fs::create_dir_all(&args.out).map_err(|source| CliError::OutputIo {
        path: args.out.clone(),
        source,
    })?;

    let budget = spec.scaled_budget();
    let fixed_n = (spec.table == 1).then_some(budget);
    let mut rows = Vec::new();
    let mut cell = 0u64;
    let mut run_cell = |prefix: String,
                        net: &ReactionNetwork,
                        method: Method,
                        theta: f64,
                        t: f64,
                        h: Option<f64>,
                        oracle: f64| {
        let cfg = RunConfig {
            n_max: budget,
            workers: args.workers,
            seed: seed.wrapping_add(cell),
            ..RunConfig::default()
        };
        cell += 1;
        let tuning = MethodTuning {
            h,
            apa: ApaConfig::default(),
        };
        let outcome = run_method(net, method, theta, t, tuning, fixed_n, &cfg);
        match &outcome {
            Ok(out) => println!(
                "table{} {prefix} {}: estimate {:.6} +- {:.6}, n {}, {:.2}s",
                spec.table,
                method.name(),
                out.report.estimate,
                out.report.ci_half,
                out.report.n,
                out.report.wall_seconds
            ),
            Err(e) => println!(
                "table{} {prefix} {}: skipped ({e})",
                spec.table,
                method.name()
            ),
        }
        rows.push(bench_row(
            &format!("{prefix},{}", method.name()),
            &outcome,
            oracle,
        ));
    };

    if spec.table == 4 {
        let theta = spec.theta_grid[0];
        let t = spec.t_grid[0];
        let net = builtin::gene_expression(theta, t);
        let (_, oracle) = oracle::ode_mean_and_sensitivity(&net, theta, t, 1e-8)?;
        for &h in &spec.h_grid {
            for &method in &spec.methods {
                run_cell(
                    format!("{theta},{t},{h}"),
                    &net,
                    method,
                    theta,
                    t,
                    Some(h),
                    oracle,
                );
            }
        }
    } else {
        for &theta in &spec.theta_grid {
            for &t in &spec.t_grid {
                let (net, oracle) = if spec.table == 3 {
                    let net = builtin::gene_expression(theta, t);
                    let (_, sens) = oracle::ode_mean_and_sensitivity(&net, theta, t, 1e-8)?;
                    (net, sens)
                } else {
                    let net = builtin::birth_death(theta, t);
                    (net, oracle::bd_mean_sensitivity(1.0, theta, 0.0, t))
                };
                for &method in &spec.methods {
                    run_cell(format!("{theta},{t}"), &net, method, theta, t, None, oracle);
                }
            }
        }
    }

    let path = args.out.join(format!("table{}.csv", spec.table));
    let prefix_header = if spec.table == 4 {
        "theta,T,h,method"
    } else {
        "theta,T,method"
    };
    let mut text = format!("{prefix_header},{BENCH_HEADER}\n");
    for row in &rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|source| CliError::OutputIo { path, source })?;
    Ok(ExitCode::SUCCESS)
}
