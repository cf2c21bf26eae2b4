#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use logode_core::harness::{
    convergence_study, dimension_sweep, property_suite, PropertyConfig, StudyConfig, SweepConfig,
};
use logode_core::signature::{p_variation_level1, path_log_signature, path_signature};
use logode_core::tensor::MAX_DEPTH;
use logode_core::{
    Driver, Error, GroupIncrementDriver, Partition, PiecewiseLinearPath, Scheme, SchemeConfig, TruncatedTensor,
    VectorFieldSystem,
};

const PATH_HELP: &str = "\
Path CSV: header `t,x1,...,xd`, one sample per row, strictly increasing t.";

const TENSOR_HELP: &str = "\
Tensor JSON: {\"dim\":d,\"depth\":N,\"scalar\":s,\"levels\":[[d entries],[d^2 entries],...]}
with level-k entries in row-major word order (the last letter varies fastest).";

const SOLVE_HELP: &str = "\
Field JSON:
  {\"kind\":\"linear\",\"dim_v\":d,\"dim_u\":e,\"gamma\":g,\"lip_norm\":L,
   \"A\":[d matrices, each a list of e rows],\"b\":[d vectors of length e]}
  {\"kind\":\"polynomial\",\"dim_v\":d,\"dim_u\":e,\"gamma\":g,\"lip_norm\":L,
   \"terms\":[{\"input\":i,\"output\":j,\"exponents\":[n_1,...,n_e],\"coeff\":c}]}
  Indices are 0-based; f(e_i)(y)_j collects the terms with that input and output.
Driver JSON: {\"depth\":N,\"dim\":d,\"increments\":[tensor JSON,...],\"controls\":[w,...]}
Path CSV: header `t,x1,...,xd`.
Output: CSV `t,y1,...,ye`; for increment drivers t is the number of increments consumed.";

const CONVERGE_HELP: &str = "\
Study JSON:
  {\"field\": field JSON object or file name,
   \"path\": {\"times\":[...],\"points\":[[...],...]} or a CSV/JSON file name,
   \"scheme\": \"euler\" | \"logode\" | \"logode_full\",
   \"depth\": N, \"meshes\": [step counts], \"target_order\": q (default N),
   \"y0\": [initial state] (default all ones), \"substeps\": K (default 16)}
File names are relative to the config file.
Output: CSV `h,error,slope_running` and a `# scheme=... slope=... target=... status=...` line.";

const SWEEP_HELP: &str = "\
Sweep JSON:
  {\"dims\": [2,4,8,16], \"family\": \"diagonal\" | \"conjugated_nilpotent\", \"seed\": s,
   \"path\": inline path or file name, \"scheme\": ..., \"depth\": N, \"steps\": M,
   \"substeps\": K (default 16), \"max_ratio\": r (default 3)}
Output: CSV `dim,error` and a `# ratio=... max_ratio=... status=...` line.";

/// Step-N Euler and log-ODE schemes for rough differential equations.
#[derive(Debug, Parser)]
#[command(name = "logode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Truncated signature of a piecewise-linear path, as tensor JSON.
    #[command(after_help = format!("{PATH_HELP}\n{TENSOR_HELP}"))]
    Sig(SigArgs),
    /// Truncated log-signature of a piecewise-linear path, as tensor JSON.
    #[command(after_help = format!("{PATH_HELP}\n{TENSOR_HELP}"))]
    Logsig(SigArgs),
    /// p-variation (the supremum of sums of |increment|^p) of the samples.
    #[command(after_help = PATH_HELP)]
    Pvar(PvarArgs),
    /// Solve dy = f(y) dx over a path or a sequence of group increments.
    #[command(after_help = format!("{SOLVE_HELP}\n{TENSOR_HELP}"))]
    Solve(SolveArgs),
    /// Convergence-order study against the reference solver.
    #[command(after_help = CONVERGE_HELP)]
    Converge(ConfigArgs),
    /// Error at a fixed mesh across state dimensions.
    #[command(after_help = SWEEP_HELP)]
    Dimsweep(ConfigArgs),
    /// Seeded randomized property checks; prints a JSON summary.
    Proptest(ProptestArgs),
}

#[derive(Debug, Args)]
struct SigArgs {
    /// Path CSV file.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Truncation depth (1 to 6).
    #[arg(long)]
    depth: Option<usize>,
    /// Start of the interval (default: first sample time).
    #[arg(long)]
    from: Option<f64>,
    /// End of the interval (default: last sample time).
    #[arg(long)]
    to: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PvarArgs {
    #[arg(long)]
    path: Option<PathBuf>,
    /// Exponent p ≥ 1.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Path CSV driver.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Group-increment driver JSON.
    #[arg(long)]
    driver: Option<PathBuf>,
    /// Vector field JSON.
    #[arg(long)]
    field: Option<PathBuf>,
    /// euler, logode, logode-full or reference.
    #[arg(long, default_value = "logode")]
    scheme: String,
    /// Truncation depth (defaults to the driver depth for --driver).
    #[arg(long)]
    depth: Option<usize>,
    /// Number of uniform steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Control threshold for greedy steps.
    #[arg(long)]
    threshold: Option<f64>,
    /// Exponent of the control used with --threshold.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// RK4 substeps for the inner flow and the reference solver.
    #[arg(long, default_value_t = logode_core::schemes::DEFAULT_SUBSTEPS)]
    substeps: usize,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProptestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure and the exit status it maps to.
#[derive(Debug)]
enum Failure {
    /// Bad flags or input files.
    Validation(String),
    /// The numerics broke down.
    Numerical(String),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn invalid(flag: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Validation(format!("--{flag}: {msg}"))
}

/// Attributes a library error to `flag`, keeping numerical failures apart.
fn blame(flag: &'static str) -> impl Fn(Error) -> Failure {
    move |e| {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            invalid(flag, e)
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Outcome<T> {
    value.ok_or_else(|| invalid(flag, format!("{flag} is required")))
}

fn check_depth(depth: usize) -> Outcome<usize> {
    if (1..=MAX_DEPTH).contains(&depth) {
        Ok(depth)
    } else {
        Err(invalid("depth", format!("must be in 1..={MAX_DEPTH}, got {depth}")))
    }
}

fn read_path(file: &Path) -> Outcome<PiecewiseLinearPath> {
    PiecewiseLinearPath::from_csv_file(file).map_err(blame("path"))
}

fn read_json<T: serde::de::DeserializeOwned>(file: &Path, flag: &str) -> Outcome<T> {
    let text = std::fs::read_to_string(file).map_err(|e| invalid(flag, format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(flag, format!("{}: {e}", file.display())))
}

fn open_out(out: Option<&Path>) -> Outcome<Box<dyn Write>> {
    match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| invalid("out", format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn io_failure(e: io::Error) -> Failure {
    invalid("out", e)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome<()> {
    let mut w = open_out(out)?;
    w.write_all(text.as_bytes()).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}

fn signature(args: SigArgs, log: bool) -> Outcome<()> {
    let path = read_path(&required(args.path, "path")?)?;
    let depth = check_depth(required(args.depth, "depth")?)?;
    let s = args.from.unwrap_or(path.start());
    let t = args.to.unwrap_or(path.end());
    let tensor: TruncatedTensor = if log {
        path_log_signature(&path, s, t, depth)
    } else {
        path_signature(&path, s, t, depth)
    }
    .map_err(blame(if args.from.is_some() { "from" } else { "to" }))?;
    let json = serde_json::to_string(&tensor).expect("tensors serialize");
    emit(args.out.as_deref(), &format!("{json}\n"))
}

fn pvar(args: PvarArgs) -> Outcome<()> {
    let path = read_path(&required(args.path, "path")?)?;
    let p = required(args.p, "p")?;
    let value = p_variation_level1(&path, p).map_err(blame("p"))?;
    emit(None, &format!("{value}\n"))
}

fn parse_state(text: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| invalid("y0", format!("`{v}` is not a number")))
        })
        .collect()
}

fn solve(args: SolveArgs) -> Outcome<()> {
    let field: VectorFieldSystem = read_json(&required(args.field, "field")?, "field")?;
    let scheme: Scheme = args.scheme.parse().map_err(blame("scheme"))?;
    let y0 = parse_state(&required(args.y0, "y0")?)?;
    if y0.len() != field.dim_u() {
        return Err(invalid(
            "y0",
            format!("has {} entries but the field acts on R^{}", y0.len(), field.dim_u()),
        ));
    }
    let partition = match (args.steps, args.threshold) {
        (Some(_), Some(_)) => return Err(invalid("steps", "give either --steps or --threshold, not both")),
        (None, None) => return Err(invalid("steps", "steps or threshold is required")),
        (Some(0), None) => return Err(invalid("steps", "must be at least 1")),
        (Some(m), None) => Partition::Uniform(m),
        (None, Some(c)) => {
            if !(c > 0.0) {
                return Err(invalid("threshold", format!("must be positive, got {c}")));
            }
            if !(args.p >= 1.0) {
                return Err(invalid("p", format!("must be at least 1, got {}", args.p)));
            }
            Partition::ControlThreshold { threshold: c, p: args.p }
        }
    };
    if args.substeps == 0 {
        return Err(invalid("substeps", "must be at least 1"));
    }
    let make_cfg = |depth: usize| SchemeConfig::new(scheme, depth, args.substeps, partition).map_err(blame("depth"));

    let traj = match (args.path, args.driver) {
        (Some(_), Some(_)) => return Err(invalid("driver", "give exactly one of --path and --driver")),
        (None, None) => return Err(invalid("path", "a driver is required (--path or --driver)")),
        (Some(p), None) => {
            let path = read_path(&p)?;
            let cfg = make_cfg(check_depth(required(args.depth, "depth")?)?)?;
            logode_core::schemes::solve_global(&field, Driver::Path(&path), &y0, &cfg).map_err(blame("field"))?
        }
        (None, Some(d)) => {
            let drv: GroupIncrementDriver = read_json(&d, "driver")?;
            let depth = check_depth(args.depth.unwrap_or(drv.depth()))?;
            if depth != drv.depth() {
                return Err(invalid(
                    "depth",
                    format!("{depth} does not match the driver depth {}", drv.depth()),
                ));
            }
            let cfg = make_cfg(depth)?;
            logode_core::schemes::solve_global(&field, Driver::Increments(&drv), &y0, &cfg).map_err(blame("driver"))?
        }
    };

    let mut w = open_out(args.out.as_deref())?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=field.dim_u()).map(|i| format!("y{i}")))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io_failure)?;
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let row: Vec<String> = std::iter::once(t.to_string()).chain(y.iter().map(f64::to_string)).collect();
        writeln!(w, "{}", row.join(",")).map_err(io_failure)?;
    }
    w.flush().map_err(io_failure)
}

fn converge(args: ConfigArgs) -> Outcome<()> {
    let study = StudyConfig::from_json_file(required(args.config, "config")?).map_err(blame("config"))?;
    let report = convergence_study(&study).map_err(blame("config"))?;
    eprintln!(
        "{} N={}: slope {} (target {}), {}",
        report.scheme,
        report.depth,
        report.slope.map_or("n/a".to_string(), |s| s.to_string()),
        report.target,
        report.status.as_str()
    );
    let mut w = open_out(args.out.as_deref())?;
    report.write_csv(&mut w).map_err(blame("out"))?;
    w.flush().map_err(io_failure)
}

fn dimsweep(args: ConfigArgs) -> Outcome<()> {
    let (cfg, path) = SweepConfig::from_json_file(required(args.config, "config")?).map_err(blame("config"))?;
    let report = dimension_sweep(&cfg, &path).map_err(blame("config"))?;
    eprintln!("max/min error ratio {} ({})", report.ratio, report.status.as_str());
    let mut w = open_out(args.out.as_deref())?;
    report.write_csv(&mut w).map_err(blame("out"))?;
    w.flush().map_err(io_failure)
}

fn proptest(args: ProptestArgs) -> Outcome<()> {
    let summary = property_suite(&PropertyConfig::new(args.seed));
    for r in summary.results.iter().filter(|r| !r.passed) {
        eprintln!("property {} failed in {} of {} cases", r.name, r.failures, r.cases);
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    emit(args.out.as_deref(), &format!("{json}\n"))
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Sig(a) => signature(a, false),
        Command::Logsig(a) => signature(a, true),
        Command::Pvar(a) => pvar(a),
        Command::Solve(a) => solve(a),
        Command::Converge(a) => converge(a),
        Command::Dimsweep(a) => dimsweep(a),
        Command::Proptest(a) => proptest(a),
    }
}

pub fn main(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
