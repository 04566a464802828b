//! `explab`: command-line front end.
//!
//! Every JSON report has the shape
//! `{"schema": "explab/1", "command": ..., "config": {...}, "result": ...}`
//! where `config` is the complete, defaulted argument set of the run.
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 not found or
//! budget exhausted.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use explab_core::classify::{classify_parameter, ClassifyError};
use explab_core::derivatives::{build_ledger, levin_estimate, transversality_ratio};
use explab_core::hyperbolic::{find_hyperbolic_near, HyperbolicError, SearchStrategy};
use explab_core::measure::density_scan;
use explab_core::motion::{distortion_report, time_to_scale_with, track_point, verify_conjugacy, MotionError};
use explab_core::orbit::{singular_orbit, EscapePolicy, Param, DEFAULT_MAX_ITER, DEFAULT_RE_THRESHOLD};
use explab_core::render::{render_dynamical_plane, render_parameter_plane, write_atomic, write_ppm, Palette, ViewRect};
use explab_core::{Complex, DistortionStats};

const SCHEMA: &str = "explab/1";
const THREADS_ENV: &str = "EXPLAB_THREADS";

/// A complex number written `re,im`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ComplexArg(Complex);

impl FromStr for ComplexArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (re, im) = s.split_once(',').ok_or_else(|| format!("expected re,im, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        let z = Complex::new(parse(re)?, parse(im)?);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(format!("{s:?} is not finite"));
        }
        Ok(ComplexArg(z))
    }
}

impl fmt::Display for ComplexArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0.re, self.0.im)
    }
}

impl Serialize for ComplexArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `WIDTHxHEIGHT`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Size(usize, usize);

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let parse = |t: &str| t.parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
        Ok(Size(parse(w)?, parse(h)?))
    }
}

impl Serialize for Size {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&format_args!("{}x{}", self.0, self.1))
    }
}

/// `re_min,re_max,im_min,im_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RectArg([f64; 4]);

impl FromStr for RectArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let arr: [f64; 4] = v.try_into().map_err(|_| format!("expected four numbers, got {s:?}"))?;
        Ok(RectArg(arr))
    }
}

impl Serialize for RectArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let [a, b, c, d] = self.0;
        s.collect_str(&format_args!("{a},{b},{c},{d}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "explab", version, about = "Numerical laboratory for lambda * exp(z)")]
struct Cli {
    /// Worker threads (default: $EXPLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Singular orbit and derivative ledger.
    Orbit(OrbitArgs),
    /// Classify one parameter.
    Classify(ClassifyArgs),
    /// Find a certified hyperbolic parameter near a seed.
    FindHyp(FindHypArgs),
    /// Monte-Carlo density scan.
    Density(DensityArgs),
    /// Track a post-singular point under a parameter change.
    Motion(MotionArgs),
    /// Distortion statistics over a radius ladder.
    Distortion(DistortionArgs),
    /// Render the parameter or dynamical plane to PPM.
    Render(RenderArgs),
    /// Orbit time at which a parameter disk reaches a given scale.
    TimeToScale(TimeToScaleArgs),
}

#[derive(Args, Debug, Serialize)]
struct PolicyArgs {
    /// Iteration budget.
    #[arg(long = "iters", default_value_t = DEFAULT_MAX_ITER)]
    iters: usize,
    /// Escape when Re z exceeds this (at most 700).
    #[arg(long, default_value_t = DEFAULT_RE_THRESHOLD)]
    threshold: f64,
}

impl PolicyArgs {
    fn policy(&self) -> Result<EscapePolicy, CliError> {
        EscapePolicy::new(self.threshold, self.iters).map_err(usage)
    }
}

#[derive(Args, Debug, Serialize)]
struct OrbitArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda: ComplexArg,
    #[command(flatten)]
    #[serde(flatten)]
    policy: PolicyArgs,
    /// Convergence tolerance for the Levin estimate.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// JSON report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ledger CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ClassifyArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda: ComplexArg,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[command(flatten)]
    #[serde(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum StrategyArg {
    Scan,
    Route,
}

#[derive(Args, Debug, Serialize)]
struct FindHypArgs {
    #[arg(long, allow_hyphen_values = true)]
    seed_lambda: ComplexArg,
    #[arg(long)]
    radius: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Route)]
    strategy: StrategyArg,
    #[command(flatten)]
    #[serde(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DensityArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda0: ComplexArg,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Descending radii, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    radii: Vec<f64>,
    /// Ascending budgets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "20,40,80")]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Candidate-fraction matrix CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MotionArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda0: ComplexArg,
    #[arg(long, allow_hyphen_values = true)]
    lambda1: ComplexArg,
    /// Base point (default: the first orbit point, lambda0 itself).
    #[arg(long, allow_hyphen_values = true)]
    point: Option<ComplexArg>,
    #[arg(long, default_value_t = 30)]
    depth: usize,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DistortionArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda0: ComplexArg,
    /// Radius ladder, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-4,1e-5")]
    radii: Vec<f64>,
    /// Orbit time (default: time to reach --scale from the first radius).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    scale: f64,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PlaneArg {
    Parameter,
    Dynamical,
}

#[derive(Args, Debug, Serialize)]
struct RenderArgs {
    /// re_min,re_max,im_min,im_max
    #[arg(long, allow_hyphen_values = true, default_value = "-4,4,-4,4")]
    rect: RectArg,
    #[arg(long, default_value = "800x800")]
    size: Size,
    #[arg(long, value_enum, default_value_t = PlaneArg::Parameter)]
    plane: PlaneArg,
    /// Parameter for the dynamical plane.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<ComplexArg>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long = "iters", default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = DEFAULT_RE_THRESHOLD)]
    threshold: f64,
    /// PPM output path.
    #[arg(long)]
    out: PathBuf,
    /// JSON report path (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TimeToScaleArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda0: ComplexArg,
    #[arg(long)]
    radius: f64,
    #[arg(long, default_value_t = 0.25)]
    scale: f64,
    #[arg(long = "iters", default_value_t = DEFAULT_MAX_ITER)]
    iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
    NotFound(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::NotFound(_) => 3,
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn param(arg: ComplexArg) -> Result<Param, CliError> {
    Param::new(arg.0).map_err(usage)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive, got {v}")))
    }
}

fn report<C: Serialize>(command: &str, config: &C, threads: usize, result: Value) -> Result<Value, CliError> {
    let mut config = serde_json::to_value(config).map_err(runtime)?;
    config["threads"] = json!(threads);
    Ok(json!({
        "schema": SCHEMA,
        "command": command,
        "config": config,
        "result": result,
    }))
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)? + "\n";
    match out {
        Some(path) => write_atomic(path, text.as_bytes()).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(runtime)
}

fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(runtime)?;
    write_atomic(path, &buf).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_orbit(a: &OrbitArgs, threads: usize) -> Result<(), CliError> {
    let lambda = param(a.lambda)?;
    let policy = a.policy.policy()?;
    let record = singular_orbit(lambda, &policy);
    let ledger = build_ledger(lambda, &policy);
    let levin = levin_estimate(&ledger, a.tol);
    let t_last = (ledger.truncated_at >= 1)
        .then(|| transversality_ratio(&ledger, ledger.truncated_at))
        .transpose()
        .map_err(runtime)?;
    if let Some(path) = &a.csv {
        write_csv(path, |b| ledger.write_csv(b))?;
    }
    let result = json!({
        "orbit": to_value(&record)?,
        "ledger": to_value(&ledger)?,
        "levin": to_value(&levin)?,
        "transversality_last": to_value(&t_last)?,
    });
    emit(&report("orbit", a, threads, result)?, a.out.as_deref())
}

fn cmd_classify(a: &ClassifyArgs, threads: usize) -> Result<(), CliError> {
    let lambda = param(a.lambda)?;
    let policy = a.policy.policy()?;
    let class = classify_parameter(lambda, &policy, a.delta).map_err(|e| match e {
        ClassifyError::InvalidDelta(_) => usage(e),
        _ => runtime(e),
    })?;
    let result = json!({ "class": to_value(&class)? });
    emit(&report("classify", a, threads, result)?, a.out.as_deref())
}

fn cmd_find_hyp(a: &FindHypArgs, threads: usize) -> Result<(), CliError> {
    let lambda0 = param(a.seed_lambda)?;
    let r = positive("radius", a.radius)?;
    let policy = a.policy.policy()?;
    let strategy = match a.strategy {
        StrategyArg::Scan => SearchStrategy::Scan,
        StrategyArg::Route => SearchStrategy::Route,
    };
    let witness = find_hyperbolic_near(lambda0, r, &policy, strategy).map_err(|e| match e {
        HyperbolicError::NotFound { .. } => CliError::NotFound(e.to_string()),
        HyperbolicError::InvalidInput(_) => usage(e),
        _ => runtime(e),
    })?;
    let result = json!({ "witness": to_value(&witness)? });
    emit(&report("find-hyp", a, threads, result)?, a.out.as_deref())
}

fn cmd_density(a: &DensityArgs, threads: usize) -> Result<(), CliError> {
    let lambda0 = param(a.lambda0)?;
    let rep = density_scan(lambda0, a.delta, &a.radii, &a.budgets, a.samples, a.seed).map_err(usage)?;
    if let Some(path) = &a.csv {
        write_csv(path, |b| rep.write_csv(b))?;
    }
    let result = json!({
        "report": to_value(&rep)?,
        "candidate_fractions": rep.candidate_fractions(),
        "budget_monotone": rep.is_budget_monotone(),
    });
    emit(&report("density", a, threads, result)?, a.out.as_deref())
}

fn motion_error(e: MotionError) -> CliError {
    match e {
        MotionError::PreconditionViolation(_) => usage(e),
        MotionError::BudgetExceeded { .. } => CliError::NotFound(e.to_string()),
        _ => runtime(e),
    }
}

fn cmd_motion(a: &MotionArgs, threads: usize) -> Result<(), CliError> {
    let l0 = param(a.lambda0)?;
    let l1 = param(a.lambda1)?;
    let z = a.point.map_or(l0.value(), |p| p.0);
    let track = track_point(l0, l1, z, a.depth, a.steps).map_err(motion_error)?;
    let verified = verify_conjugacy(&track).map_err(motion_error)?;
    let result = json!({ "track": to_value(&track)?, "verified_residual": verified });
    emit(&report("motion", a, threads, result)?, a.out.as_deref())
}

fn cmd_distortion(a: &DistortionArgs, threads: usize) -> Result<(), CliError> {
    let l0 = param(a.lambda0)?;
    let first = *a.radii.first().ok_or_else(|| usage("--radii is empty"))?;
    for &r in &a.radii {
        positive("radii", r)?;
    }
    let n = match a.n {
        Some(n) => n,
        None => time_to_scale_with(l0, first, positive("scale", a.scale)?, DEFAULT_MAX_ITER).map_err(motion_error)?,
    };
    let rows: Vec<DistortionStats> = a.radii.iter().map(|&r| distortion_report(l0, r, n, a.pairs, a.seed)).collect();
    if let Some(path) = &a.csv {
        write_csv(path, |b| DistortionStats::write_csv(&rows, b))?;
    }
    let result = json!({ "n": n, "rows": to_value(&rows)? });
    emit(&report("distortion", a, threads, result)?, a.out.as_deref())
}

fn cmd_render(a: &RenderArgs, threads: usize) -> Result<(), CliError> {
    let [x0, x1, y0, y1] = a.rect.0;
    let rect = ViewRect::new(x0, x1, y0, y1, a.size.0, a.size.1).map_err(usage)?;
    let policy = EscapePolicy::new(a.threshold, a.iters).map_err(usage)?;
    let image = match a.plane {
        PlaneArg::Parameter => render_parameter_plane(&rect, &policy, positive("delta", a.delta)?, &Palette::default()),
        PlaneArg::Dynamical => {
            let lambda = a.lambda.ok_or_else(|| usage("--lambda is required for the dynamical plane"))?;
            render_dynamical_plane(param(lambda)?, &rect, &policy)
        }
    };
    write_ppm(&image, &a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let result = json!({
        "image": a.out.display().to_string(),
        "width": image.width,
        "height": image.height,
        "format": "ppm-p6",
    });
    emit(&report("render", a, threads, result)?, a.report.as_deref())
}

fn cmd_time_to_scale(a: &TimeToScaleArgs, threads: usize) -> Result<(), CliError> {
    let l0 = param(a.lambda0)?;
    let n = time_to_scale_with(l0, positive("radius", a.radius)?, positive("scale", a.scale)?, a.iters)
        .map_err(motion_error)?;
    emit(&report("time-to-scale", a, threads, json!({ "n": n }))?, a.out.as_deref())
}

/// `--threads`, then `EXPLAB_THREADS`, then the hardware default (0).
fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={s:?} is not a thread count"))),
        _ => Ok(0),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = resolve_threads(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(runtime)?;
    let threads = rayon::current_num_threads();
    match &cli.command {
        Command::Orbit(a) => cmd_orbit(a, threads),
        Command::Classify(a) => cmd_classify(a, threads),
        Command::FindHyp(a) => cmd_find_hyp(a, threads),
        Command::Density(a) => cmd_density(a, threads),
        Command::Motion(a) => cmd_motion(a, threads),
        Command::Distortion(a) => cmd_distortion(a, threads),
        Command::Render(a) => cmd_render(a, threads),
        Command::TimeToScale(a) => cmd_time_to_scale(a, threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests exit 0, real usage errors 2
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Runtime(m) | CliError::NotFound(m)) = &e;
            eprintln!("explab: {m}");
            ExitCode::from(e.code())
        }
    }
}
