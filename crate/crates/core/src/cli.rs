//! Batch command-line front end: dataset ingestion, run configuration and
//! CSV/JSON output.
//!
//! Every command computes all of its outputs in memory first and only then
//! writes files, removing anything already written if a write fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::diagnostics::{self, empirical_rate, jacobian_f, rate_bound};
use crate::dms::{self, default_starts, find_modes, DmsTrajectory, ModeSet, Status};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::kernel::Kernel;
use crate::sphere::{lonlat_grid, lonlat_to_unit, norm, unit_to_lonlat, UnitVector};
use crate::vmf::{em_fit, rule_of_thumb_bandwidth, VmfMixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[value(name = "unit_csv")]
    UnitCsv,
    #[value(name = "lonlat_csv")]
    LonlatCsv,
}

#[derive(Debug, Parser)]
#[command(name = "dirms", version, about = "Kernel density estimation, mean shift and vMF mixtures on the sphere")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sample from a vMF mixture and write samples.csv.
    Simulate(RunArgs),
    /// Find density modes and write modes.json.
    Modes(RunArgs),
    /// Label a lon/lat grid by basin of attraction (q = 2); writes basins.csv and modes.json.
    Basins(RunArgs),
    /// Fit a vMF mixture by EM; writes emfit.json and loglik.csv.
    Emfit(RunArgs),
    /// Trace one mean-shift trajectory and its Jacobian; writes trajectory.csv and jacobian.json.
    Diagnose(RunArgs),
    /// Print the rule-of-thumb bandwidth.
    Bandwidth(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unit_csv")]
    pub format: Format,
    /// "von_mises" or "truncated:p=<int>".
    #[arg(long, default_value = "von_mises")]
    pub kernel: String,
    /// A positive number or "rot" for the rule-of-thumb selector.
    #[arg(long, default_value = "rot")]
    pub bandwidth: String,
    #[arg(long, default_value_t = dms::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long = "max-iter", default_value_t = dms::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long = "merge-tol", default_value_t = dms::DEFAULT_MERGE_TOL)]
    pub merge_tol: f64,
    #[arg(long = "grid-deg", default_value_t = 2.0)]
    pub grid_deg: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "output-dir", default_value = ".")]
    pub output_dir: PathBuf,
    /// Inline JSON or a path to a JSON file.
    #[arg(long = "mixture-spec")]
    pub mixture_spec: Option<String>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Sample size for `simulate`.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Start point for `diagnose`: "lon,lat" (q = 2) or comma-separated unit coordinates.
    #[arg(long)]
    pub start: Option<String>,
    /// Worker threads for trajectory batches (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    RuleOfThumb,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub eps: f64,
    pub max_iter: usize,
    pub merge_tol: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self> {
        let kernel: Kernel = a.kernel.parse()?;
        let bandwidth = if a.bandwidth.trim() == "rot" {
            Bandwidth::RuleOfThumb
        } else {
            let h: f64 = a
                .bandwidth
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bandwidth {:?} is neither a number nor \"rot\"", a.bandwidth)))?;
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidConfig(format!("bandwidth must be > 0, got {h}")));
            }
            Bandwidth::Fixed(h)
        };
        if !(a.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be > 0, got {}", a.eps)));
        }
        if a.max_iter == 0 {
            return Err(Error::InvalidConfig("max-iter must be >= 1".into()));
        }
        if !(a.merge_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("merge-tol must be > 0, got {}", a.merge_tol)));
        }
        Ok(Self { kernel, bandwidth, eps: a.eps, max_iter: a.max_iter, merge_tol: a.merge_tol, seed: a.seed })
    }

    pub fn resolve_bandwidth(&self, data: &[UnitVector]) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) => Ok(h),
            Bandwidth::RuleOfThumb => rule_of_thumb_bandwidth(data),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Vec<UnitVector>,
    pub dim_q: usize,
    pub source: String,
}

/// Reads a dataset. A first line that does not parse as numbers is taken as
/// a header. Rows whose norm is off by more than `1e-6` are renormalized with
/// a warning.
pub fn ingest(path: &Path, format: Format) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut ds = parse_points(&text, format)?;
    ds.source = path.display().to_string();
    Ok(ds)
}

pub fn parse_points(text: &str, format: Format) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut width: Option<usize> = None;
    let mut drifted = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if points.is_empty() && width.is_none() && k == 0 => continue,
            Err(_) => {
                return Err(Error::ParseError { line, message: format!("non-numeric field in {:?}", rec.as_slice()) })
            }
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParseError { line, message: "non-finite value".into() });
        }
        let p = match format {
            Format::LonlatCsv => {
                if vals.len() != 2 {
                    return Err(Error::ParseError { line, message: format!("expected 2 columns, found {}", vals.len()) });
                }
                lonlat_to_unit(vals[0], vals[1]).map_err(|e| Error::ParseError { line, message: e.to_string() })?
            }
            Format::UnitCsv => {
                if vals.len() < 2 {
                    return Err(Error::ParseError { line, message: "need at least 2 coordinates".into() });
                }
                if let Some(w) = width {
                    if w != vals.len() {
                        return Err(Error::ParseError {
                            line,
                            message: format!("expected {w} columns, found {}", vals.len()),
                        });
                    }
                }
                width = Some(vals.len());
                if (norm(&vals) - 1.0).abs() > 1e-6 {
                    drifted += 1;
                }
                UnitVector::new(vals).map_err(|e| Error::ParseError { line, message: e.to_string() })?
            }
        };
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::EmptyFile);
    }
    if drifted > 0 {
        log::warn!("{drifted} input rows were not unit norm (off by more than 1e-6) and were renormalized");
    }
    let dim_q = points[0].dim_q();
    Ok(Dataset { points, dim_q, source: "<memory>".into() })
}

/// Lossless float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn points_to_csv(points: &[UnitVector]) -> String {
    let mut s = String::new();
    for p in points {
        let row: Vec<String> = p.as_slice().iter().map(|v| fmt_f64(*v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Deserialize)]
struct MixtureSpec {
    weights: Vec<f64>,
    kappas: Vec<f64>,
    #[serde(default)]
    means: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    means_lonlat: Option<Vec<[f64; 2]>>,
}

/// Parses `{"weights": [...], "kappas": [...], "means": [[...]...]}`; means may
/// instead be given as `"means_lonlat": [[lon, lat], ...]` in degrees. The
/// argument is inline JSON or a path to a file holding it.
pub fn parse_mixture_spec(arg: &str) -> Result<VmfMixture> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| Error::InvalidConfig(format!("cannot read mixture spec {arg}: {e}")))?
    };
    let spec: MixtureSpec =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("bad mixture spec: {e}")))?;
    let means = match (spec.means, spec.means_lonlat) {
        (Some(m), None) => m.into_iter().map(UnitVector::new).collect::<Result<Vec<_>>>()?,
        (None, Some(m)) => m.iter().map(|ll| lonlat_to_unit(ll[0], ll[1])).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::InvalidConfig("mixture spec needs exactly one of \"means\" or \"means_lonlat\"".into())),
    };
    VmfMixture::new(spec.weights, means, spec.kappas)
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Files a command wants written, plus text for stdout.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    pub stdout: String,
}

fn load(a: &RunArgs) -> Result<Dataset> {
    let path = a.input.as_ref().ok_or_else(|| Error::InvalidConfig("--input is required".into()))?;
    ingest(path, a.format)
}

fn build_model(a: &RunArgs, cfg: &RunConfig) -> Result<(Dataset, KdeModel)> {
    let ds = load(a)?;
    let h = cfg.resolve_bandwidth(&ds.points)?;
    let model = KdeModel::new(ds.points.clone(), cfg.kernel, h)?;
    Ok((ds, model))
}

fn lonlat_json(p: &UnitVector) -> Value {
    match unit_to_lonlat(p) {
        Ok((lon, lat)) => json!([lon, lat]),
        Err(_) => Value::Null,
    }
}

fn modes_json(model: &KdeModel, ms: &ModeSet, n_starts: usize) -> Result<Value> {
    let mut modes = Vec::new();
    for (k, m) in ms.modes.iter().enumerate() {
        let rb = if model.kernel().twice_differentiable() { rate_bound(model, m).ok() } else { None };
        modes.push(json!({
            "index": k,
            "coords": m.as_slice(),
            "lonlat": lonlat_json(m),
            "density": ms.densities[k],
            "count": ms.counts[k],
            "rate_bound": rb,
        }));
    }
    let saddles: Vec<Value> = ms
        .saddles
        .iter()
        .map(|s| {
            json!({
                "coords": s.point.as_slice(),
                "lonlat": lonlat_json(&s.point),
                "density": s.density,
                "count": s.count,
                "max_tangent_eig": s.max_tangent_eig,
            })
        })
        .collect();
    Ok(json!({
        "kernel": model.kernel().to_string(),
        "bandwidth": model.bandwidth(),
        "n": model.n(),
        "q": model.dim_q(),
        "n_starts": n_starts,
        "merge_tol": ms.merge_tol,
        "non_converged": ms.non_converged,
        "modes": modes,
        "saddles": saddles,
    }))
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

pub fn cmd_simulate(a: &RunArgs) -> Result<Outputs> {
    let spec = a
        .mixture_spec
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("simulate needs --mixture-spec".into()))?;
    if a.n == 0 {
        return Err(Error::InvalidConfig("--n must be >= 1".into()));
    }
    let mix = parse_mixture_spec(spec)?;
    let pts = mix.sample(a.n, a.seed);
    Ok(Outputs { files: vec![("samples.csv".into(), points_to_csv(&pts))], stdout: String::new() })
}

pub fn cmd_modes(a: &RunArgs) -> Result<Outputs> {
    let cfg = RunConfig::from_args(a)?;
    let (_, model) = build_model(a, &cfg)?;
    let starts = default_starts(&model);
    let ms = in_pool(a.threads, || find_modes(&model, &starts, cfg.eps, cfg.max_iter, cfg.merge_tol))??;
    let v = modes_json(&model, &ms, starts.len())?;
    Ok(Outputs { files: vec![("modes.json".into(), to_pretty(&v))], stdout: String::new() })
}

pub fn cmd_basins(a: &RunArgs) -> Result<Outputs> {
    let cfg = RunConfig::from_args(a)?;
    let (ds, model) = build_model(a, &cfg)?;
    if ds.dim_q != 2 {
        return Err(Error::UnsupportedDimension { supported: 2, got: ds.dim_q });
    }
    let grid = lonlat_grid(a.grid_deg)?;
    let pts: Vec<UnitVector> = grid.iter().map(|g| g.2.clone()).collect();
    let bg = in_pool(a.threads, || dms::basin_grid(&model, &pts, cfg.eps, cfg.max_iter, cfg.merge_tol))??;
    let mut csv = String::from("lon,lat,label,iterations\n");
    for (k, (lon, lat, _)) in grid.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{},{}", fmt_f64(*lon), fmt_f64(*lat), bg.labels[k], bg.iterations[k]);
    }
    let v = modes_json(&model, &bg.modes, pts.len())?;
    Ok(Outputs { files: vec![("basins.csv".into(), csv), ("modes.json".into(), to_pretty(&v))], stdout: String::new() })
}

pub fn cmd_emfit(a: &RunArgs) -> Result<Outputs> {
    let ds = load(a)?;
    let m = a.components.ok_or_else(|| Error::InvalidConfig("emfit needs --components".into()))?;
    let rep = em_fit(&ds.points, m, a.seed, 1e-8, 500)?;
    let comps: Vec<Value> = (0..rep.fitted.components())
        .map(|j| {
            json!({
                "weight": rep.fitted.weights[j],
                "mean": rep.fitted.means[j].as_slice(),
                "mean_lonlat": lonlat_json(&rep.fitted.means[j]),
                "kappa": rep.fitted.concentrations[j],
            })
        })
        .collect();
    let mut v = json!({
        "components": comps,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "loglik": rep.loglik_trace.last().copied(),
        "capped": rep.capped,
        "seed": a.seed,
    });
    if let Some(spec) = a.mixture_spec.as_deref() {
        let truth = parse_mixture_spec(spec)?;
        v["truth"] = json!({
            "weights": truth.weights,
            "means": truth.means.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>(),
            "kappas": truth.concentrations,
        });
    }
    let mut ll = String::from("iteration,loglik\n");
    for (t, l) in rep.loglik_trace.iter().enumerate() {
        let _ = writeln!(ll, "{t},{}", fmt_f64(*l));
    }
    Ok(Outputs { files: vec![("emfit.json".into(), to_pretty(&v)), ("loglik.csv".into(), ll)], stdout: String::new() })
}

fn parse_start(s: &str, q: usize) -> Result<UnitVector> {
    let vals: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| Error::InvalidConfig(format!("bad --start {s:?}")))?;
    if q == 2 && vals.len() == 2 {
        return lonlat_to_unit(vals[0], vals[1]);
    }
    if vals.len() != q + 1 {
        return Err(Error::InvalidConfig(format!("--start needs {} coordinates", q + 1)));
    }
    UnitVector::normalize(&vals)
}

pub fn trajectory_csv(traj: &DmsTrajectory) -> String {
    let d = traj.points[0].ambient_dim();
    let mut s = String::from("t");
    for k in 0..d {
        let _ = write!(s, ",x{k}");
    }
    s.push_str(",density,step_norm\n");
    let steps = traj.step_norms();
    for (t, p) in traj.points.iter().enumerate() {
        let _ = write!(s, "{t}");
        for v in p.as_slice() {
            let _ = write!(s, ",{}", fmt_f64(*v));
        }
        let sn = if t == 0 { 0.0 } else { steps[t - 1] };
        let _ = writeln!(s, ",{},{}", fmt_f64(traj.densities[t]), fmt_f64(sn));
    }
    s
}

pub fn cmd_diagnose(a: &RunArgs) -> Result<Outputs> {
    let cfg = RunConfig::from_args(a)?;
    let (ds, model) = build_model(a, &cfg)?;
    let start = match a.start.as_deref() {
        Some(s) => parse_start(s, ds.dim_q)?,
        None => ds.points[0].clone(),
    };
    let traj = dms::run(&model, &start, cfg.eps, cfg.max_iter)?;
    let mut v = json!({
        "status": traj.status,
        "iterations": traj.iterations,
        "start": start.as_slice(),
        "endpoint": traj.endpoint().as_slice(),
        "bandwidth": model.bandwidth(),
        "kernel": model.kernel().to_string(),
    });
    if traj.status == Status::Converged && model.kernel().twice_differentiable() {
        let m = dms::polish(&model, traj.endpoint())?;
        let rep = jacobian_f(&model, &m)?;
        v["mode"] = json!(m.as_slice());
        v["mode_density"] = json!(model.density(&m)?);
        v["jacobian"] = serde_json::to_value(&rep).expect("report serializes");
        v["rate_bound"] = json!(rate_bound(&model, &m).ok());
        v["empirical_rates"] = json!(empirical_rate(&traj, &m).ok());
        v["taylor_exponent"] = json!(diagnostics::taylor_residual_exponent(&model, &m, cfg.seed).ok());
    }
    Ok(Outputs {
        files: vec![("trajectory.csv".into(), trajectory_csv(&traj)), ("jacobian.json".into(), to_pretty(&v))],
        stdout: String::new(),
    })
}

pub fn cmd_bandwidth(a: &RunArgs) -> Result<Outputs> {
    let ds = load(a)?;
    let h = rule_of_thumb_bandwidth(&ds.points)?;
    Ok(Outputs { files: vec![], stdout: format!("{}\n", fmt_f64(h)) })
}

pub fn execute(cmd: &Command) -> Result<Outputs> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Modes(a) => cmd_modes(a),
        Command::Basins(a) => cmd_basins(a),
        Command::Emfit(a) => cmd_emfit(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
    }
}

fn output_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Simulate(a)
        | Command::Modes(a)
        | Command::Basins(a)
        | Command::Emfit(a)
        | Command::Diagnose(a)
        | Command::Bandwidth(a) => &a.output_dir,
    }
}

/// Writes every output file; on failure removes the ones already written.
pub fn write_outputs(dir: &Path, out: &Outputs) -> Result<Vec<PathBuf>> {
    if !out.files.is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut written = Vec::new();
    for (name, body) in &out.files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(Error::Io(format!("{}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(written)
}

/// Machine-readable name of an error variant.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::ZeroVector => "ZeroVector",
        Error::DimensionMismatch { .. } => "DimensionMismatch",
        Error::UnsupportedDimension { .. } => "UnsupportedDimension",
        Error::Overflow(_) => "Overflow",
        Error::QuadratureFailure { .. } => "QuadratureFailure",
        Error::DomainError(_) => "DomainError",
        Error::NegativeArgument(_) => "NegativeArgument",
        Error::UnsupportedKernel(_) => "UnsupportedKernel",
        Error::DegenerateStep => "DegenerateStep",
        Error::NoConvergedTrajectory => "NoConvergedTrajectory",
        Error::AscentViolation { .. } => "AscentViolation",
        Error::AllZero => "AllZero",
        Error::InnerDivergence(_) => "InnerDivergence",
        Error::EmptyComponent(_) => "EmptyComponent",
        Error::ZeroGradient => "ZeroGradient",
        Error::InsufficientIterations(_) => "InsufficientIterations",
        Error::ParseError { .. } => "ParseError",
        Error::EmptyFile => "EmptyFile",
        Error::InvalidConfig(_) => "InvalidConfig",
        Error::Io(_) => "Io",
    }
}

/// Exit status for an error: 2 for usage/configuration mistakes, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 2,
        _ => 1,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = execute(&cli.command).and_then(|out| {
        write_outputs(output_dir(&cli.command), &out)?;
        print!("{}", out.stdout);
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = json!({ "error": error_kind(&e), "message": e.to_string() });
            eprintln!("{msg}");
            exit_code(&e)
        }
    }
}
