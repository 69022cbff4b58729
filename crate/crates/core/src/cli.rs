//! The `deconv-hazard` command line: `estimate`, `generate` and `simulate`.
//!
//! Settings come from an optional flat config file (`key = value` per line,
//! `#` comments) and from `--set key=value` flags, which override the file.
//! Every command writes `manifest.txt` into the output directory before any
//! data file and completes it with a status line at the end.
//!
//! Exit codes: 0 ok, 2 input, 3 config, 4 numerical, 5 simulation-cell
//! failure.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::estimators::{
    default_bandwidth, sample_sd, uniform_grid, DeconvolutionEstimator, EstimatorConfig, HazardMode,
    KernelEval,
};
use crate::fourier::{ErrorModel, GridSpec, SmoothKernel};
use crate::processes::{
    draw_sample, latent_sigma, read_sample_file, write_sample_file, NoiseSpec, SampleFile, ScenarioSpec,
    RNG_ALGORITHM,
};
use crate::simulation::{
    format_real, run_coverage_experiment, run_curve_experiment, run_normality_experiment,
    run_rate_experiments, write_manifest, write_report_csv, BandwidthRule, ExperimentPlan,
};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_CELL_FAILURE: i32 = 5;

pub const ESTIMATE_HEADER: &str = "x,f_n,F_n,lambda_n,sigma_n_sq,ci_lower,ci_upper,flag";

/// Keys accepted in config files and `--set`.
pub const KNOWN_KEYS: &[&str] = &[
    "bandwidth",
    "bandwidth_c",
    "d1",
    "epsilon",
    "error",
    "failure_budget",
    "grid_max",
    "grid_min",
    "grid_step",
    "hazard_mode",
    "input",
    "kernel_eval",
    "kernel_half_width",
    "kernel_points",
    "level",
    "n",
    "nsr",
    "out",
    "replications",
    "scenario",
    "seed",
    "sigma_x",
    "verbose",
    "window_max",
    "window_min",
    "x0",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidSample(_) | Error::Io(_) => EXIT_INPUT,
            Error::InvalidParameter(_) | Error::NoAnalyticTruth(_) => EXIT_CONFIG,
            Error::CellFailed(_) => EXIT_CELL_FAILURE,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "deconv-hazard", version, about = "Deconvolution hazard-rate estimation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Plain-text config file with one `key = value` per line.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate f, F and the hazard from a sample file.
    Estimate {
        /// Sample file; overrides the `input` key.
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a contaminated sample from a scenario.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo study.
    Simulate {
        mode: Mode,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Curves,
    Coverage,
    Normality,
    Rates,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Curves => "curves",
            Mode::Coverage => "coverage",
            Mode::Normality => "normality",
            Mode::Rates => "rates",
        }
    }
}

/// Resolved configuration. Reads are recorded so the manifest can echo
/// every value a command used, defaults included.
#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl RunConfig {
    /// Parses a config file. Relative `input`/`out` paths are taken relative
    /// to `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if seen.insert(key.to_string(), i + 1).is_some() {
                return Err(CliError::config(format!("config line {}: duplicate key '{key}'", i + 1)));
            }
            let mut value = value.trim().to_string();
            if let (Some(base), "input" | "out") = (base, key) {
                if Path::new(&value).is_relative() {
                    value = base.join(&value).to_string_lossy().into_owned();
                }
            }
            cfg.set(key, &value).map_err(|e| CliError::config(format!("config line {}: {}", i + 1, e.message)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `KEY=VALUE` flag.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got '{pair}'")))?;
        self.set(k.trim(), v)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn record(&self, key: &str, value: &str) {
        self.used.borrow_mut().insert(key.to_string(), value.to_string());
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        let v = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.record(key, &v);
        v
    }

    pub fn optional(&self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if let Some(v) = &v {
            self.record(key, v);
        }
        v
    }

    fn parsed<T: FromStr>(&self, key: &str, raw: &str) -> CliResult<T> {
        raw.parse::<T>().map_err(|_| CliError::config(format!("key '{key}': cannot parse '{raw}'")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: &str) -> CliResult<T> {
        let raw = self.str_or(key, default);
        self.parsed(key, &raw)
    }

    pub fn list_or<T: FromStr>(&self, key: &str, default: &str) -> CliResult<Vec<T>> {
        let raw = self.str_or(key, default);
        raw.split(',').map(|s| self.parsed(key, s.trim())).collect()
    }

    /// Every value read so far.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.used.borrow().iter().map(|(k, v)| (format!("config.{k}"), v.clone())).collect()
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text, path.parent())?
        }
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    if let Some(out) = &common.out {
        cfg.set("out", &out.to_string_lossy())?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let out = PathBuf::from(cfg.str_or("out", "."));
    fs::create_dir_all(&out)
        .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", out.display())))?;
    let out = out
        .canonicalize()
        .map_err(|e| CliError::input(format!("cannot resolve {}: {e}", out.display())))?;
    cfg.record("out", &out.to_string_lossy());
    Ok(out)
}

/// A manifest that starts as `status = running` and is rewritten with the
/// outcome when the command ends.
struct Manifest {
    path: PathBuf,
    entries: Vec<(String, String)>,
    start: Instant,
}

impl Manifest {
    fn begin(dir: &Path, command: &str, mut entries: Vec<(String, String)>) -> CliResult<Self> {
        let mut head = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), format!("deconv-hazard {}", env!("CARGO_PKG_VERSION"))),
            ("rng".to_string(), RNG_ALGORITHM.to_string()),
        ];
        head.append(&mut entries);
        let m = Self { path: dir.join("manifest.txt"), entries: head, start: Instant::now() };
        m.write("running", &[])?;
        Ok(m)
    }

    fn write(&self, status: &str, extra: &[(String, String)]) -> CliResult<()> {
        let mut all = self.entries.clone();
        all.extend_from_slice(extra);
        all.push(("status".into(), status.into()));
        write_manifest(&self.path, &all)?;
        Ok(())
    }

    fn finish(&self, result: &CliResult<Vec<(String, String)>>) {
        let runtime = ("runtime_seconds".to_string(), format!("{:.3}", self.start.elapsed().as_secs_f64()));
        let outcome = match result {
            Ok(extra) => {
                let mut e = extra.clone();
                e.push(runtime);
                self.write("ok", &e)
            }
            Err(err) => self.write(&format!("failed (exit {}): {}", err.code, err.message), &[runtime]),
        };
        if let Err(e) = outcome {
            eprintln!("warning: {e}");
        }
    }
}

fn kernel_eval(cfg: &RunConfig) -> CliResult<KernelEval<f64>> {
    let mode = cfg.str_or("kernel_eval", "grid");
    let defaults = GridSpec::<f64>::default();
    let half_width: f64 = cfg.get_or("kernel_half_width", &defaults.half_width.to_string())?;
    let points: usize = cfg.get_or("kernel_points", &defaults.points.to_string())?;
    match mode.as_str() {
        "grid" => Ok(KernelEval::Grid(GridSpec { half_width, points, ..defaults })),
        "exact" => Ok(KernelEval::Exact),
        other => Err(CliError::config(format!("kernel_eval must be 'grid' or 'exact', got '{other}'"))),
    }
}

fn hazard_mode(cfg: &RunConfig) -> CliResult<HazardMode> {
    match cfg.str_or("hazard_mode", "regularized").as_str() {
        "regularized" => Ok(HazardMode::Regularized),
        "asymptotic" => Ok(HazardMode::Asymptotic),
        other => Err(CliError::config(format!("hazard_mode must be 'regularized' or 'asymptotic', got '{other}'"))),
    }
}

fn eval_grid(cfg: &RunConfig) -> CliResult<Vec<f64>> {
    let lo: f64 = cfg.get_or("grid_min", "0")?;
    let hi: f64 = cfg.get_or("grid_max", "6")?;
    let step: f64 = cfg.get_or("grid_step", "0.01")?;
    Ok(uniform_grid(lo, hi, step)?)
}

fn d1_override(cfg: &RunConfig) -> CliResult<Option<f64>> {
    match cfg.str_or("d1", "computed").as_str() {
        "computed" => Ok(None),
        raw => cfg.parsed("d1", raw).map(Some),
    }
}

/// `none`, `laplace(b)` or `gamma(shape,rate)`.
pub fn parse_error_model(s: &str) -> CliResult<ErrorModel<f64>> {
    let s = s.trim();
    let bad = || CliError::config(format!("cannot parse error model '{s}'"));
    if s == "none" {
        return Ok(ErrorModel::none());
    }
    let (name, rest) = s.split_once('(').ok_or_else(bad)?;
    let args: Vec<f64> = rest
        .strip_suffix(')')
        .ok_or_else(bad)?
        .split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    match (name.trim(), args.as_slice()) {
        ("laplace", [b]) => Ok(ErrorModel::laplace(*b)?),
        ("gamma", [a, rate]) => Ok(ErrorModel::gamma(*a, *rate)?),
        _ => Err(bad()),
    }
}

fn describe_model(m: &ErrorModel<f64>) -> String {
    match m.family() {
        crate::ErrorFamily::None => "none".into(),
        crate::ErrorFamily::Laplace { scale } => format!("laplace({scale})"),
        crate::ErrorFamily::Gamma { shape, rate } => format!("gamma({shape},{rate})"),
    }
}

fn cmd_estimate(input: Option<PathBuf>, common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let input = match input {
        Some(p) => p,
        None => PathBuf::from(
            cfg.optional("input").ok_or_else(|| CliError::config("no input file given"))?,
        ),
    };
    let input = input
        .canonicalize()
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", input.display())))?;
    cfg.record("input", &input.to_string_lossy());
    let grid = eval_grid(&cfg)?;
    let level: f64 = cfg.get_or("level", "0.95")?;
    let eps: f64 = cfg.get_or("epsilon", "1e-3")?;
    let mode = hazard_mode(&cfg)?;
    let eval = kernel_eval(&cfg)?;
    let d1 = d1_override(&cfg)?;
    let bandwidth = cfg.str_or("bandwidth", "default");
    let c: f64 = cfg.get_or("bandwidth_c", "1")?;
    let out = output_dir(&cfg)?;

    let file = read_sample_file(&input)?;
    if file.observations.len() < 2 {
        return Err(CliError::input(format!(
            "{}: need at least 2 observations, found {}",
            input.display(),
            file.observations.len()
        )));
    }
    let y = &file.observations;

    let mut notes = Vec::new();
    let model = match cfg.optional("error") {
        Some(spec) => {
            if cfg.contains("nsr") {
                return Err(CliError::config("give either 'error' or 'nsr', not both"));
            }
            parse_error_model(&spec)?
        }
        None => {
            let nsr: f64 = cfg.get_or("nsr", "0.1")?;
            let (sigma_x, source) = match cfg.optional("sigma_x") {
                Some(raw) => (cfg.parsed::<f64>("sigma_x", &raw)?, "config"),
                None => (sample_sd(y) / (1.0 + nsr * nsr).sqrt(), "sd(Y)/sqrt(1+nsr^2)"),
            };
            let noise = NoiseSpec::new(nsr, sigma_x)?;
            notes.push(("sigma_x".to_string(), format!("{} ({source})", format_real(sigma_x))));
            if noise.is_noiseless() {
                ErrorModel::none()
            } else {
                ErrorModel::laplace(noise.scale)?
            }
        }
    };
    let h = match bandwidth.as_str() {
        "default" => default_bandwidth(y, model.beta(), c)?,
        raw => cfg.parsed::<f64>("bandwidth", raw)?,
    };
    notes.push(("error_model".into(), describe_model(&model)));
    notes.push(("bandwidth_used".into(), format_real(h)));
    notes.push(("n".into(), y.len().to_string()));

    let mut entries = cfg.resolved();
    entries.extend(notes);
    entries.push(("output".into(), "estimate.csv".into()));
    let manifest = Manifest::begin(&out, "estimate", entries)?;
    let result = (|| -> CliResult<Vec<(String, String)>> {
        let mut config = EstimatorConfig::new(h).with_grid(grid).with_mode(mode).with_kernel_eval(eval).with_level(level);
        config.epsilon_guard = eps;
        config.d1_override = d1;
        let est = DeconvolutionEstimator::new(&SmoothKernel::fan(), &model, config)?.estimate(y)?;
        let mut text = String::with_capacity(est.grid.len() * 160);
        text.push_str(ESTIMATE_HEADER);
        text.push('\n');
        for j in 0..est.grid.len() {
            let row = [est.grid[j], est.density[j], est.cdf[j], est.hazard[j], est.sigma_sq[j], est.ci_lower[j], est.ci_upper[j]];
            for v in row {
                text.push_str(&format_real(v));
                text.push(',');
            }
            text.push_str(est.flags[j].as_str());
            text.push('\n');
        }
        let path = out.join("estimate.csv");
        fs::write(&path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        Ok(vec![("d1".into(), format_real(est.d1)), ("d2".into(), format_real(est.d2))])
    })();
    manifest.finish(&result);
    result.map(|_| ())
}

fn cmd_generate(common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let scenario: ScenarioSpec = cfg.str_or("scenario", "lognormal").parse().map_err(CliError::from)?;
    let n: usize = cfg.get_or("n", "1000")?;
    let nsr: f64 = cfg.get_or("nsr", "0.1")?;
    let seed: u64 = cfg.get_or("seed", "1")?;
    if n < 2 {
        return Err(CliError::config(format!("n must be at least 2, got {n}")));
    }
    let noise = NoiseSpec::new(nsr, latent_sigma(&scenario)).map_err(CliError::from)?;
    let out = output_dir(&cfg)?;
    let mut entries = cfg.resolved();
    entries.push(("sigma_x".into(), format_real(noise.sigma_x)));
    entries.push(("noise_scale".into(), format_real(noise.scale)));
    entries.push(("output".into(), "sample.txt".into()));
    let manifest = Manifest::begin(&out, "generate", entries)?;
    let result = (|| -> CliResult<Vec<(String, String)>> {
        let sample = draw_sample(&scenario, n, nsr, seed)?;
        let header = vec![
            ("scenario".to_string(), scenario.canonical()),
            ("n".to_string(), n.to_string()),
            ("nsr".to_string(), nsr.to_string()),
            ("seed".to_string(), seed.to_string()),
            ("sigma_x".to_string(), noise.sigma_x.to_string()),
            ("noise_scale".to_string(), noise.scale.to_string()),
            ("error".to_string(), if noise.is_noiseless() { "none".into() } else { format!("laplace({})", noise.scale) }),
            ("rng".to_string(), RNG_ALGORITHM.to_string()),
        ];
        let path = out.join("sample.txt");
        write_sample_file(&path, &SampleFile { header, observations: sample.observations().to_vec() })
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        Ok(Vec::new())
    })();
    manifest.finish(&result);
    result.map(|_| ())
}

/// The experiment plan a `simulate` run would execute.
pub fn plan_from_config(cfg: &RunConfig, mode: Mode) -> CliResult<ExperimentPlan> {
    let scenario: ScenarioSpec = cfg.str_or("scenario", "lognormal").parse().map_err(CliError::from)?;
    let mut plan = ExperimentPlan::new(scenario);
    let (nsr_default, m_default) = match mode {
        Mode::Normality => ("0.1", "500"),
        _ => ("0.1,0.25,0.5", "1000"),
    };
    plan.sample_sizes = cfg.list_or("n", "1000,2000,5000")?;
    plan.nsr_levels = cfg.list_or("nsr", nsr_default)?;
    plan.replications = cfg.get_or("replications", m_default)?;
    plan.master_seed = cfg.get_or("seed", "1")?;
    plan.x0 = cfg.get_or("x0", "0.5")?;
    plan.confidence_level = cfg.get_or("level", "0.95")?;
    plan.grid = eval_grid(cfg)?;
    plan.kernel_eval = kernel_eval(cfg)?;
    plan.hazard_mode = hazard_mode(cfg)?;
    plan.epsilon_guard = cfg.get_or("epsilon", "1e-3")?;
    plan.d1_override = d1_override(cfg)?;
    plan.error_window = (cfg.get_or("window_min", "0.2")?, cfg.get_or("window_max", "3")?);
    plan.failure_budget = cfg.get_or("failure_budget", "0.1")?;
    plan.verbose = cfg.get_or("verbose", "true")?;
    let c: f64 = cfg.get_or("bandwidth_c", "1")?;
    let raw = cfg.str_or("bandwidth", "default");
    plan.bandwidth_rule = if raw == "default" {
        BandwidthRule::Default { c }
    } else {
        let hs: Vec<f64> = cfg.list_or("bandwidth", "default")?;
        if hs.len() == 1 {
            BandwidthRule::Fixed(hs[0])
        } else {
            BandwidthRule::Sweep(hs)
        }
    };
    plan.validate().map_err(CliError::from)?;
    Ok(plan)
}

fn cmd_simulate(mode: Mode, common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let plan = plan_from_config(&cfg, mode)?;
    let out = output_dir(&cfg)?;
    let mut entries = cfg.resolved();
    entries.push(("mode".into(), mode.as_str().into()));
    entries.extend(plan.describe().into_iter().map(|(k, v)| (format!("plan.{k}"), v)));
    entries.push(("outputs".into(), plan.planned_outputs(mode.as_str()).join(",")));
    let manifest = Manifest::begin(&out, &format!("simulate {}", mode.as_str()), entries)?;
    let result = (|| -> CliResult<Vec<(String, String)>> {
        let (rows, failed) = match mode {
            Mode::Curves => {
                let r = run_curve_experiment(&plan)?;
                r.write_sidecars(&out)?;
                (r.rows(), r.failed_cells())
            }
            Mode::Coverage => {
                let r = run_coverage_experiment(&plan)?;
                r.write_sidecars(&out)?;
                (r.rows(), r.failed_cells())
            }
            Mode::Normality => {
                let r = run_normality_experiment(&plan)?;
                r.write_sidecars(&out)?;
                (r.rows(), r.failed_cells())
            }
            Mode::Rates => {
                let r = run_rate_experiments(&plan)?;
                r.write_sidecars(&out)?;
                (r.rows(), r.failed_cells())
            }
        };
        write_report_csv(&out.join("report.csv"), &rows)?;
        if failed.is_empty() {
            Ok(vec![("failed_cells".into(), "none".into())])
        } else {
            Err(CliError {
                code: EXIT_CELL_FAILURE,
                message: format!("failure budget exceeded in cell(s): {}", failed.join(", ")),
            })
        }
    })();
    manifest.finish(&result);
    result.map(|_| ())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Estimate { input, common } => cmd_estimate(input.clone(), common),
        Command::Generate { common } => cmd_generate(common),
        Command::Simulate { mode, common } => cmd_simulate(*mode, common),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
