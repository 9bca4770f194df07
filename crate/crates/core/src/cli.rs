//! Command-line front end.
//!
//! A run is described by a flat `key = value` file (with `#` comments)
//! and `--key value` overrides. [`execute`] runs the requested study and
//! [`emit_reports`] writes the CSV tables and `summary.txt`. The summary
//! starts with the configuration itself, so it parses back to the same
//! [`RunConfig`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::mesh::RectMesh;
use crate::sparse::SolverConfig;
use crate::theta_scheme::{run, RunOptions, RunOutput, RunStatus, ThetaConfig};
use crate::verification::{
    convergence_study, inverse_constant_for, mms_forced, mms_standing_wave, stability_sweep, temporal_study,
    ConvergenceTable, ManufacturedSolution, RateAxis, StabilityEstimate, StabilitySweep, SweepStatus,
};

pub const USAGE: &str =
    "usage: mixwave <run|energy|stability|converge|estimate-c0> [--config FILE] [--key value ...]";

/// Largest relative energy drift accepted by the `energy` study.
pub const ENERGY_DRIFT_TOLERANCE: f64 = 1e-10;
/// Accepted observed orders for the spatial and temporal studies.
pub const SPACE_RATE_BAND: (f64, f64) = (0.85, 1.15);
pub const TIME_RATE_BAND: (f64, f64) = (1.8, 2.2);

pub const EXIT_PASS: i32 = 0;
pub const EXIT_STUDY_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Every accepted key, in the order [`emit_config`] writes them.
pub const KEYS: &[&str] = &[
    "command",
    "mesh.nx",
    "mesh.ny",
    "scheme.theta",
    "time.dt",
    "time.T",
    "problem.case",
    "solver.tol",
    "solver.max_iter",
    "output.dir",
    "parallel.workers",
    "study.thetas",
    "study.multipliers",
    "study.sweep_steps",
    "study.axis",
    "study.levels",
    "study.dt_ratio",
    "study.step_counts",
    "study.reference_steps",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Energy,
    Stability,
    Converge,
    EstimateC0,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Energy => "energy",
            Command::Stability => "stability",
            Command::Converge => "converge",
            Command::EstimateC0 => "estimate-c0",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "run" => Command::Run,
            "energy" => Command::Energy,
            "stability" => Command::Stability,
            "converge" => Command::Converge,
            "estimate-c0" => Command::EstimateC0,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemCase {
    StandingWave,
    Forced(f64),
}

impl ProblemCase {
    fn parse(s: &str) -> Option<Self> {
        if s == "standing-wave" {
            return Some(ProblemCase::StandingWave);
        }
        let omega: f64 = s.strip_prefix("forced:")?.trim().parse().ok()?;
        omega.is_finite().then_some(ProblemCase::Forced(omega))
    }

    pub fn manufactured(self) -> ManufacturedSolution<f64> {
        match self {
            ProblemCase::StandingWave => mms_standing_wave(),
            ProblemCase::Forced(omega) => mms_forced(omega),
        }
    }
}

impl fmt::Display for ProblemCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemCase::StandingWave => write!(f, "standing-wave"),
            ProblemCase::Forced(omega) => write!(f, "forced:{omega}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyAxis {
    Space,
    Time,
}

impl StudyAxis {
    fn name(self) -> &'static str {
        match self {
            StudyAxis::Space => "space",
            StudyAxis::Time => "time",
        }
    }
}

/// Parameters of the `stability` and `converge` studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub thetas: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub sweep_steps: usize,
    pub axis: StudyAxis,
    /// Mesh levels `nx = ny` of the spatial study.
    pub levels: Vec<usize>,
    /// The spatial study uses `Δt ≤ dt_ratio · h`.
    pub dt_ratio: f64,
    pub step_counts: Vec<usize>,
    pub reference_steps: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.0, 0.125],
            multipliers: vec![0.5, 0.9, 0.99, 1.5],
            sweep_steps: 500,
            axis: StudyAxis::Space,
            levels: vec![8, 16, 32, 64],
            dt_ratio: 0.25,
            step_counts: vec![25, 50, 100],
            reference_steps: 800,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub nx: usize,
    pub ny: usize,
    pub theta: f64,
    /// Upper bound on the step; the run uses `T / ceil(T / dt)`.
    pub dt: Option<f64>,
    pub final_time: Option<f64>,
    pub case: ProblemCase,
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn with_defaults(command: Command) -> Self {
        Self {
            command,
            nx: 16,
            ny: 16,
            theta: 0.25,
            dt: None,
            final_time: None,
            case: ProblemCase::StandingWave,
            tol: 1e-12,
            max_iter: None,
            output_dir: PathBuf::from("out"),
            workers: 1,
            study: StudyConfig::default(),
        }
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        SolverConfig {
            rel_tolerance: self.tol,
            max_iterations: self.max_iter,
        }
    }
}

/// Where a configuration value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    CommandLine,
    Default,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::CommandLine => write!(f, "command line"),
            Location::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{at}: unknown key `{key}`")]
    UnknownKey { key: String, at: Location },
    #[error("{at}: `{key}` expects {expected}, got `{value}`")]
    TypeError {
        key: String,
        value: String,
        expected: &'static str,
        at: Location,
    },
    #[error("{at}: `{key}` {message}")]
    InvalidValue { key: String, message: String, at: Location },
    #[error("no command given (key `command`); {USAGE}")]
    MissingCommand,
    #[error("`{command}` needs `{key}`")]
    MissingKey { key: &'static str, command: &'static str },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("`{flag}` needs a value")]
    MissingValue { flag: String },
    #[error("unexpected argument `{arg}`; {USAGE}")]
    UnexpectedArgument { arg: String },
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Solver(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_STUDY_FAIL,
        }
    }
}

struct Entry {
    key: String,
    value: String,
    at: Location,
}

fn file_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: k + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: k + 1 });
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            at: Location::Line(k + 1),
        });
    }
    Ok(out)
}

/// Splits arguments into the positional command and `--key value` pairs.
fn argument_entries(args: &[String]) -> Result<(Option<String>, Vec<Entry>), ConfigError> {
    let mut command = None;
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if let Some(key) = arg.strip_prefix("--") {
            let value = it.next().ok_or_else(|| ConfigError::MissingValue { flag: arg.clone() })?;
            out.push(Entry {
                key: key.to_string(),
                value: value.clone(),
                at: Location::CommandLine,
            });
        } else if command.is_none() {
            command = Some(arg.clone());
        } else {
            return Err(ConfigError::UnexpectedArgument { arg: arg.clone() });
        }
    }
    Ok((command, out))
}

fn parse_value<V: std::str::FromStr>(e: &Entry, expected: &'static str) -> Result<V, ConfigError> {
    e.value.parse().map_err(|_| type_error(e, expected))
}

fn type_error(e: &Entry, expected: &'static str) -> ConfigError {
    ConfigError::TypeError {
        key: e.key.clone(),
        value: e.value.clone(),
        expected,
        at: e.at,
    }
}

fn parse_list<V: std::str::FromStr>(e: &Entry, expected: &'static str) -> Result<Vec<V>, ConfigError> {
    let items: Result<Vec<V>, _> = e.value.split(',').map(|s| s.trim().parse()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(type_error(e, expected)),
    }
}

fn invalid(e: &Entry, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: e.key.clone(),
        message: message.into(),
        at: e.at,
    }
}

fn check(cond: bool, e: &Entry, message: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(e, message))
    }
}

fn apply(cfg: &mut RunConfig, e: &Entry) -> Result<(), ConfigError> {
    const REAL: &str = "a real number";
    const INT: &str = "a non-negative integer";
    match e.key.as_str() {
        "command" => {
            cfg.command = Command::parse(&e.value).ok_or_else(|| type_error(e, "a command name"))?;
        }
        "mesh.nx" => {
            cfg.nx = parse_value(e, INT)?;
            check(cfg.nx >= 1, e, "must be at least 1")?;
        }
        "mesh.ny" => {
            cfg.ny = parse_value(e, INT)?;
            check(cfg.ny >= 1, e, "must be at least 1")?;
        }
        "scheme.theta" => {
            cfg.theta = parse_value(e, REAL)?;
            check((0.0..=1.0).contains(&cfg.theta), e, "must lie in [0, 1]")?;
        }
        "time.dt" => {
            let dt: f64 = parse_value(e, REAL)?;
            check(dt > 0.0 && dt.is_finite(), e, "must be positive")?;
            cfg.dt = Some(dt);
        }
        "time.T" => {
            let t: f64 = parse_value(e, REAL)?;
            check(t > 0.0 && t.is_finite(), e, "must be positive")?;
            cfg.final_time = Some(t);
        }
        "problem.case" => {
            cfg.case = ProblemCase::parse(&e.value).ok_or_else(|| type_error(e, "standing-wave or forced:<omega>"))?;
        }
        "solver.tol" => {
            cfg.tol = parse_value(e, REAL)?;
            check(cfg.tol > 0.0 && cfg.tol < 1.0, e, "must lie in (0, 1)")?;
        }
        "solver.max_iter" => {
            let n: usize = parse_value(e, INT)?;
            check(n >= 1, e, "must be at least 1")?;
            cfg.max_iter = Some(n);
        }
        "output.dir" => {
            check(!e.value.is_empty(), e, "must not be empty")?;
            cfg.output_dir = PathBuf::from(&e.value);
        }
        "parallel.workers" => {
            cfg.workers = parse_value(e, INT)?;
            check(cfg.workers >= 1, e, "must be at least 1")?;
        }
        "study.thetas" => {
            cfg.study.thetas = parse_list(e, "a comma-separated list of reals")?;
            check(cfg.study.thetas.iter().all(|t| (0.0..=1.0).contains(t)), e, "entries must lie in [0, 1]")?;
        }
        "study.multipliers" => {
            cfg.study.multipliers = parse_list(e, "a comma-separated list of reals")?;
            check(cfg.study.multipliers.iter().all(|&m| m > 0.0 && m.is_finite()), e, "entries must be positive")?;
        }
        "study.sweep_steps" => {
            cfg.study.sweep_steps = parse_value(e, INT)?;
            check(cfg.study.sweep_steps >= 1, e, "must be at least 1")?;
        }
        "study.axis" => {
            cfg.study.axis = match e.value.as_str() {
                "space" => StudyAxis::Space,
                "time" => StudyAxis::Time,
                _ => return Err(type_error(e, "space or time")),
            };
        }
        "study.levels" => {
            cfg.study.levels = parse_list(e, "a comma-separated list of integers")?;
            check(cfg.study.levels.iter().all(|&n| n >= 1), e, "entries must be at least 1")?;
        }
        "study.dt_ratio" => {
            cfg.study.dt_ratio = parse_value(e, REAL)?;
            check(cfg.study.dt_ratio > 0.0 && cfg.study.dt_ratio.is_finite(), e, "must be positive")?;
        }
        "study.step_counts" => {
            cfg.study.step_counts = parse_list(e, "a comma-separated list of integers")?;
            check(cfg.study.step_counts.iter().all(|&n| n >= 1), e, "entries must be at least 1")?;
        }
        "study.reference_steps" => {
            cfg.study.reference_steps = parse_value(e, INT)?;
            check(cfg.study.reference_steps >= 1, e, "must be at least 1")?;
        }
        _ => {
            return Err(ConfigError::UnknownKey {
                key: e.key.clone(),
                at: e.at,
            })
        }
    }
    Ok(())
}

fn require_time(cfg: &RunConfig, dt: bool) -> Result<(), ConfigError> {
    let command = cfg.command.name();
    if cfg.final_time.is_none() {
        return Err(ConfigError::MissingKey { key: "time.T", command });
    }
    if dt && cfg.dt.is_none() {
        return Err(ConfigError::MissingKey { key: "time.dt", command });
    }
    Ok(())
}

fn cross_checks(cfg: &RunConfig, located: &dyn Fn(&'static str) -> Location) -> Result<(), ConfigError> {
    let bad = |key: &'static str, message: String| ConfigError::InvalidValue {
        key: key.to_string(),
        message,
        at: located(key),
    };
    match cfg.command {
        Command::Run => require_time(cfg, true)?,
        Command::Energy => {
            require_time(cfg, true)?;
            if cfg.case != ProblemCase::StandingWave {
                return Err(bad("problem.case", "must be standing-wave for the energy study".into()));
            }
        }
        Command::Converge => {
            require_time(cfg, false)?;
            if cfg.study.axis == StudyAxis::Time {
                if cfg.nx != cfg.ny {
                    return Err(bad("mesh.ny", "must equal mesh.nx for the temporal study".into()));
                }
                let r = cfg.study.reference_steps;
                if let Some(n) = cfg.study.step_counts.iter().find(|&&n| !r.is_multiple_of(n) || n >= r) {
                    return Err(bad(
                        "study.step_counts",
                        format!("entry {n} must be a proper divisor of study.reference_steps = {r}"),
                    ));
                }
            }
        }
        Command::Stability => {
            if cfg.nx != cfg.ny {
                return Err(bad("mesh.ny", "must equal mesh.nx for the stability sweep".into()));
            }
        }
        Command::EstimateC0 => {}
    }
    Ok(())
}

/// Parses `text` (the config file, possibly empty) and applies `args`:
/// an optional positional command followed by `--key value` overrides.
pub fn parse_config(text: &str, args: &[String]) -> Result<RunConfig, ConfigError> {
    let mut entries = file_entries(text)?;
    let (positional, overrides) = argument_entries(args)?;
    entries.extend(overrides);
    if let Some(cmd) = positional {
        entries.push(Entry {
            key: "command".into(),
            value: cmd,
            at: Location::CommandLine,
        });
    }

    let mut cfg = RunConfig::with_defaults(Command::Run);
    let mut have_command = false;
    for e in &entries {
        apply(&mut cfg, e)?;
        have_command |= e.key == "command";
    }
    if !have_command {
        return Err(ConfigError::MissingCommand);
    }
    let located = |key: &'static str| {
        entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map_or(Location::Default, |e| e.at)
    };
    cross_checks(&cfg, &located)?;
    Ok(cfg)
}

/// Removes `--config FILE` from `args` and returns its contents (empty when absent).
pub fn load_config(args: &[String]) -> Result<RunConfig, ConfigError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            let p = it.next().ok_or_else(|| ConfigError::MissingValue { flag: arg.clone() })?;
            path = Some(PathBuf::from(p));
        } else {
            rest.push(arg.clone());
        }
    }
    let text = match &path {
        Some(p) => fs::read_to_string(p).map_err(|e| ConfigError::Unreadable {
            path: p.clone(),
            message: e.to_string(),
        })?,
        None => String::new(),
    };
    parse_config(&text, &rest)
}

fn join<V: fmt::Display>(v: &[V]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// The configuration in file syntax; reals use the shortest exact representation.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut lines = Vec::new();
    for key in KEYS {
        let value = match *key {
            "command" => cfg.command.name().to_string(),
            "mesh.nx" => cfg.nx.to_string(),
            "mesh.ny" => cfg.ny.to_string(),
            "scheme.theta" => cfg.theta.to_string(),
            "time.dt" => match cfg.dt {
                Some(v) => v.to_string(),
                None => continue,
            },
            "time.T" => match cfg.final_time {
                Some(v) => v.to_string(),
                None => continue,
            },
            "problem.case" => cfg.case.to_string(),
            "solver.tol" => cfg.tol.to_string(),
            "solver.max_iter" => match cfg.max_iter {
                Some(v) => v.to_string(),
                None => continue,
            },
            "output.dir" => cfg.output_dir.display().to_string(),
            "parallel.workers" => cfg.workers.to_string(),
            "study.thetas" => join(&cfg.study.thetas),
            "study.multipliers" => join(&cfg.study.multipliers),
            "study.sweep_steps" => cfg.study.sweep_steps.to_string(),
            "study.axis" => cfg.study.axis.name().to_string(),
            "study.levels" => join(&cfg.study.levels),
            "study.dt_ratio" => cfg.study.dt_ratio.to_string(),
            "study.step_counts" => join(&cfg.study.step_counts),
            "study.reference_steps" => cfg.study.reference_steps.to_string(),
            _ => unreachable!("key list and emitter out of sync"),
        };
        lines.push(format!("{key} = {value}"));
    }
    lines.join("\n") + "\n"
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything a command produced; only the tables it ran are present.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub estimate: StabilityEstimate<f64>,
    pub energy: Option<RunOutput<f64>>,
    pub convergence: Option<ConvergenceTable<f64>>,
    pub sweep: Option<StabilitySweep<f64>>,
    pub verdicts: Vec<Verdict>,
    /// Observations reported without a verdict.
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

fn unit_square_mesh(nx: usize, ny: usize) -> crate::Result<RectMesh<f64>> {
    RectMesh::new(nx, ny, [0.0, 1.0, 0.0, 1.0])
}

fn estimate_for(cfg: &RunConfig, mms: &ManufacturedSolution<f64>) -> crate::Result<(StabilityEstimate<f64>, usize)> {
    let mesh = unit_square_mesh(cfg.nx, cfg.ny)?;
    let inv = inverse_constant_for(&mesh, &mms.bc)?;
    let est = StabilityEstimate {
        c0: inv.c0,
        h: mesh.h,
        rho0: mms.rho,
        lambda1: mms.lambda,
    };
    Ok((est, inv.iterations))
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn expected_status(theta: f64, multiplier: f64) -> Option<SweepStatus> {
    if theta >= 0.25 || multiplier <= 1.0 {
        Some(SweepStatus::Stable)
    } else if multiplier >= 1.5 {
        Some(SweepStatus::BlowUp)
    } else {
        None
    }
}

fn rate_verdicts(table: &ConvergenceTable<f64>, band: (f64, f64), label: &str) -> Vec<Verdict> {
    let mut out = Vec::new();
    for row in table.rows.iter().skip(1) {
        let step = match table.axis {
            RateAxis::MeshSize => format!("nx={}", row.nx),
            RateAxis::TimeStep => format!("dt={}", row.dt),
        };
        for (field, rate) in [("u", row.rate_u), ("p", row.rate_p)] {
            let r = rate.unwrap_or(f64::NAN);
            out.push(Verdict {
                name: format!("{label} rate_{field} {step}"),
                pass: band.0 <= r && r <= band.1,
                detail: format!("{r:.4} in [{}, {}]", band.0, band.1),
            });
        }
    }
    if out.is_empty() {
        out.push(Verdict {
            name: format!("{label} rates"),
            pass: false,
            detail: "needs at least two rows".into(),
        });
    }
    out
}

/// Runs the configured command.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mms = cfg.case.manufactured();
    mms.verify()?;
    let solver = cfg.solver();
    let mut verdicts = Vec::new();
    let mut notes = Vec::new();
    let mut energy = None;
    let mut convergence = None;
    let mut sweep = None;

    let estimate = match cfg.command {
        Command::Run | Command::Energy => {
            let (estimate, _) = estimate_for(cfg, &mms)?;
            let t = cfg.final_time.expect("validated");
            let dt = cfg.dt.expect("validated");
            let problem = mms.problem_spec(cfg.nx, cfg.ny)?;
            let tc = ThetaConfig::with_max_step(cfg.theta, t, dt)?;
            let options = RunOptions {
                solver,
                track_errors: cfg.command == Command::Run,
            };
            let out = run(&problem, &tc, &options, None)?;
            let drift = out.max_relative_drift();
            notes.push(format!("steps = {}, dt = {}", tc.num_steps, sci(tc.dt)));
            notes.push(format!("max relative energy drift = {}", sci(drift)));
            notes.push(format!("max constraint residual = {}", sci(out.max_constraint_residual)));
            if let Some(last) = out.errors.last() {
                notes.push(format!("error at t = {}: u {}, p {}", sci(last.t), sci(last.err_u), sci(last.err_p)));
            }
            let completed = out.completed();
            let blowup = match out.status {
                RunStatus::BlowUp { level } => format!("blew up at level {level}"),
                RunStatus::Completed => "completed".into(),
            };
            if cfg.command == Command::Run {
                verdicts.push(Verdict {
                    name: "run".into(),
                    pass: completed,
                    detail: blowup,
                });
            } else {
                verdicts.push(Verdict {
                    name: "energy conservation".into(),
                    pass: completed && drift <= ENERGY_DRIFT_TOLERANCE,
                    detail: format!("{blowup}, max drift {drift:.3e} vs {ENERGY_DRIFT_TOLERANCE:e}"),
                });
            }
            energy = Some(out);
            estimate
        }
        Command::Converge => {
            let (estimate, _) = estimate_for(cfg, &mms)?;
            let t = cfg.final_time.expect("validated");
            let table = match cfg.study.axis {
                StudyAxis::Space => {
                    let ratio = cfg.study.dt_ratio;
                    convergence_study(&mms, cfg.theta, &cfg.study.levels, &|h| ratio * h, t, &solver, cfg.workers)?
                }
                StudyAxis::Time => temporal_study(
                    &mms,
                    cfg.theta,
                    cfg.nx,
                    t,
                    &cfg.study.step_counts,
                    cfg.study.reference_steps,
                    &solver,
                    cfg.workers,
                )?,
            };
            verdicts.extend(match cfg.study.axis {
                StudyAxis::Space => rate_verdicts(&table, SPACE_RATE_BAND, "spatial"),
                StudyAxis::Time => rate_verdicts(&table, TIME_RATE_BAND, "temporal"),
            });
            convergence = Some(table);
            estimate
        }
        Command::Stability => {
            let result = stability_sweep(
                &mms,
                &cfg.study.thetas,
                &cfg.study.multipliers,
                cfg.nx,
                cfg.study.sweep_steps,
                &solver,
                cfg.workers,
            )?;
            for row in &result.rows {
                let label = format!("stability theta={} m={}", row.theta, row.multiplier);
                let seen = format!("{} after {} steps", row.status.label(), row.steps_taken);
                match expected_status(row.theta, row.multiplier) {
                    Some(want) => verdicts.push(Verdict {
                        name: label,
                        pass: row.status == want,
                        detail: format!("{seen}, expected {}", want.label()),
                    }),
                    None => notes.push(format!("{label}: {seen} (between the bound and 1.5x, not asserted)")),
                }
            }
            let estimate = result.estimate;
            sweep = Some(result);
            estimate
        }
        Command::EstimateC0 => {
            let (estimate, iterations) = estimate_for(cfg, &mms)?;
            notes.push(format!("power iterations = {iterations}"));
            verdicts.push(Verdict {
                name: "C0 estimate".into(),
                pass: estimate.c0.is_finite() && estimate.c0 > 0.0,
                detail: sci(estimate.c0),
            });
            estimate
        }
    };

    Ok(Outcome {
        estimate,
        energy,
        convergence,
        sweep,
        verdicts,
        notes,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// The summary text: the configuration followed by `#` comment lines.
pub fn summary_text(cfg: &RunConfig, outcome: &Outcome) -> String {
    let mut s = String::from("# mixwave summary\n");
    s += &emit_config(cfg);
    let est = &outcome.estimate;
    s += &format!("# C0 = {}\n", sci(est.c0));
    s += &format!("# h = {}\n", sci(est.h));
    s += &format!("# dt_max(theta={}) = {}\n", cfg.theta, sci(est.dt_max(cfg.theta)));
    for n in &outcome.notes {
        s += &format!("# note: {n}\n");
    }
    for v in &outcome.verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        s += &format!("# verdict {}: {tag} ({})\n", v.name, v.detail);
    }
    s += &format!("# overall: {}\n", if outcome.passed() { "PASS" } else { "FAIL" });
    s
}

/// Writes the tables `outcome` holds plus `summary.txt` into `cfg.output_dir`.
pub fn emit_reports(cfg: &RunConfig, outcome: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut written = Vec::new();

    if let Some(out) = &outcome.energy {
        let path = dir.join("energy.csv");
        let e0 = out.energies.first().map_or(0.0, |e| e.value);
        let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
        let rows = out
            .energies
            .iter()
            .map(|e| vec![e.n.to_string(), sci(e.t_half), sci(e.value), sci((e.value - e0).abs() / scale)])
            .collect();
        write_table(&path, &["step", "t_half", "energy", "rel_drift"], rows)?;
        written.push(path);
    }
    if let Some(table) = &outcome.convergence {
        let path = dir.join("converge.csv");
        let opt = |r: Option<f64>| r.map(sci).unwrap_or_default();
        let rows = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.nx.to_string(),
                    sci(r.h),
                    sci(r.dt),
                    sci(r.err_u),
                    sci(r.err_p),
                    opt(r.rate_u),
                    opt(r.rate_p),
                ]
            })
            .collect();
        write_table(&path, &["nx", "h", "dt", "err_u", "err_p", "rate_u", "rate_p"], rows)?;
        written.push(path);
    }
    if let Some(sweep) = &outcome.sweep {
        let path = dir.join("stability.csv");
        let rows = sweep
            .rows
            .iter()
            .map(|r| {
                vec![
                    sci(r.theta),
                    sci(r.dt),
                    sci(r.dt_over_dtmax),
                    r.status.label().to_string(),
                    sci(r.final_energy),
                ]
            })
            .collect();
        write_table(&path, &["theta", "dt", "dt_over_dtmax", "status", "final_energy"], rows)?;
        written.push(path);
    }

    let path = dir.join("summary.txt");
    fs::write(&path, summary_text(cfg, outcome)).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(written)
}

/// Full binary behaviour for `args` (without the program name); returns the exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        return EXIT_PASS;
    }
    let result = load_config(args)
        .map_err(CliError::from)
        .and_then(|cfg| {
            let outcome = execute(&cfg)?;
            emit_reports(&cfg, &outcome)?;
            Ok((cfg, outcome))
        });
    match result {
        Ok((cfg, outcome)) => {
            for v in &outcome.verdicts {
                println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            println!("reports written to {}", cfg.output_dir.display());
            if outcome.passed() {
                EXIT_PASS
            } else {
                EXIT_STUDY_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
