//! Solve, verify and export runs of the sparse shooting solver.

pub mod files;
pub mod problem_file;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_pmp::benchmarks::{by_name, Benchmark, ToyRoot};
use sparse_pmp::certificate::{certify_trajectory, CertificateOptions, CertificateReport};
use sparse_pmp::problem::ProblemSpec;
use sparse_pmp::shooting::{ShootingOptions, ShootingProblem};
use sparse_pmp::solver::{
    solve, FailureKind, FdScheme, PhiSign, SaDirection, SolveFailure, Solution, SolverConfig, SolverTrace, StepSchedule,
};
use sparse_pmp::Vector;

use files::{read_summary, read_trace, read_trajectory, write_trace, write_trajectory, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown instance '{0}'")]
    UnknownInstance(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    ProblemFile(#[from] problem_file::ProblemFileError),
    #[error("{0}")]
    Invalid(String),
}

/// A control problem ready to solve.
pub struct Instance {
    pub name: String,
    pub problem: ProblemSpec,
    pub config: SolverConfig,
    pub shooting: ShootingOptions,
    pub initial_guess: Vector,
}

pub enum Target {
    Control(Box<Instance>),
    Toy(ToyRoot),
}

/// A benchmark name, or a path to a linear problem file (`*.json`).
pub fn load_target(spec: &str) -> Result<Target, CliError> {
    if spec.ends_with(".json") || Path::new(spec).is_file() {
        let path = PathBuf::from(spec);
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let file: problem_file::LinearProblemFile =
            serde_json::from_str(&text).map_err(|e| CliError::Parse { path, message: e.to_string() })?;
        return Ok(Target::Control(Box::new(file.build()?)));
    }
    match by_name(spec) {
        Some(Benchmark::Control(b)) => Ok(Target::Control(Box::new(Instance {
            name: b.name.to_string(),
            problem: b.problem,
            config: b.config,
            shooting: b.shooting,
            initial_guess: b.initial_guess,
        }))),
        Some(Benchmark::Toy(t)) => Ok(Target::Toy(t)),
        None => Err(CliError::UnknownInstance(spec.to_string())),
    }
}

/// Command-line overrides of an instance's recommended settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub switch_radius: Option<f64>,
    pub schedule: Option<String>,
    pub noise_scale: Option<f64>,
    pub seed: Option<u64>,
    pub max_sa: Option<usize>,
    pub max_nr: Option<usize>,
    pub grid_nodes: Option<usize>,
    pub phi_sign: Option<PhiSign>,
    pub sa_direction: Option<String>,
    pub fd: Option<FdScheme>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SolverConfig, shooting: Option<&mut ShootingOptions>) -> Result<(), CliError> {
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.switch_radius {
            cfg.switch_radius = v;
        }
        if let Some(s) = &self.schedule {
            cfg.schedule = StepSchedule::parse(s).map_err(|e| CliError::Invalid(e.to_string()))?;
        }
        if let Some(v) = self.noise_scale {
            cfg.noise_scale = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_sa {
            cfg.max_sa = v;
        }
        if let Some(v) = self.max_nr {
            cfg.max_nr = v;
        }
        if let Some(v) = self.fd {
            cfg.fd = v;
        }
        if let Some(d) = &self.sa_direction {
            cfg.direction = parse_direction(d)?;
        }
        if let Some(sign) = self.phi_sign {
            cfg.direction = SaDirection::Verbatim { sign };
        }
        if let (Some(n), Some(s)) = (self.grid_nodes, shooting) {
            if n == 0 {
                return Err(CliError::Invalid("--grid-nodes must be positive".into()));
            }
            s.integration.nodes_per_interval = n;
        }
        cfg.validate().map_err(|e| CliError::Invalid(e.to_string()))
    }
}

/// `verbatim`, `preconditioned` or `preconditioned:REFRESH`.
pub fn parse_direction(text: &str) -> Result<SaDirection, CliError> {
    let bad = || CliError::Invalid(format!("unknown SA direction '{text}'"));
    match text.split_once(':') {
        None if text == "verbatim" => Ok(SaDirection::Verbatim { sign: PhiSign::Plus }),
        None if text == "preconditioned" => Ok(SaDirection::Preconditioned { refresh: 50 }),
        Some(("preconditioned", n)) => Ok(SaDirection::Preconditioned { refresh: n.parse().map_err(|_| bad())? }),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    BudgetExhausted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub norm: f64,
}

/// Everything needed to reproduce and re-evaluate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Benchmark name or problem-file path.
    pub instance: String,
    pub status: Status,
    pub message: String,
    pub phi_norm: f64,
    pub zeta: Vec<f64>,
    pub times: Vec<f64>,
    pub seed: u64,
    pub sa_iterations: usize,
    pub nr_iterations: usize,
    pub reversions: usize,
    pub first_switch: Option<usize>,
    pub elapsed_seconds: f64,
    pub config: SolverConfig,
    pub shooting: Option<ShootingOptions>,
    pub residual_blocks: Vec<Block>,
}

fn outcome(result: Result<Solution, SolveFailure>) -> (Status, String, Vector, f64, SolverTrace) {
    match result {
        Ok(s) => (Status::Converged, String::new(), s.z, s.phi_norm, s.trace),
        Err(f) => {
            let status = match f.kind {
                FailureKind::Budget => Status::BudgetExhausted,
                _ => Status::Failed,
            };
            (status, format!("{:?}", f.kind), f.best, f.best_norm, f.trace)
        }
    }
}

fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_OK,
        Status::BudgetExhausted | Status::Failed => EXIT_BUDGET,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

/// Runs the solver and writes `summary.json`, the trace and, for control
/// problems, the trajectory. Returns the exit code.
pub fn cmd_solve(spec: &str, overrides: &Overrides, out: &Path, format: Format) -> Result<(Summary, i32), CliError> {
    let target = load_target(spec)?;
    create_dir(out)?;
    let summary = match target {
        Target::Toy(toy) => {
            let mut cfg = toy.config.clone();
            overrides.apply(&mut cfg, None)?;
            let (status, message, z, phi_norm, trace) = outcome(solve(&toy, &toy.start, &cfg));
            write_trace(out, &trace, format)?;
            summary(spec, status, message, &z, phi_norm, &trace, cfg, None, vec![], vec![])
        }
        Target::Control(inst) => {
            let mut cfg = inst.config.clone();
            let mut shooting = inst.shooting;
            overrides.apply(&mut cfg, Some(&mut shooting))?;
            let sp = ShootingProblem::new(&inst.problem, shooting).map_err(|e| CliError::Invalid(e.to_string()))?;
            if sp.layout.dim() != inst.initial_guess.len() {
                return Err(CliError::Invalid("initial guess does not match the layout".into()));
            }
            let (status, message, z, phi_norm, trace) = outcome(solve(&sp, &inst.initial_guess, &cfg));
            write_trace(out, &trace, format)?;
            let eval = sp.evaluate(&z).map_err(|e| CliError::Invalid(e.to_string()))?;
            write_trajectory(out, &inst.problem, &eval.trajectory, shooting.integration.eta, format)?;
            let blocks = eval
                .residual
                .block_norms()
                .into_iter()
                .map(|(name, norm)| Block { name: name.to_string(), norm })
                .collect();
            let times = sp.unpack(&z).map(|p| p.times).unwrap_or_default();
            summary(spec, status, message, &z, phi_norm, &trace, cfg, Some(shooting), times, blocks)
        }
    };
    files::write_summary(out, &summary)?;
    let code = exit_code(summary.status);
    Ok((summary, code))
}

#[allow(clippy::too_many_arguments)]
fn summary(
    spec: &str,
    status: Status,
    message: String,
    z: &Vector,
    phi_norm: f64,
    trace: &SolverTrace,
    config: SolverConfig,
    shooting: Option<ShootingOptions>,
    times: Vec<f64>,
    residual_blocks: Vec<Block>,
) -> Summary {
    Summary {
        instance: spec.to_string(),
        status,
        message,
        phi_norm,
        zeta: z.iter().copied().collect(),
        times,
        seed: config.seed,
        sa_iterations: trace.sa_iterations,
        nr_iterations: trace.nr_iterations,
        reversions: trace.reversions,
        first_switch: trace.first_switch,
        elapsed_seconds: trace.entries.last().map_or(0.0, |e| e.elapsed),
        config,
        shooting,
        residual_blocks,
    }
}

fn control_instance(summary: &Summary) -> Result<Instance, CliError> {
    match load_target(&summary.instance)? {
        Target::Control(inst) => Ok(*inst),
        Target::Toy(_) => Err(CliError::Invalid(format!("'{}' has no trajectory", summary.instance))),
    }
}

/// Checks a trajectory file against the multipliers stored in the run's
/// summary. Writes `report.json` next to the summary.
pub fn cmd_verify(run: &Path, trajectory: Option<&Path>) -> Result<(CertificateReport, i32), CliError> {
    let summary = read_summary(run)?;
    let inst = control_instance(&summary)?;
    let shooting = summary.shooting.unwrap_or(inst.shooting);
    let sp = ShootingProblem::new(&inst.problem, shooting).map_err(|e| CliError::Invalid(e.to_string()))?;
    let params = sp.unpack(&Vector::from_vec(summary.zeta.clone())).map_err(|e| CliError::Invalid(e.to_string()))?;
    let record = match trajectory {
        Some(path) => read_trajectory(path, &inst.problem, &params.times)?,
        None => read_trajectory(&files::find(run, "trajectory")?, &inst.problem, &params.times)?,
    };
    let report =
        certify_trajectory(&inst.problem, &params, &record, shooting.integration.eta, &CertificateOptions::default());
    let path = run.join("report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
    let code = if report.passed() { EXIT_OK } else { EXIT_BUDGET };
    Ok((report, code))
}

/// Re-emits a run's trajectory and trace in `format` under `out`.
pub fn cmd_export(run: &Path, format: Format, out: &Path) -> Result<(), CliError> {
    let summary = read_summary(run)?;
    let trace = read_trace(&files::find(run, "trace")?)?;
    create_dir(out)?;
    write_trace(out, &trace, format)?;
    if summary.shooting.is_some() {
        let inst = control_instance(&summary)?;
        let shooting = summary.shooting.unwrap();
        let sp = ShootingProblem::new(&inst.problem, shooting).map_err(|e| CliError::Invalid(e.to_string()))?;
        let eval = sp.evaluate(&Vector::from_vec(summary.zeta.clone())).map_err(|e| CliError::Invalid(e.to_string()))?;
        write_trajectory(out, &inst.problem, &eval.trajectory, shooting.integration.eta, format)?;
    }
    if out != run {
        files::write_summary(out, &summary)?;
    }
    Ok(())
}
