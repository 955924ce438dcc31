//! Hybrid root finder: a stochastic-approximation phase drives `‖Φ‖` below a
//! switch radius, then damped Newton iterations finish to tolerance. A
//! Newton attempt that stalls reverts to the stochastic phase with a halved
//! radius.

use web_time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Matrix, Vector};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("tolerance {eps} must be positive and below the switch radius {radius}")]
    Tolerances { eps: f64, radius: f64 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// Step sizes `γ_k`, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `c / k^a`
    Power { c: f64, a: f64 },
    /// `c / (1 + b k)`
    Rational { c: f64, b: f64 },
    /// `c / (1 + k^a)`
    Root { c: f64, a: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Root { c: 1e-2, a: 0.2 }
    }
}

impl StepSchedule {
    pub fn gamma(&self, k: usize) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            StepSchedule::Power { c, a } => c / k.powf(a),
            StepSchedule::Rational { c, b } => c / (1.0 + b * k),
            StepSchedule::Root { c, a } => c / (1.0 + k.powf(a)),
        }
    }

    /// `Σγ_k = ∞` and `Σγ_k² < ∞`.
    pub fn robbins_monro(&self) -> bool {
        match *self {
            StepSchedule::Power { a, .. } | StepSchedule::Root { a, .. } => a > 0.5 && a <= 1.0,
            StepSchedule::Rational { b, .. } => b > 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (c, p) = match *self {
            StepSchedule::Power { c, a } | StepSchedule::Root { c, a } => (c, a),
            StepSchedule::Rational { c, b } => (c, b),
        };
        if !(c > 0.0) || !(p >= 0.0) || !c.is_finite() || !p.is_finite() {
            return Err(ConfigError::Schedule(format!("{self:?}")));
        }
        Ok(())
    }

    /// `kind:c:param`, e.g. `root:1e-2:0.2`, `power:1e-2:0.5714`, `rational:1e-2:0.05`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::Schedule(text.to_string());
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let c: f64 = parts[1].parse().map_err(|_| bad())?;
        let p: f64 = parse_fraction(parts[2]).ok_or_else(bad)?;
        let s = match parts[0] {
            "power" => StepSchedule::Power { c, a: p },
            "rational" => StepSchedule::Rational { c, b: p },
            "root" => StepSchedule::Root { c, a: p },
            _ => return Err(bad()),
        };
        s.validate()?;
        Ok(s)
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => Some(n.parse::<f64>().ok()? / d.parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}

/// Zero-mean noise, uniform on `[−σ_i, σ_i]` per coordinate.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    sigma: Vector,
}

impl NoiseSource {
    pub fn new(seed: u64, sigma: Vector) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), sigma }
    }

    pub fn sample(&mut self) -> Vector {
        let rng = &mut self.rng;
        Vector::from_iterator(
            self.sigma.len(),
            self.sigma.iter().map(|&s| if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 }),
        )
    }

    /// Per-coordinate variance `σ²/3`.
    pub fn variance(&self) -> Vector {
        self.sigma.map(|s| s * s / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSign {
    Plus,
    Minus,
}

impl PhiSign {
    fn factor(self) -> f64 {
        match self {
            PhiSign::Plus => 1.0,
            PhiSign::Minus => -1.0,
        }
    }
}

/// Direction field of the stochastic phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SaDirection {
    /// `ζ + γ(±Φ + M)`.
    Verbatim { sign: PhiSign },
    /// `ζ − γ G⁻¹(Φ + M)` with `G` a finite-difference Jacobian refreshed
    /// every `refresh` iterations.
    Preconditioned { refresh: usize },
}

impl Default for SaDirection {
    fn default() -> Self {
        SaDirection::Verbatim { sign: PhiSign::Plus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    Central2,
    Central4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps: f64,
    pub switch_radius: f64,
    pub schedule: StepSchedule,
    /// Multiplies the problem's per-coordinate residual scales.
    pub noise_scale: f64,
    pub seed: u64,
    /// Total budget of stochastic iterations.
    pub max_sa: usize,
    /// Newton iterations per attempt.
    pub max_nr: usize,
    pub max_halvings: usize,
    pub divergence_window: usize,
    pub max_reversions: usize,
    pub direction: SaDirection,
    pub fd: FdScheme,
    pub fd_step: f64,
    pub condition_limit: f64,
    /// Slack allowed on `β ≥ 0` in the certificate.
    pub certificate_tol: f64,
    /// Extra Newton steps taken after reaching `eps`, kept only while they
    /// reduce `‖Φ‖`.
    pub polish: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            switch_radius: 0.1,
            schedule: StepSchedule::default(),
            noise_scale: 0.1,
            seed: 0,
            max_sa: 50_000,
            max_nr: 50,
            max_halvings: 8,
            divergence_window: 20,
            max_reversions: 8,
            direction: SaDirection::default(),
            fd: FdScheme::Central2,
            fd_step: 1e-6,
            condition_limit: 1e12,
            certificate_tol: 0.0,
            polish: 2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.eps > 0.0 && self.eps < self.switch_radius) {
            return Err(ConfigError::Tolerances { eps: self.eps, radius: self.switch_radius });
        }
        if !(self.noise_scale >= 0.0) {
            return Err(ConfigError::NonPositive("noise scale"));
        }
        if !(self.fd_step > 0.0) {
            return Err(ConfigError::NonPositive("finite-difference step"));
        }
        if self.divergence_window == 0 {
            return Err(ConfigError::NonPositive("divergence window"));
        }
        if let SaDirection::Preconditioned { refresh: 0 } = self.direction {
            return Err(ConfigError::NonPositive("Jacobian refresh interval"));
        }
        self.schedule.validate()
    }
}

/// Square nonlinear system `Φ(z) = 0`.
pub trait RootProblem: Sync {
    fn dim(&self) -> usize;

    fn residual(&self, z: &Vector) -> Result<Vector, String>;

    fn jacobian(&self, z: &Vector, scheme: FdScheme, rel_step: f64) -> Result<Matrix, String> {
        fd_jacobian(|v| self.residual(v), z, scheme, rel_step)
    }

    /// Characteristic magnitude per residual coordinate, used to size the noise.
    fn residual_scales(&self, _z0: &Vector) -> Vector {
        Vector::from_element(self.dim(), 1.0)
    }

    /// Cleanup applied to a converged iterate before certification; the
    /// result is kept only if it still meets the tolerance.
    fn finalize(&self, z: &Vector) -> Vector {
        z.clone()
    }

    /// Post-hoc acceptance check on a candidate root.
    fn certify(&self, _z: &Vector, _tol: f64) -> Result<(), String> {
        Ok(())
    }
}

/// Column `j` from central differences with step `rel_step·max(1, |z_j|)`;
/// columns are evaluated in parallel.
pub fn fd_jacobian<F>(f: F, z: &Vector, scheme: FdScheme, rel_step: f64) -> Result<Matrix, String>
where
    F: Fn(&Vector) -> Result<Vector, String> + Sync,
{
    let n = z.len();
    let columns: Vec<Result<Vector, String>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = rel_step * z[j].abs().max(1.0);
            let at = |s: f64| {
                let mut v = z.clone();
                v[j] += s * h;
                f(&v)
            };
            let col = match scheme {
                FdScheme::Central2 => (at(1.0)? - at(-1.0)?) / (2.0 * h),
                FdScheme::Central4 => (at(-2.0)? - at(-1.0)? * 8.0 + at(1.0)? * 8.0 - at(2.0)?) / (12.0 * h),
            };
            if col.iter().all(|v| v.is_finite()) {
                Ok(col)
            } else {
                Err(format!("non-finite Jacobian column {j}"))
            }
        })
        .collect();
    let mut m = Matrix::zeros(0, n);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        if j == 0 {
            m = Matrix::zeros(col.len(), n);
        }
        m.set_column(j, &col);
    }
    Ok(m)
}

/// `ζ + γ(Φ + M)` with `Φ` already carrying its sign and reshaping.
pub fn sa_step(z: &Vector, direction: &Vector, gamma: f64, noise: &Vector) -> Vector {
    z + (direction + noise) * gamma
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("Jacobian is singular")]
    Singular,
    #[error("Jacobian condition estimate {0:.3e} exceeds the limit")]
    IllConditioned(f64),
}

/// Solves `G δ = Φ` by LU with partial pivoting; returns `δ`.
///
/// Rows and then columns are scaled to unit Euclidean norm first; the
/// condition estimate is that of the scaled matrix, so it does not depend on
/// the units of the unknowns or of the residual rows.
pub fn newton_direction(jac: &Matrix, phi: &Vector, condition_limit: f64) -> Result<Vector, NewtonError> {
    let unit = |n: f64| if n > 0.0 && n.is_finite() { 1.0 / n } else { 1.0 };
    let row_scale = Vector::from_iterator(jac.nrows(), jac.row_iter().map(|r| unit(r.norm())));
    let mut scaled = Matrix::from_diagonal(&row_scale) * jac;
    let col_scale = Vector::from_iterator(jac.ncols(), scaled.column_iter().map(|c| unit(c.norm())));
    for (j, s) in col_scale.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let sv = scaled.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > 0.0) {
        return Err(NewtonError::Singular);
    }
    let cond = max / min;
    if cond > condition_limit {
        return Err(NewtonError::IllConditioned(cond));
    }
    let y = scaled.lu().solve(&phi.component_mul(&row_scale)).ok_or(NewtonError::Singular)?;
    Ok(y.component_mul(&col_scale))
}

/// `ζ − α G⁻¹ Φ`.
pub fn newton_step(z: &Vector, phi: &Vector, jac: &Matrix, damping: f64) -> Result<Vector, NewtonError> {
    let delta = newton_direction(jac, phi, f64::INFINITY)?;
    Ok(z - delta * damping)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sa,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub phase: Phase,
    /// Iteration index within the phase's own counter.
    pub k: usize,
    pub phi_norm: f64,
    /// `γ_k` in the stochastic phase, the accepted damping in Newton.
    pub step: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
    pub sa_iterations: usize,
    pub nr_iterations: usize,
    pub reversions: usize,
    /// First stochastic iteration at which `‖Φ‖ ≤ r` held.
    pub first_switch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z: Vector,
    pub phi_norm: f64,
    pub trace: SolverTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureKind {
    Config(ConfigError),
    Budget,
    Evaluation(String),
    Certificate(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("solver failed: {kind:?} (best ‖Φ‖ = {best_norm:.3e})")]
pub struct SolveFailure {
    pub kind: FailureKind,
    pub best: Vector,
    pub best_norm: f64,
    pub trace: SolverTrace,
}

struct Run<'a> {
    trace: SolverTrace,
    start: Instant,
    best: (Vector, f64),
    observer: &'a mut dyn FnMut(&TraceEntry),
}

impl Run<'_> {
    fn record(&mut self, phase: Phase, k: usize, phi_norm: f64, step: f64) {
        let iter = self.trace.entries.len();
        let entry = TraceEntry { iter, phase, k, phi_norm, step, elapsed: self.start.elapsed().as_secs_f64() };
        (self.observer)(&entry);
        self.trace.entries.push(entry);
    }

    fn offer(&mut self, z: &Vector, norm: f64) {
        if norm < self.best.1 {
            self.best = (z.clone(), norm);
        }
    }

    fn fail(self, kind: FailureKind) -> SolveFailure {
        SolveFailure { kind, best: self.best.0, best_norm: self.best.1, trace: self.trace }
    }
}

/// Stochastic phase followed by Newton, with reversion on stalls.
pub fn solve<P: RootProblem + ?Sized>(problem: &P, z0: &Vector, cfg: &SolverConfig) -> Result<Solution, SolveFailure> {
    solve_observed(problem, z0, cfg, &mut |_| {})
}

/// [`solve`], calling `observer` with every trace entry as it is recorded.
pub fn solve_observed<P: RootProblem + ?Sized>(
    problem: &P,
    z0: &Vector,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&TraceEntry),
) -> Result<Solution, SolveFailure> {
    let mut run = Run {
        trace: SolverTrace::default(),
        start: Instant::now(),
        best: (z0.clone(), f64::INFINITY),
        observer,
    };
    if let Err(e) = cfg.validate() {
        return Err(run.fail(FailureKind::Config(e)));
    }
    let mut z = z0.clone();
    let mut phi = match problem.residual(&z) {
        Ok(v) => v,
        Err(e) => return Err(run.fail(FailureKind::Evaluation(e))),
    };
    let mut norm = phi.norm();
    run.offer(&z, norm);
    let sigma = problem.residual_scales(z0) * cfg.noise_scale;
    let mut noise = NoiseSource::new(cfg.seed, sigma);
    let mut radius = cfg.switch_radius;
    let mut sa_k = 0usize;
    let mut precond: Option<(usize, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;

    loop {
        // Stochastic phase.
        while norm > radius {
            if sa_k >= cfg.max_sa {
                return Err(run.fail(FailureKind::Budget));
            }
            sa_k += 1;
            let gamma = cfg.schedule.gamma(sa_k);
            let m = noise.sample();
            let next = match cfg.direction {
                SaDirection::Verbatim { sign } => sa_step(&z, &(&phi * sign.factor()), gamma, &m),
                SaDirection::Preconditioned { refresh } => {
                    let stale = precond.as_ref().map_or(true, |(at, _)| sa_k - at >= refresh);
                    if stale {
                        match problem.jacobian(&z, cfg.fd, cfg.fd_step) {
                            Ok(g) => precond = Some((sa_k, g.lu())),
                            Err(e) => return Err(run.fail(FailureKind::Evaluation(e))),
                        }
                    }
                    let lu = &precond.as_ref().unwrap().1;
                    match lu.solve(&(&phi + &m)) {
                        Some(d) if d.iter().all(|v| v.is_finite()) => &z - d * gamma,
                        _ => {
                            // Singular preconditioner: fall back to the raw field for this step.
                            precond = None;
                            sa_step(&z, &(-&phi), gamma, &m)
                        }
                    }
                }
            };
            run.trace.sa_iterations += 1;
            let next_phi = match problem.residual(&next) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => v,
                Ok(_) => return Err(run.fail(FailureKind::Evaluation("non-finite residual".into()))),
                Err(_) => {
                    // Step left the domain (e.g. times out of order): reject it.
                    run.record(Phase::Sa, sa_k, norm, 0.0);
                    continue;
                }
            };
            z = next;
            phi = next_phi;
            norm = phi.norm();
            run.offer(&z, norm);
            run.record(Phase::Sa, sa_k, norm, gamma);
        }
        if run.trace.first_switch.is_none() {
            run.trace.first_switch = Some(sa_k);
        }

        // Newton phase from the best point seen so far.
        if run.best.1 < norm {
            z = run.best.0.clone();
            phi = problem.residual(&z).map_err(|e| run_fail_clone(&run, FailureKind::Evaluation(e)))?;
            norm = phi.norm();
        }
        let mut history: Vec<f64> = Vec::new();
        for m in 1..=cfg.max_nr {
            if norm <= cfg.eps {
                break;
            }
            let jac = match problem.jacobian(&z, cfg.fd, cfg.fd_step) {
                Ok(j) => j,
                Err(_) => break,
            };
            let delta = match newton_direction(&jac, &phi, cfg.condition_limit) {
                Ok(d) => d,
                Err(_) => break,
            };
            let mut alpha = 1.0;
            let mut accepted = None;
            for h in 0..=cfg.max_halvings {
                let trial = &z - &delta * alpha;
                if let Ok(p) = problem.residual(&trial) {
                    if p.iter().all(|v| v.is_finite()) {
                        let n = p.norm();
                        if n < norm || h == cfg.max_halvings {
                            accepted = Some((trial, p, n));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, p, n)) = accepted else { break };
            z = trial;
            phi = p;
            norm = n;
            run.trace.nr_iterations += 1;
            run.offer(&z, norm);
            run.record(Phase::Newton, m, norm, alpha);
            history.push(norm);
            let w = cfg.divergence_window;
            if history.len() >= 2 * w {
                let recent: f64 = history[history.len() - w..].iter().sum::<f64>() / w as f64;
                let before: f64 = history[history.len() - 2 * w..history.len() - w].iter().sum::<f64>() / w as f64;
                if recent >= before {
                    break;
                }
            }
        }
        if norm <= cfg.eps {
            for m in 0..cfg.polish {
                let Ok(jac) = problem.jacobian(&z, cfg.fd, cfg.fd_step) else { break };
                let Ok(delta) = newton_direction(&jac, &phi, f64::INFINITY) else { break };
                let trial = &z - delta;
                match problem.residual(&trial) {
                    Ok(p) if p.norm() < norm => {
                        z = trial;
                        phi = p;
                        norm = phi.norm();
                        run.trace.nr_iterations += 1;
                        run.record(Phase::Newton, cfg.max_nr + m + 1, norm, 1.0);
                    }
                    _ => break,
                }
            }
            let cleaned = problem.finalize(&z);
            if cleaned != z {
                if let Ok(p) = problem.residual(&cleaned) {
                    if p.norm() <= cfg.eps {
                        z = cleaned;
                        norm = p.norm();
                    }
                }
            }
            match problem.certify(&z, cfg.certificate_tol) {
                Ok(()) => return Ok(Solution { z, phi_norm: norm, trace: run.trace }),
                Err(reason) => return Err(run.fail(FailureKind::Certificate(reason))),
            }
        }
        if run.trace.reversions >= cfg.max_reversions {
            return Err(run.fail(FailureKind::Budget));
        }
        run.trace.reversions += 1;
        radius *= 0.5;
        if radius <= cfg.eps {
            radius = cfg.eps * 1.000_001;
        }
        z = run.best.0.clone();
        phi = match problem.residual(&z) {
            Ok(v) => v,
            Err(e) => return Err(run.fail(FailureKind::Evaluation(e))),
        };
        norm = phi.norm();
        precond = None;
        if norm <= radius {
            // Force stochastic iterations before the next Newton attempt.
            radius = norm * 0.5;
            if radius <= cfg.eps {
                radius = cfg.eps * 1.000_001;
            }
        }
    }
}

fn run_fail_clone(run: &Run<'_>, kind: FailureKind) -> SolveFailure {
    SolveFailure { kind, best: run.best.0.clone(), best_norm: run.best.1, trace: run.trace.clone() }
}

/// `Φ` from a closure, for small systems.
pub struct FnRoot<F> {
    dim: usize,
    f: F,
}

impl<F> FnRoot<F>
where
    F: Fn(&Vector) -> Vector + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> RootProblem for FnRoot<F>
where
    F: Fn(&Vector) -> Vector + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn residual(&self, z: &Vector) -> Result<Vector, String> {
        Ok((self.f)(z))
    }
}
