//! Post-solve checks of the necessary conditions along an extremal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::integrator::{IntervalTrack, TrajectoryRecord};
use crate::pmp::{self, grid_argmax, hamiltonian, synthesize_control, AdjointState};
use crate::Vector;
use crate::problem::{check_feasible, Process, ProcessInterval, ProblemSpec, Violation};
use crate::shooting::{evaluate, ShootingError, ShootingOptions, ShootingParams};

#[derive(Debug, Clone)]
pub struct CertificateOptions {
    pub feasibility_tol: f64,
    pub complementarity_tol: f64,
    pub hamiltonian_tol: f64,
    pub continuity_tol: f64,
    /// Absolute slack, scaled by `max(1, |H|)`, on the argmax comparison.
    pub argmax_tol: f64,
    pub jump_tol: f64,
    pub spot_checks: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-3,
            complementarity_tol: 1e-3,
            hamiltonian_tol: 1e-2,
            continuity_tol: 1e-2,
            argmax_tol: 1e-6,
            jump_tol: 1e-9,
            spot_checks: 100,
            grid_points: 201,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Outcome,
    /// Worst value found; compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub checks: Vec<Check>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome == Outcome::Pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, value: f64, tolerance: f64, detail: String) -> Check {
    let outcome = if value <= tolerance { Outcome::Pass } else { Outcome::Fail };
    Check { name, outcome, value, tolerance, detail }
}

fn skipped(name: &'static str, tolerance: f64) -> Check {
    Check { name, outcome: Outcome::Skipped, value: f64::NAN, tolerance, detail: "infeasible process".into() }
}

/// Process sampled at the integration nodes of an extremal.
pub fn process_from_trajectory(record: &TrajectoryRecord) -> Process {
    Process {
        intervals: record
            .intervals
            .iter()
            .map(|iv| ProcessInterval { times: iv.times.clone(), states: iv.states.clone(), controls: iv.controls.clone() })
            .collect(),
    }
}

/// Re-integrates `ζ` and checks the result.
pub fn certify(
    problem: &ProblemSpec,
    params: &ShootingParams,
    opts: &ShootingOptions,
    cert: &CertificateOptions,
) -> Result<CertificateReport, ShootingError> {
    let eval = evaluate(problem, params, opts)?;
    Ok(certify_trajectory(problem, params, &eval.trajectory, opts.integration.eta, cert))
}

/// Checks a given trajectory (possibly read back from disk) against the
/// multipliers and instants in `params`.
///
/// Constraint and bound violations gate the rest: the extremality checks
/// are then reported as skipped.
pub fn certify_trajectory(
    problem: &ProblemSpec,
    params: &ShootingParams,
    record: &TrajectoryRecord,
    eta: f64,
    cert: &CertificateOptions,
) -> CertificateReport {
    let mut checks = Vec::new();
    let process = process_from_trajectory(record);
    let feasibility = check_feasible(problem, &process, cert.feasibility_tol);
    // A dynamics mismatch alone (e.g. an edited control) still leaves the
    // extremality checks meaningful; constraint violations do not.
    let admissible = feasibility.violations.iter().all(|v| matches!(v, Violation::Dynamics { .. }));
    let feasible = feasibility.is_feasible();
    checks.push(Check {
        name: "feasibility",
        outcome: if feasible { Outcome::Pass } else { Outcome::Fail },
        value: feasibility.violations.len() as f64,
        tolerance: cert.feasibility_tol,
        detail: feasibility.violations.first().map(|v| format!("{v:?}")).unwrap_or_default(),
    });
    let increasing = params.times.windows(2).all(|w| w[1] > w[0]);
    checks.push(Check {
        name: "increasing_times",
        outcome: if increasing { Outcome::Pass } else { Outcome::Fail },
        value: 0.0,
        tolerance: 0.0,
        detail: format!("{:?}", params.times),
    });
    if !admissible {
        for (name, tol) in [
            ("multiplier_sign", 0.0),
            ("complementary_slackness", cert.complementarity_tol),
            ("hamiltonian_constancy", cert.hamiltonian_tol),
            ("hamiltonian_continuity", cert.continuity_tol),
            ("argmax_segments", cert.argmax_tol),
            ("argmax_spot_check", cert.argmax_tol),
            ("adjoint_jumps", cert.jump_tol),
        ] {
            checks.push(skipped(name, tol));
        }
        return CertificateReport { checks };
    }

    let worst_beta = params.beta.iter().fold(0.0_f64, |m, b| m.max(-b));
    checks.push(check("multiplier_sign", worst_beta, 0.0, format!("min β = {:.3e}", params.beta.min())));

    let g = problem.constraints.inequality_values(&params.points());
    let slackness = g.component_mul(&params.beta).amax();
    checks.push(check("complementary_slackness", slackness, cert.complementarity_tol, String::new()));

    checks.push(constancy(problem, record, eta, cert));
    checks.push(continuity(problem, params, record, eta, cert));
    checks.push(segments(problem, record, eta, cert));
    checks.push(spot_check(problem, record, eta, cert));
    checks.push(jumps(problem, params, record, eta, cert));
    CertificateReport { checks }
}

fn near_switch(switches: &[usize], j: usize) -> bool {
    switches.iter().any(|&s| s.abs_diff(j) <= 1)
}

/// `max |H|` over the nodes, with the control applied on the segment that
/// starts at each node.
fn constancy(problem: &ProblemSpec, record: &TrajectoryRecord, eta: f64, cert: &CertificateOptions) -> Check {
    let mut worst = (0.0_f64, 0.0);
    for iv in &record.intervals {
        for (j, u) in iv.controls.iter().enumerate() {
            if near_switch(&iv.switch_nodes, j) {
                continue;
            }
            let h = hamiltonian(problem, &iv.costates[j], iv.times[j], iv.states[j].as_slice(), u.as_slice(), eta);
            if h.abs() > worst.0 {
                worst = (h.abs(), iv.times[j]);
            }
        }
    }
    check("hamiltonian_constancy", worst.0, cert.hamiltonian_tol, format!("at t = {:.6}", worst.1))
}

fn continuity(
    problem: &ProblemSpec,
    params: &ShootingParams,
    record: &TrajectoryRecord,
    eta: f64,
    cert: &CertificateOptions,
) -> Check {
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for k in 1..record.intervals.len() {
        let left = &record.intervals[k - 1];
        let t = params.times[k];
        let x = left.states.last().unwrap();
        let pl = left.costates.last().unwrap();
        let pr = &record.intervals[k].costates[0];
        let ul = synthesize_control(problem, pl, t, x.as_slice(), eta);
        let ur = synthesize_control(problem, pr, t, x.as_slice(), eta);
        let r = pmp::hamiltonian_continuity_residual(problem, t, x.as_slice(), (pl, ul.as_slice()), (pr, ur.as_slice()), eta);
        worst = worst.max(r.abs());
        detail.push(format!("t{k}: {r:.3e}"));
    }
    check("hamiltonian_continuity", worst, cert.continuity_tol, detail.join(", "))
}

/// Relative shortfall of `H` under the applied control against `best`, at
/// the node where that control was chosen (the segment's left end; after a
/// located switch this is the switch node itself).
fn shortfall(
    problem: &ProblemSpec,
    iv: &IntervalTrack,
    seg: usize,
    eta: f64,
    best: impl Fn(&AdjointState, f64, &[f64]) -> Vector,
) -> f64 {
    let (x, p, s) = (iv.states[seg].as_slice(), &iv.costates[seg], iv.times[seg]);
    let applied = hamiltonian(problem, p, s, x, iv.controls[seg].as_slice(), eta);
    let top = hamiltonian(problem, p, s, x, best(p, s, x).as_slice(), eta);
    (top - applied) / top.abs().max(applied.abs()).max(1.0)
}

/// Every segment's control against the problem's own maximizer.
fn segments(problem: &ProblemSpec, record: &TrajectoryRecord, eta: f64, cert: &CertificateOptions) -> Check {
    let mut worst = (0.0_f64, 0.0);
    let mut failures = 0;
    for iv in &record.intervals {
        for seg in 0..iv.controls.len() {
            let gap = shortfall(problem, iv, seg, eta, |p, s, x| synthesize_control(problem, p, s, x, eta));
            if gap > cert.argmax_tol {
                failures += 1;
            }
            if gap > worst.0 {
                worst = (gap, iv.times[seg]);
            }
        }
    }
    check(
        "argmax_segments",
        worst.0,
        cert.argmax_tol,
        format!("{failures} segments below the maximizer; worst on the segment starting at t = {:.6}", worst.1),
    )
}

/// At random times, the applied control must do as well as the best point
/// of a fine grid over `U`.
fn spot_check(problem: &ProblemSpec, record: &TrajectoryRecord, eta: f64, cert: &CertificateOptions) -> Check {
    let t0 = record.intervals[0].times[0];
    let t1 = *record.intervals.last().unwrap().times.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cert.seed);
    let mut worst = (0.0_f64, 0.0);
    let mut failures = 0;
    for _ in 0..cert.spot_checks {
        let t = rng.gen_range(t0..t1);
        let Some(iv) = record.intervals.iter().find(|iv| t <= *iv.times.last().unwrap()) else { continue };
        let seg = iv.times.partition_point(|s| *s <= t).saturating_sub(1).min(iv.controls.len() - 1);
        let gap = shortfall(problem, iv, seg, eta, |p, s, x| grid_argmax(problem, p, s, x, eta, cert.grid_points));
        if gap > cert.argmax_tol {
            failures += 1;
        }
        if gap > worst.0 {
            worst = (gap, t);
        }
    }
    check(
        "argmax_spot_check",
        worst.0,
        cert.argmax_tol,
        format!("{failures} of {} below the grid oracle; worst at t = {:.6}", cert.spot_checks, worst.1),
    )
}

/// Costate jumps in the trajectory against those implied by the multipliers.
fn jumps(
    problem: &ProblemSpec,
    params: &ShootingParams,
    record: &TrajectoryRecord,
    eta: f64,
    cert: &CertificateOptions,
) -> Check {
    let expected = match pmp::all_jumps(problem, &params.points(), &params.multipliers(eta)) {
        Ok(j) => j,
        Err(e) => return check("adjoint_jumps", f64::INFINITY, cert.jump_tol, e.to_string()),
    };
    let mut worst = 0.0_f64;
    for (k, jump) in expected.iter().enumerate() {
        let before = record.intervals[k].costates.last().unwrap();
        let after = &record.intervals[k + 1].costates[0];
        let mut predicted: AdjointState = before.clone();
        predicted.apply(jump);
        let scale = before.to_vector().amax().max(1.0);
        worst = worst.max((predicted.to_vector() - after.to_vector()).amax() / scale);
    }
    check("adjoint_jumps", worst, cert.jump_tol, format!("{} interior instants", expected.len()))
}
