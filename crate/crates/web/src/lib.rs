//! Browser bindings for the oscillator benchmark. Every export returns a
//! JSON string so the page needs no generated types.

use serde::Serialize;
use sparse_pmp::benchmarks::build_s1;
use sparse_pmp::pmp::bang_off_bang;
use sparse_pmp::problem::{ActivityMeasure, Process};
use sparse_pmp::scaling::{cost_equivalence_check, forward_map, Scaling};
use sparse_pmp::shooting::ShootingProblem;
use sparse_pmp::solver::solve;
use sparse_pmp::Vector;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct SolveReport {
    converged: bool,
    message: String,
    phi_norm: f64,
    sa_iterations: usize,
    nr_iterations: usize,
    /// `(iteration, ‖Φ‖)` for every solver step.
    trace: Vec<(usize, f64)>,
    t: Vec<f64>,
    position: Vec<f64>,
    velocity: Vec<f64>,
    control: Vec<f64>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn error_json(message: String) -> String {
    to_json(&serde_json::json!({ "error": message }))
}

/// Solves the oscillator benchmark on a coarse grid with the given noise
/// seed and returns the residual history and the trajectory.
#[wasm_bindgen]
pub fn solve_oscillator(seed: u64, nodes: usize, max_sa: usize) -> String {
    let bench = build_s1();
    let mut shooting = bench.shooting;
    shooting.integration.nodes_per_interval = nodes.max(20);
    let config = sparse_pmp::solver::SolverConfig { seed, max_sa, ..bench.config.clone() };
    let sp = match ShootingProblem::new(&bench.problem, shooting) {
        Ok(sp) => sp,
        Err(e) => return error_json(e.to_string()),
    };
    let (converged, message, z, phi_norm, trace) = match solve(&sp, &bench.initial_guess, &config) {
        Ok(s) => (true, String::new(), s.z, s.phi_norm, s.trace),
        Err(f) => (false, format!("{:?}", f.kind), f.best, f.best_norm, f.trace),
    };
    let eval = match sp.evaluate(&z) {
        Ok(e) => e,
        Err(e) => return error_json(e.to_string()),
    };
    let mut report = SolveReport {
        converged,
        message,
        phi_norm,
        sa_iterations: trace.sa_iterations,
        nr_iterations: trace.nr_iterations,
        trace: trace.entries.iter().map(|e| (e.iter, e.phi_norm)).collect(),
        t: vec![],
        position: vec![],
        velocity: vec![],
        control: vec![],
    };
    for iv in &eval.trajectory.intervals {
        for (j, t) in iv.times.iter().enumerate() {
            report.t.push(*t);
            report.position.push(iv.states[j][1]);
            report.velocity.push(iv.states[j][2]);
            report.control.push(iv.controls[j.min(iv.controls.len() - 1)][0]);
        }
    }
    to_json(&report)
}

/// Pointwise maximizer of `penalty·|u|₀ + c·u` over `[lo, hi]` for a sweep
/// of switching values `c ∈ [-range, range]`.
#[wasm_bindgen]
pub fn control_branches(penalty: f64, lo: f64, hi: f64, range: f64, samples: usize) -> String {
    if !(lo <= hi) || samples < 2 {
        return error_json("need lo ≤ hi and at least two samples".into());
    }
    let (lo, hi) = (Vector::from_element(1, lo), Vector::from_element(1, hi));
    let points: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let c = -range + 2.0 * range * i as f64 / (samples - 1) as f64;
            let u = bang_off_bang(&Vector::from_element(1, c), penalty, &lo, &hi, ActivityMeasure::Joint);
            (c, u[0])
        })
        .collect();
    to_json(&serde_json::json!({ "points": points }))
}

/// Reparametrizes a bang-off-bang oscillator process through a piecewise
/// constant speed profile (`z` values on equal pieces of `[0, 1]`). Returns
/// the new clock `t(τ)` and the cost gap between the two descriptions.
#[wasm_bindgen]
pub fn time_scaling(profile: &[f64]) -> String {
    let bench = build_s1();
    let problem = &bench.problem;
    let horizon = 15.0;
    if profile.is_empty() || profile.iter().any(|z| !(*z >= 0.0)) {
        return error_json("profile needs nonnegative entries".into());
    }
    let total: f64 = profile.iter().sum::<f64>() / profile.len() as f64;
    let profile: Vec<f64> = profile.iter().map(|z| z * horizon / total.max(f64::MIN_POSITIVE)).collect();
    let control = |_: usize, t: f64| {
        let phase = (t / std::f64::consts::TAU).fract();
        Vector::from_element(1, if phase < 0.2 { -1.0 } else if phase > 0.6 && phase < 0.8 { 1.0 } else { 0.0 })
    };
    let process = Process::simulate(problem, &[0.0, horizon], 301, &[4.0, -3.0], control, 4);
    let scaling = Scaling::Profiles(vec![profile]);
    let (scaled, gap) = match (forward_map(problem, &process, &scaling), cost_equivalence_check(problem, &process, &scaling)) {
        (Ok(s), Ok(g)) => (s, g),
        (Err(e), _) | (_, Err(e)) => return error_json(e.to_string()),
    };
    let iv = &scaled.intervals[0];
    to_json(&serde_json::json!({
        "tau": iv.tau,
        "t": iv.rho,
        "position": iv.states.iter().map(|x| x[1]).collect::<Vec<_>>(),
        "original_cost": process.cost(problem),
        "scaled_cost": scaled.cost(problem),
        "cost_gap": gap,
    }))
}
