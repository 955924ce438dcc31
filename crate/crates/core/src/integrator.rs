//! Fixed-grid RK4 for the coupled state/costate system with the control
//! synthesized from the maximum condition.
//!
//! The control is frozen over each step (or re-synthesized at every RK
//! stage for problems with interior maximizers). When the control mode
//! changes across a step, the step is split at the switching instant,
//! located by bisection to near machine precision.

use crate::pmp::{adjoint_rhs, synthesize_control, AdjointState, JumpRecord};
use crate::problem::{AdmissibleSet, ProblemSpec};
use crate::Vector;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IntegrationError {
    #[error("non-finite value in interval {interval} at t = {time}")]
    NonFinite { interval: usize, time: f64 },
    #[error("instants must be strictly increasing (t_{index} = {value})")]
    NonIncreasing { index: usize, value: f64 },
    #[error("need at least one node per interval")]
    EmptyGrid,
    #[error("expected {expected} jumps, got {got}")]
    JumpCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlTiming {
    /// One synthesized control per step.
    FrozenPerStep,
    /// Re-synthesize at every RK stage.
    PerStage,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegrationOptions {
    pub nodes_per_interval: usize,
    pub locate_switches: bool,
    pub timing: ControlTiming,
    /// Cap on located switches per base step.
    pub max_switches_per_step: usize,
    pub eta: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { nodes_per_interval: 1000, locate_switches: true, timing: ControlTiming::FrozenPerStep, max_switches_per_step: 4, eta: 1.0 }
    }
}

/// Base nodes for each interval `[t_{k-1}, t_k]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationGrid {
    pub intervals: Vec<Vec<f64>>,
}

impl IntegrationGrid {
    pub fn uniform(instants: &[f64], steps: usize) -> Result<Self, IntegrationError> {
        if steps == 0 || instants.len() < 2 {
            return Err(IntegrationError::EmptyGrid);
        }
        for k in 1..instants.len() {
            if !(instants[k] > instants[k - 1]) {
                return Err(IntegrationError::NonIncreasing { index: k, value: instants[k] });
            }
        }
        let intervals = instants
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                (0..=steps).map(|j| if j == steps { b } else { a + (b - a) * j as f64 / steps as f64 }).collect()
            })
            .collect();
        Ok(Self { intervals })
    }
}

/// One interval of an integrated extremal. `controls[j]` acts on
/// `[times[j], times[j+1]]`; the first and last nodes are the one-sided
/// limits at the interval's instants.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTrack {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub costates: Vec<AdjointState>,
    pub controls: Vec<Vector>,
    /// Indices of nodes inserted at located switching instants.
    pub switch_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub intervals: Vec<IntervalTrack>,
    pub jumps: Vec<JumpRecord>,
}

impl TrajectoryRecord {
    pub fn terminal_state(&self) -> &Vector {
        self.intervals.last().unwrap().states.last().unwrap()
    }

    pub fn terminal_costate(&self) -> &AdjointState {
        self.intervals.last().unwrap().costates.last().unwrap()
    }

    /// State at the end of interval `k` (`k ≥ 1`) or at the start (`k = 0`).
    pub fn state_at_instant(&self, k: usize) -> &Vector {
        if k == 0 {
            &self.intervals[0].states[0]
        } else {
            self.intervals[k - 1].states.last().unwrap()
        }
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.intervals.iter().flat_map(|iv| iv.switch_nodes.iter().map(|&j| iv.times[j])).collect()
    }

    pub fn base_grid(&self) -> IntegrationGrid {
        IntegrationGrid {
            intervals: self
                .intervals
                .iter()
                .map(|iv| {
                    iv.times.iter().enumerate().filter(|(j, _)| !iv.switch_nodes.contains(j)).map(|(_, t)| *t).collect()
                })
                .collect(),
        }
    }
}

/// Coupled `(x̄, p̄)` packed as `[x⁰, x, p⁰, p, p^ρ]`.
fn pack(state: &Vector, costate: &AdjointState) -> Vector {
    let n = state.len();
    let mut y = Vector::zeros(2 * n + 1);
    y.rows_mut(0, n).copy_from(state);
    y.rows_mut(n, n + 1).copy_from(&costate.to_vector());
    y
}

fn split(y: &Vector, n: usize) -> (Vector, AdjointState) {
    (y.rows(0, n).into_owned(), AdjointState::from_slice(&y.as_slice()[n..]))
}

fn derivative(problem: &ProblemSpec, t: f64, y: &Vector, u: &Vector) -> Vector {
    let d = problem.dim_state();
    let n = d + 1;
    let x = &y.as_slice()[1..n];
    let costate = AdjointState::from_slice(&y.as_slice()[n..]);
    let f = problem.system.rhs(t, x, u.as_slice());
    let dp = adjoint_rhs(&costate, t, x, u.as_slice(), problem.system.as_ref());
    let mut dy = Vector::zeros(2 * n + 1);
    dy[0] = problem.activity.eval(u.as_slice());
    dy.rows_mut(1, d).copy_from(&f);
    dy.rows_mut(n, n + 1).copy_from(&dp.to_vector());
    dy
}

struct Stepper<'a> {
    problem: &'a ProblemSpec,
    opts: IntegrationOptions,
}

impl Stepper<'_> {
    fn control(&self, t: f64, y: &Vector) -> Vector {
        let n = self.problem.dim_state() + 1;
        let costate = AdjointState::from_slice(&y.as_slice()[n..]);
        synthesize_control(self.problem, &costate, t, &y.as_slice()[..n], self.opts.eta)
    }

    fn step(&self, t: f64, y: &Vector, h: f64, frozen: &Vector) -> Vector {
        let per_stage = self.opts.timing == ControlTiming::PerStage;
        let u_at = |t: f64, y: &Vector| if per_stage { self.control(t, y) } else { frozen.clone() };
        let p = self.problem;
        let k1 = derivative(p, t, y, frozen);
        let y2 = y + &k1 * (0.5 * h);
        let k2 = derivative(p, t + 0.5 * h, &y2, &u_at(t + 0.5 * h, &y2));
        let y3 = y + &k2 * (0.5 * h);
        let k3 = derivative(p, t + 0.5 * h, &y3, &u_at(t + 0.5 * h, &y3));
        let y4 = y + &k3 * h;
        let k4 = derivative(p, t + h, &y4, &u_at(t + h, &y4));
        let mut out = y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        // p⁰ has zero dynamics; keep it bitwise constant.
        let n = p.dim_state() + 1;
        out[n] = y[n];
        out
    }
}

/// Discrete control mode per channel: off, lower bound, upper bound, interior.
pub fn control_mode(admissible: &AdmissibleSet, u: &Vector) -> Vec<i8> {
    match admissible {
        AdmissibleSet::Box { lo, hi } => u
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == 0.0 {
                    0
                } else if v == lo[i] {
                    -1
                } else if v == hi[i] {
                    1
                } else {
                    2
                }
            })
            .collect(),
        AdmissibleSet::Finite(points) => {
            vec![points.iter().position(|p| p == u).map_or(-1, |i| i as i8)]
        }
    }
}

/// Integrate from `(x̄(t_0), p̄(t_0))` over every interval of `grid`,
/// applying `jumps[k-1]` to the costate at `t_k`.
pub fn integrate_extremal(
    problem: &ProblemSpec,
    start_state: &Vector,
    start_costate: &AdjointState,
    grid: &IntegrationGrid,
    jumps: &[JumpRecord],
    opts: &IntegrationOptions,
) -> Result<TrajectoryRecord, IntegrationError> {
    let nu = grid.intervals.len();
    if jumps.len() + 1 != nu {
        return Err(IntegrationError::JumpCount { expected: nu.saturating_sub(1), got: jumps.len() });
    }
    if grid.intervals.iter().any(|iv| iv.len() < 2) {
        return Err(IntegrationError::EmptyGrid);
    }
    let stepper = Stepper { problem, opts: *opts };
    let n = problem.dim_state() + 1;
    let mut state = start_state.clone();
    let mut costate = start_costate.clone();
    let mut intervals = Vec::with_capacity(nu);
    for (k, nodes) in grid.intervals.iter().enumerate() {
        if k > 0 {
            costate.apply(&jumps[k - 1]);
        }
        let track = integrate_interval(&stepper, k, nodes, pack(&state, &costate))?;
        let last = track.states.len() - 1;
        state = track.states[last].clone();
        costate = track.costates[last].clone();
        intervals.push(track);
    }
    debug_assert_eq!(state.len(), n);
    Ok(TrajectoryRecord { intervals, jumps: jumps.to_vec() })
}

/// Integrate one interval's node list from `(x̄, p̄)` without jumps.
pub fn integrate_segment(
    problem: &ProblemSpec,
    interval: usize,
    nodes: &[f64],
    state: &Vector,
    costate: &AdjointState,
    opts: &IntegrationOptions,
) -> Result<IntervalTrack, IntegrationError> {
    if nodes.len() < 2 {
        return Err(IntegrationError::EmptyGrid);
    }
    integrate_interval(&Stepper { problem, opts: *opts }, interval, nodes, pack(state, costate))
}

fn integrate_interval(stepper: &Stepper, k: usize, nodes: &[f64], mut y: Vector) -> Result<IntervalTrack, IntegrationError> {
    let problem = stepper.problem;
    let n = problem.dim_state() + 1;
    let admissible = &problem.admissible;
    let mut track = IntervalTrack {
        times: Vec::with_capacity(nodes.len()),
        states: Vec::with_capacity(nodes.len()),
        costates: Vec::with_capacity(nodes.len()),
        controls: Vec::with_capacity(nodes.len()),
        switch_nodes: Vec::new(),
    };
    let push = |track: &mut IntervalTrack, t: f64, y: &Vector| {
        let (s, c) = split(y, n);
        track.times.push(t);
        track.states.push(s);
        track.costates.push(c);
    };
    push(&mut track, nodes[0], &y);
    for w in nodes.windows(2) {
        let (mut t, end) = (w[0], w[1]);
        let mut switches = 0;
        loop {
            let u = stepper.control(t, &y);
            let h = end - t;
            let trial = stepper.step(t, &y, h, &u);
            let check = |v: &Vector| v.iter().all(|x| x.is_finite());
            if !check(&trial) {
                return Err(IntegrationError::NonFinite { interval: k, time: end });
            }
            let locate = stepper.opts.locate_switches && switches < stepper.opts.max_switches_per_step;
            let mode = control_mode(admissible, &u);
            if !locate || control_mode(admissible, &stepper.control(end, &trial)) == mode {
                track.controls.push(u);
                y = trial;
                push(&mut track, end, &y);
                break;
            }
            let same_mode = |tau: f64| {
                let yt = stepper.step(t, &y, tau, &u);
                control_mode(admissible, &stepper.control(t + tau, &yt)) == mode
            };
            let (mut lo, mut hi) = (0.0, h);
            let floor = 4.0 * f64::EPSILON * t.abs().max(end.abs()).max(1.0);
            for _ in 0..80 {
                if hi - lo <= floor {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if same_mode(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if hi >= h - floor {
                // Mode change sits at the step end; accept the full step.
                track.controls.push(u);
                y = trial;
                push(&mut track, end, &y);
                break;
            }
            y = stepper.step(t, &y, hi, &u);
            if !check(&y) {
                return Err(IntegrationError::NonFinite { interval: k, time: t + hi });
            }
            t += hi;
            track.controls.push(u);
            push(&mut track, t, &y);
            track.switch_nodes.push(track.times.len() - 1);
            switches += 1;
        }
    }
    Ok(track)
}

/// Re-integrate on the record's base grid with switch location enabled.
pub fn refine_switch_times(
    problem: &ProblemSpec,
    record: &TrajectoryRecord,
    opts: &IntegrationOptions,
) -> Result<TrajectoryRecord, IntegrationError> {
    let first = &record.intervals[0];
    let opts = IntegrationOptions { locate_switches: true, ..*opts };
    integrate_extremal(problem, &first.states[0], &first.costates[0], &record.base_grid(), &record.jumps, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{IntermediateSpec, LinearSystem, ObjectiveSpec, SparsityWindows};
    use nalgebra::dmatrix;
    use std::sync::Arc;

    fn problem(a: crate::Matrix, b: crate::Matrix, lambda: f64) -> ProblemSpec {
        let r = b.ncols();
        ProblemSpec::new(
            "t",
            Arc::new(LinearSystem::new(a, b)),
            AdmissibleSet::symmetric_box(r, 1.0),
            IntermediateSpec::new(1),
            SparsityWindows::inactive(1, 100.0),
            ObjectiveSpec::sparsity(lambda),
        )
        .unwrap()
    }

    fn run(p: &ProblemSpec, x: &[f64], costate: &[f64], t1: f64, steps: usize, locate: bool) -> TrajectoryRecord {
        let grid = IntegrationGrid::uniform(&[0.0, t1], steps).unwrap();
        let opts = IntegrationOptions { nodes_per_interval: steps, locate_switches: locate, ..Default::default() };
        integrate_extremal(p, &Vector::from_column_slice(x), &AdjointState::from_slice(costate), &grid, &[], &opts).unwrap()
    }

    #[test]
    fn free_rotation_quarter_turn() {
        // Huge λ keeps the control off, leaving a pure rotation.
        let p = problem(dmatrix![0.0, 1.0; -1.0, 0.0], dmatrix![0.0; 1.0], 1e9);
        let rec = run(&p, &[0.0, 4.0, -3.0], &[0.0, 0.0, 0.0, 0.0], std::f64::consts::FRAC_PI_2, 1000, true);
        let x = rec.terminal_state();
        assert!((x[1] + 3.0).abs() < 1e-10 && (x[2] + 4.0).abs() < 1e-10, "{x}");
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn rotation_preserves_norm() {
        let p = problem(dmatrix![0.0, 1.0; -1.0, 0.0], dmatrix![0.0; 1.0], 1e9);
        let rec = run(&p, &[0.0, 4.0, -3.0], &[0.0, 0.3, 0.2, 0.0], 15.0, 1000, true);
        for s in &rec.intervals[0].states {
            assert!((s.rows(1, 2).norm() - 5.0).abs() < 1e-8);
        }
        assert!(rec.intervals[0].costates.iter().all(|c| c.sparse == 0.0));
    }

    #[test]
    fn rk4_error_ratio() {
        let p = problem(dmatrix![0.0, 1.0; -1.0, 0.0], dmatrix![0.0; 1.0], 1e9);
        let err = |steps| {
            let rec = run(&p, &[0.0, 4.0, -3.0], &[0.0, 0.0, 0.0, 0.0], 15.0, steps, false);
            let x = rec.terminal_state();
            let (c, s) = (15f64.cos(), 15f64.sin());
            ((x[1] - (4.0 * c - 3.0 * s)).powi(2) + (x[2] - (-4.0 * s - 3.0 * c)).powi(2)).sqrt()
        };
        let ratio = err(50) / err(100);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn switch_located_on_linear_switching_function() {
        // ẋ₁ = x₂, ẋ₂ = u gives p₂(t) = p₂(0) − p₁(0)·t; the control is on
        // while |p₂| > λ, so p₂ = 3 − t/2 switches off at t = 4.
        let p = problem(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], 1.0);
        let rec = run(&p, &[0.0, 0.0, 0.0], &[0.0, 0.5, 3.0, 0.0], 6.0, 7, true);
        let sw = rec.switch_times();
        assert_eq!(sw.len(), 1, "{sw:?}");
        assert!((sw[0] - 4.0).abs() < 1e-12, "{}", sw[0]);
        // the sparse state equals the on-time exactly up to roundoff
        assert!((rec.terminal_state()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn refine_is_idempotent_when_already_located() {
        let p = problem(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], 1.0);
        let rec = run(&p, &[0.0, 0.0, 0.0], &[0.0, 0.5, 3.0, 0.0], 10.0, 7, true);
        assert_eq!(rec.switch_times().len(), 2);
        let again = refine_switch_times(&p, &rec, &IntegrationOptions::default()).unwrap();
        assert_eq!(rec, again);
        let coarse = run(&p, &[0.0, 0.0, 0.0], &[0.0, 0.5, 3.0, 0.0], 10.0, 7, false);
        let fixed = refine_switch_times(&p, &coarse, &IntegrationOptions::default()).unwrap();
        assert_eq!(fixed, rec);
    }

    #[test]
    fn jump_count_checked() {
        let p = problem(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], 1.0);
        let grid = IntegrationGrid::uniform(&[0.0, 1.0, 2.0], 4).unwrap();
        let err = integrate_extremal(&p, &Vector::zeros(3), &AdjointState::zeros(2), &grid, &[], &Default::default());
        assert_eq!(err.unwrap_err(), IntegrationError::JumpCount { expected: 1, got: 0 });
    }
}
