//! Shooting formulation: the unknown vector `ζ` and the residual `Φ(ζ)`.
//!
//! `ζ = (t_0..t_ν, x̄_0..x̄_ν, α, β, ϑ)`; with more than one segment per
//! interval, the `(x̄, p̄)` values at interior segment nodes are appended and
//! matched by extra defect rows, which keeps the system square.

use crate::integrator::{integrate_segment, IntegrationError, IntegrationOptions, IntervalTrack, TrajectoryRecord};
use crate::pmp::{self, hamiltonian, synthesize_control, AdjointState, JumpRecord, Multipliers, PmpError};
use crate::problem::{IntermediatePoints, ProblemSpec};
use crate::solver::{fd_jacobian, FdScheme, RootProblem};
use crate::{Matrix, Vector};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ShootingError {
    #[error("expected {expected} unknowns, got {got}")]
    Length { expected: usize, got: usize },
    #[error("times must be strictly increasing (t_{index})")]
    NonIncreasingTimes { index: usize },
    #[error("integration failed in {context}: {source}")]
    Integration { context: String, source: IntegrationError },
    #[error(transparent)]
    Pmp(#[from] PmpError),
    #[error("invalid layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShootingLayout {
    pub nu: usize,
    pub dim_state: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub segments: usize,
}

impl ShootingLayout {
    pub fn new(problem: &ProblemSpec, segments: usize) -> Result<Self, ShootingError> {
        let layout = Self {
            nu: problem.nu(),
            dim_state: problem.dim_state(),
            n_eq: problem.n_equalities(),
            n_ineq: problem.n_inequalities(),
            segments,
        };
        if layout.nu == 0 {
            return Err(ShootingError::Layout("no intervals".into()));
        }
        if layout.n_ineq < layout.nu {
            return Err(ShootingError::Layout("every interval needs its sparsity window".into()));
        }
        if segments == 0 {
            return Err(ShootingError::Layout("need at least one segment per interval".into()));
        }
        debug_assert_eq!(layout.dim(), layout.residual_dim());
        Ok(layout)
    }

    fn aug(&self) -> usize {
        self.dim_state + 1
    }

    /// Length of a packed `(x̄, p̄)` segment node.
    pub fn node_len(&self) -> usize {
        2 * self.dim_state + 3
    }

    pub fn extra_nodes(&self) -> usize {
        self.nu * (self.segments - 1)
    }

    pub fn dim(&self) -> usize {
        (self.nu + 1) + self.aug() * (self.nu + 1) + self.n_eq + 2 * self.n_ineq + self.extra_nodes() * self.node_len()
    }

    pub fn residual_dim(&self) -> usize {
        self.aug() * self.nu
            + (self.dim_state + 2)
            + self.n_eq
            + 2 * self.n_ineq
            + self.nu
            + self.extra_nodes() * self.node_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingParams {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub alpha: Vector,
    pub beta: Vector,
    pub slack: Vector,
    /// Interior segment nodes, `(x̄, p̄)` packed, per interval.
    pub nodes: Vec<Vec<Vector>>,
}

impl ShootingParams {
    pub fn pack(&self) -> Vector {
        let mut out: Vec<f64> = self.times.clone();
        for s in &self.states {
            out.extend(s.iter());
        }
        out.extend(self.alpha.iter());
        out.extend(self.beta.iter());
        out.extend(self.slack.iter());
        for iv in &self.nodes {
            for n in iv {
                out.extend(n.iter());
            }
        }
        Vector::from_vec(out)
    }

    pub fn unpack(layout: &ShootingLayout, z: &[f64]) -> Result<Self, ShootingError> {
        if z.len() != layout.dim() {
            return Err(ShootingError::Length { expected: layout.dim(), got: z.len() });
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &z[at..at + n];
            at += n;
            s
        };
        let times = take(layout.nu + 1).to_vec();
        let states = (0..=layout.nu).map(|_| Vector::from_column_slice(take(layout.aug()))).collect();
        let alpha = Vector::from_column_slice(take(layout.n_eq));
        let beta = Vector::from_column_slice(take(layout.n_ineq));
        let slack = Vector::from_column_slice(take(layout.n_ineq));
        let nodes = (0..layout.nu)
            .map(|_| (1..layout.segments).map(|_| Vector::from_column_slice(take(layout.node_len()))).collect())
            .collect();
        Ok(Self { times, states, alpha, beta, slack, nodes })
    }

    pub fn points(&self) -> IntermediatePoints {
        IntermediatePoints::new(self.times.clone(), self.states.clone())
    }

    pub fn multipliers(&self, eta: f64) -> Multipliers {
        Multipliers { eta, alpha: self.alpha.clone(), beta: self.beta.clone(), slack: self.slack.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub state_matching: Vec<Vector>,
    pub terminal_transversality: Vector,
    pub equalities: Vector,
    pub inequalities_with_slack: Vector,
    pub complementary_slackness: Vector,
    pub hamiltonian: Vector,
    pub segment_defects: Vec<Vector>,
}

impl ResidualVector {
    pub fn to_vector(&self) -> Vector {
        let mut out: Vec<f64> = Vec::new();
        for b in &self.state_matching {
            out.extend(b.iter());
        }
        out.extend(self.terminal_transversality.iter());
        out.extend(self.equalities.iter());
        out.extend(self.inequalities_with_slack.iter());
        out.extend(self.complementary_slackness.iter());
        out.extend(self.hamiltonian.iter());
        for b in &self.segment_defects {
            out.extend(b.iter());
        }
        Vector::from_vec(out)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// Euclidean norm of each block, in residual order.
    pub fn block_norms(&self) -> Vec<(&'static str, f64)> {
        let stack = |bs: &[Vector]| bs.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
        vec![
            ("state_matching", stack(&self.state_matching)),
            ("terminal_transversality", self.terminal_transversality.norm()),
            ("equalities", self.equalities.norm()),
            ("inequalities_with_slack", self.inequalities_with_slack.norm()),
            ("complementary_slackness", self.complementary_slackness.norm()),
            ("hamiltonian", self.hamiltonian.norm()),
            ("segment_defects", stack(&self.segment_defects)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShootingOptions {
    pub integration: IntegrationOptions,
    pub segments_per_interval: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { integration: IntegrationOptions::default(), segments_per_interval: 1 }
    }
}

/// Extremal computed from `ζ` together with its residual.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub residual: ResidualVector,
    pub trajectory: TrajectoryRecord,
    pub initial_costate: AdjointState,
}

fn pack_node(state: &Vector, costate: &AdjointState) -> Vector {
    let mut v = state.as_slice().to_vec();
    v.extend(costate.to_vector().iter());
    Vector::from_vec(v)
}

fn unpack_node(node: &Vector, aug: usize) -> (Vector, AdjointState) {
    (node.rows(0, aug).into_owned(), AdjointState::from_slice(&node.as_slice()[aug..]))
}

pub fn evaluate(problem: &ProblemSpec, params: &ShootingParams, opts: &ShootingOptions) -> Result<Evaluation, ShootingError> {
    let layout = ShootingLayout::new(problem, opts.segments_per_interval)?;
    if params.pack().len() != layout.dim() {
        return Err(ShootingError::Length { expected: layout.dim(), got: params.pack().len() });
    }
    if let Some(index) = (1..params.times.len()).find(|&k| !(params.times[k] > params.times[k - 1])) {
        return Err(ShootingError::NonIncreasingTimes { index });
    }
    let eta = opts.integration.eta;
    let points = params.points();
    let mult = params.multipliers(eta);
    let grad = pmp::combined_point_gradient(problem, &points, &mult)?;
    let initial = pmp::gradient_slot(&grad, 0);
    let jumps: Vec<JumpRecord> = (1..layout.nu).map(|k| pmp::jump_from_gradient(&grad, k)).collect();

    let aug = layout.aug();
    let segs = layout.segments;
    let steps = opts.integration.nodes_per_interval.div_ceil(segs).max(1);
    let mut state = params.states[0].clone();
    let mut costate = initial.clone();
    let mut tracks = Vec::with_capacity(layout.nu);
    let mut defects = Vec::with_capacity(layout.extra_nodes());
    for k in 0..layout.nu {
        if k > 0 {
            costate.apply(&jumps[k - 1]);
        }
        let (a, b) = (params.times[k], params.times[k + 1]);
        let mut track: Option<IntervalTrack> = None;
        for j in 0..segs {
            let sa = if j == 0 { a } else { a + (b - a) * j as f64 / segs as f64 };
            let sb = if j + 1 == segs { b } else { a + (b - a) * (j + 1) as f64 / segs as f64 };
            let nodes: Vec<f64> =
                (0..=steps).map(|i| if i == steps { sb } else { sa + (sb - sa) * i as f64 / steps as f64 }).collect();
            let (x0, p0) = if j == 0 {
                (state.clone(), costate.clone())
            } else {
                let node = &params.nodes[k][j - 1];
                let prev = track.as_ref().unwrap();
                let end = pack_node(prev.states.last().unwrap(), prev.costates.last().unwrap());
                defects.push(end - node);
                unpack_node(node, aug)
            };
            let seg = integrate_segment(problem, k, &nodes, &x0, &p0, &opts.integration).map_err(|source| {
                ShootingError::Integration { context: format!("interval {} segment {}", k + 1, j + 1), source }
            })?;
            track = Some(match track {
                None => seg,
                Some(mut t) => {
                    let offset = t.times.len() - 1;
                    t.times.extend_from_slice(&seg.times[1..]);
                    t.states.extend_from_slice(&seg.states[1..]);
                    t.costates.extend_from_slice(&seg.costates[1..]);
                    t.controls.extend_from_slice(&seg.controls);
                    t.switch_nodes.extend(seg.switch_nodes.iter().map(|i| i + offset));
                    t
                }
            });
        }
        let track = track.unwrap();
        state = track.states.last().unwrap().clone();
        costate = track.costates.last().unwrap().clone();
        tracks.push(track);
    }
    let trajectory = TrajectoryRecord { intervals: tracks, jumps };

    let state_matching = (1..=layout.nu).map(|k| trajectory.state_at_instant(k) - &params.states[k]).collect();
    let terminal_transversality = costate.to_vector() + pmp::gradient_slot(&grad, layout.nu).to_vector();
    let spec = &problem.constraints;
    let equalities = spec.equality_values(&points);
    let g = spec.inequality_values(&points);
    let inequalities_with_slack = Vector::from_iterator(g.len(), g.iter().zip(params.slack.iter()).map(|(g, s)| g + s * s));
    let complementary_slackness = g.component_mul(&params.beta);

    let h_at = |t: f64, x: &Vector, p: &AdjointState| {
        let u = synthesize_control(problem, p, t, x.as_slice(), eta);
        hamiltonian(problem, p, t, x.as_slice(), u.as_slice(), eta)
    };
    let mut ham = Vec::with_capacity(layout.nu);
    ham.push(h_at(params.times[0], &params.states[0], &initial));
    for k in 1..layout.nu {
        let left = &trajectory.intervals[k - 1];
        let right = &trajectory.intervals[k];
        let x = left.states.last().unwrap();
        let t = params.times[k];
        ham.push(h_at(t, x, &right.costates[0]) - h_at(t, x, left.costates.last().unwrap()));
    }

    Ok(Evaluation {
        residual: ResidualVector {
            state_matching,
            terminal_transversality,
            equalities,
            inequalities_with_slack,
            complementary_slackness,
            hamiltonian: Vector::from_vec(ham),
            segment_defects: defects,
        },
        trajectory,
        initial_costate: initial,
    })
}

/// Fills the parts of a guess that follow from the rest by integration.
///
/// States after `t_0` and interior segment nodes are taken from the
/// extremal, slacks from the inequality values, and the multipliers of
/// `t_k = const` equalities (terms named `t{k}`) are set so that the
/// Hamiltonian rows and the terminal time costate vanish.
pub fn propagate_guess(
    problem: &ProblemSpec,
    guess: &ShootingParams,
    opts: &ShootingOptions,
) -> Result<ShootingParams, ShootingError> {
    let layout = ShootingLayout::new(problem, opts.segments_per_interval)?;
    let steps = opts.integration.nodes_per_interval.div_ceil(layout.segments).max(1);
    let time_alpha: Vec<Option<usize>> = (0..=layout.nu)
        .map(|k| problem.constraints.equalities.iter().position(|c| c.name == format!("t{k}")))
        .collect();
    let mut params = guess.clone();
    // Node values lag one pass behind the multipliers they depend on, so
    // iterate until the adjusted rows settle.
    for pass in 0..layout.segments + 20 {
        let eval = evaluate(problem, &params, opts)?;
        for (k, track) in eval.trajectory.intervals.iter().enumerate() {
            params.states[k + 1] = track.states.last().unwrap().clone();
            let (a, b) = (params.times[k], params.times[k + 1]);
            for j in 1..layout.segments {
                let boundary = a + (b - a) * j as f64 / layout.segments as f64;
                let i = track.times.iter().position(|&t| t == boundary).unwrap_or(j * steps);
                params.nodes[k][j - 1] = pack_node(&track.states[i], &track.costates[i]);
            }
        }
        if pass + 1 < layout.segments {
            continue;
        }
        let ham = &eval.residual.hamiltonian;
        let terminal = &eval.residual.terminal_transversality;
        let mut change: f64 = 0.0;
        for k in 0..layout.nu {
            if let Some(i) = time_alpha[k] {
                params.alpha[i] -= ham[k];
                change = change.max(ham[k].abs());
            }
        }
        if let Some(i) = time_alpha[layout.nu] {
            params.alpha[i] -= terminal[terminal.len() - 1];
            change = change.max(terminal[terminal.len() - 1].abs());
        }
        if change == 0.0 && eval.residual.segment_defects.iter().all(|d| d.amax() == 0.0) {
            break;
        }
    }
    let g = problem.constraints.inequality_values(&params.points());
    params.slack = g.map(|v| (-v).max(0.0).sqrt());
    Ok(params)
}

pub fn eval_phi(problem: &ProblemSpec, params: &ShootingParams, opts: &ShootingOptions) -> Result<ResidualVector, ShootingError> {
    Ok(evaluate(problem, params, opts)?.residual)
}

pub fn jacobian_fd(
    problem: &ProblemSpec,
    params: &ShootingParams,
    opts: &ShootingOptions,
    scheme: FdScheme,
    rel_step: f64,
) -> Result<Matrix, ShootingError> {
    let layout = ShootingLayout::new(problem, opts.segments_per_interval)?;
    let f = |z: &Vector| -> Result<Vector, String> {
        let p = ShootingParams::unpack(&layout, z.as_slice()).map_err(|e| e.to_string())?;
        Ok(eval_phi(problem, &p, opts).map_err(|e| e.to_string())?.to_vector())
    };
    fd_jacobian(f, &params.pack(), scheme, rel_step).map_err(ShootingError::Layout)
}

const BETA_ROUNDOFF: f64 = 1e-6;

/// `Φ` of a problem as a [`RootProblem`] over packed `ζ`.
pub struct ShootingProblem<'a> {
    pub problem: &'a ProblemSpec,
    pub opts: ShootingOptions,
    pub layout: ShootingLayout,
}

impl<'a> ShootingProblem<'a> {
    pub fn new(problem: &'a ProblemSpec, opts: ShootingOptions) -> Result<Self, ShootingError> {
        let layout = ShootingLayout::new(problem, opts.segments_per_interval)?;
        Ok(Self { problem, opts, layout })
    }

    pub fn unpack(&self, z: &Vector) -> Result<ShootingParams, ShootingError> {
        ShootingParams::unpack(&self.layout, z.as_slice())
    }

    pub fn evaluate(&self, z: &Vector) -> Result<Evaluation, ShootingError> {
        evaluate(self.problem, &self.unpack(z)?, &self.opts)
    }
}

impl RootProblem for ShootingProblem<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn residual(&self, z: &Vector) -> Result<Vector, String> {
        self.evaluate(z).map(|e| e.residual.to_vector()).map_err(|e| e.to_string())
    }

    /// `max(1, ‖block‖_∞)` of each residual block at the start point.
    fn residual_scales(&self, z0: &Vector) -> Vector {
        let Ok(eval) = self.evaluate(z0) else {
            return Vector::from_element(self.dim(), 1.0);
        };
        let r = &eval.residual;
        let mut out = Vec::with_capacity(self.dim());
        let mut push = |blocks: &[&Vector]| {
            let scale = blocks.iter().map(|b| b.amax()).fold(1.0, f64::max);
            for b in blocks {
                out.extend(std::iter::repeat(scale).take(b.len()));
            }
        };
        push(&r.state_matching.iter().collect::<Vec<_>>());
        push(&[&r.terminal_transversality]);
        push(&[&r.equalities]);
        push(&[&r.inequalities_with_slack]);
        push(&[&r.complementary_slackness]);
        push(&[&r.hamiltonian]);
        push(&r.segment_defects.iter().collect::<Vec<_>>());
        Vector::from_vec(out)
    }

    /// Zeroes inequality multipliers that are negative only at roundoff level.
    fn finalize(&self, z: &Vector) -> Vector {
        let Ok(mut p) = self.unpack(z) else { return z.clone() };
        for b in p.beta.iter_mut() {
            if *b < 0.0 && *b > -BETA_ROUNDOFF {
                *b = 0.0;
            }
        }
        p.pack()
    }

    fn certify(&self, z: &Vector, tol: f64) -> Result<(), String> {
        let p = self.unpack(z).map_err(|e| e.to_string())?;
        if let Some(k) = (1..p.times.len()).find(|&k| !(p.times[k] > p.times[k - 1])) {
            return Err(format!("times not strictly increasing at t_{k}"));
        }
        if let Some((i, b)) = p.beta.iter().enumerate().find(|(_, b)| **b < -tol) {
            return Err(format!("negative inequality multiplier β_{i} = {b:.3e}"));
        }
        Ok(())
    }
}
