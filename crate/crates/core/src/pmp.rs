//! Maximum-principle objects: Hamiltonian, adjoint dynamics, pointwise
//! control synthesis, endpoint transversality and adjoint jumps.
//!
//! Sign conventions follow the maximization form: the Hamiltonian
//!
//! ```text
//! H(p̄, t, x̄, u) = (p⁰ − ηλ)·activity(u) + ⟨p, f(t, x, u)⟩ + p^ρ − η L(u)
//! ```
//!
//! is maximized by the optimal control, initial costates equal the
//! multiplier-weighted gradients at `t_0`, terminal costates equal their
//! negatives at `t_ν`, and interior jumps `p̄(t_k+) − p̄(t_k−)` equal the
//! gradients at `t_k`.

use crate::problem::{ActivityMeasure, AdmissibleSet, CandidateRule, IntermediatePoints, PointGradient, ProblemSpec};
use crate::Vector;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PmpError {
    #[error("{what}: expected {expected} entries, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("jump index {index} outside 1..={max}")]
    JumpIndex { index: usize, max: usize },
}

/// `p̄ = (p⁰, p, p^ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub sparse: f64,
    pub main: Vector,
    pub time: f64,
}

impl AdjointState {
    pub fn zeros(d: usize) -> Self {
        Self { sparse: 0.0, main: Vector::zeros(d), time: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.main.len() + 2
    }

    /// `(p⁰, p, p^ρ)` as one vector.
    pub fn to_vector(&self) -> Vector {
        let d = self.main.len();
        let mut v = Vector::zeros(d + 2);
        v[0] = self.sparse;
        v.rows_mut(1, d).copy_from(&self.main);
        v[d + 1] = self.time;
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self { sparse: v[0], main: Vector::from_column_slice(&v[1..=d]), time: v[d + 1] }
    }

    pub fn apply(&mut self, jump: &JumpRecord) {
        self.sparse += jump.d_sparse;
        self.main += &jump.d_main;
        self.time += jump.d_time;
    }

    pub fn is_finite(&self) -> bool {
        self.sparse.is_finite() && self.time.is_finite() && self.main.iter().all(|v| v.is_finite())
    }
}

/// `η`, `α ∈ ℝ^{q+1}`, `β ∈ ℝ^{m+ν}` and the slack `ϑ ∈ ℝ^{m+ν}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub eta: f64,
    pub alpha: Vector,
    pub beta: Vector,
    pub slack: Vector,
}

impl Multipliers {
    pub fn is_trivial(&self) -> bool {
        self.eta == 0.0 && self.alpha.iter().all(|v| *v == 0.0) && self.beta.iter().all(|v| *v == 0.0)
    }
}

/// Discontinuity applied to `p̄` at the interior instant `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub index: usize,
    pub d_sparse: f64,
    pub d_main: Vector,
    pub d_time: f64,
}

pub fn hamiltonian(problem: &ProblemSpec, costate: &AdjointState, t: f64, state: &[f64], u: &[f64], eta: f64) -> f64 {
    let d = problem.dim_state();
    let f = problem.system.rhs(t, &state[1..=d], u);
    let activity = problem.activity.eval(u);
    (costate.sparse - eta * problem.objective.lambda) * activity + costate.main.dot(&f) + costate.time
        - eta * problem.objective.running_value(u)
}

/// `(dp⁰/dt, dp/dt, dp^ρ/dt) = (0, −(∂f/∂x)ᵀp, −(∂f/∂t)ᵀp)`.
pub fn adjoint_rhs(
    costate: &AdjointState,
    t: f64,
    x: &[f64],
    u: &[f64],
    sys: &dyn crate::problem::ControlSystem,
) -> AdjointState {
    let jx = sys.jac_state(t, x, u);
    let jt = sys.jac_time(t, x, u);
    AdjointState { sparse: 0.0, main: -(jx.transpose() * &costate.main), time: -jt.dot(&costate.main) }
}

/// A Hamiltonian maximizer over `U` under the problem's candidate rule.
///
/// Ties go to `u = 0`, then to the lexicographically smallest candidate.
pub fn synthesize_control(problem: &ProblemSpec, costate: &AdjointState, t: f64, state: &[f64], eta: f64) -> Vector {
    match (problem.candidate_rule, &problem.admissible) {
        (CandidateRule::AffineBangOffBang, AdmissibleSet::Box { lo, hi }) => {
            let d = problem.dim_state();
            match problem.system.control_gain(t, &state[1..=d]) {
                Some(gain) => {
                    let c = gain.transpose() * &costate.main;
                    let penalty = costate.sparse - eta * problem.objective.lambda;
                    bang_off_bang(&c, penalty, lo, hi, problem.activity)
                }
                None => grid_argmax(problem, costate, t, state, eta, 201),
            }
        }
        (CandidateRule::Grid { points_per_axis }, _) => grid_argmax(problem, costate, t, state, eta, points_per_axis),
        (CandidateRule::SeparableGrid { points_per_axis, refine }, AdmissibleSet::Box { lo, hi }) => {
            separable_argmax(problem, costate, t, state, eta, lo, hi, points_per_axis, refine)
        }
        (_, AdmissibleSet::Finite(_)) => grid_argmax(problem, costate, t, state, eta, 0),
    }
}

/// Analytic maximizer for `penalty·activity(u) + ⟨c, u⟩` over a box.
///
/// `penalty` is `p⁰ − ηλ`, nonpositive along extremals; for a positive
/// penalty the supremum may not be attained. The "on" branch uses the facet maximizer of
/// `⟨c, u⟩`; it wins only when strictly better than `u = 0`.
pub fn bang_off_bang(c: &Vector, penalty: f64, lo: &Vector, hi: &Vector, activity: ActivityMeasure) -> Vector {
    let r = c.len();
    let zero_allowed: Vec<bool> = (0..r).map(|i| lo[i] <= 0.0 && 0.0 <= hi[i]).collect();
    let facet = |i: usize| -> f64 {
        if c[i] > 0.0 {
            hi[i]
        } else if c[i] < 0.0 {
            lo[i]
        } else if zero_allowed[i] {
            0.0
        } else {
            lo[i]
        }
    };
    match activity {
        ActivityMeasure::Joint => {
            let on = Vector::from_iterator(r, (0..r).map(facet));
            if !zero_allowed.iter().all(|z| *z) {
                return on;
            }
            let on_value = c.dot(&on) + penalty * crate::problem::sparse_state_rhs(on.as_slice());
            if on_value > 0.0 {
                on
            } else {
                Vector::zeros(r)
            }
        }
        ActivityMeasure::PerChannel => Vector::from_iterator(
            r,
            (0..r).map(|i| {
                let v = facet(i);
                if !zero_allowed[i] {
                    return v;
                }
                let on_value = c[i] * v + if v != 0.0 { penalty } else { 0.0 };
                if on_value > 0.0 {
                    v
                } else {
                    0.0
                }
            }),
        ),
    }
}

/// Exhaustive search: tensor grid with `points_per_axis` nodes per box axis
/// (endpoints included) plus the exact zero, or every point of a finite set.
pub fn grid_argmax(
    problem: &ProblemSpec,
    costate: &AdjointState,
    t: f64,
    state: &[f64],
    eta: f64,
    points_per_axis: usize,
) -> Vector {
    let h = |u: &[f64]| hamiltonian(problem, costate, t, state, u, eta);
    argmax_candidates(&problem.admissible, points_per_axis, h)
}

/// Generic argmax over candidates of `U` with the zero-first tie-breaking.
pub fn argmax_candidates(admissible: &AdmissibleSet, points_per_axis: usize, h: impl Fn(&[f64]) -> f64) -> Vector {
    let mut candidates: Vec<Vector> = match admissible {
        AdmissibleSet::Finite(points) => points.clone(),
        AdmissibleSet::Box { lo, hi } => tensor_grid(lo, hi, points_per_axis.max(2)),
    };
    candidates.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).unwrap());
    let mut best: Option<(Vector, f64)> = None;
    if admissible.contains_zero() {
        let zero = Vector::zeros(admissible.dim());
        let value = h(zero.as_slice());
        best = Some((zero, value));
    }
    for u in candidates {
        let value = h(u.as_slice());
        if best.as_ref().map_or(true, |(_, v)| value > *v) {
            best = Some((u, value));
        }
    }
    best.expect("admissible set is nonempty").0
}

fn tensor_grid(lo: &Vector, hi: &Vector, n: usize) -> Vec<Vector> {
    let r = lo.len();
    let axis = |i: usize, j: usize| -> f64 {
        if j == n - 1 {
            hi[i]
        } else {
            lo[i] + (hi[i] - lo[i]) * j as f64 / (n - 1) as f64
        }
    };
    let total = n.pow(r as u32);
    (0..total)
        .map(|mut idx| {
            let mut u = Vector::zeros(r);
            for i in (0..r).rev() {
                u[i] = axis(i, idx % n);
                idx /= n;
            }
            u
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn separable_argmax(
    problem: &ProblemSpec,
    costate: &AdjointState,
    t: f64,
    state: &[f64],
    eta: f64,
    lo: &Vector,
    hi: &Vector,
    n: usize,
    refine: bool,
) -> Vector {
    let r = lo.len();
    let n = n.max(2);
    let mut u = Vector::from_iterator(r, (0..r).map(|i| if lo[i] <= 0.0 && 0.0 <= hi[i] { 0.0 } else { lo[i] }));
    let base = u.clone();
    for i in 0..r {
        let mut probe = base.clone();
        let mut value_at = |v: f64| {
            probe[i] = v;
            hamiltonian(problem, costate, t, state, probe.as_slice(), eta)
        };
        let node = |j: usize| if j == n - 1 { hi[i] } else { lo[i] + (hi[i] - lo[i]) * j as f64 / (n - 1) as f64 };
        let mut best_v = base[i];
        let mut best_h = value_at(best_v);
        let mut best_j = None;
        for j in 0..n {
            let v = node(j);
            let hv = value_at(v);
            if hv > best_h {
                best_h = hv;
                best_v = v;
                best_j = Some(j);
            }
        }
        // Without zero in the box the base point is the first grid node.
        if best_j.is_none() && best_v == lo[i] {
            best_j = Some(0);
        }
        if refine {
            if let Some(j) = best_j {
                let a = node(j.saturating_sub(1));
                let b = node((j + 1).min(n - 1));
                let width = (hi[i] - lo[i]).abs().max(1e-300);
                let (v, hv) = slope_bisection(&mut value_at, a, b, width)
                    .unwrap_or_else(|| golden_max(&mut value_at, a, b, 1e-13 * width));
                if hv > best_h {
                    best_v = v;
                }
            }
        }
        u[i] = best_v;
    }
    u
}

/// Maximizer of a smooth unimodal `f` on `[a, b]` as the sign change of its
/// central-difference slope. Locates an interior maximum to near machine
/// precision, where comparing values alone stalls at `√ε`. `None` when the
/// slope does not change sign over the bracket.
fn slope_bisection(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, width: f64) -> Option<(f64, f64)> {
    let h = 1e-4 * width;
    let slope = |f: &mut dyn FnMut(f64) -> f64, x: f64| f(x + h) - f(x - h);
    if !(slope(f, a) > 0.0 && slope(f, b) < 0.0) {
        return None;
    }
    while b - a > 1e-14 * width {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if slope(f, mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let x = 0.5 * (a + b);
    Some((x, f(x)))
}

fn golden_max(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let mut best = (mid, fm);
    for (x, fx) in [(a, f(a)), (b, f(b))] {
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// `η∇ℓ + Σ α_j ∇h_j + Σ β_i ∇g_i`, the multiplier-weighted gradient of the
/// intermediate-point data with respect to every `t_k` and `x̄(t_k)`.
pub fn combined_point_gradient(
    problem: &ProblemSpec,
    points: &IntermediatePoints,
    mult: &Multipliers,
) -> Result<PointGradient, PmpError> {
    let spec = &problem.constraints;
    if mult.alpha.len() != spec.equalities.len() {
        return Err(PmpError::Dimension { what: "alpha", expected: spec.equalities.len(), got: mult.alpha.len() });
    }
    if mult.beta.len() != spec.inequalities.len() {
        return Err(PmpError::Dimension { what: "beta", expected: spec.inequalities.len(), got: mult.beta.len() });
    }
    let aug = problem.dim_state() + 1;
    if points.times.len() != problem.nu() + 1 || points.states.iter().any(|s| s.len() != aug) {
        return Err(PmpError::Dimension { what: "intermediate points", expected: problem.nu() + 1, got: points.times.len() });
    }
    let mut acc = PointGradient::zeros(problem.nu(), aug);
    let mut add = |weight: f64, g: &PointGradient| {
        if weight == 0.0 {
            return;
        }
        for (a, b) in acc.times.iter_mut().zip(&g.times) {
            *a += weight * b;
        }
        for (a, b) in acc.states.iter_mut().zip(&g.states) {
            a.axpy(weight, b, 1.0);
        }
    };
    if let Some(cost) = &problem.objective.endpoint_cost {
        add(mult.eta, &cost.gradient(points).0);
    }
    for (c, a) in spec.equalities.iter().zip(mult.alpha.iter()) {
        add(*a, &c.gradient(points).0);
    }
    for (c, b) in spec.inequalities.iter().zip(mult.beta.iter()) {
        add(*b, &c.gradient(points).0);
    }
    Ok(acc)
}

/// The `(x̄(t_k), t_k)` slot of a point gradient, read as an adjoint vector.
pub fn gradient_slot(grad: &PointGradient, k: usize) -> AdjointState {
    let s = &grad.states[k];
    let d = s.len() - 1;
    AdjointState { sparse: s[0], main: s.rows(1, d).into_owned(), time: grad.times[k] }
}

/// Initial costate `p̄(t_0)` and the terminal residual `p̄(t_ν) + (gradient at t_ν)`.
pub fn endpoint_transversality(
    problem: &ProblemSpec,
    points: &IntermediatePoints,
    mult: &Multipliers,
    terminal: &AdjointState,
) -> Result<(AdjointState, Vector), PmpError> {
    let grad = combined_point_gradient(problem, points, mult)?;
    let initial = gradient_slot(&grad, 0);
    let end = gradient_slot(&grad, problem.nu());
    let residual = terminal.to_vector() + end.to_vector();
    Ok((initial, residual))
}

pub fn initial_costate(problem: &ProblemSpec, points: &IntermediatePoints, mult: &Multipliers) -> Result<AdjointState, PmpError> {
    Ok(gradient_slot(&combined_point_gradient(problem, points, mult)?, 0))
}

/// Jump of `p̄` at the interior instant `t_k`, `1 ≤ k ≤ ν − 1`.
pub fn jump_record(
    problem: &ProblemSpec,
    k: usize,
    points: &IntermediatePoints,
    mult: &Multipliers,
) -> Result<JumpRecord, PmpError> {
    if k == 0 || k >= problem.nu() {
        return Err(PmpError::JumpIndex { index: k, max: problem.nu().saturating_sub(1) });
    }
    let grad = combined_point_gradient(problem, points, mult)?;
    Ok(jump_from_gradient(&grad, k))
}

/// All interior jumps from one gradient evaluation.
pub fn all_jumps(problem: &ProblemSpec, points: &IntermediatePoints, mult: &Multipliers) -> Result<Vec<JumpRecord>, PmpError> {
    let grad = combined_point_gradient(problem, points, mult)?;
    Ok((1..problem.nu()).map(|k| jump_from_gradient(&grad, k)).collect())
}

/// Jump at `t_k` read off a combined gradient.
pub fn jump_from_gradient(grad: &PointGradient, k: usize) -> JumpRecord {
    let s = gradient_slot(grad, k);
    JumpRecord { index: k, d_sparse: s.sparse, d_main: s.main, d_time: s.time }
}

/// `H(p̄(t_k+), t_k, x̄(t_k), u(t_k+)) − H(p̄(t_k−), t_k, x̄(t_k), u(t_k−))`.
pub fn hamiltonian_continuity_residual(
    problem: &ProblemSpec,
    t_k: f64,
    state: &[f64],
    left: (&AdjointState, &[f64]),
    right: (&AdjointState, &[f64]),
    eta: f64,
) -> f64 {
    hamiltonian(problem, right.0, t_k, state, right.1, eta) - hamiltonian(problem, left.0, t_k, state, left.1, eta)
}
