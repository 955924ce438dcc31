//! Problem data model: dynamics, admissible controls, intermediate-point
//! constraints and the sparse-state augmentation.
//!
//! The augmented state is `x̄ = (x⁰, x)` where `x⁰` accumulates the time the
//! control is active. Every intermediate-point function in this module sees
//! the augmented states, so slot `0` of a state gradient always refers to
//! `x⁰(t_k)` and slots `1..=d` to the main state.

use std::fmt;
use std::sync::Arc;

use crate::{Matrix, Vector};

/// Errors raised while assembling a problem.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProblemError {
    #[error("expected {expected} sparsity windows (one per interval), got {got}")]
    WindowCount { expected: usize, got: usize },
    #[error("sparsity window {index} has lower bound {lo} above upper bound {hi}")]
    WindowOrder { index: usize, lo: f64, hi: f64 },
    #[error("the number of intervals must be at least one")]
    NoIntervals,
    #[error("admissible box has lo > hi on axis {axis}")]
    BoxOrder { axis: usize },
    #[error("admissible set dimension {got} does not match the control dimension {expected}")]
    ControlDimension { expected: usize, got: usize },
    #[error("admissible set is empty")]
    EmptyAdmissibleSet,
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
}

/// Right-hand side `ẋ = f(t, x, u)` together with its Jacobians.
pub trait ControlSystem: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_control(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], u: &[f64]) -> Vector;
    /// `∂f/∂x`, a `d × d` matrix.
    fn jac_state(&self, t: f64, x: &[f64], u: &[f64]) -> Matrix;
    /// `∂f/∂t`. Autonomous systems can rely on the zero default.
    fn jac_time(&self, _t: f64, _x: &[f64], _u: &[f64]) -> Vector {
        Vector::zeros(self.dim_state())
    }
    /// `G(t, x)` when the dynamics are control-affine, `f = f₀(t, x) + G(t, x) u`.
    fn control_gain(&self, _t: f64, _x: &[f64]) -> Option<Matrix> {
        None
    }
}

/// Linear time-invariant dynamics `ẋ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix) -> Self {
        assert!(a.is_square(), "A must be square");
        assert_eq!(a.nrows(), b.nrows(), "A and B row counts differ");
        Self { a, b }
    }
}

impl ControlSystem for LinearSystem {
    fn dim_state(&self) -> usize {
        self.a.nrows()
    }

    fn dim_control(&self) -> usize {
        self.b.ncols()
    }

    fn rhs(&self, _t: f64, x: &[f64], u: &[f64]) -> Vector {
        let x = Vector::from_column_slice(x);
        let u = Vector::from_column_slice(u);
        &self.a * x + &self.b * u
    }

    fn jac_state(&self, _t: f64, _x: &[f64], _u: &[f64]) -> Matrix {
        self.a.clone()
    }

    fn control_gain(&self, _t: f64, _x: &[f64]) -> Option<Matrix> {
        Some(self.b.clone())
    }
}

/// The closed, bounded control set `U`.
#[derive(Debug, Clone, PartialEq)]
pub enum AdmissibleSet {
    Box { lo: Vector, hi: Vector },
    Finite(Vec<Vector>),
}

impl AdmissibleSet {
    pub fn new_box(lo: Vector, hi: Vector) -> Result<Self, ProblemError> {
        if lo.len() != hi.len() {
            return Err(ProblemError::ControlDimension { expected: lo.len(), got: hi.len() });
        }
        if let Some(axis) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(ProblemError::BoxOrder { axis });
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn symmetric_box(dim: usize, bound: f64) -> Self {
        Self::Box { lo: Vector::from_element(dim, -bound), hi: Vector::from_element(dim, bound) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::Finite(points) => points.first().map_or(0, |p| p.len()),
        }
    }

    pub fn contains_zero(&self) -> bool {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi.iter()).all(|(l, h)| *l <= 0.0 && 0.0 <= *h),
            Self::Finite(points) => points.iter().any(|p| p.iter().all(|v| *v == 0.0)),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            Self::Box { lo, hi } => {
                u.len() == lo.len()
                    && u.iter().enumerate().all(|(i, v)| *v >= lo[i] - tol && *v <= hi[i] + tol)
            }
            Self::Finite(points) => points
                .iter()
                .any(|p| p.len() == u.len() && p.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)),
        }
    }

    fn validate(&self, dim_control: usize) -> Result<(), ProblemError> {
        match self {
            Self::Box { lo, hi } => {
                if lo.len() != dim_control || hi.len() != dim_control {
                    return Err(ProblemError::ControlDimension { expected: dim_control, got: lo.len() });
                }
                if let Some(axis) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
                    return Err(ProblemError::BoxOrder { axis });
                }
            }
            Self::Finite(points) => {
                if points.is_empty() {
                    return Err(ProblemError::EmptyAdmissibleSet);
                }
                if let Some(p) = points.iter().find(|p| p.len() != dim_control) {
                    return Err(ProblemError::ControlDimension { expected: dim_control, got: p.len() });
                }
            }
        }
        Ok(())
    }
}

/// The intermediate-point vector `γ = ((t_0, x̄(t_0)), …, (t_ν, x̄(t_ν)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediatePoints {
    pub times: Vec<f64>,
    /// Augmented states, `x⁰` first.
    pub states: Vec<Vector>,
}

impl IntermediatePoints {
    pub fn new(times: Vec<f64>, states: Vec<Vector>) -> Self {
        assert_eq!(times.len(), states.len());
        Self { times, states }
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn augmented_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    /// Flattened `(t_0, …, t_ν, x̄(t_0), …, x̄(t_ν))`.
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::with_capacity(self.times.len() * (1 + self.augmented_dim()));
        out.extend_from_slice(&self.times);
        for s in &self.states {
            out.extend(s.iter());
        }
        Vector::from_vec(out)
    }

    pub fn from_flat(nu: usize, aug_dim: usize, flat: &[f64]) -> Self {
        let times = flat[..=nu].to_vec();
        let states = (0..=nu)
            .map(|k| {
                let start = nu + 1 + k * aug_dim;
                Vector::from_column_slice(&flat[start..start + aug_dim])
            })
            .collect();
        Self { times, states }
    }
}

/// Gradient of an intermediate-point function with respect to every `t_k`
/// and every `x̄(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGradient {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl PointGradient {
    pub fn zeros(nu: usize, aug_dim: usize) -> Self {
        Self { times: vec![0.0; nu + 1], states: vec![Vector::zeros(aug_dim); nu + 1] }
    }

    pub fn flatten(&self) -> Vector {
        let mut out = self.times.clone();
        for s in &self.states {
            out.extend(s.iter());
        }
        Vector::from_vec(out)
    }

    pub fn from_flat(nu: usize, aug_dim: usize, flat: &[f64]) -> Self {
        let pts = IntermediatePoints::from_flat(nu, aug_dim, flat);
        Self { times: pts.times, states: pts.states }
    }
}

/// A scalar function of the intermediate points (constraint or endpoint cost).
pub trait PointFunction: Send + Sync {
    fn value(&self, points: &IntermediatePoints) -> f64;
    /// Analytic gradient; `None` requests the finite-difference fallback.
    fn gradient(&self, _points: &IntermediatePoints) -> Option<PointGradient> {
        None
    }
}

/// Central finite-difference gradient of a point function.
pub fn fd_point_gradient(f: &dyn PointFunction, points: &IntermediatePoints, rel_step: f64) -> PointGradient {
    let nu = points.intervals();
    let aug = points.augmented_dim();
    let base = points.flatten();
    let mut grad = Vector::zeros(base.len());
    for j in 0..base.len() {
        let h = rel_step * base[j].abs().max(1.0);
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let fp = f.value(&IntermediatePoints::from_flat(nu, aug, plus.as_slice()));
        let fm = f.value(&IntermediatePoints::from_flat(nu, aug, minus.as_slice()));
        grad[j] = (fp - fm) / (2.0 * h);
    }
    PointGradient::from_flat(nu, aug, grad.as_slice())
}

/// `t_k − value`.
#[derive(Debug, Clone)]
pub struct FixedTime {
    pub index: usize,
    pub value: f64,
}

impl PointFunction for FixedTime {
    fn value(&self, p: &IntermediatePoints) -> f64 {
        p.times[self.index] - self.value
    }

    fn gradient(&self, p: &IntermediatePoints) -> Option<PointGradient> {
        let mut g = PointGradient::zeros(p.intervals(), p.augmented_dim());
        g.times[self.index] = 1.0;
        Some(g)
    }
}

/// `x_c(t_k) − value`, where `c` indexes the main state (not `x⁰`).
#[derive(Debug, Clone)]
pub struct FixedState {
    pub index: usize,
    pub component: usize,
    pub value: f64,
}

impl PointFunction for FixedState {
    fn value(&self, p: &IntermediatePoints) -> f64 {
        p.states[self.index][self.component + 1] - self.value
    }

    fn gradient(&self, p: &IntermediatePoints) -> Option<PointGradient> {
        let mut g = PointGradient::zeros(p.intervals(), p.augmented_dim());
        g.states[self.index][self.component + 1] = 1.0;
        Some(g)
    }
}

/// `⟨w, x(t_k)⟩ + offset` over the main state.
#[derive(Debug, Clone)]
pub struct LinearStateFunction {
    pub index: usize,
    pub weights: Vector,
    pub offset: f64,
}

impl PointFunction for LinearStateFunction {
    fn value(&self, p: &IntermediatePoints) -> f64 {
        let x = p.states[self.index].rows(1, self.weights.len());
        self.weights.dot(&x) + self.offset
    }

    fn gradient(&self, p: &IntermediatePoints) -> Option<PointGradient> {
        let mut g = PointGradient::zeros(p.intervals(), p.augmented_dim());
        g.states[self.index].rows_mut(1, self.weights.len()).copy_from(&self.weights);
        Some(g)
    }
}

/// `x⁰(t_0)`: the sparse state starts at zero.
#[derive(Debug, Clone)]
pub struct SparseStart;

impl PointFunction for SparseStart {
    fn value(&self, p: &IntermediatePoints) -> f64 {
        p.states[0][0]
    }

    fn gradient(&self, p: &IntermediatePoints) -> Option<PointGradient> {
        let mut g = PointGradient::zeros(p.intervals(), p.augmented_dim());
        g.states[0][0] = 1.0;
        Some(g)
    }
}

/// `(x⁰(t_k) − E1_k)(x⁰(t_k) − E2_k)`, nonpositive exactly inside the window.
#[derive(Debug, Clone)]
pub struct SparsityWindowConstraint {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

impl PointFunction for SparsityWindowConstraint {
    fn value(&self, p: &IntermediatePoints) -> f64 {
        let s = p.states[self.index][0];
        (s - self.lo) * (s - self.hi)
    }

    fn gradient(&self, p: &IntermediatePoints) -> Option<PointGradient> {
        let mut g = PointGradient::zeros(p.intervals(), p.augmented_dim());
        g.states[self.index][0] = 2.0 * p.states[self.index][0] - self.lo - self.hi;
        Some(g)
    }
}

type PointFn = dyn Fn(&IntermediatePoints) -> f64 + Send + Sync;
type PointGradFn = dyn Fn(&IntermediatePoints) -> PointGradient + Send + Sync;

/// Closure-backed point function, optionally with an analytic gradient.
#[derive(Clone)]
pub struct FnPointFunction {
    value: Arc<PointFn>,
    gradient: Option<Arc<PointGradFn>>,
}

impl FnPointFunction {
    pub fn new(value: impl Fn(&IntermediatePoints) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&IntermediatePoints) -> PointGradient + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }
}

impl PointFunction for FnPointFunction {
    fn value(&self, p: &IntermediatePoints) -> f64 {
        (self.value)(p)
    }

    fn gradient(&self, p: &IntermediatePoints) -> Option<PointGradient> {
        self.gradient.as_ref().map(|g| g(p))
    }
}

/// A named constraint or cost term.
#[derive(Clone)]
pub struct PointTerm {
    pub name: String,
    pub func: Arc<dyn PointFunction>,
}

impl PointTerm {
    pub fn new(name: impl Into<String>, func: impl PointFunction + 'static) -> Self {
        Self { name: name.into(), func: Arc::new(func) }
    }

    pub fn value(&self, p: &IntermediatePoints) -> f64 {
        self.func.value(p)
    }

    /// Analytic gradient when available, else central differences. The
    /// boolean is `true` when the fallback was used.
    pub fn gradient(&self, p: &IntermediatePoints) -> (PointGradient, bool) {
        match self.func.gradient(p) {
            Some(g) => (g, false),
            None => (fd_point_gradient(self.func.as_ref(), p, 1e-6), true),
        }
    }
}

impl fmt::Debug for PointTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointTerm").field("name", &self.name).finish()
    }
}

/// Equality (`h_j = 0`) and inequality (`g_i ≤ 0`) constraints on `γ`.
#[derive(Debug, Clone)]
pub struct IntermediateSpec {
    pub nu: usize,
    pub equalities: Vec<PointTerm>,
    pub inequalities: Vec<PointTerm>,
}

impl IntermediateSpec {
    pub fn new(nu: usize) -> Self {
        Self { nu, equalities: Vec::new(), inequalities: Vec::new() }
    }

    pub fn equality(mut self, term: PointTerm) -> Self {
        self.equalities.push(term);
        self
    }

    pub fn inequality(mut self, term: PointTerm) -> Self {
        self.inequalities.push(term);
        self
    }

    pub fn fix_time(self, index: usize, value: f64) -> Self {
        self.equality(PointTerm::new(format!("t{index}"), FixedTime { index, value }))
    }

    pub fn fix_state(mut self, index: usize, values: &[f64]) -> Self {
        for (component, &value) in values.iter().enumerate() {
            self = self.equality(PointTerm::new(
                format!("x{}(t{index})", component + 1),
                FixedState { index, component, value },
            ));
        }
        self
    }

    pub fn equality_values(&self, p: &IntermediatePoints) -> Vector {
        Vector::from_iterator(self.equalities.len(), self.equalities.iter().map(|c| c.value(p)))
    }

    pub fn inequality_values(&self, p: &IntermediatePoints) -> Vector {
        Vector::from_iterator(self.inequalities.len(), self.inequalities.iter().map(|c| c.value(p)))
    }
}

/// Lower/upper bounds `E1_k ≤ x⁰(t_k) ≤ E2_k` on the accumulated active time.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityWindows {
    pub bounds: Vec<(f64, f64)>,
}

impl SparsityWindows {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self { bounds }
    }

    /// `(0, horizon)` on every interval: never binding.
    pub fn inactive(nu: usize, horizon: f64) -> Self {
        Self { bounds: vec![(0.0, horizon); nu] }
    }
}

/// Appends `x⁰(t_0) = 0` to the equalities and one window inequality per
/// interval, in that order.
pub fn augment_problem(
    sys: &dyn ControlSystem,
    windows: &SparsityWindows,
    raw: IntermediateSpec,
) -> Result<IntermediateSpec, ProblemError> {
    let _ = sys;
    if raw.nu == 0 {
        return Err(ProblemError::NoIntervals);
    }
    if windows.bounds.len() != raw.nu {
        return Err(ProblemError::WindowCount { expected: raw.nu, got: windows.bounds.len() });
    }
    let mut spec = raw;
    spec.equalities.push(PointTerm::new("x0(t0)", SparseStart));
    for (k, &(lo, hi)) in windows.bounds.iter().enumerate() {
        if lo > hi {
            return Err(ProblemError::WindowOrder { index: k + 1, lo, hi });
        }
        spec.inequalities.push(PointTerm::new(
            format!("window{}", k + 1),
            SparsityWindowConstraint { index: k + 1, lo, hi },
        ));
    }
    Ok(spec)
}

/// `1(u)`: one when any component is nonzero, compared exactly.
pub fn sparse_state_rhs(u: &[f64]) -> f64 {
    if u.iter().any(|v| *v != 0.0) {
        1.0
    } else {
        0.0
    }
}

/// How control activity is measured in the cost and in `ẋ⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityMeasure {
    /// `1(u)`, the indicator of the whole control vector.
    #[default]
    Joint,
    /// `Σ_i 1(u_i)`, each channel's active time counted separately.
    PerChannel,
}

impl ActivityMeasure {
    pub fn eval(self, u: &[f64]) -> f64 {
        match self {
            Self::Joint => sparse_state_rhs(u),
            Self::PerChannel => u.iter().filter(|v| **v != 0.0).count() as f64,
        }
    }
}

/// Smooth running cost added to the sparsity term.
pub trait RunningCost: Send + Sync {
    fn value(&self, u: &[f64]) -> f64;
}

/// `w₁ Σ ũ_i + (w₂/2) Σ ũ_i²` with `ũ_i = (u_i − a_i)/(b_i − a_i)`, where
/// `a_i` is the low-effort end of the channel and `b_i` the other end.
#[derive(Debug, Clone)]
pub struct NormalizedEffortCost {
    pub l1_weight: f64,
    pub l2_weight: f64,
    pub low_effort: Vector,
    pub high_effort: Vector,
}

impl NormalizedEffortCost {
    pub fn normalized(&self, u: &[f64]) -> Vector {
        Vector::from_iterator(
            u.len(),
            u.iter().enumerate().map(|(i, v)| (v - self.low_effort[i]) / (self.high_effort[i] - self.low_effort[i])),
        )
    }
}

impl RunningCost for NormalizedEffortCost {
    fn value(&self, u: &[f64]) -> f64 {
        let n = self.normalized(u);
        self.l1_weight * n.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * self.l2_weight * n.norm_squared()
    }
}

/// `J = λ ∫ activity(u) + ∫ L(u) + ℓ(γ)`.
#[derive(Clone)]
pub struct ObjectiveSpec {
    pub lambda: f64,
    pub endpoint_cost: Option<PointTerm>,
    pub running_cost: Option<Arc<dyn RunningCost>>,
}

impl ObjectiveSpec {
    pub fn sparsity(lambda: f64) -> Self {
        Self { lambda, endpoint_cost: None, running_cost: None }
    }

    pub fn with_endpoint_cost(mut self, term: PointTerm) -> Self {
        self.endpoint_cost = Some(term);
        self
    }

    pub fn with_running_cost(mut self, cost: impl RunningCost + 'static) -> Self {
        self.running_cost = Some(Arc::new(cost));
        self
    }

    pub fn endpoint_value(&self, p: &IntermediatePoints) -> f64 {
        self.endpoint_cost.as_ref().map_or(0.0, |c| c.value(p))
    }

    pub fn running_value(&self, u: &[f64]) -> f64 {
        self.running_cost.as_ref().map_or(0.0, |c| c.value(u))
    }
}

impl fmt::Debug for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveSpec")
            .field("lambda", &self.lambda)
            .field("endpoint_cost", &self.endpoint_cost)
            .field("running_cost", &self.running_cost.is_some())
            .finish()
    }
}

/// How the pointwise Hamiltonian maximizer is searched.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateRule {
    /// Compare the value at `u = 0` with the facet maximizer of `⟨Gᵀp, u⟩`.
    /// Requires control-affine dynamics, a box `U` and no running cost.
    AffineBangOffBang,
    /// Tensor grid over the box plus the exact zero.
    Grid { points_per_axis: usize },
    /// Per-axis grid for Hamiltonians that separate across channels, with an
    /// optional golden-section polish around the best grid point.
    SeparableGrid { points_per_axis: usize, refine: bool },
}

impl Default for CandidateRule {
    fn default() -> Self {
        Self::Grid { points_per_axis: 201 }
    }
}

/// A complete problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub system: Arc<dyn ControlSystem>,
    pub admissible: AdmissibleSet,
    /// Constraints after augmentation.
    pub constraints: IntermediateSpec,
    pub windows: SparsityWindows,
    pub objective: ObjectiveSpec,
    pub activity: ActivityMeasure,
    pub candidate_rule: CandidateRule,
    /// Equality and inequality counts before augmentation (`q`, `m`).
    pub raw_counts: (usize, usize),
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("d", &self.dim_state())
            .field("r", &self.dim_control())
            .field("nu", &self.nu())
            .field("raw_counts", &self.raw_counts)
            .finish()
    }
}

impl ProblemSpec {
    /// Builds and augments a problem. The candidate rule defaults to the
    /// analytic bang-off-bang comparison when it applies, else a tensor grid.
    pub fn new(
        name: impl Into<String>,
        system: Arc<dyn ControlSystem>,
        admissible: AdmissibleSet,
        raw: IntermediateSpec,
        windows: SparsityWindows,
        objective: ObjectiveSpec,
    ) -> Result<Self, ProblemError> {
        admissible.validate(system.dim_control())?;
        if !(objective.lambda > 0.0) {
            return Err(ProblemError::Lambda(objective.lambda));
        }
        let raw_counts = (raw.equalities.len(), raw.inequalities.len());
        let constraints = augment_problem(system.as_ref(), &windows, raw)?;
        let affine = system.control_gain(0.0, &vec![0.0; system.dim_state()]).is_some()
            && matches!(admissible, AdmissibleSet::Box { .. })
            && objective.running_cost.is_none();
        let candidate_rule = if affine { CandidateRule::AffineBangOffBang } else { CandidateRule::default() };
        Ok(Self {
            name: name.into(),
            system,
            admissible,
            constraints,
            windows,
            objective,
            activity: ActivityMeasure::Joint,
            candidate_rule,
            raw_counts,
        })
    }

    pub fn with_activity(mut self, activity: ActivityMeasure) -> Self {
        self.activity = activity;
        self
    }

    pub fn with_candidate_rule(mut self, rule: CandidateRule) -> Self {
        self.candidate_rule = rule;
        self
    }

    pub fn dim_state(&self) -> usize {
        self.system.dim_state()
    }

    pub fn dim_control(&self) -> usize {
        self.system.dim_control()
    }

    pub fn nu(&self) -> usize {
        self.constraints.nu
    }

    /// `q + 1`.
    pub fn n_equalities(&self) -> usize {
        self.constraints.equalities.len()
    }

    /// `m + ν`.
    pub fn n_inequalities(&self) -> usize {
        self.constraints.inequalities.len()
    }

    /// Every user-facing point term: equalities, inequalities and the endpoint cost.
    pub fn point_terms(&self) -> impl Iterator<Item = &PointTerm> {
        self.constraints
            .equalities
            .iter()
            .chain(self.constraints.inequalities.iter())
            .chain(self.objective.endpoint_cost.iter())
    }
}

/// A sampled process `π = (x̄(·), u(·), γ)` on `[t_0, t_ν]`.
///
/// Each interval carries its own node list; consecutive intervals share the
/// instant `t_k` as their boundary node. Controls are piecewise constant,
/// one value per segment between consecutive nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub intervals: Vec<ProcessInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessInterval {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
}

impl Process {
    pub fn instants(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.intervals.iter().map(|iv| iv.times[0]).collect();
        if let Some(last) = self.intervals.last() {
            out.push(*last.times.last().unwrap());
        }
        out
    }

    pub fn points(&self) -> IntermediatePoints {
        let mut times = Vec::new();
        let mut states = Vec::new();
        for iv in &self.intervals {
            times.push(iv.times[0]);
            states.push(iv.states[0].clone());
        }
        let last = self.intervals.last().expect("process has no intervals");
        times.push(*last.times.last().unwrap());
        states.push(last.states.last().unwrap().clone());
        IntermediatePoints { times, states }
    }

    /// `λ ∫ activity(u) + ∫ L(u) + ℓ(γ)`, integrating exactly per segment.
    pub fn cost(&self, problem: &ProblemSpec) -> f64 {
        let mut running = 0.0;
        for iv in &self.intervals {
            for (j, u) in iv.controls.iter().enumerate() {
                let dt = iv.times[j + 1] - iv.times[j];
                running += dt
                    * (problem.objective.lambda * problem.activity.eval(u.as_slice())
                        + problem.objective.running_value(u.as_slice()));
            }
        }
        running + problem.objective.endpoint_value(&self.points())
    }

    /// Integrates the augmented dynamics under a piecewise-constant control.
    /// `substeps` RK4 steps are taken per segment; `x⁰` is integrated exactly.
    pub fn simulate(
        problem: &ProblemSpec,
        instants: &[f64],
        nodes_per_interval: usize,
        x_start: &[f64],
        control: impl Fn(usize, f64) -> Vector,
        substeps: usize,
    ) -> Self {
        let mut intervals = Vec::with_capacity(instants.len() - 1);
        let mut state = Vector::zeros(x_start.len() + 1);
        state.rows_mut(1, x_start.len()).copy_from_slice(x_start);
        for k in 0..instants.len() - 1 {
            let (a, b) = (instants[k], instants[k + 1]);
            let n = nodes_per_interval.max(2);
            let times: Vec<f64> =
                (0..n).map(|j| if j == n - 1 { b } else { a + (b - a) * j as f64 / (n - 1) as f64 }).collect();
            let mut states = vec![state.clone()];
            let mut controls = Vec::with_capacity(n - 1);
            for j in 0..n - 1 {
                let u = control(k, times[j]);
                state = segment_flow(problem, &state, times[j], times[j + 1], &u, substeps);
                states.push(state.clone());
                controls.push(u);
            }
            intervals.push(ProcessInterval { times, states, controls });
        }
        Self { intervals }
    }
}

/// Flow of the augmented dynamics over one segment with a frozen control.
pub fn segment_flow(problem: &ProblemSpec, start: &Vector, t0: f64, t1: f64, u: &Vector, substeps: usize) -> Vector {
    let sys = problem.system.as_ref();
    let d = sys.dim_state();
    let active = problem.activity.eval(u.as_slice());
    let mut x = start.rows(1, d).into_owned();
    let n = substeps.max(1);
    let h = (t1 - t0) / n as f64;
    for i in 0..n {
        let t = t0 + h * i as f64;
        let k1 = sys.rhs(t, x.as_slice(), u.as_slice());
        let k2 = sys.rhs(t + 0.5 * h, (&x + &k1 * (0.5 * h)).as_slice(), u.as_slice());
        let k3 = sys.rhs(t + 0.5 * h, (&x + &k2 * (0.5 * h)).as_slice(), u.as_slice());
        let k4 = sys.rhs(t + h, (&x + &k3 * h).as_slice(), u.as_slice());
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let mut out = Vector::zeros(d + 1);
    out[0] = start[0] + active * (t1 - t0);
    out.rows_mut(1, d).copy_from(&x);
    out
}

/// One violated condition found by [`check_feasible`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Malformed { reason: String },
    Dynamics { interval: usize, segment: usize, residual: f64 },
    Equality { index: usize, name: String, value: f64 },
    Inequality { index: usize, name: String, value: f64 },
    ControlBound { interval: usize, segment: usize },
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks dynamics, constraints and control bounds of a sampled process.
pub fn check_feasible(problem: &ProblemSpec, process: &Process, tol: f64) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    let aug = problem.dim_state() + 1;
    if process.intervals.len() != problem.nu() {
        report.violations.push(Violation::Malformed {
            reason: format!("expected {} intervals, found {}", problem.nu(), process.intervals.len()),
        });
        return report;
    }
    for (k, iv) in process.intervals.iter().enumerate() {
        if iv.times.len() < 2 {
            report.violations.push(Violation::Malformed { reason: format!("interval {} has fewer than 2 nodes", k + 1) });
        } else if iv.states.len() != iv.times.len() || iv.controls.len() + 1 != iv.times.len() {
            report.violations.push(Violation::Malformed { reason: format!("interval {} has inconsistent lengths", k + 1) });
        } else if iv.times.windows(2).any(|w| !(w[1] >= w[0])) || iv.states.iter().any(|s| s.len() != aug) {
            report.violations.push(Violation::Malformed {
                reason: format!("interval {} has decreasing times or wrong state size", k + 1),
            });
        }
    }
    if !report.violations.is_empty() {
        return report;
    }
    for (k, iv) in process.intervals.iter().enumerate() {
        for (j, u) in iv.controls.iter().enumerate() {
            if !problem.admissible.contains(u.as_slice(), tol) {
                report.violations.push(Violation::ControlBound { interval: k + 1, segment: j });
            }
            let predicted = segment_flow(problem, &iv.states[j], iv.times[j], iv.times[j + 1], u, 4);
            let residual = (predicted - &iv.states[j + 1]).amax();
            if residual > tol {
                report.violations.push(Violation::Dynamics { interval: k + 1, segment: j, residual });
            }
        }
    }
    let points = process.points();
    for (i, c) in problem.constraints.equalities.iter().enumerate() {
        let value = c.value(&points);
        if value.abs() > tol {
            report.violations.push(Violation::Equality { index: i, name: c.name.clone(), value });
        }
    }
    for (i, c) in problem.constraints.inequalities.iter().enumerate() {
        let value = c.value(&points);
        if value > tol {
            report.violations.push(Violation::Inequality { index: i, name: c.name.clone(), value });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn oscillator() -> Arc<dyn ControlSystem> {
        Arc::new(LinearSystem::new(dmatrix![0.0, 1.0; -1.0, 0.0], dmatrix![0.0; 1.0]))
    }

    fn points(x0: &[f64]) -> IntermediatePoints {
        let nu = x0.len();
        let times = (0..=nu).map(|k| k as f64).collect();
        let mut states = vec![Vector::zeros(3)];
        for &s in x0 {
            states.push(Vector::from_vec(vec![s, 0.0, 0.0]));
        }
        IntermediatePoints { times, states }
    }

    #[test]
    fn augmentation_counts_and_midpoint_value() {
        let sys = oscillator();
        let t = 15.0;
        let spec = augment_problem(sys.as_ref(), &SparsityWindows::inactive(1, t), IntermediateSpec::new(1)).unwrap();
        assert_eq!(spec.equalities.len(), 1);
        assert_eq!(spec.inequalities.len(), 1);
        let g = spec.inequalities[0].value(&points(&[t / 2.0]));
        assert_abs_diff_eq!(g, -t * t / 4.0, epsilon = 1e-12);
        let lower = augment_problem(
            sys.as_ref(),
            &SparsityWindows::new(vec![(2.0, 6.0)]),
            IntermediateSpec::new(1),
        )
        .unwrap();
        assert_eq!(lower.inequalities[0].value(&points(&[2.0])), 0.0);
    }

    #[test]
    fn two_windows_values_and_gradients() {
        let sys = oscillator();
        let spec =
            augment_problem(sys.as_ref(), &SparsityWindows::new(vec![(1.0, 2.0), (3.0, 5.0)]), IntermediateSpec::new(2))
                .unwrap();
        let p = points(&[1.5, 4.0]);
        let g: Vec<f64> = spec.inequalities.iter().map(|c| c.value(&p)).collect();
        assert_eq!(g, vec![-0.25, -1.0]);
        let (g1, fd1) = spec.inequalities[0].gradient(&p);
        let (g2, fd2) = spec.inequalities[1].gradient(&p);
        assert!(!fd1 && !fd2);
        assert_eq!(g1.states[1][0], 0.0);
        assert_eq!(g2.states[2][0], 0.0);
        let (g1, _) = spec.inequalities[0].gradient(&points(&[2.0, 4.0]));
        assert_eq!(g1.states[1][0], 1.0);
    }

    #[test]
    fn window_count_mismatch_is_rejected() {
        let sys = oscillator();
        let err = augment_problem(sys.as_ref(), &SparsityWindows::inactive(1, 1.0), IntermediateSpec::new(2)).unwrap_err();
        assert_eq!(err, ProblemError::WindowCount { expected: 2, got: 1 });
    }

    #[test]
    fn indicator_is_exact() {
        assert_eq!(sparse_state_rhs(&[0.0, 0.0]), 0.0);
        assert_eq!(sparse_state_rhs(&[0.0, 1e-300]), 1.0);
        assert_eq!(sparse_state_rhs(&[-1.0, 0.0]), 1.0);
        assert_eq!(ActivityMeasure::PerChannel.eval(&[1.0, -1.0]), 2.0);
    }

    #[test]
    fn fd_fallback_matches_analytic() {
        let term = PointTerm::new("plain", FnPointFunction::new(|p| p.states[1][0] * p.times[1]));
        let p = points(&[3.0]);
        let (g, fallback) = term.gradient(&p);
        assert!(fallback);
        assert_abs_diff_eq!(g.states[1][0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g.times[1], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn box_validation() {
        assert_eq!(
            AdmissibleSet::new_box(Vector::from_vec(vec![1.0]), Vector::from_vec(vec![0.0])).unwrap_err(),
            ProblemError::BoxOrder { axis: 0 }
        );
        let b = AdmissibleSet::symmetric_box(2, 1.0);
        assert!(b.contains_zero());
        assert!(!b.contains(&[2.0, 0.0], 1e-9));
    }
}
