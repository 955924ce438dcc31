//! Named problem instances and small root-finding systems with known roots.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::integrator::{ControlTiming, IntegrationOptions};
use crate::pmp::{synthesize_control, AdjointState};
use crate::problem::{
    ActivityMeasure, AdmissibleSet, CandidateRule, ControlSystem, IntermediateSpec, LinearStateFunction, LinearSystem,
    NormalizedEffortCost, ObjectiveSpec, PointTerm, ProblemSpec, SparsityWindows,
};
use crate::shooting::{propagate_guess, ShootingLayout, ShootingOptions, ShootingParams};
use crate::solver::{PhiSign, RootProblem, SaDirection, SolverConfig};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Value reported for the original example.
    Published,
    /// Data not available in the original example and chosen here.
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Reference {
    pub quantity: &'static str,
    pub value: &'static str,
    pub source: ReferenceSource,
}

#[derive(Debug, Clone)]
pub struct BenchmarkInstance {
    pub name: &'static str,
    pub problem: ProblemSpec,
    pub config: SolverConfig,
    pub shooting: ShootingOptions,
    pub initial_guess: Vector,
    pub references: Vec<Reference>,
}

impl BenchmarkInstance {
    pub fn layout(&self) -> ShootingLayout {
        ShootingLayout::new(&self.problem, self.shooting.segments_per_interval).expect("benchmark layout")
    }
}

fn published(quantity: &'static str, value: &'static str) -> Reference {
    Reference { quantity, value, source: ReferenceSource::Published }
}

fn reconstruction(quantity: &'static str, value: &'static str) -> Reference {
    Reference { quantity, value, source: ReferenceSource::Reconstruction }
}

fn oscillator() -> Arc<LinearSystem> {
    Arc::new(LinearSystem::new(Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), Matrix::from_row_slice(2, 1, &[0.0, 1.0])))
}

/// Preconditioned stochastic phase with the `c/(1 + k^{1/5})` schedule.
pub fn default_config() -> SolverConfig {
    SolverConfig { direction: SaDirection::Preconditioned { refresh: 50 }, ..SolverConfig::default() }
}

/// Harmonic oscillator steered from `(4, −3)` to the origin in 15 s.
pub fn build_s1() -> BenchmarkInstance {
    let horizon = 15.0;
    let raw = IntermediateSpec::new(1)
        .fix_time(0, 0.0)
        .fix_time(1, horizon)
        .fix_state(0, &[4.0, -3.0])
        .fix_state(1, &[0.0, 0.0]);
    let problem = ProblemSpec::new(
        "s1",
        oscillator(),
        AdmissibleSet::symmetric_box(1, 1.0),
        raw,
        SparsityWindows::inactive(1, horizon),
        ObjectiveSpec::sparsity(1.0),
    )
    .expect("s1 is well formed");
    let shooting = ShootingOptions::default();
    let layout = ShootingLayout::new(&problem, 1).unwrap();
    let mut guess = ShootingParams::unpack(&layout, &vec![0.0; layout.dim()]).unwrap();
    guess.times = vec![0.0, horizon];
    guess.states[0] = Vector::from_vec(vec![0.0, 4.0, -3.0]);
    // Active half of the horizon, slack consistent with the window row.
    guess.states[1] = Vector::from_vec(vec![0.5 * horizon, 0.0, 0.0]);
    guess.slack[0] = 0.5 * horizon;
    // α order: t_0, t_1, x(t_0), x(t_1), x⁰(t_0).
    guess.alpha[2] = -1.5;
    guess.alpha[3] = 1.0;
    BenchmarkInstance {
        name: "s1",
        problem,
        config: default_config(),
        shooting,
        initial_guess: guess.pack(),
        references: vec![
            published("control period", "2π s"),
            published("origin reached", "t ≈ 14 s, then stays"),
            published("stochastic iterations to ‖Φ‖ ≤ 0.1", "≈350 (root), ≈500 (power), ≈4000 (rational)"),
        ],
    }
}

/// The oscillator split at `t_1 = 7.5` with the active-time window `[2, 6]`
/// on the first interval.
pub fn build_s1_windowed() -> BenchmarkInstance {
    let horizon = 15.0;
    let mid = 7.5;
    let raw = IntermediateSpec::new(2)
        .fix_time(0, 0.0)
        .fix_time(1, mid)
        .fix_time(2, horizon)
        .fix_state(0, &[4.0, -3.0])
        .fix_state(2, &[0.0, 0.0]);
    let problem = ProblemSpec::new(
        "s1-windowed",
        oscillator(),
        AdmissibleSet::symmetric_box(1, 1.0),
        raw,
        SparsityWindows::new(vec![(2.0, 6.0), (0.0, horizon)]),
        ObjectiveSpec::sparsity(1.0),
    )
    .expect("s1-windowed is well formed");
    let shooting = ShootingOptions::default();
    let layout = ShootingLayout::new(&problem, 1).unwrap();
    let mut guess = ShootingParams::unpack(&layout, &vec![0.0; layout.dim()]).unwrap();
    guess.times = vec![0.0, mid, horizon];
    guess.states[0] = Vector::from_vec(vec![0.0, 4.0, -3.0]);
    guess.states[1] = Vector::from_vec(vec![3.0, 0.0, 0.0]);
    guess.states[2] = Vector::from_vec(vec![7.0, 0.0, 0.0]);
    // α order: t_0, t_1, t_2, x(t_0), x(t_2), x⁰(t_0).
    guess.alpha[3] = -1.5;
    guess.alpha[4] = 1.0;
    guess.slack[0] = 1.0;
    guess.slack[1] = 7.0;
    BenchmarkInstance {
        name: "s1-windowed",
        problem,
        config: default_config(),
        shooting,
        initial_guess: guess.pack(),
        references: vec![reconstruction("window", "x⁰(7.5) ∈ [2, 6]")],
    }
}

pub const S2_AGENTS: usize = 24;
pub const S2_GROUP_LEVELS: [f64; 3] = [0.6, 0.65, 0.75];
pub const S2_SEED: u64 = 7;
const S2_SWITCH_TIME: f64 = 2.0;
const S2_HORIZON: f64 = 4.0;

/// Graph Laplacian of the circulant graph joining `i` to `i ± 1` and `i + 12`.
pub fn s2_laplacian() -> Matrix {
    let n = S2_AGENTS;
    let mut lap = Matrix::identity(n, n) * 3.0;
    for i in 0..n {
        for offset in [1, n - 1, n / 2] {
            lap[(i, (i + offset) % n)] -= 1.0;
        }
    }
    lap
}

/// Agents `8g..8g + 8` form group `g`.
pub fn s2_group(agent: usize) -> usize {
    agent / (S2_AGENTS / 3)
}

/// Channel 1 reaches groups 1 and 2 (agent 16 adversely), channel 2 groups
/// 0 and 1.
pub fn s2_influence() -> Matrix {
    let mut b = Matrix::zeros(S2_AGENTS, 2);
    for i in 0..S2_AGENTS {
        let g = s2_group(i);
        if g >= 1 {
            b[(i, 0)] = 1.0;
        }
        if g <= 1 {
            b[(i, 1)] = 1.0;
        }
    }
    b[(16, 0)] = -1.0;
    b
}

/// Initial opinions, uniform in `]−1, 1[`.
pub fn s2_initial_opinions(seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_iterator(S2_AGENTS, (0..S2_AGENTS).map(|_| rng.gen_range(-1.0..1.0)))
}

fn s2_group_weights(g: usize) -> Vector {
    let size = (S2_AGENTS / 3) as f64;
    Vector::from_iterator(S2_AGENTS, (0..S2_AGENTS).map(|i| if s2_group(i) == g { 1.0 / size } else { 0.0 }))
}

/// Opinion dynamics on a 3-regular graph, two influence channels, group
/// mean levels prescribed at `t_1 = 2` and a weighted terminal reward.
pub fn build_s2() -> BenchmarkInstance {
    let n = S2_AGENTS;
    let lap = s2_laplacian();
    let x0 = s2_initial_opinions(S2_SEED);
    let reward = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut raw = IntermediateSpec::new(2)
        .fix_time(0, 0.0)
        .fix_time(1, S2_SWITCH_TIME)
        .fix_time(2, S2_HORIZON)
        .fix_state(0, x0.as_slice());
    for (g, level) in S2_GROUP_LEVELS.iter().enumerate() {
        raw = raw.equality(PointTerm::new(
            format!("group{}(t1)", g + 1),
            LinearStateFunction { index: 1, weights: s2_group_weights(g), offset: -level },
        ));
    }
    let endpoint = PointTerm::new("reward", LinearStateFunction { index: 2, weights: -&reward, offset: 0.0 });
    let problem = ProblemSpec::new(
        "s2",
        Arc::new(LinearSystem::new(-&lap, s2_influence())),
        AdmissibleSet::symmetric_box(2, 1.0),
        raw,
        SparsityWindows::inactive(2, 2.0 * S2_HORIZON),
        ObjectiveSpec::sparsity(1.0).with_endpoint_cost(endpoint),
    )
    .expect("s2 is well formed")
    .with_activity(ActivityMeasure::PerChannel);
    let shooting = ShootingOptions {
        integration: IntegrationOptions { nodes_per_interval: 200, ..IntegrationOptions::default() },
        // The costate grows like `e^{6t}` along the fastest graph mode.
        segments_per_interval: 2,
    };
    let layout = ShootingLayout::new(&problem, shooting.segments_per_interval).unwrap();
    let mut guess = ShootingParams::unpack(&layout, &vec![0.0; layout.dim()]).unwrap();
    guess.times = vec![0.0, S2_SWITCH_TIME, S2_HORIZON];
    let mut start = Vector::zeros(n + 1);
    start.rows_mut(1, n).copy_from(&x0);
    guess.states[0] = start;
    // Group multipliers from a coarse scan; the costate is consistent with them.
    let group_alpha = [-2.5, 9.3, -5.4];
    let mut before_jump = reward.clone();
    for (g, a) in group_alpha.iter().enumerate() {
        before_jump -= s2_group_weights(g) * *a;
    }
    let start_costate = (-&lap * S2_SWITCH_TIME).exp() * before_jump;
    guess.alpha.rows_mut(3, n).copy_from(&start_costate);
    for (g, a) in group_alpha.iter().enumerate() {
        guess.alpha[3 + n + g] = *a;
    }
    let guess = propagate_guess(&problem, &guess, &shooting).expect("s2 guess integrates");
    BenchmarkInstance {
        name: "s2",
        problem,
        config: default_config(),
        shooting,
        initial_guess: guess.pack(),
        references: vec![
            published("intermediate levels", "0.6, 0.65, 0.75 at t = 2 s"),
            published("control pattern", "bang-off-bang, each channel off for part of its activation"),
            reconstruction("graph", "circulant, offsets ±1 and 12"),
            reconstruction("influence matrix", "two groups per channel, agent 16 adverse on channel 1"),
            reconstruction("reward weights", "𝟙/√24"),
            reconstruction("activity measure", "per channel"),
        ],
    }
}

pub const GRAVITY: f64 = 9.81;

/// Point-mass longitudinal model of a landing approach.
///
/// State `(V, H, X)`: speed in m/s, altitude in m and remaining distance to
/// the runway in km. Control `(T, γ)`: thrust in N and flight path angle in
/// rad.
#[derive(Debug, Clone, PartialEq)]
pub struct LandingApproach {
    pub weight: f64,
    pub air_density: f64,
    pub wing_area: f64,
    pub zero_lift_drag: f64,
    pub induced_drag: f64,
    pub lift_coefficient: f64,
}

impl Default for LandingApproach {
    fn default() -> Self {
        Self {
            weight: 7180.0,
            air_density: 1.22625,
            wing_area: 18.2,
            zero_lift_drag: 0.198681,
            induced_drag: 0.114738,
            lift_coefficient: 0.5,
        }
    }
}

impl LandingApproach {
    pub fn mass(&self) -> f64 {
        self.weight / GRAVITY
    }

    /// Drag divided by `V²`.
    pub fn drag_factor(&self) -> f64 {
        0.5 * self.air_density
            * self.wing_area
            * (self.zero_lift_drag + self.induced_drag * self.lift_coefficient * self.lift_coefficient)
    }

    pub fn drag(&self, speed: f64) -> f64 {
        self.drag_factor() * speed * speed
    }
}

impl ControlSystem for LandingApproach {
    fn dim_state(&self) -> usize {
        3
    }

    fn dim_control(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, x: &[f64], u: &[f64]) -> Vector {
        let (v, thrust, gamma) = (x[0], u[0], u[1]);
        Vector::from_vec(vec![
            (thrust - self.drag(v)) / self.mass() - GRAVITY * gamma.sin(),
            v * gamma.sin(),
            -v * gamma.cos() / 1000.0,
        ])
    }

    fn jac_state(&self, _t: f64, x: &[f64], u: &[f64]) -> Matrix {
        let (v, gamma) = (x[0], u[1]);
        let mut j = Matrix::zeros(3, 3);
        j[(0, 0)] = -2.0 * self.drag_factor() * v / self.mass();
        j[(1, 0)] = gamma.sin();
        j[(2, 0)] = -gamma.cos() / 1000.0;
        j
    }
}

/// Frames `(V, H, X)` at `t_0..t_3`.
pub const S3_FRAMES: [[f64; 3]; 4] = [[124.0, 1197.0, 15.0], [110.0, 750.0, 10.0], [100.0, 350.0, 5.0], [90.0, 0.0, 0.0]];
pub const S3_THRUST_BOUNDS: (f64, f64) = (300.0 * GRAVITY, 3420.0 * GRAVITY);
pub const S3_PATH_ANGLE_BOUNDS: (f64, f64) = (-6.0 * PI / 180.0, -3.0 * PI / 180.0);

/// Landing approach through four frames with free passage times.
pub fn build_s3() -> BenchmarkInstance {
    let plane = LandingApproach::default();
    let (t_lo, t_hi) = S3_THRUST_BOUNDS;
    let (g_lo, g_hi) = S3_PATH_ANGLE_BOUNDS;
    let mut raw = IntermediateSpec::new(3).fix_time(0, 0.0);
    for (k, frame) in S3_FRAMES.iter().enumerate() {
        raw = raw.fix_state(k, frame);
    }
    // Idle thrust and the shallow angle cost nothing.
    let effort = NormalizedEffortCost {
        l1_weight: 1.0,
        l2_weight: 1.0,
        low_effort: Vector::from_vec(vec![t_lo, g_hi]),
        high_effort: Vector::from_vec(vec![t_hi, g_lo]),
    };
    let problem = ProblemSpec::new(
        "s3",
        Arc::new(plane.clone()),
        AdmissibleSet::new_box(Vector::from_vec(vec![t_lo, g_lo]), Vector::from_vec(vec![t_hi, g_hi])).unwrap(),
        raw,
        SparsityWindows::inactive(3, 1000.0),
        ObjectiveSpec::sparsity(1.0).with_running_cost(effort),
    )
    .expect("s3 is well formed")
    .with_candidate_rule(CandidateRule::SeparableGrid { points_per_axis: 11, refine: true });
    let shooting = ShootingOptions {
        integration: IntegrationOptions {
            nodes_per_interval: 300,
            timing: ControlTiming::FrozenPerStep,
            ..IntegrationOptions::default()
        },
        // The speed costate grows like `e^{0.7 t}`.
        segments_per_interval: 10,
    };
    let initial_guess = s3_guess(&problem, &plane, &shooting);
    // The stochastic phase wanders on this landscape; damped Newton from the
    // quasi-steady guess converges in about 25 steps.
    let config = SolverConfig { switch_radius: 100.0, noise_scale: 1e-3, ..default_config() };
    BenchmarkInstance {
        name: "s3",
        problem,
        config,
        shooting,
        initial_guess,
        references: vec![
            published("passage times", "t1 = 57.8 s, t2 = 121.5 s, t3 = 188 s"),
            published("descent rate", "4.23 to 11.5 m/s"),
            reconstruction("lift coefficient", "0.5, held fixed"),
            reconstruction("effort weights", "1 and 1 on controls scaled to [0, 1]"),
            reconstruction("distance axis", "remaining distance, decreasing"),
        ],
    }
}

/// Quasi-steady guess: on each leg the speed sits at the equilibrium of the
/// synthesized control and the speed costate at its own equilibrium, with
/// constant altitude and distance costates from a coarse scan.
fn s3_guess(problem: &ProblemSpec, plane: &LandingApproach, shooting: &ShootingOptions) -> Vector {
    let times = [0.0, 49.0, 101.0, 157.0];
    let leg_costates = [(-0.32, -0.95), (-0.30, -2.4), (-0.28, -3.9)];
    let layout = ShootingLayout::new(problem, shooting.segments_per_interval).unwrap();
    let mut guess = ShootingParams::unpack(&layout, &vec![0.0; layout.dim()]).unwrap();
    guess.times = times.to_vec();
    for (k, frame) in S3_FRAMES.iter().enumerate() {
        guess.states[k] = Vector::from_vec(vec![times[k], frame[0], frame[1], frame[2]]);
    }
    let rate = 2.0 * plane.drag_factor() / plane.mass();
    let mut previous = Vector::zeros(3);
    for (k, &(p_alt, p_dist)) in leg_costates.iter().enumerate() {
        let (a, b) = (&S3_FRAMES[k], &S3_FRAMES[k + 1]);
        let mut speed = 0.5 * (a[0] + b[0]);
        let mut costate = AdjointState { sparse: 0.0, main: Vector::from_vec(vec![0.0, p_alt, p_dist]), time: 0.0 };
        for _ in 0..50 {
            let state = [0.0, speed, 0.0, 0.0];
            let u = synthesize_control(problem, &costate, 0.0, &state, 1.0);
            let gamma = u[1];
            costate.main[0] = (p_alt * gamma.sin() - p_dist * gamma.cos() / 1000.0) / (rate * speed);
            speed = ((u[0] - plane.weight * gamma.sin()) / plane.drag_factor()).sqrt();
        }
        let p = costate.main.clone();
        // Slot of x(t_k): after t_0 and the preceding frames.
        guess.alpha.rows_mut(1 + 3 * k, 3).copy_from(&(&p - &previous));
        previous = p;
        for j in 1..layout.segments {
            let s = j as f64 / layout.segments as f64;
            let t = times[k] + s * (times[k + 1] - times[k]);
            let mut node = vec![t, speed, a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])];
            node.extend(costate.to_vector().iter());
            guess.nodes[k][j - 1] = Vector::from_vec(node);
        }
    }
    guess.alpha.rows_mut(1 + 3 * 3, 3).copy_from(&(-previous));
    let g = problem.constraints.inequality_values(&guess.points());
    guess.slack = g.map(|v| (-v).max(0.0).sqrt());
    guess.pack()
}

/// Square system with a known root.
#[derive(Clone)]
pub struct ToyRoot {
    pub name: &'static str,
    pub root: Vector,
    pub start: Vector,
    pub config: SolverConfig,
    f: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl std::fmt::Debug for ToyRoot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyRoot").field("name", &self.name).field("root", &self.root).finish()
    }
}

impl RootProblem for ToyRoot {
    fn dim(&self) -> usize {
        self.root.len()
    }

    fn residual(&self, z: &Vector) -> Result<Vector, String> {
        Ok((self.f)(z))
    }
}

fn toy_config() -> SolverConfig {
    SolverConfig {
        eps: 1e-12,
        switch_radius: 0.5,
        direction: SaDirection::Verbatim { sign: PhiSign::Minus },
        schedule: crate::solver::StepSchedule::Root { c: 0.1, a: 0.2 },
        noise_scale: 0.05,
        ..SolverConfig::default()
    }
}

/// Orthogonal matrix from a product of plane rotations.
fn rotation(n: usize, seed_angle: f64) -> Matrix {
    let mut q = Matrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let a = seed_angle * (1 + i + 2 * j) as f64;
            let (c, s) = (a.cos(), a.sin());
            let mut g = Matrix::identity(n, n);
            g[(i, i)] = c;
            g[(j, j)] = c;
            g[(i, j)] = -s;
            g[(j, i)] = s;
            q = g * q;
        }
    }
    q
}

/// `U diag(1, …, 1e−6) Vᵀ` with orthogonal `U`, `V`.
pub fn conditioned_matrix(n: usize, condition: f64) -> Matrix {
    let u = rotation(n, 0.37);
    let v = rotation(n, 0.61);
    let sv = Vector::from_iterator(n, (0..n).map(|i| condition.powf(-(i as f64) / (n - 1) as f64)));
    u * Matrix::from_diagonal(&sv) * v.transpose()
}

pub fn build_toy_roots() -> Vec<ToyRoot> {
    let affine_matrix = conditioned_matrix(4, 1e6);
    let affine_root = Vector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
    let affine_rhs = &affine_matrix * &affine_root;
    vec![
        ToyRoot {
            name: "toy-quadratic",
            root: Vector::from_vec(vec![2.0]),
            start: Vector::from_vec(vec![3.0]),
            config: toy_config(),
            f: Arc::new(|z| Vector::from_vec(vec![z[0] * z[0] - 4.0])),
        },
        ToyRoot {
            name: "toy-cubic",
            root: Vector::from_vec(vec![1.0, 1.0]),
            start: Vector::from_vec(vec![3.0, 2.0]),
            config: toy_config(),
            f: Arc::new(|z| Vector::from_vec(vec![z[0] - 1.0, z[1].powi(3) - 1.0])),
        },
        ToyRoot {
            name: "toy-trig",
            root: Vector::from_vec(vec![0.5, 0.5f64.cos(), 1.0]),
            start: Vector::from_vec(vec![1.2, 0.0, 2.0]),
            config: toy_config(),
            f: Arc::new(|z| {
                Vector::from_vec(vec![z[0].sin() - 0.5f64.sin(), z[1] - z[0].cos(), z[2].powi(3) + z[2] - 2.0])
            }),
        },
        ToyRoot {
            name: "toy-ring",
            root: Vector::from_element(6, 1.0),
            start: Vector::from_element(6, 2.5),
            config: toy_config(),
            f: Arc::new(|z| {
                let n = z.len();
                Vector::from_iterator(n, (0..n).map(|i| z[i] * z[i] + z[i] - 2.0 + 0.1 * (z[(i + 1) % n] - 1.0)))
            }),
        },
        ToyRoot {
            name: "toy-affine",
            root: affine_root,
            start: Vector::zeros(4),
            // Newton from the start: one step lands on the root.
            config: SolverConfig { switch_radius: 1e6, ..toy_config() },
            f: Arc::new(move |z| &affine_matrix * z - &affine_rhs),
        },
    ]
}

pub enum Benchmark {
    Control(Box<BenchmarkInstance>),
    Toy(ToyRoot),
}

pub const CONTROL_NAMES: [&str; 4] = ["s1", "s1-windowed", "s2", "s3"];

pub fn by_name(name: &str) -> Option<Benchmark> {
    let control = match name {
        "s1" => Some(build_s1()),
        "s1-windowed" => Some(build_s1_windowed()),
        "s2" => Some(build_s2()),
        "s3" => Some(build_s3()),
        _ => None,
    };
    if let Some(c) = control {
        return Some(Benchmark::Control(Box::new(c)));
    }
    build_toy_roots().into_iter().find(|t| t.name == name).map(Benchmark::Toy)
}

/// The period of the free oscillation.
pub const S1_PERIOD: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_roots_are_roots() {
        for t in build_toy_roots() {
            let r = t.residual(&t.root).unwrap();
            assert!(r.norm() < 1e-9, "{}: {}", t.name, r.norm());
        }
    }

    #[test]
    fn conditioned_matrix_has_requested_condition() {
        let sv = conditioned_matrix(4, 1e6).singular_values();
        let cond = sv.max() / sv.min();
        assert!((cond / 1e6 - 1.0).abs() < 1e-6, "{cond}");
    }

    #[test]
    fn oscillator_dimensions() {
        let s1 = build_s1();
        assert_eq!(s1.problem.dim_state(), 2);
        assert_eq!(s1.problem.dim_control(), 1);
        assert_eq!(s1.initial_guess.len(), s1.layout().dim());
    }
}
