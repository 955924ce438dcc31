//! JSON description of a linear-dynamics problem.
//!
//! ```json
//! {
//!   "name": "oscillator",
//!   "a": [[0, 1], [-1, 0]],
//!   "b": [[0], [1]],
//!   "control_lower": [-1], "control_upper": [1],
//!   "intervals": 1,
//!   "fixed_times": [{"instant": 0, "value": 0}, {"instant": 1, "value": 15}],
//!   "fixed_states": [{"instant": 0, "values": [4, -3]}, {"instant": 1, "values": [0, 0]}],
//!   "guess": {"times": [0, 15], "alpha": [0, 0, -1.5, 1, 0, 0, 0]}
//! }
//! ```
//!
//! Equality multipliers in `guess.alpha` follow the constraint order: fixed
//! times, fixed state components, linear equalities, then the start value of
//! the active-time state.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sparse_pmp::benchmarks::default_config;
use sparse_pmp::integrator::IntegrationOptions;
use sparse_pmp::problem::{
    ActivityMeasure, AdmissibleSet, IntermediateSpec, LinearStateFunction, LinearSystem, ObjectiveSpec, PointTerm,
    ProblemError, ProblemSpec, SparsityWindows,
};
use sparse_pmp::shooting::{propagate_guess, ShootingError, ShootingLayout, ShootingOptions, ShootingParams};
use sparse_pmp::{Matrix, Vector};

use crate::Instance;

#[derive(Debug, thiserror::Error)]
pub enum ProblemFileError {
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedTimeEntry {
    pub instant: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedStateEntry {
    pub instant: usize,
    pub values: Vec<f64>,
}

/// `⟨weights, x(t_instant)⟩ + offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearEntry {
    pub name: String,
    pub instant: usize,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    #[default]
    Joint,
    PerChannel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessEntry {
    pub times: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProblemFile {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub control_lower: Vec<f64>,
    pub control_upper: Vec<f64>,
    pub intervals: usize,
    #[serde(default)]
    pub fixed_times: Vec<FixedTimeEntry>,
    #[serde(default)]
    pub fixed_states: Vec<FixedStateEntry>,
    #[serde(default)]
    pub linear_equalities: Vec<LinearEntry>,
    /// Bounds on the accumulated active time at each `t_k`, `k ≥ 1`;
    /// defaults to `[0, t_ν − t_0]` for every instant.
    #[serde(default)]
    pub windows: Option<Vec<(f64, f64)>>,
    #[serde(default = "unit")]
    pub sparsity_weight: f64,
    #[serde(default)]
    pub activity: Activity,
    #[serde(default)]
    pub endpoint_cost: Option<LinearEntry>,
    pub guess: GuessEntry,
    #[serde(default = "default_nodes")]
    pub nodes_per_interval: usize,
    #[serde(default = "unit_count")]
    pub segments_per_interval: usize,
}

fn unit() -> f64 {
    1.0
}

fn unit_count() -> usize {
    1
}

fn default_nodes() -> usize {
    IntegrationOptions::default().nodes_per_interval
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix, ProblemFileError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(ProblemFileError::Shape(format!("{what} must be a nonempty rectangular matrix")));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl LinearProblemFile {
    pub fn build(&self) -> Result<Instance, ProblemFileError> {
        let a = matrix(&self.a, "a")?;
        let b = matrix(&self.b, "b")?;
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(ProblemFileError::Shape("a must be square with as many rows as b".into()));
        }
        let (d, r) = (a.nrows(), b.ncols());
        if self.control_lower.len() != r || self.control_upper.len() != r {
            return Err(ProblemFileError::Shape(format!("control bounds must have {r} entries")));
        }
        let nu = self.intervals;
        let bad_instant = |k: usize| k > nu;
        let mut raw = IntermediateSpec::new(nu);
        for e in &self.fixed_times {
            if bad_instant(e.instant) {
                return Err(ProblemFileError::Shape(format!("fixed time at instant {} of {nu}", e.instant)));
            }
            raw = raw.fix_time(e.instant, e.value);
        }
        for e in &self.fixed_states {
            if bad_instant(e.instant) || e.values.len() != d {
                return Err(ProblemFileError::Shape(format!("fixed state at instant {} needs {d} values", e.instant)));
            }
            raw = raw.fix_state(e.instant, &e.values);
        }
        let linear = |e: &LinearEntry| -> Result<PointTerm, ProblemFileError> {
            if bad_instant(e.instant) || e.weights.len() != d {
                return Err(ProblemFileError::Shape(format!("'{}' needs instant ≤ {nu} and {d} weights", e.name)));
            }
            Ok(PointTerm::new(
                e.name.clone(),
                LinearStateFunction { index: e.instant, weights: Vector::from_vec(e.weights.clone()), offset: e.offset },
            ))
        };
        for e in &self.linear_equalities {
            raw = raw.equality(linear(e)?);
        }
        let times = &self.guess.times;
        if times.len() != nu + 1 {
            return Err(ProblemFileError::Shape(format!("guess.times needs {} entries", nu + 1)));
        }
        let windows = match &self.windows {
            Some(w) => SparsityWindows::new(w.clone()),
            None => SparsityWindows::inactive(nu, times[nu] - times[0]),
        };
        let mut objective = ObjectiveSpec::sparsity(self.sparsity_weight);
        if let Some(e) = &self.endpoint_cost {
            objective = objective.with_endpoint_cost(linear(e)?);
        }
        let admissible = AdmissibleSet::new_box(
            Vector::from_vec(self.control_lower.clone()),
            Vector::from_vec(self.control_upper.clone()),
        )?;
        let problem = ProblemSpec::new(&self.name, Arc::new(LinearSystem::new(a, b)), admissible, raw, windows, objective)?
            .with_activity(match self.activity {
                Activity::Joint => ActivityMeasure::Joint,
                Activity::PerChannel => ActivityMeasure::PerChannel,
            });

        let shooting = ShootingOptions {
            integration: IntegrationOptions { nodes_per_interval: self.nodes_per_interval, ..Default::default() },
            segments_per_interval: self.segments_per_interval.max(1),
        };
        let layout = ShootingLayout::new(&problem, shooting.segments_per_interval)?;
        let mut guess = ShootingParams::unpack(&layout, &vec![0.0; layout.dim()])?;
        guess.times = times.clone();
        if let Some(start) = self.fixed_states.iter().find(|e| e.instant == 0) {
            guess.states[0].rows_mut(1, d).copy_from_slice(&start.values);
        }
        if !self.guess.alpha.is_empty() {
            if self.guess.alpha.len() != layout.n_eq {
                return Err(ProblemFileError::Shape(format!("guess.alpha needs {} entries", layout.n_eq)));
            }
            guess.alpha = Vector::from_vec(self.guess.alpha.clone());
        }
        let guess = propagate_guess(&problem, &guess, &shooting)?;
        Ok(Instance { name: self.name.clone(), problem, config: default_config(), shooting, initial_guess: guess.pack() })
    }
}
