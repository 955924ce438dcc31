//! Reparameterization of a multi-interval process onto unit intervals.
//!
//! Interval `k` is mapped to `τ ∈ [0, 1]` through `dρ_k/dτ = z_k(τ)` with
//! `ρ_k(0) = t_{k-1}` and `ρ_k(1) = t_k`; states and controls are carried
//! over as `y_k(τ) = x̄(ρ_k(τ))` and `v_k(τ) = u(ρ_k(τ))`. This module is a
//! verification tool: the solver works in the original time variable.

use crate::problem::{segment_flow, IntermediatePoints, Process, ProcessInterval, ProblemSpec};
use crate::Vector;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScalingError {
    #[error("scaling factor must be positive (interval {interval}, value {value})")]
    NonPositive { interval: usize, value: f64 },
    #[error("scaling of interval {interval} integrates to {integral}, interval length is {length}")]
    Unpinned { interval: usize, integral: f64, length: f64 },
    #[error("time map of interval {interval} is not strictly increasing")]
    NonMonotone { interval: usize },
    #[error("intervals {interval} and {next} do not join continuously")]
    Stitching { interval: usize, next: usize },
    #[error("expected {expected} scaling profiles, got {got}")]
    Count { expected: usize, got: usize },
}

/// Per-interval choice of the scaling control `z_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    /// `z_k ≡ |Δ_k|`.
    IntervalLength,
    /// `z_k` piecewise constant on equal `τ`-pieces, one profile per interval.
    Profiles(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledInterval {
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
    /// `z` on each `τ`-segment.
    pub z: Vec<f64>,
    pub states: Vec<Vector>,
    /// `v` on each `τ`-segment.
    pub controls: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledProcess {
    pub intervals: Vec<ScaledInterval>,
}

const PIN_TOL: f64 = 1e-9;
const SUBSTEPS: usize = 8;

impl ScaledProcess {
    /// `γ̃ = (ρ_1(0), ρ_1(1), …, ρ_ν(1); y_1(0), y_1(1), …, y_ν(1))`.
    pub fn points(&self) -> IntermediatePoints {
        let mut times = vec![self.intervals[0].rho[0]];
        let mut states = vec![self.intervals[0].states[0].clone()];
        for iv in &self.intervals {
            times.push(*iv.rho.last().unwrap());
            states.push(iv.states.last().unwrap().clone());
        }
        IntermediatePoints::new(times, states)
    }

    /// `ℓ(γ̃) + Σ_k ∫_0^1 z_k (λ·activity(v_k) + L(v_k)) dτ`, exact per segment.
    pub fn cost(&self, problem: &ProblemSpec) -> f64 {
        let mut running = 0.0;
        for iv in &self.intervals {
            for (j, v) in iv.controls.iter().enumerate() {
                let weight = iv.z[j] * (iv.tau[j + 1] - iv.tau[j]);
                running += weight
                    * (problem.objective.lambda * problem.activity.eval(v.as_slice())
                        + problem.objective.running_value(v.as_slice()));
            }
        }
        running + problem.objective.endpoint_value(&self.points())
    }

    /// Final value of the sparse coordinate from `dy⁰/dτ = z·activity(v)`.
    pub fn sparse_total(&self, problem: &ProblemSpec) -> f64 {
        let mut acc = self.intervals[0].states[0][0];
        for iv in &self.intervals {
            for (j, v) in iv.controls.iter().enumerate() {
                acc += iv.z[j] * (iv.tau[j + 1] - iv.tau[j]) * problem.activity.eval(v.as_slice());
            }
        }
        acc
    }

    pub fn check_stitching(&self, tol: f64) -> Result<(), ScalingError> {
        for k in 1..self.intervals.len() {
            let (a, b) = (&self.intervals[k - 1], &self.intervals[k]);
            let gap_t = (a.rho.last().unwrap() - b.rho[0]).abs();
            let gap_y = (a.states.last().unwrap() - &b.states[0]).amax();
            if gap_t > tol || gap_y > tol {
                return Err(ScalingError::Stitching { interval: k, next: k + 1 });
            }
        }
        Ok(())
    }
}

fn profile_for(scaling: &Scaling, k: usize, length: f64) -> Result<Vec<f64>, ScalingError> {
    let profile = match scaling {
        Scaling::IntervalLength => vec![length],
        Scaling::Profiles(p) => p[k].clone(),
    };
    if let Some(&bad) = profile.iter().find(|z| !(**z > 0.0)) {
        return Err(ScalingError::NonPositive { interval: k + 1, value: bad });
    }
    let integral = profile.iter().sum::<f64>() / profile.len() as f64;
    if (integral - length).abs() > PIN_TOL * length.max(1.0) {
        return Err(ScalingError::Unpinned { interval: k + 1, integral, length });
    }
    Ok(profile)
}

/// Forward map `F`.
pub fn forward_map(problem: &ProblemSpec, process: &Process, scaling: &Scaling) -> Result<ScaledProcess, ScalingError> {
    if let Scaling::Profiles(p) = scaling {
        if p.len() != process.intervals.len() {
            return Err(ScalingError::Count { expected: process.intervals.len(), got: p.len() });
        }
    }
    let mut intervals = Vec::with_capacity(process.intervals.len());
    for (k, iv) in process.intervals.iter().enumerate() {
        let (t0, t1) = (iv.times[0], *iv.times.last().unwrap());
        let length = t1 - t0;
        let profile = profile_for(scaling, k, length)?;
        intervals.push(forward_interval(problem, iv, &profile));
    }
    Ok(ScaledProcess { intervals })
}

fn forward_interval(problem: &ProblemSpec, iv: &ProcessInterval, profile: &[f64]) -> ScaledInterval {
    let n = profile.len();
    let t0 = iv.times[0];
    let t_end = *iv.times.last().unwrap();
    // ρ at the profile breakpoints.
    let mut breaks = vec![t0];
    for z in profile {
        let last = *breaks.last().unwrap();
        breaks.push(last + z / n as f64);
    }
    breaks[n] = t_end;
    let rho_inverse = |t: f64| -> f64 {
        let i = breaks.partition_point(|b| *b <= t).clamp(1, n) - 1;
        (i as f64 + (t - breaks[i]) / (breaks[i + 1] - breaks[i])) / n as f64
    };

    // Node set: every process node plus every interior profile breakpoint.
    let mut nodes: Vec<(f64, f64, Option<usize>)> =
        iv.times.iter().enumerate().map(|(j, &t)| (if j == 0 { 0.0 } else if j + 1 == iv.times.len() { 1.0 } else { rho_inverse(t) }, t, Some(j))).collect();
    for (i, &b) in breaks.iter().enumerate().take(n).skip(1) {
        if !iv.times.iter().any(|&t| t == b) {
            nodes.push((i as f64 / n as f64, b, None));
        }
    }
    nodes.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let segment_of = |t: f64| iv.times.partition_point(|s| *s <= t).clamp(1, iv.times.len() - 1) - 1;
    let mut out = ScaledInterval { tau: vec![], rho: vec![], z: vec![], states: vec![], controls: vec![] };
    for (idx, &(tau, t, origin)) in nodes.iter().enumerate() {
        out.tau.push(tau);
        out.rho.push(t);
        let state = match origin {
            Some(j) => iv.states[j].clone(),
            None => {
                let j = segment_of(t);
                segment_flow(problem, &iv.states[j], iv.times[j], t, &iv.controls[j], SUBSTEPS)
            }
        };
        out.states.push(state);
        if idx + 1 < nodes.len() {
            let (tau_next, t_next, _) = nodes[idx + 1];
            out.z.push((t_next - t) / (tau_next - tau));
            out.controls.push(iv.controls[segment_of(0.5 * (t + t_next))].clone());
        }
    }
    out
}

/// Backward map `G`.
pub fn backward_map(scaled: &ScaledProcess) -> Result<Process, ScalingError> {
    let mut intervals = Vec::with_capacity(scaled.intervals.len());
    for (k, iv) in scaled.intervals.iter().enumerate() {
        if iv.rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ScalingError::NonMonotone { interval: k + 1 });
        }
        intervals.push(ProcessInterval { times: iv.rho.clone(), states: iv.states.clone(), controls: iv.controls.clone() });
    }
    Ok(Process { intervals })
}

/// `|J̃(F(π)) − J(π)|`.
pub fn cost_equivalence_check(problem: &ProblemSpec, process: &Process, scaling: &Scaling) -> Result<f64, ScalingError> {
    let scaled = forward_map(problem, process, scaling)?;
    Ok((scaled.cost(problem) - process.cost(problem)).abs())
}

/// Concatenated coordinates `s ∈ [0, ν]`, `s = k − 1 + τ` on interval `k`.
#[derive(Debug, Clone)]
pub struct StitchedView<'a> {
    scaled: &'a ScaledProcess,
}

impl<'a> StitchedView<'a> {
    pub fn new(scaled: &'a ScaledProcess) -> Result<Self, ScalingError> {
        for (k, iv) in scaled.intervals.iter().enumerate() {
            if iv.rho.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(ScalingError::NonMonotone { interval: k + 1 });
            }
        }
        Ok(Self { scaled })
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let nu = self.scaled.intervals.len();
        let s = s.clamp(0.0, nu as f64);
        let k = (s.floor() as usize).min(nu - 1);
        (k, s - k as f64)
    }

    /// `P(s)`.
    pub fn time(&self, s: f64) -> f64 {
        let (k, tau) = self.locate(s);
        let iv = &self.scaled.intervals[k];
        interp(&iv.tau, &iv.rho, tau)
    }

    /// `Y(s)`, linearly interpolated between stored nodes.
    pub fn state(&self, s: f64) -> Vector {
        let (k, tau) = self.locate(s);
        let iv = &self.scaled.intervals[k];
        let j = iv.tau.partition_point(|x| *x <= tau).clamp(1, iv.tau.len() - 1) - 1;
        let w = (tau - iv.tau[j]) / (iv.tau[j + 1] - iv.tau[j]);
        &iv.states[j] * (1.0 - w) + &iv.states[j + 1] * w
    }

    /// `V(s)`, piecewise constant.
    pub fn control(&self, s: f64) -> Vector {
        let (k, tau) = self.locate(s);
        let iv = &self.scaled.intervals[k];
        let j = iv.tau.partition_point(|x| *x <= tau).clamp(1, iv.controls.len()) - 1;
        iv.controls[j].clone()
    }

    /// `Σ(t) = P⁻¹(t)`.
    pub fn inverse(&self, t: f64) -> f64 {
        let ivs = &self.scaled.intervals;
        let k = ivs.iter().position(|iv| t <= *iv.rho.last().unwrap()).unwrap_or(ivs.len() - 1);
        k as f64 + interp(&ivs[k].rho, &ivs[k].tau, t)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1) - 1;
    ys[j] + (ys[j + 1] - ys[j]) * (x - xs[j]) / (xs[j + 1] - xs[j])
}

/// Equalities and inequalities contributed by the sparse coordinate after
/// transformation: `y⁰_1(0) = 0` and one window per interval.
pub fn transformed_sparse_constraint_counts(nu: usize) -> (usize, usize) {
    (1, nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{AdmissibleSet, IntermediateSpec, LinearSystem, ObjectiveSpec, SparsityWindows};
    use nalgebra::dmatrix;
    use std::sync::Arc;

    fn integrator_problem(nu: usize, horizon: f64) -> ProblemSpec {
        ProblemSpec::new(
            "int",
            Arc::new(LinearSystem::new(dmatrix![0.0], dmatrix![1.0])),
            AdmissibleSet::symmetric_box(1, 1.0),
            IntermediateSpec::new(nu),
            SparsityWindows::inactive(nu, horizon),
            ObjectiveSpec::sparsity(1.0),
        )
        .unwrap()
    }

    #[test]
    fn linear_reparameterization() {
        let p = integrator_problem(1, 2.0);
        let proc = Process::simulate(&p, &[0.0, 2.0], 5, &[0.0], |_, _| Vector::from_vec(vec![1.0]), 1);
        let sp = forward_map(&p, &proc, &Scaling::IntervalLength).unwrap();
        let iv = &sp.intervals[0];
        for (tau, (rho, y)) in iv.tau.iter().zip(iv.rho.iter().zip(&iv.states)) {
            assert!((rho - 2.0 * tau).abs() < 1e-15);
            assert!((y[1] - 2.0 * tau).abs() < 1e-14);
        }
        assert!(iv.z.iter().all(|z| (z - 2.0).abs() < 1e-14));
    }

    #[test]
    fn two_intervals_stitch() {
        let p = integrator_problem(2, 3.0);
        let proc = Process::simulate(&p, &[0.0, 1.0, 3.0], 5, &[0.0], |_, _| Vector::from_vec(vec![0.0]), 1);
        let sp = forward_map(&p, &proc, &Scaling::IntervalLength).unwrap();
        assert_eq!(sp.intervals[1].rho[0], 1.0);
        assert_eq!(*sp.intervals[0].rho.last().unwrap(), 1.0);
        assert!((sp.intervals[1].rho[2] - 2.0).abs() < 1e-15);
        sp.check_stitching(0.0).unwrap();
        let view = StitchedView::new(&sp).unwrap();
        assert!((view.inverse(2.0) - 1.5).abs() < 1e-12);
        assert!((view.time(1.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_profiles() {
        let p = integrator_problem(1, 2.0);
        let proc = Process::simulate(&p, &[0.0, 2.0], 3, &[0.0], |_, _| Vector::zeros(1), 1);
        let err = forward_map(&p, &proc, &Scaling::Profiles(vec![vec![2.0, 0.0]])).unwrap_err();
        assert!(matches!(err, ScalingError::NonPositive { .. }));
        let err = forward_map(&p, &proc, &Scaling::Profiles(vec![vec![1.0, 1.0]])).unwrap_err();
        assert!(matches!(err, ScalingError::Unpinned { .. }));
    }

    #[test]
    fn zero_and_full_activation_costs() {
        let p = integrator_problem(1, 4.0);
        let off = Process::simulate(&p, &[0.0, 4.0], 9, &[0.0], |_, _| Vector::zeros(1), 1);
        assert_eq!(cost_equivalence_check(&p, &off, &Scaling::IntervalLength).unwrap(), 0.0);
        let on = Process::simulate(&p, &[0.0, 4.0], 9, &[0.0], |_, _| Vector::from_vec(vec![1.0]), 1);
        let profile = Scaling::Profiles(vec![vec![1.0, 7.0, 3.0, 5.0]]);
        assert!(cost_equivalence_check(&p, &on, &profile).unwrap() <= 1e-12);
        assert!((on.cost(&p) - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn non_monotone_rho_rejected() {
        let p = integrator_problem(1, 2.0);
        let proc = Process::simulate(&p, &[0.0, 2.0], 3, &[0.0], |_, _| Vector::zeros(1), 1);
        let mut sp = forward_map(&p, &proc, &Scaling::IntervalLength).unwrap();
        sp.intervals[0].rho[1] = 5.0;
        assert_eq!(backward_map(&sp).unwrap_err(), ScalingError::NonMonotone { interval: 1 });
    }
}
