use proptest::prelude::*;
use sparse_pmp::benchmarks::{build_s1, build_s1_windowed, build_s3};
use sparse_pmp::pmp::{bang_off_bang, grid_argmax, hamiltonian, synthesize_control, AdjointState};
use sparse_pmp::problem::{ActivityMeasure, Process};
use sparse_pmp::scaling::{backward_map, forward_map, Scaling};
use sparse_pmp::shooting::{ShootingLayout, ShootingParams};
use sparse_pmp::solver::{fd_jacobian, FdScheme, StepSchedule};
use sparse_pmp::{Matrix, Vector};

fn vec_of(len: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shooting_vector_roundtrips(seed in vec_of(64, 1e3)) {
        let bench = build_s1_windowed();
        let layout = ShootingLayout::new(&bench.problem, 3).unwrap();
        let z: Vec<f64> = (0..layout.dim()).map(|i| seed[i % seed.len()] * (1.0 + i as f64)).collect();
        let params = ShootingParams::unpack(&layout, &z).unwrap();
        prop_assert_eq!(params.pack(), Vector::from_vec(z.clone()));
        prop_assert!(ShootingParams::unpack(&layout, &z[1..]).is_err());
    }

    #[test]
    fn costate_vector_roundtrips(v in vec_of(5, 1e6)) {
        let p = AdjointState::from_slice(&v);
        prop_assert_eq!(p.to_vector(), Vector::from_vec(v));
    }

    /// The analytic maximizer is never beaten by any point of a fine grid.
    #[test]
    fn box_maximizer_beats_grid(c in vec_of(3, 5.0), penalty in -4.0..=0.0f64, per_channel in any::<bool>()) {
        let lo = Vector::from_vec(vec![-1.0, -0.5, 0.0]);
        let hi = Vector::from_vec(vec![1.0, 2.0, 1.5]);
        let c = Vector::from_vec(c);
        let activity = if per_channel { ActivityMeasure::PerChannel } else { ActivityMeasure::Joint };
        let value = |u: &Vector| {
            let count = match activity {
                ActivityMeasure::Joint => f64::from(u.iter().any(|x| *x != 0.0)),
                ActivityMeasure::PerChannel => u.iter().filter(|x| **x != 0.0).count() as f64,
            };
            c.dot(u) + penalty * count
        };
        let best = value(&bang_off_bang(&c, penalty, &lo, &hi, activity));
        let n = 9;
        for i in 0..n { for j in 0..n { for k in 0..n {
            let at = |a: usize, l: f64, h: f64| l + (h - l) * a as f64 / (n - 1) as f64;
            let u = Vector::from_vec(vec![at(i, lo[0], hi[0]), at(j, lo[1], hi[1]), at(k, lo[2], hi[2])]);
            prop_assert!(value(&u) <= best + 1e-12);
        }}}
    }

    /// Same comparison through the full Hamiltonian of the oscillator and of
    /// the descent problem, whose maximizer is found numerically.
    #[test]
    fn synthesized_control_beats_grid(p in vec_of(5, 3.0), x in vec_of(4, 1.0), which in 0..2usize) {
        let bench = if which == 0 { build_s1() } else { build_s3() };
        let problem = &bench.problem;
        let d = problem.dim_state();
        let mut costate = AdjointState::from_slice(&p[..d + 2]);
        costate.sparse = -costate.sparse.abs();
        let state: Vec<f64> = if which == 0 {
            std::iter::once(0.0).chain(x[..d].iter().copied()).collect()
        } else {
            vec![0.0, 110.0 + 10.0 * x[0], 750.0 + 300.0 * x[1], 10.0 + 5.0 * x[2]]
        };
        let h = |u: &[f64]| hamiltonian(problem, &costate, 0.0, &state, u, 1.0);
        let best = h(synthesize_control(problem, &costate, 0.0, &state, 1.0).as_slice());
        let grid = h(grid_argmax(problem, &costate, 0.0, &state, 1.0, 41).as_slice());
        prop_assert!(grid <= best + 1e-9 * best.abs().max(1.0), "grid {} > synthesized {}", grid, best);
    }

    /// Rescaling time keeps the cost and the endpoints, and mapping back
    /// recovers the original clock at every process node.
    #[test]
    fn scaling_preserves_cost(profile in prop::collection::vec(0.0..4.0f64, 1..6), switch in 0.5..14.5f64) {
        prop_assume!(profile.iter().sum::<f64>() > 0.1);
        let bench = build_s1();
        let problem = &bench.problem;
        let control = |_: usize, t: f64| Vector::from_element(1, if t < switch { -1.0 } else { 0.0 });
        let process = Process::simulate(problem, &[0.0, 15.0], 31, &[4.0, -3.0], control, 4);
        let mean = profile.iter().sum::<f64>() / profile.len() as f64;
        let profile: Vec<f64> = profile.iter().map(|z| z * 15.0 / mean).collect();
        let scaled = forward_map(problem, &process, &Scaling::Profiles(vec![profile])).unwrap();
        prop_assert!((scaled.cost(problem) - process.cost(problem)).abs() <= 1e-9);
        let iv = &scaled.intervals[0];
        prop_assert_eq!(iv.rho[0], 0.0);
        prop_assert_eq!(*iv.rho.last().unwrap(), 15.0);
        let back = backward_map(&scaled).unwrap();
        for t in &process.intervals[0].times {
            prop_assert!(back.intervals[0].times.iter().any(|s| (s - t).abs() <= 1e-12));
        }
    }

    #[test]
    fn schedules_decrease(c in 1e-4..1.0f64, a in 0.0..1.0f64, k in 1usize..100_000) {
        for s in [StepSchedule::Power { c, a }, StepSchedule::Rational { c, b: a }, StepSchedule::Root { c, a }] {
            prop_assert!(s.gamma(k + 1) <= s.gamma(k));
            prop_assert!(s.gamma(k) > 0.0 && s.gamma(k) <= c);
        }
    }

    /// Central differences are exact (to rounding) on affine maps.
    #[test]
    fn fd_jacobian_of_affine_map(entries in vec_of(12, 10.0), z in vec_of(4, 100.0)) {
        let a = Matrix::from_row_slice(3, 4, &entries);
        let z = Vector::from_vec(z);
        let f = |v: &Vector| Ok::<Vector, String>(&a * v);
        for scheme in [FdScheme::Central2, FdScheme::Central4] {
            let jac = fd_jacobian(f, &z, scheme, 1e-6).unwrap();
            prop_assert!((&jac - &a).amax() <= 1e-6 * a.amax().max(1.0));
        }
    }
}
