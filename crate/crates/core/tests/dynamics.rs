use emergence_core::coords::{total_momentum, BodyConfig, PhaseState};
use emergence_core::mdsim::*;
use emergence_core::potentials::{ExternalPotentialSpec, PairPotentialSpec};
use proptest::prelude::*;

fn model(n: usize, dim: usize, external: ExternalPotentialSpec) -> Model {
    Model {
        body: BodyConfig::new(n, dim),
        pair: PairPotentialSpec::HarmonicSpring {
            stiffness: 1.0,
            rest_length: 1.0,
        },
        external,
    }
}

fn thermal(m: &Model, t: f64, seed: u64) -> PhaseState {
    let center = vec![0.0; m.body.dim];
    thermalize_relative(&m.body, &m.pair, t, &center, seed).unwrap()
}

#[test]
fn dimer_oscillates_at_analytic_frequency() {
    let m = model(2, 1, ExternalPotentialSpec::Gravity { g: 0.0, floor_stiffness: None });
    let mut s = PhaseState::zeros(&m.body);
    let a = 0.05;
    s.positions = vec![-(1.0 + a) / 2.0, (1.0 + a) / 2.0];
    let omega = 2f64.sqrt();
    let dt = 1e-3;
    let traj = run(&s, &m, &IntegratorParams { dt, n_steps: 5000, record_stride: 5000 }).unwrap();
    assert_eq!(traj.len(), 2);
    let mut state = s;
    for _ in 0..5000 {
        state = step(&state, &m, dt).unwrap();
    }
    let bond = state.positions[1] - state.positions[0] - 1.0;
    let want = a * (omega * 5.0).cos();
    assert!((bond - want).abs() < 1e-6, "{bond} vs {want}");
}

#[test]
fn constant_force_is_integrated_exactly() {
    let m = model(3, 3, ExternalPotentialSpec::Gravity { g: 2.0, floor_stiffness: None });
    let mut s = PhaseState::zeros(&m.body);
    for i in 0..3 {
        s.positions[i * 3] = i as f64;
        s.momenta[i * 3 + 2] = 1.5;
    }
    let dt = 0.01;
    let mut state = s.clone();
    for _ in 0..300 {
        state = step(&state, &m, dt).unwrap();
    }
    let t = 300.0 * dt;
    for i in 0..3 {
        let z = 1.5 * t - 0.5 * 2.0 * t * t;
        assert!((state.positions[i * 3 + 2] - z).abs() < 1e-10);
        assert!((state.momenta[i * 3 + 2] - (1.5 - 2.0 * t)).abs() < 1e-10);
    }
}

#[test]
fn energy_conserved_for_every_scenario() {
    let cases = [
        (ExternalPotentialSpec::Harmonic { omega: 0.01 }, 50.0),
        (ExternalPotentialSpec::Quartic { omega: 0.05, lambda: 1e-6 }, 5.0),
        (ExternalPotentialSpec::Gravity { g: 0.01, floor_stiffness: None }, 50.0),
    ];
    for (ext, offset) in cases {
        let m = model(32, 1, ext.clone());
        let mut s = thermal(&m, 0.01, 3);
        s.positions.iter_mut().for_each(|x| *x += offset);
        let dt = m.suggest_dt(&s, DEFAULT_PERIOD_FRACTION).unwrap();
        let traj = run(&s, &m, &IntegratorParams { dt, n_steps: 100_000, record_stride: 1000 }).unwrap();
        let drift = TrajectoryRecord::max_relative_drift(&traj.e_total);
        assert!(drift < 1e-6, "{ext:?}: {drift}");
    }
}

#[test]
fn unstable_step_is_rejected() {
    let p = IntegratorParams { dt: 0.2, n_steps: 1, record_stride: 1 };
    assert!(p.check_stability(1.0).is_err());
    assert!(IntegratorParams { dt: 0.05, ..p }.check_stability(1.0).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn momentum_conserved_without_field(n in 2usize..64, dim in prop::sample::select(vec![1usize, 3]), seed in any::<u64>()) {
        let m = model(n, dim, ExternalPotentialSpec::Gravity { g: 0.0, floor_stiffness: None });
        let mut s = thermal(&m, 0.05, seed);
        for (k, p) in s.momenta.iter_mut().enumerate() {
            *p += if k % dim == 0 { 0.3 } else { -0.1 };
        }
        let p0 = total_momentum(&s, &m.body);
        let mut state = s;
        for _ in 0..200 {
            state = step(&state, &m, 0.01).unwrap();
        }
        for (a, b) in p0.iter().zip(total_momentum(&state, &m.body)) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn time_reversal_returns_to_start(n in 2usize..32, seed in any::<u64>()) {
        let m = model(n, 3, ExternalPotentialSpec::Quartic { omega: 0.2, lambda: 0.01 });
        let s = thermal(&m, 0.02, seed);
        let mut state = s.clone();
        for _ in 0..1000 {
            state = step(&state, &m, 0.005).unwrap();
        }
        state.momenta.iter_mut().for_each(|p| *p = -*p);
        for _ in 0..1000 {
            state = step(&state, &m, 0.005).unwrap();
        }
        for (a, b) in s.positions.iter().zip(&state.positions) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in s.momenta.iter().zip(&state.momenta) {
            prop_assert!((a + b).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_series_have_equal_length(n_steps in 1usize..200, stride in 1usize..20) {
        let m = model(4, 1, ExternalPotentialSpec::Harmonic { omega: 0.5 });
        let s = thermal(&m, 0.01, 1);
        let t = run(&s, &m, &IntegratorParams { dt: 0.01, n_steps, record_stride: stride }).unwrap();
        let n = t.len();
        prop_assert_eq!(n, 1 + n_steps / stride);
        prop_assert_eq!(t.times.len(), n);
        prop_assert_eq!(t.cm_position.len(), n);
        prop_assert_eq!(t.cm_momentum.len(), n);
        prop_assert_eq!(t.e_cm.len(), n);
        prop_assert_eq!(t.e_total.len(), n);
        prop_assert_eq!(t.inertia.len(), n);
        prop_assert_eq!(t.rel_kinetic.len(), n);
    }
}
