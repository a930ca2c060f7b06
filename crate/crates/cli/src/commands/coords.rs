use emergence_core::coords::{
    forward_transform, gram_matrix, inverse_coefficients, inverse_transform, k_matrix, linear_maps,
    relative_kinetic_from_momenta, BodyConfig, PhaseState,
};
use emergence_core::stats::neumaier_sum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::summary::{Check, RunSummary, Timings};

pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
pub const GRAM_TOLERANCE: f64 = 1e-10;
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-12;
pub const KINETIC_TOLERANCE: f64 = 1e-12;

fn random_state(cfg: &BodyConfig, rng: &mut ChaCha8Rng) -> PhaseState {
    let len = cfg.n_atoms * cfg.dim;
    PhaseState {
        positions: (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect(),
        momenta: (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        time: 0.0,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn run(cfg: &ExperimentConfig, summary: &mut RunSummary, timings: &mut Timings) -> Result<(), CliError> {
    let cc = cfg.coords.clone().unwrap_or_default();
    if cc.n_list.is_empty() {
        return Err(CliError::invalid("coords.n_list is empty"));
    }
    for &n in &cc.n_list {
        let body = BodyConfig {
            n_atoms: n,
            ..cfg.body.clone()
        };
        body.validate()?;
        timings.time(&format!("identities N={n}"), || -> Result<(), CliError> {
            let a = inverse_coefficients(&body);
            let row_sum = (0..n - 1)
                .map(|j| neumaier_sum((0..n).map(|i| a.get(j, i))).abs())
                .fold(0.0, f64::max);
            summary.check(Check::at_most(format!("coefficient_row_sum[N={n}]"), row_sum, ROW_SUM_TOLERANCE));

            let g = gram_matrix(&body);
            let dev = g.max_deviation_from_inverse(&k_matrix(&body));
            summary.check(Check::at_most(format!("gram_times_k_identity[N={n}]"), dev, GRAM_TOLERANCE));

            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(n as u64));
            let mut round_trip = 0.0f64;
            let mut kinetic = 0.0f64;
            for _ in 0..cc.random_states {
                let s = random_state(&body, &mut rng);
                let cm = forward_transform(&s, &body)?;
                let back = inverse_transform(&cm, &body)?;
                round_trip = round_trip
                    .max(max_abs_diff(&back.positions, &s.positions) / max_abs(&s.positions))
                    .max(max_abs_diff(&back.momenta, &s.momenta) / max_abs(&s.momenta));
                let direct = neumaier_sum(s.momenta.iter().map(|p| p * p)) / (2.0 * body.atom_mass);
                let p2 = neumaier_sum(cm.cm_momentum.iter().map(|p| p * p));
                let split = p2 / (2.0 * body.total_mass()) + relative_kinetic_from_momenta(&cm, &body);
                kinetic = kinetic.max((split - direct).abs() / direct);
            }
            if cc.random_states > 0 {
                summary.check(Check::at_most(format!("round_trip[N={n}]"), round_trip, ROUND_TRIP_TOLERANCE));
                summary.check(Check::at_most(format!("kinetic_split[N={n}]"), kinetic, KINETIC_TOLERANCE));
            }

            if n <= cc.bracket_max_n {
                let b = linear_maps::brackets(
                    &linear_maps::position_map(n),
                    &linear_maps::canonical_momentum_map(n),
                );
                let ok = linear_maps::is_identity(&b);
                summary.check(Check::holds(
                    format!("canonical_brackets[N={n}]"),
                    if ok { 0.0 } else { 1.0 },
                    ok,
                ));
            }
            Ok(())
        })?;
    }
    Ok(())
}
