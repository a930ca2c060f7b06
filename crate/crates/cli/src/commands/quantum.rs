use std::io::Write;

use emergence_core::mdsim::format_row;
use emergence_core::potentials::ExternalPotentialSpec;
use emergence_core::qsim::factorization_experiment;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::summary::{Check, OutputDir, RunSummary, Timings};

pub fn run(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut RunSummary,
    timings: &mut Timings,
) -> Result<(), CliError> {
    let q = cfg
        .quantum
        .as_ref()
        .ok_or_else(|| CliError::invalid("the quantum subcommand needs a `quantum` section"))?;
    let params = q.params();
    let ext = &cfg.external;
    let r = timings.time("propagate", || factorization_experiment(ext, &params, q.purity_threshold))?;
    out.write_with("quantum.csv", |w| r.write_csv(w))?;

    summary.check(Check::at_most("norm_drift", r.norm_drift, q.norm_tolerance));
    summary.check(Check::at_most("ehrenfest_residual1", r.max_abs_residual1(), q.residual_tolerance));
    summary.check(Check::at_most("energy_drift", r.energy_drift, q.energy_tolerance));
    summary.measure("ehrenfest_residual2", r.max_abs_residual2());

    let floor = matches!(ext, ExternalPotentialSpec::Gravity { floor_stiffness: Some(_), .. });
    if ext.is_polynomial_of_degree_at_most_two() && !floor {
        summary.check(Check::at_least("min_purity", r.min_purity, 1.0 - q.purity_tolerance));
    } else {
        summary.check(Check::below("min_purity", r.min_purity, q.purity_threshold));
        if let Some(t) = r.time_to_threshold {
            summary.measure("time_to_purity_threshold", t);
        }
    }

    if let Some(widths) = &q.width_sweep {
        let gap_time = q.gap_time.unwrap_or(q.dt * q.n_steps as f64);
        if widths.len() < 2 {
            return Err(CliError::invalid("quantum.width_sweep needs at least two widths"));
        }
        let mut widths = widths.clone();
        widths.sort_by(f64::total_cmp);
        let n_steps = (gap_time / q.dt - 1e-9).ceil() as usize;
        let gaps = timings.time("width sweep", || {
            std::thread::scope(|s| {
                let handles: Vec<_> = widths
                    .iter()
                    .map(|&w| {
                        let mut p = params.clone();
                        p.initial.sigma_x = w;
                        p.n_steps = n_steps;
                        p.sample_stride = n_steps.max(1);
                        s.spawn(move || -> Result<f64, CliError> {
                            let r = factorization_experiment(ext, &p, q.purity_threshold)?;
                            r.gap_at(gap_time)
                                .map(f64::abs)
                                .ok_or_else(|| CliError::invalid(format!("gap_time {gap_time} is past the run")))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sweep thread panicked"))
                    .collect::<Result<Vec<f64>, CliError>>()
            })
        })?;
        out.write_with("gap_sweep.csv", |w| {
            writeln!(w, "sigma_x,time,gap")?;
            for (s, g) in widths.iter().zip(&gaps) {
                writeln!(w, "{}", format_row(&[*s, gap_time, *g]))?;
            }
            Ok(())
        })?;
        for (s, g) in widths.iter().zip(&gaps) {
            summary.measure(format!("gap[sigma_x={s}]"), *g);
        }
        let monotone = gaps.windows(2).all(|w| w[0] < w[1]);
        summary.check(Check::holds("gap_increases_with_width", gaps[0], monotone));
    }
    Ok(())
}
