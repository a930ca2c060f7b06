use emergence_core::mdsim::{
    bounce_summary, dissipation_diagnostic, dissipation_sweep, format_row, run as integrate, IntegratorParams,
    TrajectoryRecord, DEFAULT_PERIOD_FRACTION,
};
use emergence_core::potentials::ExternalPotentialSpec;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::summary::{Check, OutputDir, RunSummary, Timings};

pub fn run(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut RunSummary,
    timings: &mut Timings,
) -> Result<(), CliError> {
    let model = cfg.model();
    let scenario = cfg.scenario()?;
    let ic = cfg.integrator()?;
    let md = cfg.md.clone().unwrap_or_default();

    // In sweep mode `cm_offset` is in units of the trap length scale.
    if let Some(eps) = &md.amplitude_sweep {
        let mut eps = eps.clone();
        eps.sort_by(|a, b| b.total_cmp(a));
        let points = timings.time("amplitude sweep", || {
            dissipation_sweep(&model, scenario, &eps, ic.dt, ic.n_steps, ic.record_stride, cfg.seed)
        })?;
        out.write_with("amplitude_sweep.csv", |w| {
            use std::io::Write;
            writeln!(w, "epsilon,dt,rms_ratio,e_total_drift,early_e_cm,late_e_cm")?;
            for p in &points {
                writeln!(
                    w,
                    "{}",
                    format_row(&[p.epsilon, p.dt, p.rms_ratio, p.e_total_drift, p.early_e_cm, p.late_e_cm])
                )?;
            }
            Ok(())
        })?;
        for p in &points {
            summary.measure(format!("rms_ratio[eps={}]", p.epsilon), p.rms_ratio);
            summary.measure(format!("e_total_drift[eps={}]", p.epsilon), p.e_total_drift);
        }
        let worst = points.iter().map(|p| p.e_total_drift).fold(0.0, f64::max);
        summary.check(Check::at_most("e_total_drift", worst, md.energy_tolerance));
        let monotone = points.windows(2).all(|w| w[1].rms_ratio < w[0].rms_ratio);
        let last = points.last().map_or(f64::NAN, |p| p.rms_ratio);
        summary.check(Check::holds("dissipation_residual_decreases_with_amplitude", last, monotone));
        return Ok(());
    }

    let start = scenario.prepare(&model, cfg.seed)?;
    let omega = model.max_frequency(&start)?;
    let dt = match ic.dt {
        Some(dt) => dt,
        None => model.suggest_dt(&start, DEFAULT_PERIOD_FRACTION)?,
    };
    let params = IntegratorParams {
        dt,
        n_steps: ic.n_steps,
        record_stride: ic.record_stride,
    };
    params.check_stability(omega)?;
    summary.measure("dt", dt);
    summary.measure("omega_max", omega);

    let traj = timings.time("integrate", || integrate(&start, &model, &params))?;
    out.write_with("trajectory.csv", |w| traj.write_csv(w))?;

    let e_drift = TrajectoryRecord::max_relative_drift(&traj.e_total);
    summary.check(Check::at_most("e_total_drift", e_drift, md.energy_tolerance));

    let floor = matches!(model.external, ExternalPotentialSpec::Gravity { floor_stiffness: Some(_), .. });
    let ecm_drift = TrajectoryRecord::max_relative_drift(&traj.e_cm);
    if model.external.is_polynomial_of_degree_at_most_two() && !floor {
        summary.check(Check::at_most("e_cm_drift", ecm_drift, md.decoupling_tolerance));
    } else {
        summary.measure("e_cm_drift", ecm_drift);
    }
    let e_rel = traj.e_total[0] - traj.e_cm[0];
    summary.measure("relative_energy", e_rel);
    let abs_drift = traj.e_total.iter().map(|e| (e - traj.e_total[0]).abs()).fold(0.0, f64::max);
    summary.measure("e_total_drift_over_relative_energy", abs_drift / e_rel.abs());
    if scenario.temperature > 0.0 {
        summary.measure("relative_energy_over_NT", e_rel / (model.body.n_atoms as f64 * scenario.temperature));
    }

    if traj.len() >= 3 {
        let diag = dissipation_diagnostic(&traj, &model.external, &model.body)?;
        out.write_with("dissipation.csv", |w| diag.write_csv(w))?;
        summary.measure("dissipation_rms_ratio", diag.rms_ratio);
    }

    if matches!(model.external, ExternalPotentialSpec::Quartic { .. }) {
        let tenth = (traj.len() / 10).max(1);
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        summary.measure("early_e_cm", mean(&traj.e_cm[..tenth]));
        summary.measure("late_e_cm", mean(&traj.e_cm[traj.len() - tenth..]));
    }

    if floor {
        match bounce_summary(&traj, md.contact_tolerance) {
            Some(b) => {
                out.write_json("bounce.json", &b)?;
                summary.measure("pre_bounce_e_cm", b.pre_e_cm);
                summary.measure("post_bounce_e_cm", b.post_e_cm);
                summary.measure("pre_bounce_rel_kinetic", b.pre_rel_kinetic);
                summary.measure("post_bounce_rel_kinetic", b.post_rel_kinetic);
                let d_ecm = b.post_e_cm - b.pre_e_cm;
                let d_rel = b.post_rel_kinetic - b.pre_rel_kinetic;
                summary.check(Check::holds("bounce_e_cm_decreases", d_ecm, d_ecm < 0.0));
                summary.check(Check::holds("bounce_rel_kinetic_increases", d_rel, d_rel > 0.0));
            }
            None => summary.check(Check::holds("bounce_detected", 0.0, false)),
        }
    }

    Ok(())
}
