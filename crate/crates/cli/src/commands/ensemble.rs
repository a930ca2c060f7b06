use emergence_core::ensemble::{
    additivity_check, independence_test, observable_reports, run_ensemble, scaling_from_ensembles, write_report_csv,
    EnsembleSpec,
};
use emergence_core::mdsim::DEFAULT_PERIOD_FRACTION;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::summary::{Check, OutputDir, RunSummary, Timings};

pub fn run(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut RunSummary,
    timings: &mut Timings,
    workers: Option<usize>,
) -> Result<(), CliError> {
    let ec = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| CliError::invalid("the ensemble subcommand needs an `ensemble` section"))?;
    let model = cfg.model();
    let scenario = cfg.scenario()?.clone();
    let dt = match cfg.integrator.and_then(|i| i.dt) {
        Some(dt) => dt,
        None => model.suggest_dt(&scenario.prepare(&model, cfg.seed)?, DEFAULT_PERIOD_FRACTION)?,
    };
    let spec = EnsembleSpec {
        n_members: ec.n_members,
        base_seed: cfg.seed,
        sample_times: ec.sample_times.clone(),
        n_blocks: ec.n_blocks,
        dt,
        model,
        scenario,
    };
    spec.validate()?;
    summary.measure("dt", dt);

    let ens = timings.time("members", || run_ensemble(&spec, workers))?;
    out.write_with("ensemble.csv", |w| ens.write_csv(w))?;
    let reports = observable_reports(&ens)?;
    out.write_with("report.csv", |w| write_report_csv(&reports, w))?;

    let last = ens.n_times() - 1;
    let blocks = ens.block_kinetic(last);
    if ens.n_blocks >= 2 && ens.n_members() >= 30 {
        let ind = independence_test(&blocks)?;
        out.write_json("independence.json", &ind)?;
        if let Some(x) = ind.max_adjacent {
            summary.measure("block_kinetic_max_adjacent_correlation", x);
        }
        if let Some(x) = ind.max_non_adjacent {
            summary.measure("block_kinetic_max_non_adjacent_correlation", x);
        }
    }
    if ens.n_blocks >= 2 {
        let add = additivity_check(&blocks)?;
        out.write_json("additivity.json", &add)?;
        summary.measure("block_kinetic_additivity_z", add.z_score());
    }

    if let Some(n_list) = &ec.n_list {
        let mut all = Vec::with_capacity(n_list.len());
        for &n in n_list {
            let mut s = spec.clone();
            s.model.body.n_atoms = n;
            let e = timings.time(&format!("scaling N={n}"), || run_ensemble(&s, workers))?;
            // flushed per N so a later failure keeps the finished points
            let r = observable_reports(&e)?;
            out.write_with(&format!("scaling_N{n}_report.csv"), |w| write_report_csv(&r, w))?;
            all.push(e);
        }
        let scaling = scaling_from_ensembles(&all)?;
        out.write_with("scaling.csv", |w| scaling.write_csv(w))?;
        out.write_json("scaling.json", &scaling)?;
        for (name, target) in [("P", Some(0.5)), ("e_total", Some(-0.5)), ("e_cm", None)] {
            let Some(series) = scaling.series(name) else { continue };
            match (series.fit, target) {
                (Some(fit), Some(t)) => {
                    summary.check(Check::within(format!("scaling_slope[{name}]"), fit.slope, t, ec.slope_tolerance));
                    summary.measure(format!("scaling_slope_stderr[{name}]"), fit.slope_stderr);
                }
                (Some(fit), None) => {
                    summary.measure(format!("scaling_slope[{name}]"), fit.slope);
                    summary.measure(format!("scaling_slope_stderr[{name}]"), fit.slope_stderr);
                }
                (None, Some(t)) => summary.check(Check::within(format!("scaling_slope[{name}]"), f64::NAN, t, ec.slope_tolerance)),
                (None, None) => {}
            }
        }
    }
    Ok(())
}
