//! Ensembles over initial conditions and statistics of extensive observables.
//!
//! Member `k` of an ensemble is seeded with `base_seed + k`. Members run in
//! parallel and are collected in member order, so results do not depend on
//! the number of worker threads.

use std::io::Write;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coords::{center_of_mass, kinetic_decomposition, total_momentum, BodyConfig, PhaseState};
use crate::error::{Error, Result};
use crate::mdsim::{cm_energy, format_float, format_row, Integrator, Model, ScenarioSpec};
use crate::stats::{correlation, cumulants, mean, neumaier_sum, variance, weighted_line_fit, CumulantReport, LineFit};

/// Ensemble definition. The body, forces and initial temperature come from
/// `model` and `scenario`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_members: usize,
    pub base_seed: u64,
    pub sample_times: Vec<f64>,
    pub n_blocks: usize,
    pub dt: f64,
    pub model: Model,
    pub scenario: ScenarioSpec,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_members < 2 {
            return Err(Error::Estimator(format!(
                "an ensemble needs at least 2 members, got {}",
                self.n_members
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sample_times.is_empty() {
            return Err(Error::Config("sample_times is empty".into()));
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) || self.sample_times[0] < 0.0 {
            return Err(Error::Config("sample_times must be non-negative and sorted".into()));
        }
        self.model.validate()?;
        self.scenario.validate(&self.model)?;
        BlockPartition::new(self.model.body.n_atoms, self.n_blocks, self.model.body.atom_mass)?;
        Ok(())
    }

    pub fn member_seed(&self, member: usize) -> u64 {
        self.base_seed.wrapping_add(member as u64)
    }

    /// Step index at which each sample time is recorded.
    pub fn sample_steps(&self) -> Vec<usize> {
        self.sample_times.iter().map(|t| (t / self.dt).round() as usize).collect()
    }
}

/// Contiguous chain segments of equal atom count, remainder to the last block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockPartition {
    pub n_blocks: usize,
    pub ranges: Vec<Range<usize>>,
    pub masses: Vec<f64>,
}

impl BlockPartition {
    pub fn new(n_atoms: usize, n_blocks: usize, atom_mass: f64) -> Result<Self> {
        if n_blocks == 0 || n_blocks > n_atoms {
            return Err(Error::Partition(format!(
                "{n_blocks} blocks over {n_atoms} atoms leaves an empty block"
            )));
        }
        let size = n_atoms / n_blocks;
        let ranges: Vec<Range<usize>> = (0..n_blocks)
            .map(|s| s * size..if s + 1 == n_blocks { n_atoms } else { (s + 1) * size })
            .collect();
        let masses = ranges.iter().map(|r| r.len() as f64 * atom_mass).collect();
        Ok(Self {
            n_blocks,
            ranges,
            masses,
        })
    }

    pub fn atom_counts(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }
}

/// Center-of-mass variables of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCm {
    pub mass: f64,
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Kinetic energy of the block's atoms.
    pub kinetic: f64,
}

pub fn block_cm_variables(state: &PhaseState, partition: &BlockPartition, cfg: &BodyConfig) -> Result<Vec<BlockCm>> {
    state.validate(cfg)?;
    let covered: usize = partition.ranges.iter().map(|r| r.len()).sum();
    if covered != cfg.n_atoms || partition.ranges.iter().any(|r| r.is_empty()) {
        return Err(Error::Partition(format!(
            "partition covers {covered} atoms of {}, or has an empty block",
            cfg.n_atoms
        )));
    }
    let d = cfg.dim;
    let m = cfg.atom_mass;
    Ok(partition
        .ranges
        .iter()
        .map(|range| {
            let mut position = vec![0.0; d];
            let mut momentum = vec![0.0; d];
            let mut p2 = 0.0;
            for i in range.clone() {
                for a in 0..d {
                    position[a] += state.positions[i * d + a];
                    let p = state.momenta[i * d + a];
                    momentum[a] += p;
                    p2 += p * p;
                }
            }
            let count = range.len() as f64;
            position.iter_mut().for_each(|x| *x /= count);
            BlockCm {
                mass: count * m,
                position,
                momentum,
                kinetic: p2 / (2.0 * m),
            }
        })
        .collect())
}

/// Whole-body `(R, P)` from block variables: mass-weighted mean of the block
/// positions and sum of the block momenta.
pub fn reconstruct_cm(blocks: &[BlockCm]) -> (Vec<f64>, Vec<f64>) {
    let d = blocks[0].position.len();
    let total: f64 = blocks.iter().map(|b| b.mass).sum();
    let r = (0..d)
        .map(|a| blocks.iter().map(|b| b.mass * b.position[a]).sum::<f64>() / total)
        .collect();
    let p = (0..d).map(|a| blocks.iter().map(|b| b.momentum[a]).sum()).collect();
    (r, p)
}

/// Observables of one member at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberSample {
    pub time: f64,
    pub cm_position: Vec<f64>,
    pub cm_momentum: Vec<f64>,
    pub e_cm: f64,
    pub e_total: f64,
    pub rel_kinetic: f64,
    pub blocks: Vec<BlockCm>,
}

/// `samples[member][time index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSamples {
    pub n_atoms: usize,
    pub dim: usize,
    pub n_blocks: usize,
    pub samples: Vec<Vec<MemberSample>>,
}

impl EnsembleSamples {
    pub fn n_members(&self) -> usize {
        self.samples.len()
    }

    pub fn n_times(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    /// One scalar observable across members at time index `t`.
    pub fn column(&self, t: usize, f: impl Fn(&MemberSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(|m| f(&m[t])).collect()
    }

    /// Block kinetic energies across members at time index `t`, one series per block.
    pub fn block_kinetic(&self, t: usize) -> Vec<Vec<f64>> {
        (0..self.n_blocks)
            .map(|s| self.column(t, |m| m.blocks[s].kinetic))
            .collect()
    }

    pub fn header(&self) -> String {
        let d = self.dim;
        let mut cols = vec!["member".to_string(), "time".to_string()];
        cols.extend((0..d).map(|a| format!("R{a}")));
        cols.extend((0..d).map(|a| format!("P{a}")));
        cols.extend(["e_cm", "e_total", "rel_kinetic"].map(String::from));
        for s in 0..self.n_blocks {
            cols.extend((0..d).map(|a| format!("block{s}_R{a}")));
            cols.extend((0..d).map(|a| format!("block{s}_P{a}")));
            cols.push(format!("block{s}_kinetic"));
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        for (member, series) in self.samples.iter().enumerate() {
            for s in series {
                let mut row = vec![s.time];
                row.extend(&s.cm_position);
                row.extend(&s.cm_momentum);
                row.extend([s.e_cm, s.e_total, s.rel_kinetic]);
                for b in &s.blocks {
                    row.extend(&b.position);
                    row.extend(&b.momentum);
                    row.push(b.kinetic);
                }
                writeln!(out, "{member},{}", format_row(&row))?;
            }
        }
        Ok(())
    }
}

fn sample(integ: &Integrator<'_>, model: &Model, partition: &BlockPartition) -> Result<MemberSample> {
    let state = integ.state();
    let cfg = &model.body;
    Ok(MemberSample {
        time: state.time,
        cm_position: center_of_mass(state, cfg),
        cm_momentum: total_momentum(state, cfg),
        e_cm: cm_energy(state, cfg, &model.external)?,
        e_total: integ.total_energy(),
        rel_kinetic: kinetic_decomposition(state, cfg).rel_kinetic,
        blocks: block_cm_variables(state, partition, cfg)?,
    })
}

/// Runs one member to every sample time.
pub fn run_member(spec: &EnsembleSpec, member: usize) -> Result<Vec<MemberSample>> {
    let model = &spec.model;
    let partition = BlockPartition::new(model.body.n_atoms, spec.n_blocks, model.body.atom_mass)?;
    let initial = spec.scenario.prepare(model, spec.member_seed(member))?;
    let mut integ = Integrator::new(model, initial, spec.dt)?;
    let mut out = Vec::with_capacity(spec.sample_times.len());
    for target in spec.sample_steps() {
        integ.advance_by(target - integ.steps())?;
        out.push(sample(&integ, model, &partition)?);
    }
    Ok(out)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// All members of the ensemble, on a pool of `workers` threads (default: one per core).
pub fn run_ensemble(spec: &EnsembleSpec, workers: Option<usize>) -> Result<EnsembleSamples> {
    spec.validate()?;
    let samples = pool(workers)?.install(|| {
        (0..spec.n_members)
            .into_par_iter()
            .map(|k| run_member(spec, k))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(EnsembleSamples {
        n_atoms: spec.model.body.n_atoms,
        dim: spec.model.body.dim,
        n_blocks: spec.n_blocks,
        samples,
    })
}

/// Cumulant report of one named observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableReport {
    pub observable: String,
    pub n_atoms: usize,
    pub time: f64,
    pub cumulants: CumulantReport,
}

/// Cumulants of every scalar observable at every sample time.
pub fn observable_reports(ens: &EnsembleSamples) -> Result<Vec<ObservableReport>> {
    let mut out = Vec::new();
    for t in 0..ens.n_times() {
        let time = ens.samples[0][t].time;
        let mut series: Vec<(String, Vec<f64>)> = Vec::new();
        for a in 0..ens.dim {
            series.push((format!("R{a}"), ens.column(t, |m| m.cm_position[a])));
            series.push((format!("P{a}"), ens.column(t, |m| m.cm_momentum[a])));
        }
        series.push(("e_cm".into(), ens.column(t, |m| m.e_cm)));
        series.push(("e_total".into(), ens.column(t, |m| m.e_total)));
        series.push(("rel_kinetic".into(), ens.column(t, |m| m.rel_kinetic)));
        for (s, k) in ens.block_kinetic(t).into_iter().enumerate() {
            series.push((format!("block{s}_kinetic"), k));
        }
        for (name, xs) in series {
            out.push(ObservableReport {
                observable: name,
                n_atoms: ens.n_atoms,
                time,
                cumulants: cumulants(&xs)?,
            });
        }
    }
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), format_float)
}

pub fn write_report_csv<W: Write>(reports: &[ObservableReport], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "observable,N,time,mean,variance,cumulant3,cumulant4,mean_stderr,variance_stderr,cumulant3_stderr,cumulant4_stderr"
    )?;
    for r in reports {
        let c = &r.cumulants;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.observable,
            r.n_atoms,
            format_float(r.time),
            format_float(c.mean.value),
            format_float(c.variance.value),
            opt(c.cumulant3.map(|e| e.value)),
            opt(c.cumulant4.map(|e| e.value)),
            format_float(c.mean.stderr),
            format_float(c.variance.stderr),
            opt(c.cumulant3.map(|e| e.stderr)),
            opt(c.cumulant4.map(|e| e.stderr)),
        )?;
    }
    Ok(())
}

/// Normalized cross-covariance between block observables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub n_members: usize,
    /// `None` where a block has zero variance.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub max_adjacent: Option<f64>,
    pub max_non_adjacent: Option<f64>,
    pub undefined_blocks: Vec<usize>,
}

pub fn independence_test(blocks: &[Vec<f64>]) -> Result<IndependenceReport> {
    let n = blocks.len();
    if n < 2 {
        return Err(Error::Estimator(format!("need at least 2 blocks, got {n}")));
    }
    let m = blocks[0].len();
    if blocks.iter().any(|b| b.len() != m) {
        return Err(Error::Estimator("block series have different lengths".into()));
    }
    if m < 30 {
        return Err(Error::Estimator(format!("need at least 30 members, got {m}")));
    }
    let undefined_blocks: Vec<usize> = (0..n).filter(|&s| variance(&blocks[s]) <= 0.0).collect();
    let mut matrix = vec![vec![None; n]; n];
    let mut max_adjacent: Option<f64> = None;
    let mut max_non_adjacent: Option<f64> = None;
    for s in 0..n {
        for t in 0..n {
            let c = if s == t {
                (!undefined_blocks.contains(&s)).then_some(1.0)
            } else {
                correlation(&blocks[s], &blocks[t])
            };
            matrix[s][t] = c;
            if t > s {
                if let Some(c) = c {
                    let slot = if t == s + 1 { &mut max_adjacent } else { &mut max_non_adjacent };
                    *slot = Some(slot.map_or(c.abs(), |x| x.max(c.abs())));
                }
            }
        }
    }
    Ok(IndependenceReport {
        n_members: m,
        matrix,
        max_adjacent,
        max_non_adjacent,
        undefined_blocks,
    })
}

/// `Var(Σ A_s)` against `Σ Var(A_s)` with a jackknife error of the difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdditivityReport {
    pub var_of_sum: f64,
    pub sum_of_vars: f64,
    pub difference: f64,
    pub joint_stderr: f64,
}

impl AdditivityReport {
    /// `|difference|` in units of the joint standard error.
    pub fn z_score(&self) -> f64 {
        self.difference.abs() / self.joint_stderr
    }
}

pub fn additivity_check(blocks: &[Vec<f64>]) -> Result<AdditivityReport> {
    if blocks.len() < 2 {
        return Err(Error::Estimator("need at least 2 blocks".into()));
    }
    let m = blocks[0].len();
    if m < 3 || blocks.iter().any(|b| b.len() != m) {
        return Err(Error::Estimator("need equally long block series of at least 3 members".into()));
    }
    let centred: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| {
            let c = mean(b);
            b.iter().map(|x| x - c).collect()
        })
        .collect();
    let total: Vec<f64> = (0..m).map(|i| neumaier_sum(centred.iter().map(|b| b[i]))).collect();
    let var_of_sum = variance(&total);
    let sum_of_vars = neumaier_sum(blocks.iter().map(|b| variance(b)));
    let difference = var_of_sum - sum_of_vars;

    // leave-one-out variances from power sums of the centred series
    let sums = |xs: &[f64]| (neumaier_sum(xs.iter().copied()), neumaier_sum(xs.iter().map(|x| x * x)));
    let loo_var = |(s1, s2): (f64, f64), x: f64| {
        let k = (m - 1) as f64;
        let a = s1 - x;
        ((s2 - x * x) - a * a / k) / (k - 1.0)
    };
    let total_sums = sums(&total);
    let block_sums: Vec<(f64, f64)> = centred.iter().map(|b| sums(b)).collect();
    let loo: Vec<f64> = (0..m)
        .map(|i| {
            loo_var(total_sums, total[i])
                - neumaier_sum(block_sums.iter().zip(&centred).map(|(s, b)| loo_var(*s, b[i])))
        })
        .collect();
    let loo_mean = mean(&loo);
    let k = m as f64;
    let joint_stderr = ((k - 1.0) / k * neumaier_sum(loo.iter().map(|d| (d - loo_mean).powi(2)))).sqrt();
    Ok(AdditivityReport {
        var_of_sum,
        sum_of_vars,
        difference,
        joint_stderr,
    })
}

/// Independent block streams: block `s` is Gaussian with standard deviation `1 + s`.
pub fn synthetic_block_streams(n_blocks: usize, n_members: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_blocks)
        .map(|s| {
            let scale = 1.0 + s as f64;
            (0..n_members)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

/// Fluctuation of one observable at one `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n_atoms: usize,
    pub delta: f64,
    pub delta_stderr: f64,
    pub mean: f64,
}

/// Log-log fit of fluctuation against `N` for one observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSeries {
    pub observable: String,
    /// `true` for relative fluctuations `δA/⟨A⟩`, `false` for absolute `δA`.
    pub relative: bool,
    pub points: Vec<ScalingPoint>,
    pub excluded: Vec<usize>,
    pub fit: Option<LineFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub n_members: usize,
    pub time: f64,
    pub series: Vec<ScalingSeries>,
}

impl ScalingReport {
    pub fn series(&self, observable: &str) -> Option<&ScalingSeries> {
        self.series.iter().find(|s| s.observable == observable)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "observable,N,delta,delta_stderr,mean")?;
        for s in &self.series {
            for p in &s.points {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.observable,
                    p.n_atoms,
                    format_float(p.delta),
                    format_float(p.delta_stderr),
                    format_float(p.mean)
                )?;
            }
        }
        Ok(())
    }
}

/// Standard deviation with its jackknife error, optionally relative to the mean.
fn fluctuation(samples: &[f64], relative: bool) -> Result<(f64, f64, f64)> {
    let c = cumulants(samples)?;
    let sd = c.variance.value.max(0.0).sqrt();
    let sd_err = if sd > 0.0 { c.variance.stderr / (2.0 * sd) } else { 0.0 };
    let m = c.mean.value;
    if relative {
        Ok((sd / m.abs(), sd_err / m.abs(), m))
    } else {
        Ok((sd, sd_err, m))
    }
}

/// Pools the per-component variances of a vector observable.
fn pooled_fluctuation(components: &[Vec<f64>]) -> Result<(f64, f64, f64)> {
    let mut var = 0.0;
    let mut var_err2 = 0.0;
    for xs in components {
        let c = cumulants(xs)?;
        var += c.variance.value;
        var_err2 += c.variance.stderr.powi(2);
    }
    let d = components.len() as f64;
    var /= d;
    let var_err = var_err2.sqrt() / d;
    let sd = var.max(0.0).sqrt();
    Ok((sd, if sd > 0.0 { var_err / (2.0 * sd) } else { 0.0 }, 0.0))
}

fn fit_series(observable: &str, relative: bool, points: Vec<ScalingPoint>) -> Result<ScalingSeries> {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for p in &points {
        if p.delta > 0.0 && p.delta_stderr > 0.0 && p.delta.is_finite() {
            kept.push(*p);
        } else {
            excluded.push(p.n_atoms);
        }
    }
    let fit = if kept.len() >= 4 {
        let x: Vec<f64> = kept.iter().map(|p| (p.n_atoms as f64).ln()).collect();
        let y: Vec<f64> = kept.iter().map(|p| p.delta.ln()).collect();
        let s: Vec<f64> = kept.iter().map(|p| p.delta_stderr / p.delta).collect();
        Some(weighted_line_fit(&x, &y, &s)?)
    } else {
        None
    };
    Ok(ScalingSeries {
        observable: observable.to_string(),
        relative,
        points,
        excluded,
        fit,
    })
}

/// Fluctuations at the last sample time of each ensemble and their log-log slopes.
///
/// `P` uses the absolute spread (its mean is zero by preparation); `e_total` and
/// `e_cm` use the spread relative to the mean.
pub fn scaling_from_ensembles(ensembles: &[EnsembleSamples]) -> Result<ScalingReport> {
    if ensembles.len() < 4 {
        return Err(Error::Estimator(format!(
            "a scaling fit needs at least 4 values of N, got {}",
            ensembles.len()
        )));
    }
    let mut p_points = Vec::new();
    let mut e_points = Vec::new();
    let mut ecm_points = Vec::new();
    let mut time = 0.0;
    for ens in ensembles {
        let t = ens.n_times() - 1;
        time = ens.samples[0][t].time;
        let components: Vec<Vec<f64>> = (0..ens.dim).map(|a| ens.column(t, |m| m.cm_momentum[a])).collect();
        let (d, e, mu) = pooled_fluctuation(&components)?;
        p_points.push(ScalingPoint { n_atoms: ens.n_atoms, delta: d, delta_stderr: e, mean: mu });
        let (d, e, mu) = fluctuation(&ens.column(t, |m| m.e_total), true)?;
        e_points.push(ScalingPoint { n_atoms: ens.n_atoms, delta: d, delta_stderr: e, mean: mu });
        let (d, e, mu) = fluctuation(&ens.column(t, |m| m.e_cm), true)?;
        ecm_points.push(ScalingPoint { n_atoms: ens.n_atoms, delta: d, delta_stderr: e, mean: mu });
    }
    Ok(ScalingReport {
        n_members: ensembles[0].n_members(),
        time,
        series: vec![
            fit_series("P", false, p_points)?,
            fit_series("e_total", true, e_points)?,
            fit_series("e_cm", true, ecm_points)?,
        ],
    })
}

/// Runs the template ensemble once per `N` in `n_list` and fits the scaling.
pub fn scaling_study(template: &EnsembleSpec, n_list: &[usize], workers: Option<usize>) -> Result<ScalingReport> {
    let mut distinct = n_list.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::Estimator(format!(
            "a scaling fit needs at least 4 distinct N, got {}",
            distinct.len()
        )));
    }
    let ensembles = n_list
        .iter()
        .map(|&n| {
            let mut spec = template.clone();
            spec.model.body.n_atoms = n;
            run_ensemble(&spec, workers)
        })
        .collect::<Result<Vec<_>>>()?;
    scaling_from_ensembles(&ensembles)
}

/// Absolute spread of a sum of `N` i.i.d. unit Gaussians, for each `N`.
pub fn synthetic_scaling(n_list: &[usize], n_members: usize, seed: u64) -> Result<ScalingSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let mut points = Vec::new();
    for &n in n_list {
        let sums: Vec<f64> = (0..n_members)
            .map(|_| neumaier_sum((0..n).map(|_| normal.sample(&mut rng))))
            .collect();
        let (d, e, mu) = fluctuation(&sums, false)?;
        points.push(ScalingPoint { n_atoms: n, delta: d, delta_stderr: e, mean: mu });
    }
    fit_series("P", false, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdsim::ScenarioKind;
    use crate::potentials::{ExternalPotentialSpec, PairPotentialSpec};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn spec(n: usize, members: usize, temperature: f64) -> EnsembleSpec {
        EnsembleSpec {
            n_members: members,
            base_seed: 11,
            sample_times: vec![0.0, 0.5, 1.0],
            n_blocks: 4,
            dt: 0.01,
            model: Model {
                body: BodyConfig::new(n, 3),
                pair: PairPotentialSpec::HarmonicSpring {
                    stiffness: 1.0,
                    rest_length: 1.0,
                },
                external: ExternalPotentialSpec::Quartic { omega: 0.1, lambda: 1e-4 },
            },
            scenario: ScenarioSpec {
                kind: ScenarioKind::QuarticTrap,
                cm_offset: vec![3.0, 0.0, 0.0],
                cm_velocity: vec![0.0; 3],
                temperature,
                thermal_cm: false,
            },
        }
    }

    fn random_state(cfg: &BodyConfig, seed: u64) -> PhaseState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = cfg.n_atoms * cfg.dim;
        PhaseState {
            positions: (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect(),
            momenta: (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            time: 0.0,
        }
    }

    #[test]
    fn partition_layout() {
        let p = BlockPartition::new(10, 3, 2.0).unwrap();
        assert_eq!(p.ranges, vec![0..3, 3..6, 6..10]);
        assert_eq!(p.masses, vec![6.0, 6.0, 8.0]);
        assert!(BlockPartition::new(3, 4, 1.0).is_err());
        assert!(BlockPartition::new(3, 0, 1.0).is_err());
    }

    #[test]
    fn single_block_is_whole_body() {
        let cfg = BodyConfig::new(17, 3);
        let state = random_state(&cfg, 1);
        let p = BlockPartition::new(17, 1, 1.0).unwrap();
        let b = block_cm_variables(&state, &p, &cfg).unwrap();
        let r = center_of_mass(&state, &cfg);
        let q = total_momentum(&state, &cfg);
        for a in 0..3 {
            assert_relative_eq!(b[0].position[a], r[a], epsilon = 1e-12);
            assert_relative_eq!(b[0].momentum[a], q[a], epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_with_uneven_blocks() {
        let mut cfg = BodyConfig::new(203, 3);
        cfg.atom_mass = 1.7;
        let state = random_state(&cfg, 2);
        let p = BlockPartition::new(203, 8, cfg.atom_mass).unwrap();
        let blocks = block_cm_variables(&state, &p, &cfg).unwrap();
        let (r, q) = reconstruct_cm(&blocks);
        let r0 = center_of_mass(&state, &cfg);
        let q0 = total_momentum(&state, &cfg);
        for a in 0..3 {
            assert!((r[a] - r0[a]).abs() < 1e-12 * r0[a].abs().max(1.0));
            assert!((q[a] - q0[a]).abs() < 1e-12 * q0[a].abs().max(1.0));
        }
        // an unweighted mean over blocks differs when block masses differ
        let naive: f64 = blocks.iter().map(|b| b.position[0]).sum::<f64>() / 8.0;
        assert!((naive - r0[0]).abs() > 1e-6);
    }

    #[test]
    fn equal_blocks_on_lattice_are_equally_spaced() {
        let cfg = BodyConfig::new(32, 1);
        let mut state = PhaseState::zeros(&cfg);
        for i in 0..32 {
            state.positions[i] = i as f64;
        }
        let p = BlockPartition::new(32, 4, 1.0).unwrap();
        let b = block_cm_variables(&state, &p, &cfg).unwrap();
        for s in 1..4 {
            assert_relative_eq!(b[s].position[0] - b[s - 1].position[0], 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_seeds_identical_members() {
        let mut s = spec(16, 2, 0.1);
        let a = run_member(&s, 0).unwrap();
        s.base_seed = 12;
        let b = run_member(&spec(16, 2, 0.1), 1).unwrap();
        let c = run_member(&s, 0).unwrap();
        assert_eq!(b, c);
        assert_ne!(a, b);
    }

    #[test]
    fn zero_temperature_has_no_spread() {
        let ens = run_ensemble(&spec(16, 3, 0.0), Some(1)).unwrap();
        for r in observable_reports(&ens).unwrap() {
            assert_eq!(r.cumulants.variance.value, 0.0, "{}", r.observable);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = spec(24, 6, 0.2);
        let a = run_ensemble(&s, Some(1)).unwrap();
        let b = run_ensemble(&s, Some(3)).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn single_member_is_rejected() {
        assert!(matches!(run_ensemble(&spec(8, 1, 0.1), None), Err(Error::Estimator(_))));
    }

    #[test]
    fn independence_on_synthetic_blocks() {
        let m = 2000;
        let blocks = synthetic_block_streams(6, m, 3);
        let r = independence_test(&blocks).unwrap();
        let bound = 3.0 / (m as f64).sqrt();
        for s in 0..6 {
            assert_eq!(r.matrix[s][s], Some(1.0));
            for t in 0..6 {
                if s != t {
                    assert!(r.matrix[s][t].unwrap().abs() < bound);
                }
            }
        }
    }

    #[test]
    fn duplicated_blocks_correlate_fully() {
        let a = synthetic_block_streams(1, 100, 4).remove(0);
        let r = independence_test(&[a.clone(), a.clone(), a]).unwrap();
        assert_relative_eq!(r.matrix[0][2].unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.max_adjacent.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_block_flagged_not_fatal() {
        let a = synthetic_block_streams(2, 50, 5);
        let r = independence_test(&[a[0].clone(), vec![1.0; 50], a[1].clone()]).unwrap();
        assert_eq!(r.undefined_blocks, vec![1]);
        assert_eq!(r.matrix[0][1], None);
        assert!(r.matrix[0][2].is_some());
        assert!(independence_test(&[vec![1.0; 10], vec![2.0; 10]]).is_err());
    }

    #[test]
    fn additivity_on_independent_streams() {
        for n in [2, 4, 8] {
            let r = additivity_check(&synthetic_block_streams(n, 4000, 10 + n as u64)).unwrap();
            assert!(r.z_score() < 3.0, "{n}: {r:?}");
        }
    }

    #[test]
    fn additivity_detects_correlation() {
        let a = synthetic_block_streams(2, 2000, 6);
        let b: Vec<f64> = a[0].iter().zip(&a[1]).map(|(x, y)| x + 0.5 * y).collect();
        let r = additivity_check(&[a[0].clone(), b]).unwrap();
        assert!(r.z_score() > 10.0);
    }

    #[test]
    fn additivity_jackknife_matches_brute_force() {
        let blocks = synthetic_block_streams(3, 40, 7);
        let r = additivity_check(&blocks).unwrap();
        let m = 40;
        let diff = |skip: usize| {
            let keep: Vec<Vec<f64>> = blocks
                .iter()
                .map(|b| b.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, x)| *x).collect())
                .collect();
            let total: Vec<f64> = (0..m - 1).map(|i| keep.iter().map(|b| b[i]).sum()).collect();
            variance(&total) - keep.iter().map(|b| variance(b)).sum::<f64>()
        };
        let loo: Vec<f64> = (0..m).map(diff).collect();
        let lm = mean(&loo);
        let se = ((m as f64 - 1.0) / m as f64 * loo.iter().map(|d| (d - lm).powi(2)).sum::<f64>()).sqrt();
        assert_relative_eq!(r.joint_stderr, se, max_relative = 1e-9);
    }

    #[test]
    fn synthetic_scaling_slope_is_one_half() {
        let n_list = [16, 32, 64, 128, 256, 512];
        let s = synthetic_scaling(&n_list, 400, 8).unwrap();
        let fit = s.fit.unwrap();
        assert!((fit.slope - 0.5).abs() < 3.0 * fit.slope_stderr, "{fit:?}");
    }

    #[test]
    fn scaling_needs_four_sizes() {
        assert!(scaling_study(&spec(8, 3, 0.1), &[8, 16, 16, 32], Some(1)).is_err());
    }

    #[test]
    fn report_csv_shape() {
        let ens = run_ensemble(&spec(16, 5, 0.1), Some(1)).unwrap();
        let reports = observable_reports(&ens).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // 3 times × (2·3 CM components + 3 energies + 4 blocks)
        assert_eq!(lines.len(), 1 + 3 * 13);
        assert!(lines.iter().all(|l| l.split(',').count() == 11));

        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
        assert!(text.lines().nth(1).unwrap().starts_with("0,0.0000000000000000e0,"));
    }
}
