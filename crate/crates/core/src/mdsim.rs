//! Classical molecular dynamics of the whole chain.
//!
//! Integration is velocity Verlet with one force evaluation per step. The
//! recorded observables are the center-of-mass energy
//! `E_CM = P²/2Nm + N·V(R)`, the total energy, the relative kinetic energy and
//! the inertia tensor about the center of mass.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coords::{
    center_of_mass, inertia_tensor, kinetic_decomposition, total_momentum, BodyConfig, InertiaTensor, PhaseState,
};
use crate::error::{Error, Result};
use crate::potentials::{accumulate_pair_forces, eval_external, ExternalPotentialSpec, PairPotentialSpec};

/// Default time step as a fraction of the shortest linearized period.
pub const DEFAULT_PERIOD_FRACTION: f64 = 0.001;

/// Everything that defines the forces on the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub body: BodyConfig,
    pub pair: PairPotentialSpec,
    pub external: ExternalPotentialSpec,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        self.body.validate()?;
        self.pair.validate()?;
        self.external.validate(self.body.dim)
    }

    /// Total forces into `forces`; returns `(pair energy, external energy)`.
    pub fn forces(&self, positions: &[f64], forces: &mut [f64]) -> Result<(f64, f64)> {
        forces.iter_mut().for_each(|f| *f = 0.0);
        let pair = accumulate_pair_forces(&self.pair, positions, &self.body, forces)?;
        let d = self.body.dim;
        let m = self.body.atom_mass;
        let mut external = 0.0;
        for (x, f) in positions.iter().zip(forces.iter_mut()).enumerate().map(|(k, (x, f))| ((k % d, *x), f)) {
            let t = self.external.axis_terms(x.0, d, x.1, m)?;
            external += t[0];
            *f -= t[1];
        }
        Ok((pair, external))
    }

    /// Largest linearized angular frequency of the chain in the given state.
    pub fn max_frequency(&self, state: &PhaseState) -> Result<f64> {
        let m = self.body.atom_mass;
        let d = self.body.dim;
        let kappa = self.pair.effective_stiffness(self.body.lattice_spacing)?;
        let mut curvature = 0.0f64;
        for atom in state.positions.chunks_exact(d) {
            for (axis, &x) in atom.iter().enumerate() {
                curvature = curvature.max(self.external.axis_terms(axis, d, x, m)?[2]);
            }
        }
        if let ExternalPotentialSpec::Gravity { g, floor_stiffness: Some(a) } = &self.external {
            // Worst case: the whole body's energy above the floor pushes into it.
            let z = center_of_mass(state, &self.body)[d - 1];
            let kinetic = kinetic_decomposition(state, &self.body).total();
            let budget = self.body.total_mass() * g.abs() * z.max(0.0) + kinetic + 1e-12;
            let depth = (budget / a).powf(0.25);
            curvature = curvature.max(12.0 * a * depth * depth);
        }
        Ok(((4.0 * kappa + curvature) / m).sqrt())
    }

    /// `fraction` of the shortest linearized period.
    pub fn suggest_dt(&self, state: &PhaseState, fraction: f64) -> Result<f64> {
        Ok(fraction * 2.0 * std::f64::consts::PI / self.max_frequency(state)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorParams {
    pub dt: f64,
    pub n_steps: usize,
    pub record_stride: usize,
}

impl IntegratorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Heuristic stability bound `dt < 0.1/ω_max`.
    pub fn check_stability(&self, omega_max: f64) -> Result<()> {
        if self.dt * omega_max >= 0.1 {
            return Err(Error::Config(format!(
                "dt = {} violates the stability bound dt < 0.1/ω_max = {}",
                self.dt,
                0.1 / omega_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    HarmonicTrap,
    QuarticTrap,
    /// Gravity, with or without the floor set on the external potential.
    GravityFloorDrop,
}

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub cm_offset: Vec<f64>,
    pub cm_velocity: Vec<f64>,
    /// Temperature of the relative degrees of freedom (`k_B = 1`).
    pub temperature: f64,
    /// Keep the total momentum of the sampled atomic momenta instead of projecting it out.
    #[serde(default)]
    pub thermal_cm: bool,
}

impl ScenarioSpec {
    pub fn validate(&self, model: &Model) -> Result<()> {
        let d = model.body.dim;
        if self.cm_offset.len() != d {
            return Err(Error::Shape {
                what: "cm_offset",
                expected: d,
                found: self.cm_offset.len(),
            });
        }
        if self.cm_velocity.len() != d {
            return Err(Error::Shape {
                what: "cm_velocity",
                expected: d,
                found: self.cm_velocity.len(),
            });
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        let matches = matches!(
            (self.kind, &model.external),
            (ScenarioKind::HarmonicTrap, ExternalPotentialSpec::Harmonic { .. })
                | (ScenarioKind::QuarticTrap, ExternalPotentialSpec::Quartic { .. })
                | (ScenarioKind::GravityFloorDrop, ExternalPotentialSpec::Gravity { .. })
        );
        if !matches {
            return Err(Error::Config(format!(
                "scenario {:?} does not match external potential {:?}",
                self.kind, model.external
            )));
        }
        Ok(())
    }

    /// Thermalized chain centred at `cm_offset`, boosted by `cm_velocity`.
    pub fn prepare(&self, model: &Model, seed: u64) -> Result<PhaseState> {
        self.validate(model)?;
        let cfg = &model.body;
        let mut state = sample_lattice(cfg, &model.pair, self.temperature, &self.cm_offset, seed, !self.thermal_cm)?;
        let d = cfg.dim;
        for atom in state.momenta.chunks_exact_mut(d) {
            for (p, v) in atom.iter_mut().zip(&self.cm_velocity) {
                *p += v * cfg.atom_mass;
            }
        }
        Ok(state)
    }
}

/// Chain on lattice sites along axis 0 with Gaussian displacements and momenta.
///
/// Displacements have variance `T/κ_eff` per component, momenta `m T`. The
/// total momentum is then projected out and the center of mass moved to `center`.
pub fn thermalize_relative(
    cfg: &BodyConfig,
    pair: &PairPotentialSpec,
    temperature: f64,
    center: &[f64],
    seed: u64,
) -> Result<PhaseState> {
    sample_lattice(cfg, pair, temperature, center, seed, true)
}

fn sample_lattice(
    cfg: &BodyConfig,
    pair: &PairPotentialSpec,
    temperature: f64,
    center: &[f64],
    seed: u64,
    project_momentum: bool,
) -> Result<PhaseState> {
    cfg.validate()?;
    if !(temperature >= 0.0) {
        return Err(Error::Config(format!("temperature must be non-negative, got {temperature}")));
    }
    let d = cfg.dim;
    if center.len() != d {
        return Err(Error::Shape {
            what: "center",
            expected: d,
            found: center.len(),
        });
    }
    let n = cfg.n_atoms;
    let mut state = PhaseState::zeros(cfg);
    let half = (n - 1) as f64 / 2.0;
    for i in 0..n {
        state.positions[i * d] = (i as f64 - half) * cfg.lattice_spacing;
    }
    if temperature > 0.0 {
        let kappa = pair.effective_stiffness(cfg.lattice_spacing)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let disp = Normal::new(0.0, (temperature / kappa).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let mom = Normal::new(0.0, (cfg.atom_mass * temperature).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        for x in state.positions.iter_mut() {
            *x += disp.sample(&mut rng);
        }
        for p in state.momenta.iter_mut() {
            *p = mom.sample(&mut rng);
        }
        if project_momentum {
            let p = total_momentum(&state, cfg);
            for atom in state.momenta.chunks_exact_mut(d) {
                for (x, total) in atom.iter_mut().zip(&p) {
                    *x -= total / n as f64;
                }
            }
        }
    }
    let r = center_of_mass(&state, cfg);
    for atom in state.positions.chunks_exact_mut(d) {
        for a in 0..d {
            atom[a] += center[a] - r[a];
        }
    }
    Ok(state)
}

/// `P²/2Nm + N·V(R)`.
pub fn cm_energy(state: &PhaseState, cfg: &BodyConfig, external: &ExternalPotentialSpec) -> Result<f64> {
    let r = center_of_mass(state, cfg);
    let p = total_momentum(state, cfg);
    let kinetic = p.iter().map(|x| x * x).sum::<f64>() / (2.0 * cfg.total_mass());
    Ok(kinetic + cfg.n_atoms as f64 * eval_external(external, &r, cfg.atom_mass)?.value)
}

/// Velocity-Verlet integrator that carries the forces of the current state.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    model: &'a Model,
    dt: f64,
    state: PhaseState,
    forces: Vec<f64>,
    pair_energy: f64,
    external_energy: f64,
    steps: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(model: &'a Model, state: PhaseState, dt: f64) -> Result<Self> {
        state.validate(&model.body)?;
        let mut forces = vec![0.0; state.positions.len()];
        let (pair_energy, external_energy) = model.forces(&state.positions, &mut forces)?;
        Ok(Self {
            model,
            dt,
            state,
            forces,
            pair_energy,
            external_energy,
            steps: 0,
        })
    }

    pub fn state(&self) -> &PhaseState {
        &self.state
    }

    pub fn into_state(self) -> PhaseState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn total_energy(&self) -> f64 {
        let kinetic = self.state.momenta.iter().map(|p| p * p).sum::<f64>() / (2.0 * self.model.body.atom_mass);
        kinetic + self.pair_energy + self.external_energy
    }

    pub fn potential_energies(&self) -> (f64, f64) {
        (self.pair_energy, self.external_energy)
    }

    pub fn advance(&mut self) -> Result<()> {
        let half = 0.5 * self.dt;
        let inv_m = 1.0 / self.model.body.atom_mass;
        for (p, f) in self.state.momenta.iter_mut().zip(&self.forces) {
            *p += half * f;
        }
        for (x, p) in self.state.positions.iter_mut().zip(&self.state.momenta) {
            *x += self.dt * p * inv_m;
        }
        self.steps += 1;
        let (pair, external) = self
            .model
            .forces(&self.state.positions, &mut self.forces)
            .map_err(|e| match e {
                Error::Singularity { i, j } => Error::BlowUp {
                    step: self.steps,
                    detail: format!("atoms {i} and {j} collided"),
                },
                other => other,
            })?;
        if !(pair.is_finite() && external.is_finite()) || self.forces.iter().any(|f| !f.is_finite()) {
            return Err(Error::BlowUp {
                step: self.steps,
                detail: "non-finite force".into(),
            });
        }
        self.pair_energy = pair;
        self.external_energy = external;
        for (p, f) in self.state.momenta.iter_mut().zip(&self.forces) {
            *p += half * f;
        }
        self.state.time += self.dt;
        Ok(())
    }

    pub fn advance_by(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.advance()?;
        }
        Ok(())
    }
}

/// One velocity-Verlet step from `state`.
pub fn step(state: &PhaseState, model: &Model, dt: f64) -> Result<PhaseState> {
    let mut integ = Integrator::new(model, state.clone(), dt)?;
    integ.advance()?;
    Ok(integ.into_state())
}

/// Observables recorded along a trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub times: Vec<f64>,
    pub cm_position: Vec<Vec<f64>>,
    pub cm_momentum: Vec<Vec<f64>>,
    pub e_cm: Vec<f64>,
    pub e_total: Vec<f64>,
    pub inertia: Vec<InertiaTensor>,
    pub rel_kinetic: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, integ: &Integrator<'_>) -> Result<()> {
        let model = integ.model;
        let state = integ.state();
        self.times.push(state.time);
        self.cm_position.push(center_of_mass(state, &model.body));
        self.cm_momentum.push(total_momentum(state, &model.body));
        self.e_cm.push(cm_energy(state, &model.body, &model.external)?);
        self.e_total.push(integ.total_energy());
        self.inertia.push(inertia_tensor(state, &model.body));
        self.rel_kinetic.push(kinetic_decomposition(state, &model.body).rel_kinetic);
        Ok(())
    }

    /// `max_t |e(t) − e(0)| / |e(0)|` for a recorded energy series.
    pub fn max_relative_drift(series: &[f64]) -> f64 {
        let e0 = series[0];
        series.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs()
    }

    pub fn header(&self) -> String {
        let d = self.dim;
        let mut cols = vec!["time".to_string()];
        cols.extend((0..d).map(|a| format!("R{a}")));
        cols.extend((0..d).map(|a| format!("P{a}")));
        cols.extend(["e_cm", "e_total", "rel_kinetic"].map(String::from));
        for a in 0..d {
            for b in a..d {
                cols.push(format!("I{a}{b}"));
            }
        }
        cols.join(",")
    }

    /// One header line, then one row per record with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            row.extend(&self.cm_position[k]);
            row.extend(&self.cm_momentum[k]);
            row.extend([self.e_cm[k], self.e_total[k], self.rel_kinetic[k]]);
            row.extend(self.inertia[k].upper_triangle());
            writeln!(out, "{}", format_row(&row))?;
        }
        Ok(())
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_row(values: &[f64]) -> String {
    values.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(",")
}

/// Integrates `params.n_steps` steps, recording every `record_stride` steps (and the start).
pub fn run(initial: &PhaseState, model: &Model, params: &IntegratorParams) -> Result<TrajectoryRecord> {
    params.validate()?;
    let mut integ = Integrator::new(model, initial.clone(), params.dt)?;
    let mut record = TrajectoryRecord {
        dim: model.body.dim,
        ..Default::default()
    };
    record.push(&integ)?;
    for k in 1..=params.n_steps {
        integ.advance()?;
        if k % params.record_stride == 0 {
            record.push(&integ)?;
        }
    }
    Ok(record)
}

/// Airborne phases before and after the first floor contact.
///
/// While no atom touches the floor `E_CM` is exactly conserved, so contact is
/// detected as a relative change of `e_cm` above `tolerance` between records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BounceSummary {
    pub contact_start: f64,
    pub contact_end: f64,
    pub pre_e_cm: f64,
    pub post_e_cm: f64,
    pub pre_rel_kinetic: f64,
    pub post_rel_kinetic: f64,
}

pub fn bounce_summary(traj: &TrajectoryRecord, tolerance: f64) -> Option<BounceSummary> {
    let n = traj.len();
    let scale = traj.e_cm.iter().fold(0.0f64, |a, e| a.max(e.abs())).max(f64::MIN_POSITIVE);
    let flat: Vec<bool> = (0..n.saturating_sub(1))
        .map(|k| (traj.e_cm[k + 1] - traj.e_cm[k]).abs() <= tolerance * scale)
        .collect();
    let first_contact = flat.iter().position(|f| !f)?;
    let leave = first_contact + flat[first_contact..].iter().position(|f| *f)?;
    let back = flat[leave..].iter().position(|f| !f).map_or(n - 1, |k| leave + k);
    if first_contact == 0 || back <= leave {
        return None;
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Some(BounceSummary {
        contact_start: traj.times[first_contact],
        contact_end: traj.times[leave],
        pre_e_cm: traj.e_cm[0],
        post_e_cm: traj.e_cm[leave],
        pre_rel_kinetic: mean(&traj.rel_kinetic[..=first_contact]),
        post_rel_kinetic: mean(&traj.rel_kinetic[leave..=back]),
    })
}

/// Measured `dE_CM/dt` against `−½ I_αβ ∂³V/∂R_γ∂R_α∂R_β · dR_γ/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    /// `RMS(lhs − rhs) / RMS(lhs)`; `NaN` when `lhs` vanishes identically.
    pub rms_ratio: f64,
    pub rms_lhs: f64,
    pub rms_rhs: f64,
}

impl DissipationReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,lhs,rhs,residual")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{}",
                format_row(&[self.times[k], self.lhs[k], self.rhs[k], self.residual[k]])
            )?;
        }
        Ok(())
    }
}

pub fn dissipation_diagnostic(
    traj: &TrajectoryRecord,
    external: &ExternalPotentialSpec,
    cfg: &BodyConfig,
) -> Result<DissipationReport> {
    if traj.len() < 3 {
        return Err(Error::Diagnostic(format!(
            "need at least 3 recorded samples, got {}",
            traj.len()
        )));
    }
    let d = cfg.dim;
    let total_mass = cfg.total_mass();
    let mut report = DissipationReport {
        times: Vec::new(),
        lhs: Vec::new(),
        rhs: Vec::new(),
        residual: Vec::new(),
        rms_ratio: f64::NAN,
        rms_lhs: 0.0,
        rms_rhs: 0.0,
    };
    for k in 1..traj.len() - 1 {
        let lhs = (traj.e_cm[k + 1] - traj.e_cm[k - 1]) / (traj.times[k + 1] - traj.times[k - 1]);
        let b = eval_external(external, &traj.cm_position[k], cfg.atom_mass)?;
        let inertia = &traj.inertia[k];
        let mut rhs = 0.0;
        for gamma in 0..d {
            let velocity = traj.cm_momentum[k][gamma] / total_mass;
            let mut contraction = 0.0;
            for a in 0..d {
                for c in 0..d {
                    contraction += inertia.get(a, c) * b.third(gamma, a, c);
                }
            }
            rhs -= 0.5 * contraction * velocity;
        }
        report.times.push(traj.times[k]);
        report.lhs.push(lhs);
        report.rhs.push(rhs);
        report.residual.push(lhs - rhs);
    }
    let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
    report.rms_lhs = rms(&report.lhs);
    report.rms_rhs = rms(&report.rhs);
    if report.rms_lhs > 0.0 {
        report.rms_ratio = rms(&report.residual) / report.rms_lhs;
    }
    Ok(report)
}

/// Quartic trap and scenario rescaled to the length scale `ℓ = L/ε`, `L` the chain length.
///
/// `λ → λ/ℓ²` and `cm_offset → ℓ·cm_offset`, so `ε` is the body size over the
/// anharmonic length scale while `ω` and the energy per atom scale together.
pub fn rescale_quartic(model: &Model, scenario: &ScenarioSpec, epsilon: f64) -> Result<(Model, ScenarioSpec)> {
    let ExternalPotentialSpec::Quartic { omega, lambda } = model.external else {
        return Err(Error::Config("amplitude sweeps need a quartic external potential".into()));
    };
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("sweep amplitude must be positive, got {epsilon}")));
    }
    let length = (model.body.n_atoms - 1) as f64 * model.body.lattice_spacing / epsilon;
    let mut m = model.clone();
    m.external = ExternalPotentialSpec::Quartic {
        omega,
        lambda: lambda / (length * length),
    };
    let mut sc = scenario.clone();
    sc.cm_offset.iter_mut().for_each(|x| *x *= length);
    Ok((m, sc))
}

/// One run of an amplitude sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub dt: f64,
    pub rms_ratio: f64,
    pub e_total_drift: f64,
    /// Mean `e_cm` over the first and last tenth of the records.
    pub early_e_cm: f64,
    pub late_e_cm: f64,
}

/// Dissipation diagnostic over a set of relative amplitudes, runs in parallel.
///
/// `dt = None` picks [`DEFAULT_PERIOD_FRACTION`] of the shortest period of each start state.
pub fn dissipation_sweep(
    model: &Model,
    scenario: &ScenarioSpec,
    epsilons: &[f64],
    dt: Option<f64>,
    n_steps: usize,
    record_stride: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    use rayon::prelude::*;
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let (m, sc) = rescale_quartic(model, scenario, epsilon)?;
            let start = sc.prepare(&m, seed)?;
            let dt = match dt {
                Some(dt) => dt,
                None => m.suggest_dt(&start, DEFAULT_PERIOD_FRACTION)?,
            };
            let traj = run(&start, &m, &IntegratorParams { dt, n_steps, record_stride })?;
            let diag = dissipation_diagnostic(&traj, &m.external, &m.body)?;
            let tenth = (traj.len() / 10).max(1);
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            Ok(SweepPoint {
                epsilon,
                dt,
                rms_ratio: diag.rms_ratio,
                e_total_drift: TrajectoryRecord::max_relative_drift(&traj.e_total),
                early_e_cm: mean(&traj.e_cm[..tenth]),
                late_e_cm: mean(&traj.e_cm[traj.len() - tenth..]),
            })
        })
        .collect()
}
