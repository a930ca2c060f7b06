//! JSON experiment configuration.
//!
//! One file describes the body, its forces and the initial condition. The
//! optional sections `coords`, `md`, `ensemble` and `quantum` hold the settings
//! of the matching subcommand. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use emergence_core::coords::BodyConfig;
use emergence_core::mdsim::{Model, ScenarioSpec};
use emergence_core::potentials::{ExternalPotentialSpec, PairPotentialSpec};
use emergence_core::qsim::{GridSpec, QuantumParams, WavePacket};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub body: BodyConfig,
    pub pair: PairPotentialSpec,
    pub external: ExternalPotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    /// Seed of the initial condition; ensemble members use `seed + k`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<CoordsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md: Option<MdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<QuantumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// `dt = null` picks a fraction of the shortest linearized period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub dt: Option<f64>,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub record_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordsConfig {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_random_states")]
    pub random_states: usize,
    /// Exact bracket checks are cubic in `N`; larger entries of `n_list` skip them.
    #[serde(default = "default_bracket_max_n")]
    pub bracket_max_n: usize,
}

impl Default for CoordsConfig {
    fn default() -> Self {
        Self {
            n_list: default_n_list(),
            random_states: default_random_states(),
            bracket_max_n: default_bracket_max_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdConfig {
    #[serde(default = "default_energy_tolerance")]
    pub energy_tolerance: f64,
    #[serde(default = "default_energy_tolerance")]
    pub decoupling_tolerance: f64,
    /// Relative `e_cm` change between records that counts as floor contact.
    #[serde(default = "default_contact_tolerance")]
    pub contact_tolerance: f64,
    /// Relative amplitudes for a quartic dissipation sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_sweep: Option<Vec<f64>>,
}

impl Default for MdConfig {
    fn default() -> Self {
        Self {
            energy_tolerance: default_energy_tolerance(),
            decoupling_tolerance: default_energy_tolerance(),
            contact_tolerance: default_contact_tolerance(),
            amplitude_sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub sample_times: Vec<f64>,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    /// Atom counts of a fluctuation-scaling study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumConfig {
    #[serde(default = "one_f64")]
    pub hbar: f64,
    #[serde(default = "one_f64")]
    pub mass: f64,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_sample_stride")]
    pub sample_stride: usize,
    pub grid: GridSpec,
    pub initial: WavePacket,
    /// Defaults to a spring of unit stiffness and zero rest length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairPotentialSpec>,
    #[serde(default = "default_purity_threshold")]
    pub purity_threshold: f64,
    #[serde(default = "default_purity_tolerance")]
    pub purity_tolerance: f64,
    #[serde(default = "default_norm_tolerance")]
    pub norm_tolerance: f64,
    #[serde(default = "default_residual_tolerance")]
    pub residual_tolerance: f64,
    #[serde(default = "default_quantum_energy_tolerance")]
    pub energy_tolerance: f64,
    /// Initial CM widths for the expectation-gap sweep, evaluated at `gap_time`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_sweep: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_time: Option<f64>,
}

impl QuantumConfig {
    pub fn params(&self) -> QuantumParams {
        QuantumParams {
            hbar: self.hbar,
            mass: self.mass,
            dt: self.dt,
            n_steps: self.n_steps,
            sample_stride: self.sample_stride,
            grid: self.grid,
            initial: self.initial,
            pair: self.pair.clone(),
        }
    }
}

fn one() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn default_n_list() -> Vec<usize> {
    vec![2, 3, 64, 512, 4096]
}
fn default_random_states() -> usize {
    100
}
fn default_bracket_max_n() -> usize {
    64
}
fn default_energy_tolerance() -> f64 {
    1e-6
}
fn default_contact_tolerance() -> f64 {
    1e-9
}
fn default_blocks() -> usize {
    4
}
fn default_slope_tolerance() -> f64 {
    0.05
}
fn default_sample_stride() -> usize {
    100
}
fn default_purity_threshold() -> f64 {
    0.999
}
fn default_purity_tolerance() -> f64 {
    1e-6
}
fn default_norm_tolerance() -> f64 {
    1e-9
}
fn default_residual_tolerance() -> f64 {
    1e-6
}
fn default_quantum_energy_tolerance() -> f64 {
    1e-8
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(CliError::Schema)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model().validate()?;
        if let Some(sc) = &self.scenario {
            sc.validate(&self.model())?;
        }
        if let Some(i) = &self.integrator {
            if i.record_stride == 0 {
                return Err(CliError::invalid("integrator.record_stride must be at least 1"));
            }
            if let Some(dt) = i.dt {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(CliError::invalid(format!("integrator.dt must be positive, got {dt}")));
                }
            }
        }
        if let Some(q) = &self.quantum {
            q.params().validate()?;
            self.external.validate(1)?;
        }
        Ok(())
    }

    pub fn model(&self) -> Model {
        Model {
            body: self.body.clone(),
            pair: self.pair.clone(),
            external: self.external.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form, after command-line overrides.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, CliError> {
        self.integrator
            .ok_or_else(|| CliError::invalid("this subcommand needs an `integrator` section"))
    }

    pub fn scenario(&self) -> Result<&ScenarioSpec, CliError> {
        self.scenario
            .as_ref()
            .ok_or_else(|| CliError::invalid("this subcommand needs a `scenario` section"))
    }
}

