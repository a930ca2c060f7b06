//! External and pair potentials.
//!
//! Every external potential here is a sum of per-axis functions,
//! `V(r) = Σ_α f_α(r_α)`, so its Hessian and third-derivative tensor are
//! diagonal. Values carry the atomic mass where the physical form has one
//! (`m g z`, `½ m ω² x²`); the quartic coefficient and polynomial
//! coefficients are energies per length power.

use serde::{Deserialize, Serialize};

use crate::coords::{center_of_mass, inertia_tensor, BodyConfig, InertiaTensor, PhaseState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExternalPotentialSpec {
    /// `m g z` along the last axis, plus an optional one-sided floor `A z⁴` for `z < 0`.
    Gravity {
        g: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor_stiffness: Option<f64>,
    },
    /// `½ m ω² r²`.
    Harmonic { omega: f64 },
    /// `Σ_α ½ m ω² x_α² + λ x_α⁴`.
    Quartic { omega: f64, lambda: f64 },
    /// `Σ_α Σ_n c_{α,n} x_α^n`, defined on `|x_α| ≤ half_width`.
    Polynomial { coeffs: Vec<Vec<f64>>, half_width: f64 },
}

/// Value and derivatives through third order at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `dim × dim`, row-major.
    pub hessian: Vec<f64>,
    /// `dim × dim × dim`, row-major.
    pub third: Vec<f64>,
}

impl DerivativeBundle {
    pub fn hess(&self, a: usize, b: usize) -> f64 {
        let d = self.gradient.len();
        self.hessian[a * d + b]
    }

    pub fn third(&self, a: usize, b: usize, c: usize) -> f64 {
        let d = self.gradient.len();
        self.third[(a * d + b) * d + c]
    }
}

impl ExternalPotentialSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            Self::Gravity { g, floor_stiffness } => {
                if !g.is_finite() {
                    return bad(format!("gravity g must be finite, got {g}"));
                }
                if let Some(a) = floor_stiffness {
                    if !(*a > 0.0 && a.is_finite()) {
                        return bad(format!("floor_stiffness must be positive, got {a}"));
                    }
                }
            }
            Self::Harmonic { omega } => {
                if !(*omega > 0.0 && omega.is_finite()) {
                    return bad(format!("harmonic omega must be positive, got {omega}"));
                }
            }
            Self::Quartic { omega, lambda } => {
                if !(*omega >= 0.0 && omega.is_finite() && *lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!(
                        "quartic needs omega >= 0 and lambda >= 0, got omega={omega} lambda={lambda}"
                    ));
                }
                if *omega == 0.0 && *lambda == 0.0 {
                    return bad("quartic potential with omega = lambda = 0 is not confining".into());
                }
            }
            Self::Polynomial { coeffs, half_width } => {
                if coeffs.len() != dim {
                    return bad(format!(
                        "polynomial needs one coefficient list per axis ({dim}), got {}",
                        coeffs.len()
                    ));
                }
                if !(*half_width > 0.0 && half_width.is_finite()) {
                    return bad(format!("polynomial half_width must be positive, got {half_width}"));
                }
                if coeffs.iter().flatten().any(|c| !c.is_finite()) {
                    return bad("polynomial coefficients must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// `[f, f', f'', f''']` of the per-axis term on axis `axis` of a `dim`-dimensional space.
    pub fn axis_terms(&self, axis: usize, dim: usize, x: f64, mass: f64) -> Result<[f64; 4]> {
        Ok(match self {
            Self::Gravity { g, floor_stiffness } => {
                if axis + 1 != dim {
                    return Ok([0.0; 4]);
                }
                let mut t = [mass * g * x, mass * g, 0.0, 0.0];
                if let (Some(a), true) = (floor_stiffness, x < 0.0) {
                    let x2 = x * x;
                    t[0] += a * x2 * x2;
                    t[1] += 4.0 * a * x2 * x;
                    t[2] += 12.0 * a * x2;
                    t[3] += 24.0 * a * x;
                }
                t
            }
            Self::Harmonic { omega } => {
                let k = mass * omega * omega;
                [0.5 * k * x * x, k * x, k, 0.0]
            }
            Self::Quartic { omega, lambda } => {
                let k = mass * omega * omega;
                let x2 = x * x;
                [
                    0.5 * k * x2 + lambda * x2 * x2,
                    k * x + 4.0 * lambda * x2 * x,
                    k + 12.0 * lambda * x2,
                    24.0 * lambda * x,
                ]
            }
            Self::Polynomial { coeffs, half_width } => {
                if x.abs() > *half_width {
                    return Err(Error::Domain {
                        point: vec![x],
                        half_width: *half_width,
                    });
                }
                polynomial_terms(&coeffs[axis], x)
            }
        })
    }

    pub fn is_polynomial_of_degree_at_most_two(&self) -> bool {
        match self {
            Self::Gravity { floor_stiffness, .. } => floor_stiffness.is_none(),
            Self::Harmonic { .. } => true,
            Self::Quartic { lambda, .. } => *lambda == 0.0,
            Self::Polynomial { coeffs, .. } => coeffs
                .iter()
                .all(|c| c.iter().skip(3).all(|x| *x == 0.0)),
        }
    }
}

fn polynomial_terms(c: &[f64], x: f64) -> [f64; 4] {
    // Repeated synthetic division gives the Taylor coefficients at x.
    let mut out = [0.0; 4];
    for coef in c.iter().rev() {
        out[3] = out[3] * x + out[2];
        out[2] = out[2] * x + out[1];
        out[1] = out[1] * x + out[0];
        out[0] = out[0] * x + coef;
    }
    // out[k] now holds p^(k)/k!
    [out[0], out[1], 2.0 * out[2], 6.0 * out[3]]
}

pub fn eval_external(spec: &ExternalPotentialSpec, point: &[f64], mass: f64) -> Result<DerivativeBundle> {
    let d = point.len();
    let mut bundle = DerivativeBundle {
        value: 0.0,
        gradient: vec![0.0; d],
        hessian: vec![0.0; d * d],
        third: vec![0.0; d * d * d],
    };
    for (axis, &x) in point.iter().enumerate() {
        let t = spec.axis_terms(axis, d, x, mass).map_err(|e| match e {
            Error::Domain { half_width, .. } => Error::Domain {
                point: point.to_vec(),
                half_width,
            },
            other => other,
        })?;
        bundle.value += t[0];
        bundle.gradient[axis] = t[1];
        bundle.hessian[axis * d + axis] = t[2];
        bundle.third[(axis * d + axis) * d + axis] = t[3];
    }
    Ok(bundle)
}

/// `Σ_j V(r_j)` over all atoms.
pub fn total_external(spec: &ExternalPotentialSpec, state: &PhaseState, cfg: &BodyConfig) -> Result<f64> {
    let d = cfg.dim;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for atom in state.positions.chunks_exact(d) {
        for (axis, &x) in atom.iter().enumerate() {
            let v = spec.axis_terms(axis, d, x, cfg.atom_mass)?[0];
            // Neumaier summation
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
    }
    Ok(sum + comp)
}

/// `N·V(R) + ½ I_αβ ∂²V/∂R_α∂R_β`.
pub fn effective_expansion(
    spec: &ExternalPotentialSpec,
    cm: &[f64],
    inertia: &InertiaTensor,
    cfg: &BodyConfig,
) -> Result<f64> {
    let b = eval_external(spec, cm, cfg.atom_mass)?;
    let d = cm.len();
    let mut coupling = 0.0;
    for a in 0..d {
        for c in 0..d {
            coupling += inertia.get(a, c) * b.hess(a, c);
        }
    }
    Ok(cfg.n_atoms as f64 * b.value + 0.5 * coupling)
}

/// Effective force on the center of mass, split into its point-particle and coupling parts.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveForce {
    /// `−N ∂V/∂R_γ`
    pub point: Vec<f64>,
    /// `−½ I_αβ ∂³V/∂R_γ∂R_α∂R_β`
    pub coupling: Vec<f64>,
}

impl EffectiveForce {
    pub fn total(&self) -> Vec<f64> {
        self.point.iter().zip(&self.coupling).map(|(a, b)| a + b).collect()
    }
}

pub fn effective_cm_force(
    spec: &ExternalPotentialSpec,
    cm: &[f64],
    inertia: &InertiaTensor,
    cfg: &BodyConfig,
) -> Result<EffectiveForce> {
    let b = eval_external(spec, cm, cfg.atom_mass)?;
    let d = cm.len();
    let n = cfg.n_atoms as f64;
    let point = b.gradient.iter().map(|g| -n * g).collect();
    let coupling = (0..d)
        .map(|gamma| {
            let mut acc = 0.0;
            for a in 0..d {
                for c in 0..d {
                    acc += inertia.get(a, c) * b.third(gamma, a, c);
                }
            }
            -0.5 * acc
        })
        .collect();
    Ok(EffectiveForce { point, coupling })
}

/// Exact external energy minus its second-order expansion about the center of mass.
pub fn expansion_error(spec: &ExternalPotentialSpec, state: &PhaseState, cfg: &BodyConfig) -> Result<f64> {
    let exact = total_external(spec, state, cfg)?;
    let cm = center_of_mass(state, cfg);
    let inertia = inertia_tensor(state, cfg);
    Ok(exact - effective_expansion(spec, &cm, &inertia, cfg)?)
}

/// Short-range pair interaction.
///
/// `HarmonicSpring` bonds nearest chain neighbours `(i, i + 1)` only;
/// `LennardJonesTruncated` acts between every pair closer than `cutoff` and is
/// shifted so the energy vanishes continuously there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairPotentialSpec {
    HarmonicSpring { stiffness: f64, rest_length: f64 },
    LennardJonesTruncated { epsilon: f64, sigma: f64, cutoff: f64 },
}

impl PairPotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::HarmonicSpring { stiffness, rest_length } => {
                if !(*stiffness > 0.0 && stiffness.is_finite() && *rest_length >= 0.0 && rest_length.is_finite()) {
                    return Err(Error::Config(format!(
                        "spring needs stiffness > 0 and rest_length >= 0, got {stiffness}, {rest_length}"
                    )));
                }
            }
            Self::LennardJonesTruncated { epsilon, sigma, cutoff } => {
                if !(*epsilon > 0.0 && *sigma > 0.0 && epsilon.is_finite() && sigma.is_finite()) {
                    return Err(Error::Config(format!(
                        "Lennard-Jones needs epsilon > 0 and sigma > 0, got {epsilon}, {sigma}"
                    )));
                }
                if !(cutoff >= sigma && cutoff.is_finite()) {
                    return Err(Error::Config(format!("cutoff {cutoff} must be at least sigma {sigma}")));
                }
            }
        }
        Ok(())
    }

    /// `(u(d), u'(d), u''(d))` at separation `d`.
    pub fn radial(&self, d: f64) -> (f64, f64, f64) {
        match self {
            Self::HarmonicSpring { stiffness, rest_length } => {
                let s = d - rest_length;
                (0.5 * stiffness * s * s, stiffness * s, *stiffness)
            }
            Self::LennardJonesTruncated { epsilon, sigma, cutoff } => {
                if d >= *cutoff {
                    return (0.0, 0.0, 0.0);
                }
                let lj = |r: f64| {
                    let s6 = (sigma / r).powi(6);
                    4.0 * epsilon * (s6 * s6 - s6)
                };
                let s6 = (sigma / d).powi(6);
                let s12 = s6 * s6;
                (
                    lj(d) - lj(*cutoff),
                    4.0 * epsilon * (-12.0 * s12 + 6.0 * s6) / d,
                    4.0 * epsilon * (156.0 * s12 - 42.0 * s6) / (d * d),
                )
            }
        }
    }

    /// Curvature of the bond at the lattice spacing, used for thermal displacements and `dt`.
    pub fn effective_stiffness(&self, lattice_spacing: f64) -> Result<f64> {
        let k = self.radial(lattice_spacing).2;
        if k > 0.0 && k.is_finite() {
            Ok(k)
        } else {
            Err(Error::Config(format!(
                "pair potential has non-positive curvature {k} at the lattice spacing"
            )))
        }
    }

    fn chain_only(&self) -> bool {
        matches!(self, Self::HarmonicSpring { .. })
    }
}

/// Forces on every atom (`N × dim`) and total pair energy.
pub fn pair_forces(spec: &PairPotentialSpec, state: &PhaseState, cfg: &BodyConfig) -> Result<(Vec<f64>, f64)> {
    let mut forces = vec![0.0; state.positions.len()];
    let energy = accumulate_pair_forces(spec, &state.positions, cfg, &mut forces)?;
    Ok((forces, energy))
}

/// Adds pair forces into `forces` and returns the pair energy. Summation order is fixed.
pub fn accumulate_pair_forces(
    spec: &PairPotentialSpec,
    positions: &[f64],
    cfg: &BodyConfig,
    forces: &mut [f64],
) -> Result<f64> {
    let d = cfg.dim;
    let n = cfg.n_atoms;
    let mut energy = 0.0;
    let mut pair = |i: usize, j: usize, forces: &mut [f64]| -> Result<()> {
        let mut sep = [0.0; 3];
        let mut d2 = 0.0;
        for a in 0..d {
            sep[a] = positions[i * d + a] - positions[j * d + a];
            d2 += sep[a] * sep[a];
        }
        let dist = d2.sqrt();
        let scale = match spec {
            PairPotentialSpec::HarmonicSpring { stiffness, rest_length } if *rest_length == 0.0 => {
                energy += 0.5 * stiffness * d2;
                -stiffness
            }
            _ => {
                if dist == 0.0 {
                    return Err(Error::Singularity { i, j });
                }
                let (u, du, _) = spec.radial(dist);
                energy += u;
                -du / dist
            }
        };
        for a in 0..d {
            let f = scale * sep[a];
            forces[i * d + a] += f;
            forces[j * d + a] -= f;
        }
        Ok(())
    };
    if spec.chain_only() {
        for i in 0..n - 1 {
            pair(i, i + 1, forces)?;
        }
    } else if let PairPotentialSpec::LennardJonesTruncated { cutoff, .. } = spec {
        let rc2 = cutoff * cutoff;
        for i in 0..n {
            for j in i + 1..n {
                let mut d2 = 0.0;
                for a in 0..d {
                    let s = positions[i * d + a] - positions[j * d + a];
                    d2 += s * s;
                }
                if d2 < rc2 {
                    pair(i, j, forces)?;
                }
            }
        }
    }
    Ok(energy)
}

/// Pair energy alone.
pub fn pair_energy(spec: &PairPotentialSpec, state: &PhaseState, cfg: &BodyConfig) -> Result<f64> {
    Ok(pair_forces(spec, state, cfg)?.1)
}
