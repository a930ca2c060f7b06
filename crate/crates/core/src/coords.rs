//! Center-of-mass and relative coordinates of an `N`-atom chain.
//!
//! Positions transform as
//!
//! ```text
//! R     = (1/N) Σ_i r_i
//! r̃_j   = r_j − r_{j+1},          j = 0..N−1
//! ```
//!
//! and momenta with the canonical conjugate map
//!
//! ```text
//! P     = Σ_i p_i
//! p̃_j   = Σ_i a(j, i) p_i
//! ```
//!
//! where `a(j, i)` are the coefficients of the inverse position map,
//! `r_i = R + Σ_j a(j, i) r̃_j`. Indices are zero-based throughout: relative
//! index `j` pairs atoms `j` and `j + 1`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub n_atoms: usize,
    pub atom_mass: f64,
    pub dim: usize,
    pub lattice_spacing: f64,
}

impl BodyConfig {
    pub fn new(n_atoms: usize, dim: usize) -> Self {
        Self {
            n_atoms,
            atom_mass: 1.0,
            dim,
            lattice_spacing: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 2 {
            return Err(Error::Config(format!(
                "n_atoms must be at least 2, got {}",
                self.n_atoms
            )));
        }
        if !(self.atom_mass > 0.0 && self.atom_mass.is_finite()) {
            return Err(Error::Config(format!(
                "atom_mass must be positive, got {}",
                self.atom_mass
            )));
        }
        if self.dim != 1 && self.dim != 3 {
            return Err(Error::Config(format!(
                "dim must be 1 or 3, got {}",
                self.dim
            )));
        }
        if !(self.lattice_spacing > 0.0 && self.lattice_spacing.is_finite()) {
            return Err(Error::Config(format!(
                "lattice_spacing must be positive, got {}",
                self.lattice_spacing
            )));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.n_atoms as f64 * self.atom_mass
    }

    pub fn n_relative(&self) -> usize {
        self.n_atoms - 1
    }
}

/// Atomic positions and momenta, stored row-major as `N × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub time: f64,
}

impl PhaseState {
    pub fn zeros(cfg: &BodyConfig) -> Self {
        let len = cfg.n_atoms * cfg.dim;
        Self {
            positions: vec![0.0; len],
            momenta: vec![0.0; len],
            time: 0.0,
        }
    }

    pub fn validate(&self, cfg: &BodyConfig) -> Result<()> {
        let expected = cfg.n_atoms * cfg.dim;
        if self.positions.len() != expected {
            return Err(Error::Shape {
                what: "positions",
                expected,
                found: self.positions.len(),
            });
        }
        if self.momenta.len() != expected {
            return Err(Error::Shape {
                what: "momenta",
                expected,
                found: self.momenta.len(),
            });
        }
        if !self
            .positions
            .iter()
            .chain(self.momenta.iter())
            .all(|x| x.is_finite())
        {
            return Err(Error::Config("phase state contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn position(&self, atom: usize, dim: usize) -> &[f64] {
        &self.positions[atom * dim..(atom + 1) * dim]
    }

    pub fn momentum(&self, atom: usize, dim: usize) -> &[f64] {
        &self.momenta[atom * dim..(atom + 1) * dim]
    }
}

/// State expressed in center-of-mass and relative coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CmDecomposition {
    pub cm_position: Vec<f64>,
    pub cm_momentum: Vec<f64>,
    /// `(N − 1) × dim`, row-major.
    pub rel_positions: Vec<f64>,
    /// `(N − 1) × dim`, row-major.
    pub rel_momenta: Vec<f64>,
}

impl CmDecomposition {
    fn validate(&self, cfg: &BodyConfig) -> Result<()> {
        let d = cfg.dim;
        let rel = cfg.n_relative() * d;
        for (what, len, expected) in [
            ("cm_position", self.cm_position.len(), d),
            ("cm_momentum", self.cm_momentum.len(), d),
            ("rel_positions", self.rel_positions.len(), rel),
            ("rel_momenta", self.rel_momenta.len(), rel),
        ] {
            if len != expected {
                return Err(Error::Shape {
                    what,
                    expected,
                    found: len,
                });
            }
        }
        Ok(())
    }
}

/// Coefficients `a(j, i)` of the inverse position transform, evaluated lazily.
///
/// Closed form: `a(j, i) = [j ≥ i] − (j + 1)/N` (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformCoefficients {
    n_atoms: usize,
}

/// A run of identical coefficient values `value` over atoms `start..end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRun {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

impl TransformCoefficients {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// `a(rel, atom)`.
    pub fn get(&self, rel: usize, atom: usize) -> f64 {
        debug_assert!(rel + 1 < self.n_atoms && atom < self.n_atoms);
        let step = if rel >= atom { 1.0 } else { 0.0 };
        step - (rel + 1) as f64 / self.n_atoms as f64
    }

    /// Exact rational value of `a(rel, atom)`.
    pub fn exact(&self, rel: usize, atom: usize) -> Ratio<i64> {
        let step = Ratio::from_integer(i64::from(rel >= atom));
        step - Ratio::new((rel + 1) as i64, self.n_atoms as i64)
    }

    /// Row `rel` as piecewise-constant runs covering atoms `0..N`.
    pub fn row_runs(&self, rel: usize) -> [CoefficientRun; 2] {
        let n = self.n_atoms;
        [
            CoefficientRun {
                start: 0,
                end: rel + 1,
                value: self.get(rel, 0),
            },
            CoefficientRun {
                start: rel + 1,
                end: n,
                value: self.get(rel, n - 1),
            },
        ]
    }
}

pub fn inverse_coefficients(cfg: &BodyConfig) -> TransformCoefficients {
    TransformCoefficients {
        n_atoms: cfg.n_atoms,
    }
}

/// The `(N − 1) × (N − 1)` tridiagonal matrix with 2 on the diagonal and −1 off it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMatrix {
    size: usize,
}

impl KMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        if j == k {
            2.0
        } else if j.abs_diff(k) == 1 {
            -1.0
        } else {
            0.0
        }
    }

    pub fn dense(&self) -> Vec<f64> {
        let n = self.size;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                out[j * n + k] = self.get(j, k);
            }
        }
        out
    }

    /// `Σ_jk K_jk x_j·y_k` for `dim`-vectors stored row-major.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64], dim: usize) -> f64 {
        let n = self.size;
        let dot = |a: usize, b: usize| -> f64 {
            (0..dim).map(|d| x[a * dim + d] * y[b * dim + d]).sum()
        };
        let mut acc = 0.0;
        for j in 0..n {
            acc += 2.0 * dot(j, j);
            if j + 1 < n {
                acc -= dot(j, j + 1) + dot(j + 1, j);
            }
        }
        acc
    }
}

pub fn k_matrix(cfg: &BodyConfig) -> KMatrix {
    KMatrix {
        size: cfg.n_relative(),
    }
}

/// Dense Gram matrix `G_jk = Σ_i a(j, i) a(k, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.size + k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Largest absolute entry of `G·K − 1`.
    pub fn max_deviation_from_inverse(&self, k: &KMatrix) -> f64 {
        let n = self.size;
        assert_eq!(n, k.size(), "matrix sizes differ");
        let mut worst = 0.0f64;
        for j in 0..n {
            let row = &self.entries[j * n..(j + 1) * n];
            for c in 0..n {
                // K is tridiagonal, so only three terms of the row survive.
                let lo = c.saturating_sub(1);
                let hi = (c + 1).min(n - 1);
                let mut acc = 0.0;
                for (m, g) in row.iter().enumerate().take(hi + 1).skip(lo) {
                    acc += g * k.get(m, c);
                }
                let target = if j == c { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }

    /// `Σ_jk G_jk x_j·y_k` for `dim`-vectors stored row-major.
    pub fn contract(&self, x: &[f64], y: &[f64], dim: usize, a: usize, b: usize) -> f64 {
        let n = self.size;
        let mut acc = 0.0;
        for j in 0..n {
            let mut inner = 0.0;
            for k in 0..n {
                inner += self.entries[j * n + k] * y[k * dim + b];
            }
            acc += x[j * dim + a] * inner;
        }
        acc
    }
}

/// Gram matrix built from the coefficient rows.
///
/// Each coefficient row is piecewise constant, so the sum over atoms is taken
/// run by run over the overlap of the two rows' runs; the result equals the
/// atom-by-atom sum up to rounding.
pub fn gram_matrix(cfg: &BodyConfig) -> GramMatrix {
    let coeffs = inverse_coefficients(cfg);
    let n = cfg.n_relative();
    let runs: Vec<[CoefficientRun; 2]> = (0..n).map(|j| coeffs.row_runs(j)).collect();
    let mut entries = vec![0.0; n * n];
    for j in 0..n {
        for k in j..n {
            let mut acc = 0.0;
            for rj in &runs[j] {
                for rk in &runs[k] {
                    let lo = rj.start.max(rk.start);
                    let hi = rj.end.min(rk.end);
                    if hi > lo {
                        acc += (hi - lo) as f64 * rj.value * rk.value;
                    }
                }
            }
            entries[j * n + k] = acc;
            entries[k * n + j] = acc;
        }
    }
    GramMatrix { size: n, entries }
}

/// Second moment of the atomic positions about the center of mass, `dim × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaTensor {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl InertiaTensor {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.dim + b]
    }

    /// Upper triangle, row-major: `(0,0), (0,1), …, (dim−1,dim−1)`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for a in 0..self.dim {
            for b in a..self.dim {
                out.push(self.get(a, b));
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|a| self.get(a, a)).sum()
    }
}

pub fn center_of_mass(state: &PhaseState, cfg: &BodyConfig) -> Vec<f64> {
    let d = cfg.dim;
    let mut r = vec![0.0; d];
    for atom in state.positions.chunks_exact(d) {
        for (acc, x) in r.iter_mut().zip(atom) {
            *acc += x;
        }
    }
    let n = cfg.n_atoms as f64;
    r.iter_mut().for_each(|x| *x /= n);
    r
}

pub fn total_momentum(state: &PhaseState, cfg: &BodyConfig) -> Vec<f64> {
    let d = cfg.dim;
    let mut p = vec![0.0; d];
    for atom in state.momenta.chunks_exact(d) {
        for (acc, x) in p.iter_mut().zip(atom) {
            *acc += x;
        }
    }
    p
}

pub fn forward_transform(state: &PhaseState, cfg: &BodyConfig) -> Result<CmDecomposition> {
    state.validate(cfg)?;
    let d = cfg.dim;
    let n = cfg.n_atoms;
    let cm_position = center_of_mass(state, cfg);
    let cm_momentum = total_momentum(state, cfg);

    let mut rel_positions = vec![0.0; (n - 1) * d];
    for j in 0..n - 1 {
        for a in 0..d {
            rel_positions[j * d + a] = state.positions[j * d + a] - state.positions[(j + 1) * d + a];
        }
    }

    // p̃_j = Σ_{i ≤ j} p_i − (j + 1)/N · P
    let mut rel_momenta = vec![0.0; (n - 1) * d];
    let mut prefix = vec![0.0; d];
    for j in 0..n - 1 {
        for a in 0..d {
            prefix[a] += state.momenta[j * d + a];
            rel_momenta[j * d + a] = prefix[a] - (j + 1) as f64 / n as f64 * cm_momentum[a];
        }
    }

    Ok(CmDecomposition {
        cm_position,
        cm_momentum,
        rel_positions,
        rel_momenta,
    })
}

pub fn inverse_transform(cm: &CmDecomposition, cfg: &BodyConfig) -> Result<PhaseState> {
    cfg.validate()?;
    cm.validate(cfg)?;
    let d = cfg.dim;
    let n = cfg.n_atoms;
    let nf = n as f64;

    // r_i = R + Σ_{j ≥ i} r̃_j − Σ_j (j + 1)/N r̃_j
    let mut weighted = vec![0.0; d];
    for j in 0..n - 1 {
        for a in 0..d {
            weighted[a] += (j + 1) as f64 / nf * cm.rel_positions[j * d + a];
        }
    }
    let mut positions = vec![0.0; n * d];
    let mut suffix = vec![0.0; d];
    for i in (0..n).rev() {
        if i < n - 1 {
            for a in 0..d {
                suffix[a] += cm.rel_positions[i * d + a];
            }
        }
        for a in 0..d {
            positions[i * d + a] = cm.cm_position[a] + suffix[a] - weighted[a];
        }
    }

    // p_i = P/N + p̃_i − p̃_{i−1}, with p̃_{−1} = p̃_{N−1} = 0
    let mut momenta = vec![0.0; n * d];
    for i in 0..n {
        for a in 0..d {
            let here = if i < n - 1 { cm.rel_momenta[i * d + a] } else { 0.0 };
            let before = if i > 0 { cm.rel_momenta[(i - 1) * d + a] } else { 0.0 };
            momenta[i * d + a] = cm.cm_momentum[a] / nf + here - before;
        }
    }

    Ok(PhaseState {
        positions,
        momenta,
        time: 0.0,
    })
}

pub fn inertia_tensor(state: &PhaseState, cfg: &BodyConfig) -> InertiaTensor {
    let d = cfg.dim;
    let r = center_of_mass(state, cfg);
    let mut out = InertiaTensor::zeros(d);
    for atom in state.positions.chunks_exact(d) {
        for a in 0..d {
            let da = atom[a] - r[a];
            for b in a..d {
                out.entries[a * d + b] += da * (atom[b] - r[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            out.entries[a * d + b] = out.entries[b * d + a];
        }
    }
    out
}

/// The same tensor evaluated from relative coordinates as `Σ_jk G_jk r̃_jα r̃_kβ`.
pub fn inertia_tensor_from_relative(
    cm: &CmDecomposition,
    gram: &GramMatrix,
    dim: usize,
) -> InertiaTensor {
    let mut out = InertiaTensor::zeros(dim);
    for a in 0..dim {
        for b in 0..dim {
            out.entries[a * dim + b] = gram.contract(&cm.rel_positions, &cm.rel_positions, dim, a, b);
        }
    }
    out
}

/// Kinetic energy split into center-of-mass and relative parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticSplit {
    pub cm_kinetic: f64,
    pub rel_kinetic: f64,
}

impl KineticSplit {
    pub fn total(&self) -> f64 {
        self.cm_kinetic + self.rel_kinetic
    }
}

pub fn kinetic_decomposition(state: &PhaseState, cfg: &BodyConfig) -> KineticSplit {
    let d = cfg.dim;
    let m = cfg.atom_mass;
    let p = total_momentum(state, cfg);
    let n = cfg.n_atoms as f64;
    let cm_kinetic = p.iter().map(|x| x * x).sum::<f64>() / (2.0 * n * m);
    let mean: Vec<f64> = p.iter().map(|x| x / n).collect();
    let mut rel = 0.0;
    for atom in state.momenta.chunks_exact(d) {
        for (x, mu) in atom.iter().zip(&mean) {
            let dx = x - mu;
            rel += dx * dx;
        }
    }
    KineticSplit {
        cm_kinetic,
        rel_kinetic: rel / (2.0 * m),
    }
}

/// Relative kinetic energy from canonical relative momenta: `p̃ᵀ G⁻¹ p̃ / 2m`, with `G⁻¹ = K`.
pub fn relative_kinetic_from_momenta(cm: &CmDecomposition, cfg: &BodyConfig) -> f64 {
    let k = k_matrix(cfg);
    k.quadratic_form(&cm.rel_momenta, &cm.rel_momenta, cfg.dim) / (2.0 * cfg.atom_mass)
}

/// Exact linear maps of the transform, per Cartesian component, as `N × N` rational matrices.
///
/// Row 0 is the center-of-mass variable; rows `1..N` are the relative variables.
pub mod linear_maps {
    use super::TransformCoefficients;
    use num_rational::Ratio;

    pub type RationalMatrix = Vec<Vec<Ratio<i64>>>;

    fn zero(n: usize) -> RationalMatrix {
        vec![vec![Ratio::from_integer(0); n]; n]
    }

    /// `(R, r̃)` as functions of the atomic positions.
    pub fn position_map(n: usize) -> RationalMatrix {
        let mut m = zero(n);
        for i in 0..n {
            m[0][i] = Ratio::new(1, n as i64);
        }
        for j in 0..n - 1 {
            m[j + 1][j] = Ratio::from_integer(1);
            m[j + 1][j + 1] = Ratio::from_integer(-1);
        }
        m
    }

    /// `(P, p̃)` with `p̃_j = Σ_i a(j, i) p_i`.
    pub fn canonical_momentum_map(n: usize) -> RationalMatrix {
        let coeffs = TransformCoefficients { n_atoms: n };
        let mut m = zero(n);
        for i in 0..n {
            m[0][i] = Ratio::from_integer(1);
        }
        for j in 0..n - 1 {
            for i in 0..n {
                m[j + 1][i] = coeffs.exact(j, i);
            }
        }
        m
    }

    /// `(P, p̃)` with `p̃_j = Σ_{k < N−1} K_jk p_k`, the tridiagonal alternative.
    pub fn tridiagonal_momentum_map(n: usize) -> RationalMatrix {
        let mut m = zero(n);
        for i in 0..n {
            m[0][i] = Ratio::from_integer(1);
        }
        for j in 0..n - 1 {
            m[j + 1][j] = Ratio::from_integer(2);
            if j > 0 {
                m[j + 1][j - 1] = Ratio::from_integer(-1);
            }
            if j + 1 < n - 1 {
                m[j + 1][j + 1] = Ratio::from_integer(-1);
            }
        }
        m
    }

    /// Poisson brackets `{Q_a, Π_b} = Σ_i ∂Q_a/∂r_i · ∂Π_b/∂p_i` of two linear maps.
    pub fn brackets(positions: &RationalMatrix, momenta: &RationalMatrix) -> RationalMatrix {
        let n = positions.len();
        let mut out = zero(n);
        for a in 0..n {
            for b in 0..n {
                let mut acc = Ratio::from_integer(0);
                for i in 0..n {
                    acc += positions[a][i] * momenta[b][i];
                }
                out[a][b] = acc;
            }
        }
        out
    }

    pub fn is_identity(m: &RationalMatrix) -> bool {
        m.iter().enumerate().all(|(a, row)| {
            row.iter()
                .enumerate()
                .all(|(b, x)| *x == Ratio::from_integer(i64::from(a == b)))
        })
    }
}
