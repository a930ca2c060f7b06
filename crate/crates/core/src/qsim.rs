//! Two particles in one dimension, propagated on a grid in center-of-mass and
//! relative coordinates `X = (x₁ + x₂)/2`, `ξ = x₁ − x₂`.
//!
//! The Hamiltonian is `P²/2(2m) + p_ξ²/2(m/2) + u(|ξ|) + V(X + ξ/2) + V(X − ξ/2)`,
//! evaluated pointwise on the grid. Propagation is second-order Strang splitting
//! with spectral kinetic steps.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdsim::format_float;
use crate::potentials::{ExternalPotentialSpec, PairPotentialSpec};
use crate::stats::neumaier_sum;

/// Amplitude allowed on the outermost grid lines.
pub const BOUNDARY_LIMIT: f64 = 1e-10;

fn default_hbar() -> f64 {
    1.0
}

fn default_mass() -> f64 {
    1.0
}

fn default_stride() -> usize {
    100
}

/// Grid centred on the origin along both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points_x: usize,
    pub points_xi: usize,
    pub extent_x: f64,
    pub extent_xi: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("points_x", self.points_x), ("points_xi", self.points_xi)] {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::Config(format!("{name} must be a power of two >= 8, got {n}")));
            }
        }
        for (name, l) in [("extent_x", self.extent_x), ("extent_xi", self.extent_xi)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {l}")));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.extent_x / self.points_x as f64
    }

    pub fn dxi(&self) -> f64 {
        self.extent_xi / self.points_xi as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.extent_x + i as f64 * self.dx()
    }

    pub fn xi(&self, j: usize) -> f64 {
        -0.5 * self.extent_xi + j as f64 * self.dxi()
    }

    pub fn len(&self) -> usize {
        self.points_x * self.points_xi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Angular wavenumber of FFT bin `i` on `n` points over `extent`.
fn wavenumber(i: usize, n: usize, extent: f64) -> f64 {
    let s = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
    2.0 * PI * s / extent
}

/// Product Gaussian `f(X)·g(ξ)`; `sigma_*` are standard deviations of `|ψ|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacket {
    pub x0: f64,
    pub sigma_x: f64,
    #[serde(default)]
    pub k0: f64,
    #[serde(default)]
    pub xi0: f64,
    pub sigma_xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumParams {
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    /// Mass of each particle.
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Steps between recorded rows (energy and purity).
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    pub grid: GridSpec,
    pub initial: WavePacket,
    /// Interaction `u(|ξ|)`; a unit spring with zero rest length when absent.
    #[serde(default)]
    pub pair: Option<PairPotentialSpec>,
}

impl QuantumParams {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for (name, v) in [("hbar", self.hbar), ("mass", self.mass), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        if !(self.initial.sigma_x > 0.0 && self.initial.sigma_xi > 0.0) {
            return Err(Error::Config("packet widths must be positive".into()));
        }
        self.pair_potential().validate()
    }

    pub fn pair_potential(&self) -> PairPotentialSpec {
        self.pair.clone().unwrap_or(PairPotentialSpec::HarmonicSpring {
            stiffness: 1.0,
            rest_length: 0.0,
        })
    }
}

/// Amplitudes on the `(X, ξ)` grid, row-major with `ξ` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction2P {
    pub grid: GridSpec,
    pub data: Vec<Complex64>,
}

impl WaveFunction2P {
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..grid.points_x {
            let x = grid.x(i);
            for j in 0..grid.points_xi {
                data.push(f(x, grid.xi(j)));
            }
        }
        Self { grid, data }
    }

    pub fn product(grid: GridSpec, f: impl Fn(f64) -> Complex64, g: impl Fn(f64) -> Complex64) -> Self {
        Self::from_fn(grid, |x, xi| f(x) * g(xi))
    }

    /// Normalized product Gaussian.
    pub fn gaussian(grid: GridSpec, p: &WavePacket) -> Self {
        let mut psi = Self::product(
            grid,
            |x| {
                let a = -(x - p.x0).powi(2) / (4.0 * p.sigma_x * p.sigma_x);
                Complex64::from_polar(a.exp(), p.k0 * x)
            },
            |xi| Complex64::new((-(xi - p.xi0).powi(2) / (4.0 * p.sigma_xi * p.sigma_xi)).exp(), 0.0),
        );
        psi.normalize();
        psi
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.grid.points_xi + j]
    }

    pub fn norm(&self) -> f64 {
        neumaier_sum(self.data.iter().map(|c| c.norm_sqr())) * self.grid.dx() * self.grid.dxi()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm().sqrt();
        self.data.iter_mut().for_each(|c| *c *= s);
    }

    /// Largest `|ψ|` on the first and last grid lines of each axis.
    pub fn boundary_amplitude(&self) -> (f64, f64) {
        let g = &self.grid;
        let (nx, nxi) = (g.points_x, g.points_xi);
        let mut on_x = 0.0f64;
        for j in 0..nxi {
            on_x = on_x.max(self.at(0, j).norm()).max(self.at(nx - 1, j).norm());
        }
        let mut on_xi = 0.0f64;
        for i in 0..nx {
            on_xi = on_xi.max(self.at(i, 0).norm()).max(self.at(i, nxi - 1).norm());
        }
        (on_x, on_xi)
    }

    pub fn check_boundary(&self, limit: f64) -> Result<()> {
        let (ax, axi) = self.boundary_amplitude();
        if ax > limit {
            return Err(Error::Boundary {
                axis: "X",
                amplitude: ax,
                limit,
            });
        }
        if axi > limit {
            return Err(Error::Boundary {
                axis: "xi",
                amplitude: axi,
                limit,
            });
        }
        Ok(())
    }
}

/// Kinetic multipliers and potential values on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerms {
    pub grid: GridSpec,
    pub hbar: f64,
    pub mass: f64,
    /// `ħ²k_X²/2(2m) + ħ²k_ξ²/2(m/2)`, laid out `[k_ξ][k_X]`.
    pub kinetic: Vec<f64>,
    /// Total potential, laid out like the wave function.
    pub potential: Vec<f64>,
    /// `∂V_total/∂X` on the grid.
    pub force_x: Vec<f64>,
    /// One-particle external potential at `X`, used for the expectation gap.
    pub external_at_x: Vec<f64>,
}

pub fn build_hamiltonian_terms(
    external: &ExternalPotentialSpec,
    pair: &PairPotentialSpec,
    params: &QuantumParams,
) -> Result<HamiltonianTerms> {
    params.validate()?;
    external.validate(1)?;
    let g = params.grid;
    let m = params.mass;
    let hbar = params.hbar;
    let ext = |x: f64| {
        external
            .axis_terms(0, 1, x, m)
            .map_err(|e| Error::Grid(format!("external potential at x = {x}: {e}")))
    };
    let mut potential = Vec::with_capacity(g.len());
    let mut force_x = Vec::with_capacity(g.len());
    let mut external_at_x = Vec::with_capacity(g.points_x);
    for i in 0..g.points_x {
        let x = g.x(i);
        external_at_x.push(ext(x)?[0]);
        for j in 0..g.points_xi {
            let xi = g.xi(j);
            let a = ext(x + 0.5 * xi)?;
            let b = ext(x - 0.5 * xi)?;
            let v = a[0] + b[0] + pair.radial(xi.abs()).0;
            if !v.is_finite() {
                return Err(Error::Grid(format!("potential is singular at X = {x}, xi = {xi}")));
            }
            potential.push(v);
            force_x.push(a[1] + b[1]);
        }
    }
    let mut kinetic = Vec::with_capacity(g.len());
    for j in 0..g.points_xi {
        let kxi = wavenumber(j, g.points_xi, g.extent_xi);
        for i in 0..g.points_x {
            let kx = wavenumber(i, g.points_x, g.extent_x);
            kinetic.push(hbar * hbar * (kx * kx / (4.0 * m) + kxi * kxi / m));
        }
    }
    Ok(HamiltonianTerms {
        grid: g,
        hbar,
        mass: m,
        kinetic,
        potential,
        force_x,
        external_at_x,
    })
}

/// 2D transforms between the `[X][ξ]` and `[k_ξ][k_X]` layouts.
struct Spectral {
    grid: GridSpec,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_xi: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_xi: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

impl Spectral {
    fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(grid.points_x);
        let fwd_xi = planner.plan_fft_forward(grid.points_xi);
        let inv_x = planner.plan_fft_inverse(grid.points_x);
        let inv_xi = planner.plan_fft_inverse(grid.points_xi);
        let scratch_len = [&fwd_x, &fwd_xi, &inv_x, &inv_xi]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            grid,
            fwd_x,
            fwd_xi,
            inv_x,
            inv_xi,
            buffer: vec![Complex64::default(); grid.len()],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    /// `[X][ξ]` data → unnormalized spectrum in `[k_ξ][k_X]`, left in `self.buffer`.
    fn forward(&mut self, data: &mut [Complex64]) {
        let g = self.grid;
        self.fwd_xi.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.buffer, g.points_x, g.points_xi);
        self.fwd_x.process_with_scratch(&mut self.buffer, &mut self.scratch);
    }

    /// Spectrum in `self.buffer` → `[X][ξ]` data (unnormalized).
    fn inverse(&mut self, data: &mut [Complex64]) {
        let g = self.grid;
        self.inv_x.process_with_scratch(&mut self.buffer, &mut self.scratch);
        transpose(&self.buffer, data, g.points_xi, g.points_x);
        self.inv_xi.process_with_scratch(data, &mut self.scratch);
    }
}

/// Moments of the momentum distribution of a spectrum in `[k_ξ][k_X]` layout.
#[derive(Debug, Clone, Copy, Default)]
struct SpectralMoments {
    mean_p: f64,
    mean_p2: f64,
    kinetic: f64,
}

fn spectral_moments(spectrum: &[Complex64], terms: &HamiltonianTerms) -> SpectralMoments {
    let g = terms.grid;
    let nx = g.points_x;
    let mut w = 0.0;
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    let mut t = 0.0;
    for (k, c) in spectrum.iter().enumerate() {
        let rho = c.norm_sqr();
        let p = terms.hbar * wavenumber(k % nx, nx, g.extent_x);
        w += rho;
        p1 += rho * p;
        p2 += rho * p * p;
        t += rho * terms.kinetic[k];
    }
    SpectralMoments {
        mean_p: p1 / w,
        mean_p2: p2 / w,
        kinetic: t / w,
    }
}

/// Position-space moments: `(⟨X⟩, ⟨X²⟩, ⟨V_total⟩, ⟨∂V/∂X⟩, ⟨V(X̂)⟩)`.
fn position_moments(psi: &WaveFunction2P, terms: &HamiltonianTerms) -> [f64; 5] {
    let g = psi.grid;
    let nxi = g.points_xi;
    let mut acc = [0.0; 6];
    for i in 0..g.points_x {
        let x = g.x(i);
        let row = &psi.data[i * nxi..(i + 1) * nxi];
        let mut w = 0.0;
        let mut v = 0.0;
        let mut f = 0.0;
        for (j, c) in row.iter().enumerate() {
            let rho = c.norm_sqr();
            w += rho;
            v += rho * terms.potential[i * nxi + j];
            f += rho * terms.force_x[i * nxi + j];
        }
        acc[0] += w;
        acc[1] += w * x;
        acc[2] += w * x * x;
        acc[3] += v;
        acc[4] += f;
        acc[5] += w * terms.external_at_x[i];
    }
    let w = acc[0];
    [acc[1] / w, acc[2] / w, acc[3] / w, acc[4] / w, acc[5] / w]
}

/// Strang-split propagator with precomputed phase factors.
pub struct Propagator {
    terms: HamiltonianTerms,
    dt: f64,
    spectral: Spectral,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

impl Propagator {
    pub fn new(terms: HamiltonianTerms, dt: f64) -> Self {
        let hbar = terms.hbar;
        let scale = 1.0 / terms.grid.len() as f64;
        let half_potential = terms
            .potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -0.5 * v * dt / hbar))
            .collect();
        let kinetic = terms
            .kinetic
            .iter()
            .map(|t| Complex64::from_polar(scale, -t * dt / hbar))
            .collect();
        Self {
            spectral: Spectral::new(terms.grid),
            terms,
            dt,
            half_potential,
            kinetic,
        }
    }

    pub fn terms(&self) -> &HamiltonianTerms {
        &self.terms
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step; returns `⟨P⟩` of the momentum distribution between the two potential half steps.
    pub fn step(&mut self, psi: &mut WaveFunction2P) -> Result<f64> {
        for (c, ph) in psi.data.iter_mut().zip(&self.half_potential) {
            *c *= ph;
        }
        self.spectral.forward(&mut psi.data);
        let mid = spectral_moments(&self.spectral.buffer, &self.terms).mean_p;
        for (c, ph) in self.spectral.buffer.iter_mut().zip(&self.kinetic) {
            *c *= ph;
        }
        self.spectral.inverse(&mut psi.data);
        for (c, ph) in psi.data.iter_mut().zip(&self.half_potential) {
            *c *= ph;
        }
        if !mid.is_finite() || psi.data.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::BlowUp {
                step: 0,
                detail: "non-finite amplitude".into(),
            });
        }
        Ok(mid)
    }

    pub fn expectations(&mut self, psi: &WaveFunction2P) -> Expectations {
        let mut copy = psi.data.clone();
        self.spectral.forward(&mut copy);
        let s = spectral_moments(&self.spectral.buffer, &self.terms);
        let [mx, mx2, v, _, _] = position_moments(psi, &self.terms);
        Expectations {
            mean_x: mx,
            mean_p: s.mean_p,
            var_x: mx2 - mx * mx,
            var_p: s.mean_p2 - s.mean_p * s.mean_p,
            v_total: v,
            energy: s.kinetic + v,
        }
    }
}

/// One split-operator step.
pub fn split_operator_step(psi: &WaveFunction2P, terms: &HamiltonianTerms, dt: f64) -> Result<WaveFunction2P> {
    let mut out = psi.clone();
    Propagator::new(terms.clone(), dt).step(&mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expectations {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub v_total: f64,
    pub energy: f64,
}

pub fn expectations(psi: &WaveFunction2P, terms: &HamiltonianTerms) -> Expectations {
    Propagator::new(terms.clone(), 0.0).expectations(psi)
}

/// CM density matrix `ρ(X, X′) = Σ_ξ ψ(X, ξ) ψ*(X′, ξ) Δξ`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCmState {
    pub n: usize,
    pub dx: f64,
    pub rho: Vec<Complex64>,
}

impl ReducedCmState {
    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.rho[i * self.n + k]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum::<f64>() * self.dx
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        neumaier_sum(self.rho.iter().map(|c| c.norm_sqr())) * self.dx * self.dx
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        let mut dev = 0.0f64;
        for i in 0..self.n {
            for k in 0..self.n {
                dev = dev.max((self.get(i, k) - self.get(k, i).conj()).norm());
            }
        }
        dev
    }

    /// Eigenvalues of the operator `ρ` (the kernel times `ΔX`), ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_fn(self.n, self.n, |i, k| {
            // symmetrize to remove rounding asymmetry before the Hermitian solver
            0.5 * (self.get(i, k) + self.get(k, i).conj()) * self.dx
        });
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

pub fn reduce_cm(psi: &WaveFunction2P) -> ReducedCmState {
    let g = psi.grid;
    let (n, nxi) = (g.points_x, g.points_xi);
    let dxi = g.dxi();
    let mut rho = vec![Complex64::default(); n * n];
    for i in 0..n {
        let a = &psi.data[i * nxi..(i + 1) * nxi];
        for k in i..n {
            let b = &psi.data[k * nxi..(k + 1) * nxi];
            let mut s = Complex64::default();
            for (x, y) in a.iter().zip(b) {
                s += x * y.conj();
            }
            s *= dxi;
            rho[i * n + k] = s;
            rho[k * n + i] = s.conj();
        }
    }
    ReducedCmState { n, dx: g.dx(), rho }
}

/// Time series from one propagation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationResult {
    /// Every step.
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    /// `d⟨X⟩/dt − ⟨P⟩/2m` by central differences, at steps `1..n_steps`.
    pub residual1: Vec<f64>,
    /// `d⟨P⟩/dt + ⟨∂V_total/∂X⟩` by central differences, at steps `1..n_steps`.
    pub residual2: Vec<f64>,
    /// `⟨V(X̂)⟩ − V(⟨X̂⟩)` for the one-particle external potential, every step.
    pub gap: Vec<f64>,
    /// Rows every `sample_stride` steps and at the end.
    pub rows: Vec<QuantumRow>,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub min_purity: f64,
    /// First recorded time with purity below the threshold passed to the run.
    pub time_to_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantumRow {
    pub time: f64,
    pub expectations: Expectations,
    pub purity: f64,
    pub gap: f64,
}

impl FactorizationResult {
    pub fn max_abs_residual1(&self) -> f64 {
        self.residual1.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    pub fn max_abs_residual2(&self) -> f64 {
        self.residual2.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Gap at the first step at or after `t`.
    pub fn gap_at(&self, t: f64) -> Option<f64> {
        let k = self.times.iter().position(|s| *s >= t - 1e-12)?;
        Some(self.gap[k])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,mean_x,mean_p,var_x,var_p,energy,purity,gap")?;
        for r in &self.rows {
            let e = &r.expectations;
            let row = [r.time, e.mean_x, e.mean_p, e.var_x, e.var_p, e.energy, r.purity, r.gap];
            writeln!(out, "{}", row.map(format_float).join(","))?;
        }
        Ok(())
    }
}

/// Propagates the product Gaussian of `params.initial` and records purity,
/// Ehrenfest residuals and the expectation gap.
pub fn factorization_experiment(
    external: &ExternalPotentialSpec,
    params: &QuantumParams,
    purity_threshold: f64,
) -> Result<FactorizationResult> {
    let terms = build_hamiltonian_terms(external, &params.pair_potential(), params)?;
    let mut psi = WaveFunction2P::gaussian(params.grid, &params.initial);
    psi.check_boundary(BOUNDARY_LIMIT)?;
    let total_mass = 2.0 * params.mass;
    let dt = params.dt;
    let one_particle = |x: f64| external.axis_terms(0, 1, x, params.mass).map(|t| t[0]);
    let mut prop = Propagator::new(terms, dt);

    let n = params.n_steps;
    let mut times = Vec::with_capacity(n + 1);
    let mut mean_x = Vec::with_capacity(n + 1);
    let mut mean_p = Vec::with_capacity(n + 1);
    let mut force = Vec::with_capacity(n + 1);
    let mut gap = Vec::with_capacity(n + 1);
    let mut rows = Vec::new();
    let norm0 = psi.norm();
    let mut norm_drift = 0.0f64;
    let mut energy0 = None;
    let mut energy_drift = 0.0f64;
    let mut min_purity = f64::INFINITY;
    let mut time_to_threshold = None;

    let mut record_row = |prop: &mut Propagator, psi: &WaveFunction2P, t: f64, g: f64| -> Result<()> {
        psi.check_boundary(BOUNDARY_LIMIT)?;
        let e = prop.expectations(psi);
        let purity = reduce_cm(psi).purity();
        let e0 = *energy0.get_or_insert(e.energy);
        energy_drift = energy_drift.max((e.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
        min_purity = min_purity.min(purity);
        if purity < purity_threshold && time_to_threshold.is_none() {
            time_to_threshold = Some(t);
        }
        rows.push(QuantumRow {
            time: t,
            expectations: e,
            purity,
            gap: g,
        });
        Ok(())
    };

    // ⟨P⟩ at step k is recovered from the mid-step spectrum of step k:
    // the first potential half step shifts it by −½dt⟨∂V/∂X⟩ exactly.
    for k in 0..=n {
        let [mx, _, _, f, vx] = position_moments(&psi, prop.terms());
        let t = k as f64 * dt;
        times.push(t);
        mean_x.push(mx);
        force.push(f);
        gap.push(vx - one_particle(mx)?);
        if k % params.sample_stride == 0 || k == n {
            record_row(&mut prop, &psi, t, *gap.last().unwrap_or(&0.0))?;
            norm_drift = norm_drift.max((psi.norm() - norm0).abs());
        }
        if k < n {
            let mid = prop.step(&mut psi).map_err(|e| match e {
                Error::BlowUp { detail, .. } => Error::BlowUp { step: k + 1, detail },
                other => other,
            })?;
            mean_p.push(mid + 0.5 * dt * f);
        } else {
            mean_p.push(prop.expectations(&psi).mean_p);
        }
    }
    norm_drift = norm_drift.max((psi.norm() - norm0).abs());

    let mut residual1 = Vec::new();
    let mut residual2 = Vec::new();
    for k in 1..n {
        residual1.push((mean_x[k + 1] - mean_x[k - 1]) / (2.0 * dt) - mean_p[k] / total_mass);
        residual2.push((mean_p[k + 1] - mean_p[k - 1]) / (2.0 * dt) + force[k]);
    }
    Ok(FactorizationResult {
        times,
        mean_x,
        mean_p,
        residual1,
        residual2,
        gap,
        rows,
        norm_drift,
        energy_drift,
        min_purity,
        time_to_threshold,
    })
}
