//! Symmetric split-operator propagation on the quadrature grid.
//!
//! One step is `exp(−iV dt/2) exp(−iT dt) exp(−iV dt/2)` with the kinetic
//! factor applied in Fourier space. In [`Mode::Full`] the potential is the
//! pointwise 2×2 diabatic matrix, exponentiated in closed form; in
//! [`Mode::SemiAdiabatic`] it is the scalar lower adiabatic surface and the
//! state carries no spin index.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Fft2, GridError, GridSpec};
use crate::model::{diabatic_potential, surface_geometry};
use crate::Params;

/// Largest tolerated deviation of the norm from one before aborting.
pub const NORM_GUARD: f64 = 1e-6;
/// Largest tolerated probability within two cells of the grid edge.
pub const BOUNDARY_GUARD: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("initial packet at ({x0}, {y0}) does not fit inside half width {half_width} with a 5-width margin")]
    PacketOverflow { x0: f64, y0: f64, half_width: f64 },
    #[error("invalid propagation config: {0}")]
    Config(String),
    #[error("state kind does not match mode {0:?}")]
    ModeMismatch(Mode),
    #[error("norm drifted to {norm} at t={t}; reduce dt or refine the grid")]
    NormDrift { t: f64, norm: f64 },
    #[error("probability {weight:e} reached the grid boundary at t={t}; enlarge the grid")]
    BoundaryLeak { t: f64, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The two-surface Hamiltonian with its geometric phase.
    Full,
    /// Kinetic energy plus the lower adiabatic surface only.
    #[serde(rename = "semi")]
    SemiAdiabatic,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::SemiAdiabatic => "semi",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "semi" | "semi-adiabatic" | "semi_adiabatic" => Ok(Mode::SemiAdiabatic),
            other => Err(format!("unknown mode '{other}' (expected full|semi)")),
        }
    }
}

/// Two-component amplitude: `psi_e` on the upper diabatic level, `psi_g`
/// on the lower. Arrays are indexed `[ix, iy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub grid: GridSpec,
    pub psi_e: Array2<Complex64>,
    pub psi_g: Array2<Complex64>,
    pub t: f64,
}

/// Single-component amplitude used by the semi-adiabatic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub psi: Array2<Complex64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WaveState {
    Spinor(SpinorField),
    Scalar(ScalarField),
}

impl From<SpinorField> for WaveState {
    fn from(s: SpinorField) -> Self {
        WaveState::Spinor(s)
    }
}

impl From<ScalarField> for WaveState {
    fn from(s: ScalarField) -> Self {
        WaveState::Scalar(s)
    }
}

impl WaveState {
    pub fn grid(&self) -> &GridSpec {
        match self {
            WaveState::Spinor(s) => &s.grid,
            WaveState::Scalar(s) => &s.grid,
        }
    }

    pub fn time(&self) -> f64 {
        match self {
            WaveState::Spinor(s) => s.t,
            WaveState::Scalar(s) => s.t,
        }
    }

    fn set_time(&mut self, t: f64) {
        match self {
            WaveState::Spinor(s) => s.t = t,
            WaveState::Scalar(s) => s.t = t,
        }
    }

    pub fn components(&self) -> Vec<&Array2<Complex64>> {
        match self {
            WaveState::Spinor(s) => vec![&s.psi_e, &s.psi_g],
            WaveState::Scalar(s) => vec![&s.psi],
        }
    }

    fn components_mut(&mut self) -> Vec<&mut Array2<Complex64>> {
        match self {
            WaveState::Spinor(s) => vec![&mut s.psi_e, &mut s.psi_g],
            WaveState::Scalar(s) => vec![&mut s.psi],
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            WaveState::Spinor(_) => Mode::Full,
            WaveState::Scalar(_) => Mode::SemiAdiabatic,
        }
    }

    /// Σ |ψ|² dx² over all components.
    pub fn norm_sq(&self) -> f64 {
        let cell = self.grid().cell();
        self.components().iter().map(|c| sum_abs_sq(c)).sum::<f64>() * cell
    }
}

pub(crate) fn slice(a: &Array2<Complex64>) -> &[Complex64] {
    a.as_slice().expect("fields are stored contiguously")
}

pub(crate) fn slice_mut(a: &mut Array2<Complex64>) -> &mut [Complex64] {
    a.as_slice_mut().expect("fields are stored contiguously")
}

/// Row sums in parallel, combined in row order so the result does not
/// depend on the thread count.
pub(crate) fn row_reduce<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let rows: Vec<f64> = (0..n).into_par_iter().map(&f).collect();
    rows.iter().sum()
}

fn sum_abs_sq(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let data = slice(a);
    row_reduce(n, |i| data[i * n..(i + 1) * n].iter().map(|z| z.norm_sqr()).sum())
}

/// Normalized spatial Gaussian `exp(−(x−x0)²/2 − (y−y0)²/2)/√π`.
pub fn gaussian_packet(grid: &GridSpec, x0: f64, y0: f64) -> Result<ScalarField, PropagationError> {
    let margin = grid.half_width - 5.0;
    if x0.abs() > margin || y0.abs() > margin || !x0.is_finite() || !y0.is_finite() {
        return Err(PropagationError::PacketOverflow {
            x0,
            y0,
            half_width: grid.half_width,
        });
    }
    let xs = grid.coords();
    let norm0 = 1.0 / std::f64::consts::PI.sqrt();
    let mut psi = Array2::from_shape_fn((grid.n, grid.n), |(i, j)| {
        let (dx, dy) = (xs[i] - x0, xs[j] - y0);
        Complex64::new(norm0 * (-(dx * dx + dy * dy) / 2.0).exp(), 0.0)
    });
    // Renormalize on the grid so the discrete norm is one to rounding.
    let s = (sum_abs_sq(&psi) * grid.cell()).sqrt();
    psi.mapv_inplace(|z| z / s);
    Ok(ScalarField {
        grid: *grid,
        psi,
        t: 0.0,
    })
}

/// Disentangled initial state: coherent fields |x0/√2⟩|y0/√2⟩ times the
/// spinor (1, −1)/√2.
pub fn initial_state(p: &Params, grid: &GridSpec, x0: f64, y0: f64) -> Result<SpinorField, PropagationError> {
    let geometry = surface_geometry(p);
    grid.check_contains(geometry.rho_min)?;
    let spatial = gaussian_packet(grid, x0, y0)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ok(SpinorField {
        grid: *grid,
        psi_e: spatial.psi.mapv(|z| z * h),
        psi_g: spatial.psi.mapv(|z| -z * h),
        t: 0.0,
    })
}

/// Spatial factor of a spinor state along the fixed spinor (1, −1)/√2.
pub fn project_initial_spinor(s: &SpinorField) -> ScalarField {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let psi = ndarray::Zip::from(&s.psi_e)
        .and(&s.psi_g)
        .map_collect(|e, g| (e - g) * h);
    ScalarField {
        grid: s.grid,
        psi,
        t: s.t,
    }
}

/// Time-stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Keep every k-th state in the trajectory (0 keeps none).
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Measure scalar observables every k-th step.
    #[serde(default = "one")]
    pub record_stride: usize,
    pub mode: Mode,
    /// Abort when |norm − 1| exceeds this.
    #[serde(default = "norm_guard")]
    pub norm_guard: f64,
    /// Abort when the probability within two cells of the edge exceeds this.
    #[serde(default = "boundary_guard")]
    pub boundary_guard: f64,
}

fn one() -> usize {
    1
}

fn norm_guard() -> f64 {
    NORM_GUARD
}

fn boundary_guard() -> f64 {
    BOUNDARY_GUARD
}

impl PropagationConfig {
    pub const DEFAULT_DT: f64 = 0.01;

    /// Records every step, keeps no snapshots, default guards.
    pub fn new(dt: f64, t_final: f64, mode: Mode) -> Self {
        Self {
            dt,
            t_final,
            snapshot_stride: 0,
            record_stride: 1,
            mode,
            norm_guard: NORM_GUARD,
            boundary_guard: BOUNDARY_GUARD,
        }
    }

    /// Chooses the largest step ≤ `dt_max` that divides `t_final` into an
    /// integer number of steps that is also a multiple of `divisor`.
    pub fn spanning(t_final: f64, dt_max: f64, divisor: usize, mode: Mode) -> Self {
        let divisor = divisor.max(1);
        let blocks = (t_final / (dt_max * divisor as f64)).ceil().max(1.0) as usize;
        let steps = blocks * divisor;
        Self::new(t_final / steps as f64, t_final, mode)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(PropagationError::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(PropagationError::Config(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(PropagationError::Config(format!(
                "t_final={} is not a multiple of dt={}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(PropagationError::Config("record_stride must be >= 1".into()));
        }
        if !(self.norm_guard > 0.0) || !(self.boundary_guard > 0.0) {
            return Err(PropagationError::Config("guards must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar observables at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub n_a: f64,
    pub n_b: f64,
    /// ⟨σ_z⟩; in semi-adiabatic mode the spin is slaved to the lower
    /// adiabatic state, giving −⟨cos 2ν⟩.
    pub sigma_z: f64,
    /// ⟨Ψ(0)|Ψ(t)⟩.
    pub autocorr: Complex64,
    /// ⟨Ψ(0)|R_π|Ψ(t)⟩ with R_π the field rotation (x, y) → (−x, −y).
    pub autocorr_rotated: Complex64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: Mode,
    pub dt: f64,
    pub records: Vec<Record>,
    pub snapshots: Vec<WaveState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn autocorr_abs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.autocorr.norm()).collect()
    }
}

enum HalfPotential {
    /// Row-major `[u11, u12, u21, u22]` per grid point.
    Matrix(Vec<[Complex64; 4]>),
    Scalar(Vec<Complex64>),
}

enum PotentialTable {
    Diabatic {
        v11: Vec<f64>,
        v22: Vec<f64>,
        v12: Vec<Complex64>,
    },
    Lower {
        v: Vec<f64>,
        sigma_z: Vec<f64>,
    },
}

/// Precomputed propagator for a fixed model, grid, step and mode.
pub struct SplitOperator {
    grid: GridSpec,
    mode: Mode,
    dt: f64,
    fft: Fft2,
    kinetic: Vec<Complex64>,
    kx2: Vec<f64>,
    half: HalfPotential,
    table: PotentialTable,
}

impl SplitOperator {
    pub fn new(p: &Params, grid: &GridSpec, dt: f64, mode: Mode) -> Self {
        let n = grid.n;
        let xs = grid.coords();
        let ks = grid.momenta();
        let scale = 1.0 / (n * n) as f64;
        let kinetic = (0..n * n)
            .map(|idx| {
                let (kx, ky) = (ks[idx / n], ks[idx % n]);
                Complex64::from_polar(scale, -0.5 * (kx * kx + ky * ky) * dt)
            })
            .collect();
        let kx2 = ks.iter().map(|k| k * k).collect();
        let tau = dt / 2.0;
        let points = |idx: usize| (xs[idx / n], xs[idx % n]);
        let (half, table) = match mode {
            Mode::Full => {
                let mut v11 = Vec::with_capacity(n * n);
                let mut v22 = Vec::with_capacity(n * n);
                let mut v12 = Vec::with_capacity(n * n);
                let mut u = Vec::with_capacity(n * n);
                for idx in 0..n * n {
                    let (x, y) = points(idx);
                    let v = diabatic_potential(p, x, y);
                    u.push(potential_exponential(v.v11, v.v22, v.v12, tau));
                    v11.push(v.v11);
                    v22.push(v.v22);
                    v12.push(v.v12);
                }
                (HalfPotential::Matrix(u), PotentialTable::Diabatic { v11, v22, v12 })
            }
            Mode::SemiAdiabatic => {
                let mut v = Vec::with_capacity(n * n);
                let mut sz = Vec::with_capacity(n * n);
                let mut u = Vec::with_capacity(n * n);
                let half_gap = p.omega_q / 2.0;
                for idx in 0..n * n {
                    let (x, y) = points(idx);
                    let d = diabatic_potential(p, x, y);
                    let r = half_gap.hypot(d.v12.norm());
                    let lower = (x * x + y * y) / 2.0 - r;
                    v.push(lower);
                    sz.push(if r > 0.0 { -half_gap / r } else { -1.0 });
                    u.push(Complex64::from_polar(1.0, -lower * tau));
                }
                (HalfPotential::Scalar(u), PotentialTable::Lower { v, sigma_z: sz })
            }
        };
        Self {
            grid: *grid,
            mode,
            dt,
            fft: Fft2::new(n),
            kinetic,
            kx2,
            half,
            table,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_half_potential(&self, state: &mut WaveState) {
        let n = self.grid.n;
        match (&self.half, state) {
            (HalfPotential::Matrix(u), WaveState::Spinor(s)) => {
                let e = slice_mut(&mut s.psi_e);
                let g = slice_mut(&mut s.psi_g);
                e.par_chunks_mut(n)
                    .zip(g.par_chunks_mut(n))
                    .zip(u.par_chunks(n))
                    .for_each(|((er, gr), ur)| {
                        for ((a, b), m) in er.iter_mut().zip(gr.iter_mut()).zip(ur) {
                            let (x, y) = (*a, *b);
                            *a = m[0] * x + m[1] * y;
                            *b = m[2] * x + m[3] * y;
                        }
                    });
            }
            (HalfPotential::Scalar(u), WaveState::Scalar(s)) => {
                slice_mut(&mut s.psi)
                    .par_chunks_mut(n)
                    .zip(u.par_chunks(n))
                    .for_each(|(row, ur)| row.iter_mut().zip(ur).for_each(|(a, f)| *a *= f));
            }
            _ => panic!("state kind does not match propagator mode"),
        }
    }

    /// Advances `state` by one step.
    pub fn step(&self, state: &mut WaveState) {
        let n = self.grid.n;
        self.apply_half_potential(state);
        for c in state.components_mut() {
            let data = slice_mut(c);
            // The kinetic table is symmetric in kx ↔ ky, so the transposed
            // spectrum can be used as is.
            self.fft.forward_transposed(data);
            data.par_chunks_mut(n)
                .zip(self.kinetic.par_chunks(n))
                .for_each(|(row, kr)| row.iter_mut().zip(kr).for_each(|(a, k)| *a *= k));
            self.fft.inverse_transposed(data);
        }
        self.apply_half_potential(state);
        let t = state.time() + self.dt;
        state.set_time(t);
    }

    /// ⟨p_x²⟩ and ⟨p_y²⟩ summed over components.
    fn momentum_moments(&self, state: &WaveState) -> (f64, f64) {
        let n = self.grid.n;
        let cell = self.grid.cell();
        let scale = cell / (n * n) as f64;
        let mut px2 = 0.0;
        let mut py2 = 0.0;
        for c in state.components() {
            let mut buf = slice(c).to_vec();
            // Spectrum laid out [ky, kx].
            self.fft.forward_transposed(&mut buf);
            let k2 = &self.kx2;
            py2 += row_reduce(n, |i| {
                k2[i] * buf[i * n..(i + 1) * n].iter().map(|z| z.norm_sqr()).sum::<f64>()
            });
            px2 += row_reduce(n, |i| {
                buf[i * n..(i + 1) * n]
                    .iter()
                    .zip(k2)
                    .map(|(z, k)| z.norm_sqr() * k)
                    .sum::<f64>()
            });
        }
        (px2 * scale, py2 * scale)
    }

    /// Scalar observables of `state`; `reference` is the initial state.
    pub fn measure(&self, state: &WaveState, reference: &WaveState) -> Record {
        let n = self.grid.n;
        let cell = self.grid.cell();
        let xs = self.grid.coords();
        let comps = state.components();
        let refs = reference.components();
        let mut density = vec![0.0; n * n];
        for c in &comps {
            density.iter_mut().zip(slice(c)).for_each(|(d, z)| *d += z.norm_sqr());
        }
        let row = |i: usize| &density[i * n..(i + 1) * n];
        let norm = row_reduce(n, |i| row(i).iter().sum()) * cell;
        let x2 = row_reduce(n, |i| xs[i] * xs[i] * row(i).iter().sum::<f64>()) * cell;
        let y2 = row_reduce(n, |i| row(i).iter().zip(&xs).map(|(d, y)| d * y * y).sum::<f64>()) * cell;
        let (px2, py2) = self.momentum_moments(state);

        let (potential, sigma_z) = match (&self.table, state) {
            (PotentialTable::Diabatic { v11, v22, v12 }, WaveState::Spinor(s)) => {
                let e = slice(&s.psi_e);
                let g = slice(&s.psi_g);
                let v = row_reduce(n, |i| {
                    (i * n..(i + 1) * n)
                        .map(|k| {
                            let (a, b) = (e[k], g[k]);
                            v11[k] * a.norm_sqr() + v22[k] * b.norm_sqr() + 2.0 * (a.conj() * v12[k] * b).re
                        })
                        .sum()
                });
                let sz = row_reduce(n, |i| {
                    (i * n..(i + 1) * n).map(|k| e[k].norm_sqr() - g[k].norm_sqr()).sum()
                });
                (v * cell, sz * cell)
            }
            (PotentialTable::Lower { v, sigma_z }, WaveState::Scalar(s)) => {
                let psi = slice(&s.psi);
                let pot = row_reduce(n, |i| (i * n..(i + 1) * n).map(|k| v[k] * psi[k].norm_sqr()).sum());
                let sz = row_reduce(n, |i| {
                    (i * n..(i + 1) * n).map(|k| sigma_z[k] * psi[k].norm_sqr()).sum()
                });
                (pot * cell, sz * cell)
            }
            _ => panic!("state kind does not match propagator mode"),
        };

        let mut autocorr = Complex64::new(0.0, 0.0);
        let mut rotated = Complex64::new(0.0, 0.0);
        for (c, r) in comps.iter().zip(&refs) {
            autocorr += overlap(r, c) * cell;
            let (rs, cs) = (slice(r), slice(c));
            let g = &self.grid;
            let rows: Vec<Complex64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mirrored = &rs[g.mirror(i) * n..(g.mirror(i) + 1) * n];
                    cs[i * n..(i + 1) * n]
                        .iter()
                        .enumerate()
                        .map(|(j, z)| mirrored[g.mirror(j)].conj() * z)
                        .sum()
                })
                .collect();
            rotated += rows.iter().sum::<Complex64>() * cell;
        }

        Record {
            t: state.time(),
            norm,
            energy: 0.5 * (px2 + py2) + potential,
            n_a: 0.5 * (x2 + px2 - norm),
            n_b: 0.5 * (y2 + py2 - norm),
            sigma_z,
            autocorr,
            autocorr_rotated: rotated,
        }
    }
}

/// `exp(−iτ(s·1 + b·σ))` for the Hermitian matrix [[v11, v12], [v12*, v22]],
/// returned as `[u11, u12, u21, u22]`.
fn potential_exponential(v11: f64, v22: f64, v12: Complex64, tau: f64) -> [Complex64; 4] {
    let s = 0.5 * (v11 + v22);
    let bz = 0.5 * (v11 - v22);
    let b = bz.hypot(v12.norm());
    let phase = Complex64::from_polar(1.0, -s * tau);
    let c = (b * tau).cos();
    // sin(bτ)/b, finite as b → 0.
    let sinc = if b * tau > 1e-8 {
        (b * tau).sin() / b
    } else {
        tau * (1.0 - (b * tau).powi(2) / 6.0)
    };
    let i = Complex64::i();
    [
        phase * (c - i * sinc * bz),
        phase * (-i * sinc * v12),
        phase * (-i * sinc * v12.conj()),
        phase * (c + i * sinc * bz),
    ]
}

pub(crate) fn overlap(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
    let n = a.nrows();
    let (x, y) = (slice(a), slice(b));
    let rows: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|i| {
            x[i * n..(i + 1) * n]
                .iter()
                .zip(&y[i * n..(i + 1) * n])
                .map(|(u, v)| u.conj() * v)
                .sum()
        })
        .collect();
    rows.iter().sum()
}

/// Probability in the band of two cells along every edge.
pub fn boundary_weight(state: &WaveState) -> f64 {
    let g = state.grid();
    let n = g.n;
    let edge = |i: usize| i < 2 || i >= n - 2;
    let comps = state.components();
    row_reduce(n, |i| {
        (0..n)
            .filter(|&j| edge(i) || edge(j))
            .map(|j| comps.iter().map(|c| c[[i, j]].norm_sqr()).sum::<f64>())
            .sum()
    }) * g.cell()
}

/// Population of the upper adiabatic state, Σ |⟨u(x,y)|Ψ(x,y)⟩|² dx².
pub fn upper_adiabatic_population(s: &SpinorField, p: &Params) -> f64 {
    let n = s.grid.n;
    let xs = s.grid.coords();
    row_reduce(n, |i| {
        (0..n)
            .map(|j| {
                let v = diabatic_potential(p, xs[i], xs[j]);
                let (_, hi) = v.eigenvalues();
                // Upper eigenvector ∝ (v12, hi − v11); at v12 = 0 it is |e⟩ (Ω ≥ 0).
                let (a, b) = if v.v12.norm() > 1e-300 {
                    (v.v12, Complex64::new(hi - v.v11, 0.0))
                } else {
                    (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
                };
                let nrm = (a.norm_sqr() + b.norm_sqr()).sqrt();
                (a.conj() * s.psi_e[[i, j]] + b.conj() * s.psi_g[[i, j]]).norm_sqr() / (nrm * nrm)
            })
            .sum()
    }) * s.grid.cell()
}

/// One full-model step (builds a fresh propagator; use [`SplitOperator`] in loops).
pub fn step_full(s: SpinorField, p: &Params, dt: f64) -> SpinorField {
    let op = SplitOperator::new(p, &s.grid, dt, Mode::Full);
    let mut w = WaveState::Spinor(s);
    op.step(&mut w);
    match w {
        WaveState::Spinor(s) => s,
        WaveState::Scalar(_) => unreachable!(),
    }
}

/// One semi-adiabatic step.
pub fn step_semi_adiabatic(s: ScalarField, p: &Params, dt: f64) -> ScalarField {
    let op = SplitOperator::new(p, &s.grid, dt, Mode::SemiAdiabatic);
    let mut w = WaveState::Scalar(s);
    op.step(&mut w);
    match w {
        WaveState::Scalar(s) => s,
        WaveState::Spinor(_) => unreachable!(),
    }
}

fn prepare(s0: WaveState, mode: Mode) -> Result<WaveState, PropagationError> {
    match (s0, mode) {
        (WaveState::Spinor(s), Mode::Full) => Ok(WaveState::Spinor(s)),
        (WaveState::Scalar(s), Mode::SemiAdiabatic) => Ok(WaveState::Scalar(s)),
        // The semi-adiabatic model carries no spin: keep the spatial factor.
        (WaveState::Spinor(s), Mode::SemiAdiabatic) => Ok(WaveState::Scalar(project_initial_spinor(&s))),
        (WaveState::Scalar(_), Mode::Full) => Err(PropagationError::ModeMismatch(Mode::Full)),
    }
}

/// Propagates `s0` and collects records and snapshots.
pub fn propagate(s0: WaveState, p: &Params, cfg: &PropagationConfig) -> Result<Trajectory, PropagationError> {
    let mut snapshots = Vec::new();
    let stride = cfg.snapshot_stride;
    let records = propagate_with(s0, p, cfg, |k, state| {
        if stride > 0 && k % stride == 0 {
            snapshots.push(state.clone());
        }
    })?;
    Ok(Trajectory {
        mode: cfg.mode,
        dt: cfg.dt,
        records,
        snapshots,
    })
}

/// Propagates `s0`, calling `visit(step, state)` after every step (and for
/// step 0), and returns the scalar records.
pub fn propagate_with<F>(
    s0: WaveState,
    p: &Params,
    cfg: &PropagationConfig,
    mut visit: F,
) -> Result<Vec<Record>, PropagationError>
where
    F: FnMut(usize, &WaveState),
{
    cfg.validate()?;
    let mut state = prepare(s0, cfg.mode)?;
    state.grid().validated()?;
    let op = SplitOperator::new(p, state.grid(), cfg.dt, cfg.mode);
    let reference = state.clone();
    let steps = cfg.steps();
    let t0 = state.time();
    let mut records = Vec::with_capacity(steps / cfg.record_stride + 2);
    for k in 0..=steps {
        if k > 0 {
            op.step(&mut state);
            // Avoid accumulating rounding in the clock.
            state.set_time(t0 + k as f64 * cfg.dt);
        }
        if k % cfg.record_stride == 0 || k == steps {
            let r = op.measure(&state, &reference);
            if (r.norm - 1.0).abs() > cfg.norm_guard || !r.norm.is_finite() {
                return Err(PropagationError::NormDrift { t: r.t, norm: r.norm });
            }
            let edge = boundary_weight(&state);
            if edge > cfg.boundary_guard {
                return Err(PropagationError::BoundaryLeak { t: r.t, weight: edge });
            }
            records.push(r);
        }
        visit(k, &state);
    }
    Ok(records)
}

/// Default grid: n = 512 and L = ρ_min + max(8, 4λ + 6).
///
/// The part of the packet that starts on the upper surface crosses the
/// conical intersection and lands on the lower surface with enough energy
/// to reach ρ ≈ ρ_min + 4λ; the margin keeps it off the periodic edge.
pub fn default_grid(p: &Params) -> Result<GridSpec, GridError> {
    let rho = surface_geometry(p).rho_min;
    let half_width = rho + (4.0 * p.lambda + 6.0).max(8.0);
    let mut n = 512;
    while 2.0 * half_width / n as f64 > crate::grid::MAX_SPACING {
        n *= 2;
    }
    GridSpec::new(n, half_width)
}
