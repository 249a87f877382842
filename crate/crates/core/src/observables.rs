//! Mode-resolved observables of grid states: reduced density kernels,
//! photon statistics, Husimi Q functions, densities, characteristic times
//! and revival peaks.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridSpec;
use crate::hermite::hermite_functions;
use crate::model::ModelParams;
use crate::propagator::{Trajectory, WaveState};
use crate::scalar::{lit, Real};

/// Largest accepted deviation of a reduced trace from one.
pub const TRACE_TOL: f64 = 1e-6;
/// Largest accepted probability beyond the photon-number cutoff.
pub const TRUNCATION_TOL: f64 = 1e-6;
/// Default |autocorrelation| threshold for revival peaks.
pub const REVIVAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("reduced trace {trace} deviates from 1 by more than {TRACE_TOL}")]
    TraceDeviation { trace: f64 },
    #[error(
        "photon-number truncation at n_max={n_max} loses {loss:e} probability (grid cannot resolve higher Fock states)"
    )]
    Truncation { n_max: usize, loss: f64 },
    #[error("coupling lambda={lambda} is below 1/(2π); the interference time is undefined")]
    CouplingTooSmall { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    A,
    B,
}

impl ModeLabel {
    pub fn label(&self) -> &'static str {
        match self {
            ModeLabel::A => "a",
            ModeLabel::B => "b",
        }
    }
}

/// Reduced single-mode density kernel ρ(x_i, x_j), normalized so that
/// Σ_i ρ(x_i, x_i) dx = 1.
#[derive(Debug, Clone)]
pub struct ReducedMode {
    pub kernel: Array2<Complex64>,
    pub mode_label: ModeLabel,
    pub trace: f64,
    pub grid: GridSpec,
}

impl ReducedMode {
    /// tr ρ².
    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.kernel.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx
    }

    /// Largest |ρ_ij − ρ_ji*|.
    pub fn hermiticity_defect(&self) -> f64 {
        let k = &self.kernel;
        let n = k.nrows();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (k[[i, j]] - k[[j, i]].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the discretized operator ρ dx.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.kernel.nrows();
        let dx = self.grid.dx();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            // Symmetrize against rounding; the eigensolver assumes exact Hermiticity.
            (self.kernel[[i, j]] + self.kernel[[j, i]].conj()) * (0.5 * dx)
        });
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// ⟨(x² + p² − 1)/2⟩ evaluated directly on the grid.
    pub fn quadrature_mean_n(&self) -> f64 {
        let n = self.grid.n;
        let dx = self.grid.dx();
        let xs = self.grid.coords();
        let ks = self.grid.momenta();
        let x2: f64 = (0..n).map(|i| xs[i] * xs[i] * self.kernel[[i, i]].re).sum::<f64>() * dx;
        // ρ̃(k, k) = Σ_ij e^{−ik x_i} ρ_ij e^{ik x_j}: inverse transform along j,
        // forward along i, keep the diagonal.
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut m = self.kernel.clone();
        for mut row in m.axis_iter_mut(Axis(0)) {
            let mut buf: Vec<Complex64> = row.iter().cloned().collect();
            inv.process(&mut buf);
            row.iter_mut().zip(buf).for_each(|(a, b)| *a = b);
        }
        let mut p2 = 0.0;
        for (k, col) in m.axis_iter(Axis(1)).enumerate() {
            let mut buf: Vec<Complex64> = col.iter().cloned().collect();
            fwd.process(&mut buf);
            p2 += ks[k] * ks[k] * buf[k].re;
        }
        let p2 = p2 * dx / n as f64;
        0.5 * (x2 + p2 - self.trace)
    }
}

/// Traces out the other mode (and the spin) from a grid state.
pub fn reduce_mode(s: &WaveState, mode: ModeLabel) -> Result<ReducedMode, ObservableError> {
    let grid = *s.grid();
    let n = grid.n;
    let dx = grid.dx();
    let mut kernel = Array2::<Complex64>::zeros((n, n));
    for c in s.components() {
        // Mode a keeps the row index x; mode b keeps the column index y.
        let m = match mode {
            ModeLabel::A => c.to_owned(),
            ModeLabel::B => c.t().to_owned(),
        };
        let mh = m.t().mapv(|z| z.conj());
        kernel = kernel + m.dot(&mh);
    }
    kernel.mapv_inplace(|z| z * dx);
    let trace = (0..n).map(|i| kernel[[i, i]].re).sum::<f64>() * dx;
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(ObservableError::TraceDeviation { trace });
    }
    Ok(ReducedMode {
        kernel,
        mode_label: mode,
        trace,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonStats {
    pub p_n: Vec<f64>,
    pub mean_n: f64,
    pub parity_even_weight: f64,
    /// 1 − Σ p_n.
    pub truncation_loss: f64,
}

impl PhotonStats {
    pub fn odd_weight(&self) -> f64 {
        self.p_n.iter().skip(1).step_by(2).sum()
    }

    pub fn even_weight(&self) -> f64 {
        self.p_n.iter().step_by(2).sum()
    }
}

/// Highest Fock number whose classical turning point √(2n+1) lies inside
/// both the position box and the momentum band of `g`.
pub fn resolvable_n_max(g: &GridSpec) -> usize {
    let reach = g.half_width.min(std::f64::consts::PI / g.dx());
    ((reach * reach - 1.0) / 2.0).floor().max(1.0) as usize
}

/// Projects a reduced kernel onto Hermite functions, doubling `n_max`
/// until the lost probability drops below [`TRUNCATION_TOL`].
pub fn photon_statistics(r: &ReducedMode, n_max: usize) -> Result<PhotonStats, ObservableError> {
    let cap = resolvable_n_max(&r.grid);
    let mut n_max = n_max.max(1).min(cap);
    loop {
        let p_n = project(r, n_max);
        let total: f64 = p_n.iter().sum();
        let loss = r.trace - total;
        if loss <= TRUNCATION_TOL {
            let mean_n = p_n.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            let parity_even_weight = p_n.iter().step_by(2).sum();
            return Ok(PhotonStats {
                p_n,
                mean_n,
                parity_even_weight,
                truncation_loss: loss,
            });
        }
        if n_max >= cap {
            return Err(ObservableError::Truncation { n_max, loss });
        }
        n_max = (2 * n_max).min(cap);
    }
}

fn project(r: &ReducedMode, n_max: usize) -> Vec<f64> {
    let xs = r.grid.coords();
    let dx = r.grid.dx();
    let phi = hermite_functions(n_max, &xs);
    let k = &r.kernel;
    phi.par_iter()
        .map(|f| {
            // Σ_ij φ(x_i) ρ_ij φ(x_j), rows summed in order.
            let s: f64 = k
                .axis_iter(Axis(0))
                .zip(f)
                .map(|(row, fi)| fi * row.iter().zip(f).map(|(z, fj)| z.re * fj).sum::<f64>())
                .sum();
            (s * dx * dx).max(0.0)
        })
        .collect()
}

/// Rectangular lattice in the complex α plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
}

impl AlphaGrid {
    /// Square lattice of `points × points` samples on [−radius, radius]².
    pub fn square(radius: f64, points: usize) -> Self {
        let axis: Vec<f64> = (0..points)
            .map(|k| -radius + 2.0 * radius * k as f64 / (points.max(2) - 1) as f64)
            .collect();
        Self {
            re_axis: axis.clone(),
            im_axis: axis,
        }
    }

    /// Lattice radius large enough for a state with mean photon number `mean_n`.
    pub fn covering(mean_n: f64, points: usize) -> Self {
        Self::square((2.0 * mean_n.max(0.0)).sqrt() + 4.0, points)
    }

    fn cell(&self) -> f64 {
        let step = |a: &[f64]| if a.len() > 1 { a[1] - a[0] } else { 1.0 };
        step(&self.re_axis) * step(&self.im_axis)
    }
}

/// Q(α) sampled on an [`AlphaGrid`]; `q` is indexed `[re, im]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub alpha_grid: AlphaGrid,
    pub q: Array2<f64>,
}

impl QFunction {
    /// Riemann sum of Q over the lattice, ≈ 1 when the lattice covers the support.
    pub fn normalization(&self) -> f64 {
        self.q.sum() * self.alpha_grid.cell()
    }

    pub fn max(&self) -> f64 {
        self.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Husimi function Q(α) = ⟨α|ρ|α⟩/π by direct quadrature. `coarse` uses
/// every second grid point (2× spacing), a quarter of the cost.
pub fn husimi_q(r: &ReducedMode, alpha_grid: &AlphaGrid, coarse: bool) -> QFunction {
    let stride = if coarse { 2 } else { 1 };
    let xs: Vec<f64> = r.grid.coords().into_iter().step_by(stride).collect();
    let h = r.grid.dx() * stride as f64;
    let kernel = r.kernel.slice(ndarray::s![..;stride, ..;stride]).to_owned();
    let pre = std::f64::consts::PI.powf(-0.25);
    let sqrt2 = std::f64::consts::SQRT_2;
    let (nre, nim) = (alpha_grid.re_axis.len(), alpha_grid.im_axis.len());
    let values: Vec<f64> = (0..nre * nim)
        .into_par_iter()
        .map(|idx| {
            let alpha = Complex64::new(alpha_grid.re_axis[idx / nim], alpha_grid.im_axis[idx % nim]);
            let c: Vec<Complex64> = xs
                .iter()
                .map(|&x| {
                    let d = x - sqrt2 * alpha.re;
                    Complex64::from_polar(pre * (-d * d / 2.0).exp(), sqrt2 * alpha.im * x)
                })
                .collect();
            let s: Complex64 = kernel
                .axis_iter(Axis(0))
                .zip(&c)
                .map(|(row, ci)| ci.conj() * row.iter().zip(&c).map(|(z, cj)| z * cj).sum::<Complex64>())
                .sum();
            (s.re * h * h / std::f64::consts::PI).max(0.0)
        })
        .collect();
    QFunction {
        alpha_grid: alpha_grid.clone(),
        q: Array2::from_shape_vec((nre, nim), values).expect("lattice shape"),
    }
}

/// |ψ_e|² + |ψ_g|² (or |ψ|² for scalar states).
pub fn density_snapshot(s: &WaveState) -> Array2<f64> {
    let comps = s.components();
    let mut d = comps[0].mapv(|z| z.norm_sqr());
    for c in &comps[1..] {
        d.zip_mut_with(*c, |a, z| *a += z.norm_sqr());
    }
    d
}

/// Bilinear interpolation of a grid field at (x, y); zero outside.
pub fn sample_bilinear(field: &Array2<f64>, g: &GridSpec, x: f64, y: f64) -> f64 {
    let dx = g.dx();
    let fx = (x + g.half_width) / dx;
    let fy = (y + g.half_width) / dx;
    if fx < 0.0 || fy < 0.0 || fx >= (g.n - 1) as f64 || fy >= (g.n - 1) as f64 {
        return 0.0;
    }
    let (i, j) = (fx.floor() as usize, fy.floor() as usize);
    let (u, v) = (fx - i as f64, fy - j as f64);
    field[[i, j]] * (1.0 - u) * (1.0 - v)
        + field[[i + 1, j]] * u * (1.0 - v)
        + field[[i, j + 1]] * (1.0 - u) * v
        + field[[i + 1, j + 1]] * u * v
}

/// Samples `field` on the circle of radius `radius` at the given polar angles.
pub fn ring_samples(field: &Array2<f64>, g: &GridSpec, radius: f64, angles: &[f64]) -> Vec<f64> {
    angles
        .iter()
        .map(|a| sample_bilinear(field, g, radius * a.cos(), radius * a.sin()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeScales<T> {
    pub t_in: T,
    pub t_frac: T,
    pub t_rev: T,
}

/// Interference, fractional-revival and revival times: t_in = √(4π²λ² − 1),
/// t_frac = λ t_in, t_rev = 4λ t_in.
pub fn timescales<T: Real>(p: &ModelParams<T>) -> Result<TimeScales<T>, ObservableError> {
    let lambda = p.lambda;
    let four_pi2 = lit::<T>(4.0) * T::PI() * T::PI();
    let radicand = four_pi2 * lambda * lambda - T::one();
    // Let the exact boundary λ = 1/(2π) through despite rounding.
    if radicand < -T::identity_tol() {
        return Err(ObservableError::CouplingTooSmall {
            lambda: lambda.to_f64().unwrap_or(f64::NAN),
        });
    }
    let t_in = radicand.max(T::zero()).sqrt();
    Ok(TimeScales {
        t_in,
        t_frac: lambda * t_in,
        t_rev: lit::<T>(4.0) * lambda * t_in,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Revival {
    pub time: f64,
    pub peak: f64,
}

/// Interior local maxima of `values` above `threshold`, refined by a
/// parabola through the three samples around each maximum.
pub fn find_peaks(times: &[f64], values: &[f64], threshold: f64) -> Vec<Revival> {
    let mut out = Vec::new();
    for k in 1..values.len().saturating_sub(1) {
        let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
        if b < threshold || b < a || b <= c {
            continue;
        }
        let h = times[k + 1] - times[k];
        let denom = a - 2.0 * b + c;
        let (shift, peak) = if denom < 0.0 {
            let s = 0.5 * (a - c) / denom;
            (s, b - 0.25 * (a - c) * s)
        } else {
            (0.0, b)
        };
        out.push(Revival {
            time: times[k] + shift * h,
            peak,
        });
    }
    out
}

/// Revival peaks of |⟨Ψ(0)|Ψ(t)⟩| along a trajectory.
pub fn revival_detector(traj: &Trajectory, threshold: f64) -> Vec<Revival> {
    find_peaks(&traj.times(), &traj.autocorr_abs(), threshold)
}
