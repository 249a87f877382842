//! Uniform periodic 2D quadrature grid and its Fourier transform.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Finest spacing accepted; the unit-width ground-state Gaussian needs at
/// least four points per oscillator length.
pub const MAX_SPACING: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("points per axis must be a power of two >= 8, got {0}")]
    NotPowerOfTwo(usize),
    #[error("half width must be positive and finite, got {0}")]
    BadHalfWidth(f64),
    #[error("grid spacing {dx} exceeds {MAX_SPACING}; increase n or reduce the half width")]
    TooCoarse { dx: f64 },
    #[error("half width {half_width} does not contain the ring at rho_min={rho_min} plus 5 widths")]
    TooSmall { half_width: f64, rho_min: f64 },
}

/// `n × n` points spanning `[−L, L)` on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self, GridError> {
        Self { n, half_width }.validated()
    }

    pub fn validated(self) -> Result<Self, GridError> {
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(GridError::NotPowerOfTwo(self.n));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(GridError::BadHalfWidth(self.half_width));
        }
        let dx = self.dx();
        if dx > MAX_SPACING + 1e-15 {
            return Err(GridError::TooCoarse { dx });
        }
        Ok(self)
    }

    /// Checks that a packet on a ring of radius `rho_min` stays away from the edge.
    pub fn check_contains(&self, rho_min: f64) -> Result<(), GridError> {
        if self.half_width <= rho_min + 5.0 {
            return Err(GridError::TooSmall {
                half_width: self.half_width,
                rho_min,
            });
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Cell area dx².
    pub fn cell(&self) -> f64 {
        self.dx() * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n).map(|j| -self.half_width + j as f64 * dx).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n as i64;
        let dk = 2.0 * std::f64::consts::PI / (self.n as f64 * self.dx());
        (0..n).map(|j| if j < n / 2 { j } else { j - n } as f64 * dk).collect()
    }

    /// Index of the grid point mirrored through the origin along one axis.
    pub fn mirror(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Nearest grid index to coordinate `x`.
    pub fn index_of(&self, x: f64) -> usize {
        let j = ((x + self.half_width) / self.dx()).round();
        (j.max(0.0) as usize).min(self.n - 1)
    }
}

/// Row-then-column 2D FFT over row-major `n × n` data.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Unnormalized inverse transform in place (the caller divides by n²).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Forward transform leaving the spectrum transposed, `[ky, kx]`.
    /// Saves two transposes when the spectral factor is symmetric in kx ↔ ky.
    pub fn forward_transposed(&self, data: &mut [Complex64]) {
        self.rows(data, &self.forward);
        transpose_square(data, self.n);
        self.rows(data, &self.forward);
    }

    /// Inverse of [`Fft2::forward_transposed`] (unnormalized).
    pub fn inverse_transposed(&self, data: &mut [Complex64]) {
        self.rows(data, &self.inverse);
        transpose_square(data, self.n);
        self.rows(data, &self.inverse);
    }

    fn rows(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "field size does not match FFT plan");
        data.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        self.rows(data, fft);
        transpose_square(data, self.n);
        self.rows(data, fft);
        transpose_square(data, self.n);
    }
}

/// In-place transpose in cache-sized tiles.
fn transpose_square(data: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}
