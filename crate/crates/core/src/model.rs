//! The cavity E×ε Hamiltonian in the quadrature representation.
//!
//! All quantities are dimensionless: energies in units of the mode energy,
//! lengths in units of the oscillator length. The Hamiltonian is
//!
//! ```text
//! H = (p_x² + p_y²)/2 + (x² + y²)/2 + Ω σ_z/2
//!     + 2λ x (cos φ σ_x + sin φ σ_y) + 2λ y (cos θ σ_x + sin θ σ_y)
//! ```
//!
//! which carries a zero-point offset of +1 relative to the ladder form
//! `a†a + b†b + Ω σ_z/2 + ...`. The offset is kept everywhere.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{angular_distance, lit, reduce_angle, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coupling lambda must be finite and non-negative, got {0}")]
    InvalidCoupling(f64),
    #[error("transition frequency omega_q must be finite and non-negative, got {0}")]
    InvalidFrequency(f64),
    #[error("phase {name} must be finite, got {value}")]
    InvalidPhase { name: &'static str, value: f64 },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

/// Couplings and field phases of the cavity Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams<T> {
    /// Scaled coupling λ.
    pub lambda: T,
    /// Scaled transition frequency Ω (plays the role of the detuning).
    pub omega_q: T,
    /// Field phase of mode a.
    pub phi: T,
    /// Field phase of mode b.
    pub theta: T,
}

impl<T: Real> ModelParams<T> {
    /// Validates the parameters and reduces both phases into `[0, 2π)`.
    pub fn new(lambda: T, omega_q: T, phi: T, theta: T) -> Result<Self, ModelError> {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        if !lambda.is_finite() || lambda < T::zero() {
            return Err(ModelError::InvalidCoupling(f(lambda)));
        }
        if !omega_q.is_finite() || omega_q < T::zero() {
            return Err(ModelError::InvalidFrequency(f(omega_q)));
        }
        if !phi.is_finite() {
            return Err(ModelError::InvalidPhase {
                name: "phi",
                value: f(phi),
            });
        }
        if !theta.is_finite() {
            return Err(ModelError::InvalidPhase {
                name: "theta",
                value: f(theta),
            });
        }
        Ok(Self {
            lambda,
            omega_q,
            phi: reduce_angle(phi),
            theta: reduce_angle(theta),
        })
    }

    /// The cylindrically symmetric configuration φ = 0, θ = π/2.
    pub fn cylindrical(lambda: T, omega_q: T) -> Result<Self, ModelError> {
        Self::new(lambda, omega_q, T::zero(), T::FRAC_PI_2())
    }

    /// Re-validates a value that may have been built field by field.
    pub fn validated(self) -> Result<Self, ModelError> {
        Self::new(self.lambda, self.omega_q, self.phi, self.theta)
    }

    /// True when |φ − θ| is an odd multiple of π/2, i.e. the Hamiltonian is
    /// unitarily equivalent to the cylindrical E×ε form.
    pub fn is_cylindrical(&self) -> bool {
        let d = angular_distance(self.phi, self.theta);
        (d - T::FRAC_PI_2()).abs() <= T::identity_tol()
    }

    /// cos(φ − θ): controls the anisotropy of the adiabatic surfaces.
    pub fn phase_cos(&self) -> T {
        (self.phi - self.theta).cos()
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_theta(mut self, theta: T) -> Self {
        self.theta = reduce_angle(theta);
        self
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let c = |v: T| U::from_f64(v.to_f64().unwrap()).unwrap();
        ModelParams {
            lambda: c(self.lambda),
            omega_q: c(self.omega_q),
            phi: c(self.phi),
            theta: c(self.theta),
        }
    }
}

/// Hermitian 2×2 potential in the diabatic (spin) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialMatrix<T> {
    pub v11: T,
    pub v22: T,
    pub v12: Complex<T>,
}

impl<T: Real> PotentialMatrix<T> {
    pub fn v21(&self) -> Complex<T> {
        self.v12.conj()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (T, T) {
        let two = lit::<T>(2.0);
        let mean = (self.v11 + self.v22) / two;
        let half = (self.v11 - self.v22) / two;
        let r = half.hypot(self.v12.norm());
        (mean - r, mean + r)
    }
}

/// Diabatic potential matrix at the quadrature point (x, y).
pub fn diabatic_potential<T: Real>(p: &ModelParams<T>, x: T, y: T) -> PotentialMatrix<T> {
    let two = lit::<T>(2.0);
    let harmonic = (x * x + y * y) / two;
    let half_gap = p.omega_q / two;
    let ea = Complex::from_polar(T::one(), -p.phi);
    let eb = Complex::from_polar(T::one(), -p.theta);
    PotentialMatrix {
        v11: harmonic + half_gap,
        v22: harmonic - half_gap,
        v12: (ea * x + eb * y) * (two * p.lambda),
    }
}

/// |v12|² expressed in polar coordinates: 4λ²ρ²[1 + cos(φ−θ) sin 2ϕ].
fn coupling_sq<T: Real>(p: &ModelParams<T>, rho: T, varphi: T) -> T {
    let four = lit::<T>(4.0);
    let k = T::one() + p.phase_cos() * (varphi + varphi).sin();
    // 1 + c sin 2ϕ ≥ 0 analytically; clamp rounding.
    four * p.lambda * p.lambda * rho * rho * k.max(T::zero())
}

/// Lower and upper adiabatic surfaces `(V−, V+)` at polar point (ρ, ϕ).
pub fn adiabatic_surfaces<T: Real>(p: &ModelParams<T>, rho: T, varphi: T) -> (T, T) {
    let two = lit::<T>(2.0);
    let half_gap = p.omega_q / two;
    let r = (half_gap * half_gap + coupling_sq(p, rho, varphi)).sqrt();
    let base = rho * rho / two;
    (base - r, base + r)
}

/// Lower adiabatic surface at a Cartesian point.
pub fn lower_surface_xy<T: Real>(p: &ModelParams<T>, x: T, y: T) -> T {
    diabatic_potential(p, x, y).eigenvalues().0
}

/// Static geometry of the lower surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceGeometry<T> {
    /// Radius of the lower-surface minimum (0 if no sombrero).
    pub rho_min: T,
    /// V− at `rho_min` along `direction`.
    pub v_min: T,
    /// Splitting at the conical intersection.
    pub gap_at_ci: T,
    /// Smallest λ for which `rho_min > 0` at this Ω and phase pair.
    pub critical_lambda: T,
    /// Polar angle along which the minimum was searched.
    pub direction: T,
}

/// Closed-form ring radius `sqrt(4λ² − (Ω/4λ)²)` of the cylindrical case,
/// or 0 below the critical coupling.
pub fn symmetric_rho_min<T: Real>(lambda: T, omega_q: T) -> T {
    anisotropic_rho_min(lambda, omega_q, T::one())
}

/// Ring radius along a direction where |v12|² = 4λ²kρ².
fn anisotropic_rho_min<T: Real>(lambda: T, omega_q: T, k: T) -> T {
    if lambda <= T::zero() || k <= T::zero() {
        return T::zero();
    }
    let sixteen = lit::<T>(16.0);
    let four = lit::<T>(4.0);
    let sq = four * lambda * lambda * k - omega_q * omega_q / (sixteen * lambda * lambda * k);
    if sq > T::zero() {
        sq.sqrt()
    } else {
        T::zero()
    }
}

/// Minimizes V−(ρ) along the two candidate directions ϕ = π/4, 3π/4 by
/// bisection on the sign of dV−/dρ.
pub fn surface_geometry<T: Real>(p: &ModelParams<T>) -> SurfaceGeometry<T> {
    let c = p.phase_cos();
    let quarter = T::FRAC_PI_4();
    let three_quarter = lit::<T>(3.0) * quarter;
    // k = 1 + c sin 2ϕ is 1 + c at π/4 and 1 − c at 3π/4; the deeper well
    // lies along the larger k.
    let (direction, k) = if c >= T::zero() {
        (quarter, T::one() + c)
    } else {
        (three_quarter, T::one() - c)
    };
    let rho_min = minimize_radial(p.lambda, p.omega_q, k);
    let (v_min, _) = adiabatic_surfaces(p, rho_min, direction);
    let k_max = T::one() + c.abs();
    SurfaceGeometry {
        rho_min,
        v_min,
        gap_at_ci: p.omega_q,
        critical_lambda: (p.omega_q / (lit::<T>(8.0) * k_max)).sqrt(),
        direction,
    }
}

/// Root of g(ρ) = 1 − 4λ²k / sqrt(Ω²/4 + 4λ²kρ²), i.e. of dV−/dρ divided by ρ.
fn minimize_radial<T: Real>(lambda: T, omega_q: T, k: T) -> T {
    let four = lit::<T>(4.0);
    let a = four * lambda * lambda * k;
    if a <= T::zero() {
        return T::zero();
    }
    let half_gap_sq = omega_q * omega_q / four;
    let g = |rho: T| T::one() - a / (half_gap_sq + a * rho * rho).sqrt();
    // g is increasing; a minimum off the origin exists iff g(0+) < 0.
    if omega_q > T::zero() && g(T::zero()) >= T::zero() {
        return T::zero();
    }
    let mut lo = T::zero();
    // g(ρ) > 0 once aρ² > a², i.e. ρ > sqrt(a).
    let mut hi = a.sqrt() + T::one();
    for _ in 0..400 {
        let mid = (lo + hi) / lit::<T>(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / lit::<T>(2.0)
}

/// Scalar centrifugal and gauge corrections of the adiabatic Hamiltonian,
/// in scaled units with effective coupling 2λ and Δ → Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionTerms<T> {
    pub v_cent: T,
    /// φ-independent part of the gauge term, (1/2ρ²)(1 + Ω/√(Ω²+16λ²ρ²))·½.
    pub v_gauge_scalar: T,
}

pub fn correction_terms<T: Real>(p: &ModelParams<T>, rho: T) -> Result<CorrectionTerms<T>, ModelError> {
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(ModelError::NonPositiveRadius(rho.to_f64().unwrap_or(f64::NAN)));
    }
    let two = lit::<T>(2.0);
    let g = two * p.lambda;
    let d = p.omega_q;
    let denom = d * d + lit::<T>(4.0) * g * g * rho * rho;
    let v_cent = g * g * d * d / (two * denom * denom);
    let ratio = if denom > T::zero() { d / denom.sqrt() } else { T::one() };
    let v_gauge_scalar = (T::one() + ratio) / (two * rho * rho) / two;
    Ok(CorrectionTerms { v_cent, v_gauge_scalar })
}
