//! Geometric phase of the lower adiabatic state for loops around the
//! conical intersection.
//!
//! The lower adiabatic state is written in the single-valued gauge
//! `(sin ν, −cos ν e^{iμ})` with
//!
//! ```text
//! tan 2ν = 4λρ sqrt(1 + sin 2ϕ cos(φ−θ)) / Ω
//! μ      = arg( cos ϕ e^{iφ} + sin ϕ e^{iθ} )
//! ```
//!
//! and the phase for a circle of radius R is `γ = −∮ cos²ν ∂μ/∂ϕ dϕ`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{symmetric_rho_min, ModelError, ModelParams};
use crate::scalar::{lit, wrap_nonpositive, Real};

/// Smallest sample count accepted by [`berry_phase_numeric`].
pub const MIN_SAMPLES: usize = 64;
/// Refinement stops here and reports non-convergence.
pub const MAX_SAMPLES: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BerryError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("at least {MIN_SAMPLES} samples required, got {0}")]
    TooFewSamples(usize),
    #[error("quadrature did not converge after {samples} samples: last estimates {previous} and {last}")]
    NotConverged { samples: usize, previous: f64, last: f64 },
    #[error("closed form requires |phi - theta| = pi/2 (mod pi), got phi={phi}, theta={theta}")]
    NotCylindrical { phi: f64, theta: f64 },
    #[error("phase map cell lambda={lambda}, theta={theta}: {source}")]
    Cell {
        lambda: f64,
        theta: f64,
        #[source]
        source: Box<BerryError>,
    },
    #[error("no sombrero minimum at lambda={lambda} (omega_q={omega_q}); raise the lower coupling bound")]
    NoMinimum { lambda: f64, omega_q: f64 },
    #[error("invalid range or resolution: {0}")]
    InvalidRange(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mixing angle ν and phase angle μ of the adiabatic states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticAngles<T> {
    pub nu: T,
    pub mu: T,
}

/// The loop curve `z(ϕ) = cos ϕ e^{iφ} + sin ϕ e^{iθ}`; μ = arg z.
#[inline]
fn loop_curve<T: Real>(p: &ModelParams<T>, varphi: T) -> (T, T) {
    let (s, c) = varphi.sin_cos();
    (c * p.phi.cos() + s * p.theta.cos(), c * p.phi.sin() + s * p.theta.sin())
}

/// Evaluates ν and μ at (ρ, ϕ). With `prev_mu` the returned μ is shifted by a
/// multiple of 2π onto the branch closest to it.
pub fn adiabatic_angles<T: Real>(
    p: &ModelParams<T>,
    rho: T,
    varphi: T,
    prev_mu: Option<T>,
) -> Result<AdiabaticAngles<T>, BerryError> {
    if !(rho > T::zero()) {
        return Err(BerryError::NonPositiveRadius(rho.to_f64().unwrap_or(f64::NAN)));
    }
    let (zr, zi) = loop_curve(p, varphi);
    let coupling = lit::<T>(2.0) * p.lambda * rho * (zr * zr + zi * zi).sqrt();
    // ν = ½ atan2(2|v12|, Ω) lies in [0, π/2]; Ω = 0 gives π/4.
    let nu = (coupling + coupling).atan2(p.omega_q) / lit::<T>(2.0);
    let mut mu = zi.atan2(zr);
    if let Some(prev) = prev_mu {
        let k = ((prev - mu) / T::TAU()).round();
        mu = mu + k * T::TAU();
    }
    Ok(AdiabaticAngles { nu, mu })
}

/// cos²ν(ϕ) · ∂μ/∂ϕ on the circle of radius `radius`.
///
/// ∂μ/∂ϕ = sin(θ−φ)/|z|², which vanishes identically for θ = φ (mod π):
/// there the adiabatic states can be chosen real.
fn connection<T: Real>(p: &ModelParams<T>, radius: T, sin_dphase: T, varphi: T) -> T {
    if sin_dphase == T::zero() {
        return T::zero();
    }
    let (zr, zi) = loop_curve(p, varphi);
    let z2 = zr * zr + zi * zi;
    let two = lit::<T>(2.0);
    let half_gap = p.omega_q / two;
    let coupling = two * p.lambda * radius;
    let e = (half_gap * half_gap + coupling * coupling * z2).sqrt();
    let cos_2nu = if e > T::zero() { half_gap / e } else { T::one() };
    (T::one() + cos_2nu) / two * sin_dphase / z2
}

/// Raw (unwrapped) loop integral by the periodic trapezoidal rule with
/// `n` samples, starting the loop at `start`.
pub(crate) fn trapezoid<T: Real>(p: &ModelParams<T>, radius: T, n: usize, start: T) -> T {
    let s = (p.theta - p.phi).sin();
    let s = if s.abs() <= T::epsilon() { T::zero() } else { s };
    let h = T::TAU() / lit::<T>(n as f64);
    let mut acc = T::zero();
    for k in 0..n {
        acc = acc + connection(p, radius, s, start + lit::<T>(k as f64) * h);
    }
    -acc * h
}

fn convergence_tol<T: Real>() -> T {
    lit::<T>(1e-8).max(lit::<T>(64.0) * T::epsilon() * T::PI())
}

/// Numerical geometric phase for a circle of radius `radius`, refined by
/// doubling from `n_samples` until successive estimates differ by < 1e−8.
/// The result is reported in `(−2π, 0]`.
pub fn berry_phase_numeric<T: Real>(p: &ModelParams<T>, radius: T, n_samples: usize) -> Result<T, BerryError> {
    berry_phase_raw(p, radius, n_samples, T::zero()).map(wrap_nonpositive)
}

/// As [`berry_phase_numeric`] but without wrapping, and with a configurable
/// loop start angle.
pub fn berry_phase_raw<T: Real>(p: &ModelParams<T>, radius: T, n_samples: usize, start: T) -> Result<T, BerryError> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(BerryError::NonPositiveRadius(radius.to_f64().unwrap_or(f64::NAN)));
    }
    if n_samples < MIN_SAMPLES {
        return Err(BerryError::TooFewSamples(n_samples));
    }
    let tol = convergence_tol::<T>();
    let mut n = n_samples;
    let mut prev = trapezoid(p, radius, n, start);
    loop {
        // Doubling reuses the previous nodes: T_2n = T_n/2 + midpoint sum.
        let h = T::TAU() / lit::<T>(n as f64);
        let s = (p.theta - p.phi).sin();
        let s = if s.abs() <= T::epsilon() { T::zero() } else { s };
        let mut mid = T::zero();
        for k in 0..n {
            let x = start + (lit::<T>(k as f64) + lit::<T>(0.5)) * h;
            mid = mid + connection(p, radius, s, x);
        }
        let next = prev / lit::<T>(2.0) - mid * h / lit::<T>(2.0);
        n *= 2;
        if (next - prev).abs() < tol {
            return Ok(next);
        }
        if n >= MAX_SAMPLES {
            return Err(BerryError::NotConverged {
                samples: n,
                previous: prev.to_f64().unwrap(),
                last: next.to_f64().unwrap(),
            });
        }
        prev = next;
    }
}

/// Closed form `−π(1 + Ω/sqrt(Ω² + 16λ²R²))`, valid only for the
/// cylindrically symmetric phase configurations. For θ − φ = −π/2 the loop
/// curve winds the other way and the sign of the phase flips.
pub fn berry_phase_closed_form<T: Real>(p: &ModelParams<T>, radius: T) -> Result<T, BerryError> {
    if !p.is_cylindrical() {
        return Err(BerryError::NotCylindrical {
            phi: p.phi.to_f64().unwrap(),
            theta: p.theta.to_f64().unwrap(),
        });
    }
    if !(radius > T::zero()) {
        return Err(BerryError::NonPositiveRadius(radius.to_f64().unwrap_or(f64::NAN)));
    }
    let d = p.omega_q;
    let lr = lit::<T>(4.0) * p.lambda * radius;
    let ratio = if d > T::zero() {
        d / (d * d + lr * lr).sqrt()
    } else {
        T::zero()
    };
    let orientation = (p.theta - p.phi).sin().signum();
    Ok(-orientation * T::PI() * (T::one() + ratio))
}

/// Geometric phase sampled over a (λ, θ) lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseMap<T> {
    pub lambda_axis: Vec<T>,
    pub theta_axis: Vec<T>,
    /// Row-major, `gamma[i * theta_axis.len() + j]` is at `(lambda_axis[i], theta_axis[j])`.
    pub gamma: Vec<T>,
}

impl<T: Real> PhaseMap<T> {
    pub fn get(&self, i_lambda: usize, i_theta: usize) -> T {
        self.gamma[i_lambda * self.theta_axis.len() + i_theta]
    }
}

/// Evenly spaced samples over `[lo, hi]`, both ends included.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / lit::<T>((n - 1) as f64);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * lit::<T>(i as f64) })
        .collect()
}

/// Computes γ at R = ρ_min of the cylindrical case for every (λ, θ); φ and Ω
/// are taken from `base`.
pub fn phase_map<T: Real>(
    base: &ModelParams<T>,
    lambda_range: (T, T),
    theta_range: (T, T),
    resolution: (usize, usize),
) -> Result<PhaseMap<T>, BerryError> {
    let (nl, nt) = resolution;
    if nl == 0 || nt == 0 {
        return Err(BerryError::InvalidRange("resolution must be positive".into()));
    }
    if !(lambda_range.0 > T::zero()) || lambda_range.1 < lambda_range.0 {
        return Err(BerryError::InvalidRange(
            "lambda range must be positive and increasing".into(),
        ));
    }
    let lambda_axis = linspace(lambda_range.0, lambda_range.1, nl);
    let theta_axis = linspace(theta_range.0, theta_range.1, nt);
    let rows: Vec<Result<Vec<T>, BerryError>> = lambda_axis
        .par_iter()
        .map(|&lambda| {
            let radius = symmetric_rho_min(lambda, base.omega_q);
            if radius <= T::zero() {
                return Err(BerryError::NoMinimum {
                    lambda: lambda.to_f64().unwrap(),
                    omega_q: base.omega_q.to_f64().unwrap(),
                });
            }
            theta_axis
                .iter()
                .map(|&theta| {
                    let p = ModelParams::new(lambda, base.omega_q, base.phi, theta)?;
                    berry_phase_numeric(&p, radius, 256).map_err(|e| BerryError::Cell {
                        lambda: lambda.to_f64().unwrap(),
                        theta: theta.to_f64().unwrap(),
                        source: Box::new(e),
                    })
                })
                .collect()
        })
        .collect();
    let mut gamma = Vec::with_capacity(nl * nt);
    for row in rows {
        gamma.extend(row?);
    }
    Ok(PhaseMap {
        lambda_axis,
        theta_axis,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::surface_geometry;
    use crate::scalar::angular_distance;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cyl(l: f64, o: f64) -> ModelParams<f64> {
        ModelParams::cylindrical(l, o).unwrap()
    }

    /// Independent route: discrete Wilson loop over lower eigenvectors of the
    /// 2×2 potential, each multiplied by a random phase.
    fn wilson_loop(p: &ModelParams<f64>, radius: f64, n: usize, rng: &mut ChaCha8Rng) -> f64 {
        let states: Vec<[Complex64; 2]> = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                let v = crate::model::diabatic_potential(p, radius * a.cos(), radius * a.sin());
                let (lo, _) = v.eigenvalues();
                // (v12, lo − v11) is an eigenvector unless v12 = 0.
                let mut s = if v.v12.norm() > 1e-300 {
                    [v.v12, Complex64::new(lo - v.v11, 0.0)]
                } else {
                    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
                };
                let norm = (s[0].norm_sqr() + s[1].norm_sqr()).sqrt();
                let g = Complex64::from_polar(1.0 / norm, rng.gen_range(0.0..2.0 * PI));
                s[0] *= g;
                s[1] *= g;
                s
            })
            .collect();
        let mut prod = Complex64::new(1.0, 0.0);
        for k in 0..n {
            let (a, b) = (&states[k], &states[(k + 1) % n]);
            prod *= a[0].conj() * b[0] + a[1].conj() * b[1];
        }
        -prod.arg()
    }

    #[test]
    fn cylindrical_mu_tracks_angle() {
        let p = cyl(1.0, 0.3);
        let mut prev = None;
        for k in 0..200 {
            let a = -PI + 4.0 * PI * k as f64 / 199.0;
            let ang = adiabatic_angles(&p, 1.0, a, prev).unwrap();
            if prev.is_some() {
                assert!((ang.mu - a).abs() < 1e-12, "{} {}", ang.mu, a);
            }
            prev = Some(ang.mu);
        }
    }

    #[test]
    fn nu_reproduces_tangent_relation() {
        let p = ModelParams::new(1.3_f64, 0.7, 0.4, 2.0).unwrap();
        for &(rho, a) in &[(0.5_f64, 0.1_f64), (2.0, 1.3), (3.0, -2.0)] {
            let ang = adiabatic_angles(&p, rho, a, None).unwrap();
            let expect = 4.0 * 1.3 * rho * (1.0 + (2.0 * a).sin() * (0.4_f64 - 2.0).cos()).sqrt() / 0.7;
            assert!(((2.0 * ang.nu).tan() - expect).abs() < 1e-12 * expect.max(1.0));
            assert!((0.0..=FRAC_PI_2).contains(&ang.nu));
        }
        let p0 = cyl(1.0, 0.0);
        assert!((adiabatic_angles(&p0, 1.0, 0.3, None).unwrap().nu - PI / 4.0).abs() < 1e-15);
        let big = cyl(1.0, 1e12);
        assert!(adiabatic_angles(&big, 1.0, 0.3, None).unwrap().nu < 1e-11);
    }

    #[test]
    fn equal_phases_keep_mu_constant_on_coupled_direction() {
        let p = ModelParams::new(1.0_f64, 0.5, 0.9, 0.9).unwrap();
        let ang = adiabatic_angles(&p, 2.0, 0.0, None).unwrap();
        assert!((ang.mu - 0.9).abs() < 1e-15);
        let ang = adiabatic_angles(&p, 2.0, 0.5, None).unwrap();
        assert!((ang.mu - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_rejected() {
        assert!(matches!(
            adiabatic_angles(&cyl(1.0, 0.0), 0.0, 0.0, None),
            Err(BerryError::NonPositiveRadius(_))
        ));
        assert!(matches!(
            berry_phase_numeric(&cyl(1.0, 0.0), 0.0, 64),
            Err(BerryError::NonPositiveRadius(_))
        ));
        assert!(matches!(
            berry_phase_numeric(&cyl(1.0, 0.0), 1.0, 10),
            Err(BerryError::TooFewSamples(10))
        ));
    }

    #[test]
    fn sign_change_without_detuning() {
        for r in [0.1, 0.5, 2.0, 10.0, 100.0] {
            let g = berry_phase_numeric(&cyl(1.0, 0.0), r, 64).unwrap();
            assert!((g + PI).abs() < 1e-10, "R={r}: {g}");
        }
    }

    #[test]
    fn equal_phases_give_no_phase() {
        for theta in [0.0, 1.0, 4.0] {
            let p = ModelParams::new(2.0, 1.0, theta, theta).unwrap();
            let g = berry_phase_numeric(&p, 3.0, 64).unwrap();
            assert_eq!(g, 0.0);
        }
        // θ − φ = π is also an intersecting-line case.
        let p = ModelParams::new(2.0, 1.0, 0.3, 0.3 + PI).unwrap();
        let g = berry_phase_numeric(&p, 3.0, 64).unwrap();
        assert!(angular_distance(g, 0.0) < 1e-8);
    }

    #[test]
    fn detuned_phase_at_ring_minimum() {
        // Frozen from an independent Wilson-loop evaluation: −π(1 + Ω/(8λ²)) at ρ_min.
        let p = cyl(3.0, 0.5);
        let r = surface_geometry(&p).rho_min;
        let g = berry_phase_numeric(&p, r, 64).unwrap();
        assert!((g - -3.163409269).abs() < 1e-8, "{g}");
        assert!((g + PI * (1.0 + 0.5 / 72.0)).abs() < 1e-10);
        let p = cyl(6.0, 0.5);
        let r = surface_geometry(&p).rho_min;
        let closed = berry_phase_closed_form(&p, r).unwrap();
        assert!((closed - -3.147046808).abs() < 1e-8, "{closed}");
    }

    #[test]
    fn closed_form_limits() {
        assert_eq!(berry_phase_closed_form(&cyl(1.0, 0.0), 2.0).unwrap(), -PI);
        let far = berry_phase_closed_form(&cyl(1.0, 0.5), 1e9).unwrap();
        assert!((far + PI).abs() < 1e-9);
        let err = berry_phase_closed_form(&ModelParams::new(1.0, 0.5, 0.0, 1.0).unwrap(), 1.0);
        assert!(matches!(err, Err(BerryError::NotCylindrical { .. })));
    }

    #[test]
    fn closed_form_matches_numeric_randomly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let l = rng.gen_range(0.05..8.0);
            let o = rng.gen_range(0.0..4.0);
            let r = rng.gen_range(0.05..15.0);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let p = ModelParams::new(l, o, phi, phi + sign * FRAC_PI_2).unwrap();
            let num = berry_phase_numeric(&p, r, 64).unwrap();
            let closed = wrap_nonpositive(berry_phase_closed_form(&p, r).unwrap());
            assert!(
                angular_distance(num, closed) < 1e-8,
                "l={l} o={o} r={r}: {num} vs {closed}"
            );
        }
    }

    #[test]
    fn numeric_matches_wilson_loop_for_general_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let l = rng.gen_range(0.3..4.0);
            let o = rng.gen_range(0.0..2.0);
            let r = rng.gen_range(0.3..6.0);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let theta = rng.gen_range(0.0..2.0 * PI);
            let p = ModelParams::new(l, o, phi, theta).unwrap();
            let num = berry_phase_numeric(&p, r, 64).unwrap();
            let oracle = wilson_loop(&p, r, 20_000, &mut rng);
            assert!(angular_distance(num, oracle) < 1e-5, "{p:?} r={r}: {num} vs {oracle}");
        }
    }

    #[test]
    fn gauge_and_start_independence() {
        let p = ModelParams::new(1.7_f64, 0.8, 0.5, 2.2).unwrap();
        let reference = berry_phase_raw(&p, 2.0, 64, 0.0).unwrap();
        for start in [0.3, 1.0, -2.5, 7.0] {
            let g = berry_phase_raw(&p, 2.0, 64, start).unwrap();
            assert!((g - reference).abs() < 1e-10);
        }
    }

    #[test]
    fn radius_independent_without_detuning() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::new(1.2_f64, 0.0, 0.2, 1.9).unwrap();
        let g0 = berry_phase_numeric(&p, 1.0, 64).unwrap();
        for _ in 0..20 {
            let g = berry_phase_numeric(&p, rng.gen_range(0.01..50.0), 64).unwrap();
            assert!((g - g0).abs() < 1e-10);
        }
    }

    #[test]
    fn trapezoid_is_at_least_second_order() {
        let p = ModelParams::new(0.6_f64, 1.0, 0.0, 0.8).unwrap();
        let limit = berry_phase_raw(&p, 1.0, 1 << 12, 0.0).unwrap();
        let mut last_err = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let err = (trapezoid(&p, 1.0, n, 0.0) - limit).abs();
            assert!(err <= last_err / 4.0 || err < 1e-13, "n={n}: {err} vs {last_err}");
            last_err = err;
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        // A nearly degenerate phase pair concentrates the connection into a
        // peak far narrower than any affordable sampling.
        let p = ModelParams::new(1.0, 1.0, 0.0, 1e-12).unwrap();
        match berry_phase_numeric(&p, 1.0, 64) {
            Err(BerryError::NotConverged { samples, .. }) => assert!(samples >= MAX_SAMPLES),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phase_map_shape_and_limits() {
        let base = ModelParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let map = phase_map(&base, (0.5, 10.0), (0.0, PI), (6, 9)).unwrap();
        assert_eq!(map.gamma.len(), 54);
        for i in 0..6 {
            assert!(angular_distance(map.get(i, 0), 0.0) < 1e-8);
            assert!(angular_distance(map.get(i, 8), 0.0) < 1e-8);
            for j in 0..9 {
                let g = map.get(i, j);
                assert!(g > -2.0 * PI && g <= 0.0);
            }
        }
        assert!((map.get(5, 4) + PI).abs() < 0.05);
        // Reflection θ → π − θ about π/2 for φ = 0.
        for i in 0..6 {
            for j in 0..9 {
                assert!(angular_distance(map.get(i, j), map.get(i, 8 - j)) < 1e-8);
            }
        }
    }

    #[test]
    fn phase_map_rejects_sub_critical_lambda() {
        let base = ModelParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            phase_map(&base, (0.1, 1.0), (0.0, PI), (4, 4)),
            Err(BerryError::NoMinimum { .. })
        ));
    }

    #[test]
    fn f32_phase() {
        let p = ModelParams::<f32>::cylindrical(1.0, 0.0).unwrap();
        let g = berry_phase_numeric(&p, 2.0, 64).unwrap();
        assert!((g + std::f32::consts::PI).abs() < 1e-5);
    }
}
