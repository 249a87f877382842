//! Truncated number-basis representation of the two-mode ⊗ spin
//! Hamiltonian, used as an independent check of the grid propagator.
//!
//! Basis index: `(n_a·N + n_b)·2 + s` with `s = 0` for |e⟩ and `s = 1`
//! for |g⟩. The coupling is √2λ(a + a†) so that x = (a + a†)/√2 reproduces
//! the quadrature Hamiltonian exactly; the free part a†a + b†b + 1 carries
//! the zero-point shift of the grid Hamiltonian.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridSpec;
use crate::hermite::hermite_functions;
use crate::propagator::{initial_state, propagate, Mode, PropagationConfig, PropagationError, SpinorField, WaveState};
use crate::Params;

/// Largest population tolerated in the top two shells of either mode.
pub const LEAKAGE_TOL: f64 = 1e-6;
/// Krylov dimension per substep.
const KRYLOV_DIM: usize = 30;
/// Target a-posteriori error per unit time of the Krylov exponential.
const KRYLOV_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("truncation N={0} is below the minimum of 2")]
    TooSmall(usize),
    #[error("|alpha|^2 = {norm_sq} exceeds the truncation headroom N/4 = {limit}")]
    NoHeadroom { norm_sq: f64, limit: f64 },
    #[error("top-shell population {leakage:e} exceeds {LEAKAGE_TOL:e} at t={t}; rerun with N >= {required_n}")]
    Leakage { t: f64, leakage: f64, required_n: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("krylov exponential failed to converge at t={0}")]
    NotConverged(f64),
}

/// State in the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    pub n: usize,
    pub amp: Vec<Complex64>,
}

#[inline]
pub fn index(n: usize, na: usize, nb: usize, s: usize) -> usize {
    (na * n + nb) * 2 + s
}

impl FockVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            amp: vec![Complex64::new(0.0, 0.0); 2 * n * n],
        }
    }

    pub fn basis(n: usize, na: usize, nb: usize, s: usize) -> Self {
        let mut v = Self::zeros(n);
        v.amp[index(n, na, nb, s)] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.amp.iter().zip(&other.amp).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &FockVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    fn weighted(&self, f: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for na in 0..n {
            for nb in 0..n {
                for s in 0..2 {
                    acc += f(na, nb, s) * self.amp[index(n, na, nb, s)].norm_sqr();
                }
            }
        }
        acc
    }

    /// Population with n_a or n_b in the top two shells.
    pub fn leakage(&self) -> f64 {
        let top = self.n.saturating_sub(2);
        self.weighted(|na, nb, _| if na >= top || nb >= top { 1.0 } else { 0.0 })
    }

    pub fn mean_n_a(&self) -> f64 {
        self.weighted(|na, _, _| na as f64)
    }

    pub fn mean_n_b(&self) -> f64 {
        self.weighted(|_, nb, _| nb as f64)
    }

    pub fn sigma_z(&self) -> f64 {
        self.weighted(|_, _, s| if s == 0 { 1.0 } else { -1.0 })
    }

    /// ⟨(−1)^{n_b}⟩.
    pub fn parity_b(&self) -> f64 {
        self.weighted(|_, nb, _| if nb % 2 == 0 { 1.0 } else { -1.0 })
    }
}

/// Hermitian operator in compressed-row form.
#[derive(Debug, Clone)]
pub struct FockOperator {
    pub n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl FockOperator {
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            *o = (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|k| self.vals[k] * v[self.cols[k]])
                .sum();
        });
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.cols[k] == c)
            .map(|k| self.vals[k])
            .unwrap_or_default()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for r in 0..d {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] = self.vals[k];
            }
        }
        m
    }

    /// max |H_ij − H_ji*|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                worst = worst.max((self.vals[k] - self.get(self.cols[k], r).conj()).norm());
            }
        }
        worst
    }

    /// Gershgorin bound on the spectral radius.
    fn norm_bound(&self) -> f64 {
        (0..self.dim())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k].norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Builds H = a†a + b†b + 1 + Ωσ_z/2 + √2λ(a+a†)(σ₊e^{−iφ} + σ₋e^{iφ})
/// + √2λ(b+b†)(σ₊e^{−iθ} + σ₋e^{iθ}) on N×N×2 states.
pub fn build_hamiltonian(p: &Params, n: usize) -> Result<FockOperator, FockError> {
    if n < 2 {
        return Err(FockError::TooSmall(n));
    }
    let g = std::f64::consts::SQRT_2 * p.lambda;
    // ⟨e|…|g⟩ coefficients for each mode.
    let ca = Complex64::from_polar(g, -p.phi);
    let cb = Complex64::from_polar(g, -p.theta);
    let dim = 2 * n * n;
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for na in 0..n {
        for nb in 0..n {
            for s in 0..2 {
                let mut entries: Vec<(usize, Complex64)> = Vec::with_capacity(5);
                let sz = if s == 0 { 0.5 } else { -0.5 };
                entries.push((
                    index(n, na, nb, s),
                    Complex64::new((na + nb + 1) as f64 + sz * p.omega_q, 0.0),
                ));
                // Row s couples to the other spin state t.
                let t = 1 - s;
                // ⟨e|V|g⟩ = c, ⟨g|V|e⟩ = c*.
                let coef = |c: Complex64| if s == 0 { c } else { c.conj() };
                if g != 0.0 {
                    for ma in [na.wrapping_sub(1), na + 1] {
                        if ma < n {
                            // ⟨na|(a + a†)|ma⟩ = √max(na, ma).
                            let m = (na.max(ma) as f64).sqrt();
                            entries.push((index(n, ma, nb, t), coef(ca) * m));
                        }
                    }
                    for mb in [nb.wrapping_sub(1), nb + 1] {
                        if mb < n {
                            let m = (nb.max(mb) as f64).sqrt();
                            entries.push((index(n, na, mb, t), coef(cb) * m));
                        }
                    }
                }
                entries.sort_by_key(|e| e.0);
                for (c, v) in entries {
                    cols.push(c);
                    vals.push(v);
                }
                row_ptr.push(cols.len());
            }
        }
    }
    Ok(FockOperator { n, row_ptr, cols, vals })
}

/// Product of coherent states |α_a⟩|α_b⟩ with the given spinor (e, g),
/// renormalized after truncation. Returns the state and the lost weight.
pub fn coherent_state(
    alpha_a: Complex64,
    alpha_b: Complex64,
    spinor: [Complex64; 2],
    n: usize,
) -> Result<(FockVector, f64), FockError> {
    if n < 2 {
        return Err(FockError::TooSmall(n));
    }
    let limit = n as f64 / 4.0;
    for a in [alpha_a, alpha_b] {
        if a.norm_sqr() > limit {
            return Err(FockError::NoHeadroom {
                norm_sq: a.norm_sqr(),
                limit,
            });
        }
    }
    let amps = |alpha: Complex64| -> Vec<Complex64> {
        let mut c = Vec::with_capacity(n);
        let mut cur = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        for k in 0..n {
            c.push(cur);
            cur = cur * alpha / ((k + 1) as f64).sqrt();
        }
        c
    };
    let (ca, cb) = (amps(alpha_a), amps(alpha_b));
    let sn = (spinor[0].norm_sqr() + spinor[1].norm_sqr()).sqrt();
    let mut v = FockVector::zeros(n);
    for (na, &a) in ca.iter().enumerate() {
        for (nb, &b) in cb.iter().enumerate() {
            for (s, &c) in spinor.iter().enumerate() {
                v.amp[index(n, na, nb, s)] = a * b * c / sn;
            }
        }
    }
    let norm = v.norm();
    v.amp.iter_mut().for_each(|z| *z /= norm);
    Ok((v, 1.0 - norm * norm))
}

/// The initial spinor (1, −1)/√2.
pub fn initial_spinor() -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)]
}

/// exp(−iHτ)v in a Lanczos subspace; returns the result and an a-posteriori
/// error estimate. Full reorthogonalization keeps the basis orthonormal.
fn krylov_step(h: &FockOperator, v: &[Complex64], tau: f64) -> (Vec<Complex64>, f64) {
    let dim = v.len();
    let m = KRYLOV_DIM.min(dim);
    let beta0 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<Complex64>> = vec![v.iter().map(|z| z / beta0).collect()];
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut residual = 0.0;
    for j in 0..m {
        h.apply(&basis[j], &mut w);
        let a: f64 = basis[j].iter().zip(&w).map(|(q, x)| (q.conj() * x).re).sum();
        alpha.push(a);
        // Two passes of classical Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c: Complex64 = q.iter().zip(&w).map(|(qi, x)| qi.conj() * x).sum();
                w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        residual = b;
        if j + 1 == m || b < 1e-13 {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|z| z / b).collect());
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    // c = U exp(−iτΛ) Uᵀ e1
    let c: Vec<Complex64> = (0..k)
        .map(|i| {
            (0..k)
                .map(|l| {
                    eig.eigenvectors[(i, l)]
                        * eig.eigenvectors[(0, l)]
                        * Complex64::from_polar(1.0, -tau * eig.eigenvalues[l])
                })
                .sum()
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (q, ci) in basis.iter().zip(&c) {
        out.iter_mut().zip(q).for_each(|(o, qi)| *o += ci * qi * beta0);
    }
    let err = if residual < 1e-13 {
        0.0
    } else {
        beta0 * residual * c[k - 1].norm()
    };
    (out, err)
}

/// exp(−iHt)v with adaptive Krylov substeps, monitoring truncation leakage.
pub fn evolve(v: &FockVector, h: &FockOperator, t: f64) -> Result<FockVector, FockError> {
    if v.amp.len() != h.dim() {
        return Err(FockError::Dimension(v.amp.len(), h.dim()));
    }
    let mut state = v.clone();
    if t == 0.0 {
        return Ok(state);
    }
    let sign = t.signum();
    let total = t.abs();
    let mut done = 0.0;
    // Initial substep: a few Krylov dimensions' worth of phase.
    let mut tau = (KRYLOV_DIM as f64 / (2.0 * h.norm_bound().max(1.0))).min(total);
    while done < total {
        tau = tau.min(total - done);
        let (next, err) = krylov_step(h, &state.amp, sign * tau);
        if err > KRYLOV_TOL * tau.max(1e-3) {
            tau /= 2.0;
            if tau < 1e-12 * total {
                return Err(FockError::NotConverged(done));
            }
            continue;
        }
        state.amp = next;
        done += tau;
        let leak = state.leakage();
        if leak > LEAKAGE_TOL {
            return Err(FockError::Leakage {
                t: sign * done,
                leakage: leak,
                required_n: 2 * state.n,
            });
        }
        if err < 1e-2 * KRYLOV_TOL * tau {
            tau *= 1.5;
        }
    }
    Ok(state)
}

/// Dense exponential via Hermitian eigendecomposition (for small checks).
pub fn evolve_dense(v: &FockVector, h: &FockOperator, t: f64) -> FockVector {
    let eig = h.to_dense().symmetric_eigen();
    let u = &eig.eigenvectors;
    let x = DVector::from_vec(v.amp.clone());
    let mut coeff = u.adjoint() * x;
    for (c, e) in coeff.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= Complex64::from_polar(1.0, -t * e);
    }
    let out = u * coeff;
    FockVector {
        n: v.n,
        amp: out.iter().cloned().collect(),
    }
}

/// Sorted spectrum of a (small) operator.
pub fn spectrum(h: &FockOperator) -> Vec<f64> {
    let mut e: Vec<f64> = h.to_dense().symmetric_eigen().eigenvalues.iter().cloned().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

fn hermite_matrix(n: usize, g: &GridSpec) -> Array2<Complex64> {
    let phi = hermite_functions(n, &g.coords());
    Array2::from_shape_fn((n, g.n), |(k, i)| Complex64::new(phi[k][i], 0.0))
}

/// Hermite synthesis ψ_s(x, y) = Σ c_{n_a n_b s} φ_{n_a}(x) φ_{n_b}(y).
pub fn to_grid(v: &FockVector, g: &GridSpec) -> SpinorField {
    let n = v.n;
    let phi = hermite_matrix(n, g);
    let comp = |s: usize| {
        let c = Array2::from_shape_fn((n, n), |(na, nb)| v.amp[index(n, na, nb, s)]);
        phi.t().dot(&c).dot(&phi)
    };
    SpinorField {
        grid: *g,
        psi_e: comp(0),
        psi_g: comp(1),
        t: 0.0,
    }
}

/// Hermite analysis onto N×N×2 amplitudes; returns the state and the
/// weight not captured by the truncation.
pub fn from_grid(s: &SpinorField, n: usize) -> (FockVector, f64) {
    let phi = hermite_matrix(n, &s.grid);
    let cell = s.grid.cell();
    let mut v = FockVector::zeros(n);
    for (si, psi) in [&s.psi_e, &s.psi_g].into_iter().enumerate() {
        let c = phi.dot(psi).dot(&phi.t());
        for na in 0..n {
            for nb in 0..n {
                v.amp[index(n, na, nb, si)] = c[[na, nb]] * cell;
            }
        }
    }
    let grid_norm: f64 = s.psi_e.iter().chain(s.psi_g.iter()).map(|z| z.norm_sqr()).sum::<f64>() * cell;
    let captured = v.norm().powi(2);
    (v, grid_norm - captured)
}

/// One grid-versus-number-basis comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub params: Params,
    pub x0: f64,
    pub y0: f64,
    pub t: f64,
}

/// Deterministic, well-spread instances: λ ∈ (0, λ_max], Ω ∈ [0, 1],
/// φ, θ ∈ [0, 2π), packet at (x0, 0) with |x0| ≤ x0_max and t ∈ [t_max/5, t_max], taken from
/// an additive recurrence with irrational increments (no seed to manage).
pub fn validation_instances(count: usize, lambda_max: f64, x0_max: f64, t_max: f64) -> Vec<OracleInstance> {
    const STEPS: [f64; 6] = [
        0.414_213_562_373_095_1, // √2 − 1
        0.732_050_807_568_877_3, // √3 − 1
        0.236_067_977_499_789_7, // √5 − 2
        0.645_751_311_064_590_6, // √7 − 2
        0.316_624_790_355_399_8, // √11 − 3
        0.605_551_275_463_989_3, // √13 − 3
    ];
    let tau = std::f64::consts::TAU;
    (1..=count)
        .map(|k| {
            let u: Vec<f64> = STEPS.iter().map(|a| (0.5 + k as f64 * a).fract()).collect();
            let params = Params::new(lambda_max * (0.05 + 0.95 * u[0]), u[1], tau * u[2], tau * u[3])
                .expect("generated parameters are valid");
            OracleInstance {
                params,
                x0: x0_max * (2.0 * u[4] - 1.0),
                y0: 0.0,
                t: t_max * (0.2 + 0.8 * u[5]),
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Grid(#[from] PropagationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceReport {
    pub instance: OracleInstance,
    /// |⟨Ψ_fock|Ψ_grid⟩|² after Hermite analysis of the grid state.
    pub fidelity: f64,
    pub n_a: (f64, f64),
    pub n_b: (f64, f64),
    pub sigma_z: (f64, f64),
    pub leakage: f64,
}

/// Propagates one instance on the grid and in the number basis and
/// compares the final states. Observable pairs are (grid, fock).
pub fn cross_validate(
    inst: &OracleInstance,
    fock_n: usize,
    grid: &GridSpec,
    dt: f64,
) -> Result<InstanceReport, OracleError> {
    let p = &inst.params;
    let s0 = initial_state(p, grid, inst.x0, inst.y0)?;
    let mut cfg = PropagationConfig::spanning(inst.t, dt, 1, Mode::Full);
    cfg.record_stride = cfg.steps().max(1);
    cfg.snapshot_stride = cfg.steps().max(1);
    let traj = propagate(WaveState::Spinor(s0), p, &cfg)?;
    let WaveState::Spinor(last) = traj.snapshots.last().expect("final snapshot") else {
        unreachable!("full mode keeps spinors")
    };
    let rec = traj.records.last().expect("final record");
    let sq = std::f64::consts::FRAC_1_SQRT_2;
    let (v0, _) = coherent_state(
        Complex64::new(inst.x0 * sq, 0.0),
        Complex64::new(inst.y0 * sq, 0.0),
        initial_spinor(),
        fock_n,
    )?;
    let v = evolve(&v0, &build_hamiltonian(p, fock_n)?, inst.t)?;
    let (w, _) = from_grid(last, fock_n);
    Ok(InstanceReport {
        instance: *inst,
        fidelity: w.fidelity(&v),
        n_a: (rec.n_a, v.mean_n_a()),
        n_b: (rec.n_b, v.mean_n_b()),
        sigma_z: (rec.sigma_z, v.sigma_z()),
        leakage: v.leakage(),
    })
}
