//! Harmonic-oscillator eigenfunctions (Hermite functions) in the
//! quadrature representation with unit mass and frequency.

use crate::scalar::{lit, Real};

/// Evaluates φ_0 … φ_{n_max−1} at every point of `xs`; `out[n][j] = φ_n(xs[j])`.
///
/// Uses the normalized three-term recurrence
/// `φ_{n+1} = sqrt(2/(n+1)) x φ_n − sqrt(n/(n+1)) φ_{n−1}`
/// carried with a separate log-scale so that large |x| (where φ_0
/// underflows) and large n stay finite.
pub fn hermite_functions<T: Real>(n_max: usize, xs: &[T]) -> Vec<Vec<T>> {
    let mut out = vec![vec![T::zero(); xs.len()]; n_max];
    if n_max == 0 {
        return out;
    }
    let big = T::max_value().sqrt();
    let two = lit::<T>(2.0);
    let log_norm0 = -T::PI().ln() / lit::<T>(4.0);
    for (j, &x) in xs.iter().enumerate() {
        let mut log_scale = log_norm0 - x * x / two;
        let mut prev = T::zero();
        let mut cur = T::one();
        out[0][j] = cur * log_scale.exp();
        for n in 0..n_max - 1 {
            let nf = lit::<T>(n as f64);
            let next = (two / (nf + T::one())).sqrt() * x * cur - (nf / (nf + T::one())).sqrt() * prev;
            prev = cur;
            cur = next;
            if cur.abs() > big {
                prev = prev / big;
                cur = cur / big;
                log_scale = log_scale + big.ln();
            }
            out[n + 1][j] = cur * log_scale.exp();
        }
    }
    out
}

/// Single Hermite function, mostly for tests and synthesis.
pub fn hermite_function<T: Real>(n: usize, x: T) -> T {
    hermite_functions(n + 1, &[x])[n][0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn low_orders_match_closed_forms() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.2] {
            let g = (-x * x / 2.0_f64).exp() / PI.powf(0.25);
            assert!((hermite_function(0, x) - g).abs() < 1e-15);
            assert!((hermite_function(1, x) - 2.0_f64.sqrt() * x * g).abs() < 1e-15);
            let h2 = (4.0 * x * x - 2.0) / (8.0_f64).sqrt();
            assert!((hermite_function(2, x) - h2 * g).abs() < 1e-14);
        }
    }

    #[test]
    fn orthonormal_on_fine_grid() {
        let n = 2048;
        let l = 30.0;
        let dx = 2.0 * l / n as f64;
        let xs: Vec<f64> = (0..n).map(|j| -l + j as f64 * dx).collect();
        let phi = hermite_functions(300, &xs);
        for a in [0, 1, 7, 100, 299] {
            for b in [0, 1, 7, 100, 299] {
                let s: f64 = phi[a].iter().zip(&phi[b]).map(|(u, v)| u * v).sum::<f64>() * dx;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-10, "<{a}|{b}> = {s}");
            }
        }
    }

    #[test]
    fn finite_far_from_origin() {
        let v = hermite_functions(900, &[40.0_f64]);
        assert!(v.iter().all(|r| r[0].is_finite()));
        assert_eq!(v[0][0], 0.0);
        assert!(v[899][0].abs() > 1e-4);
    }

    #[test]
    fn f32_matches_f64() {
        let xs32 = [0.3_f32, -1.1, 2.5];
        let xs64 = [0.3_f64, -1.1, 2.5];
        let a = hermite_functions(20, &xs32);
        let b = hermite_functions(20, &xs64);
        for n in 0..20 {
            for j in 0..3 {
                assert!((a[n][j] as f64 - b[n][j]).abs() < 1e-5);
            }
        }
    }
}
