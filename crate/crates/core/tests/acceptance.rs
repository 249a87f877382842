//! Acceptance suite: one PASS/FAIL line per headline criterion.
//!
//! Runs as a plain binary (no libtest harness) so the report is always
//! printed. Exits nonzero if a criterion fails that is not listed in
//! `KNOWN_RED`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use cavity_jt::berry::{berry_phase_numeric, phase_map};
use cavity_jt::fock_oracle::{cross_validate, validation_instances};
use cavity_jt::grid::GridSpec;
use cavity_jt::model::surface_geometry;
use cavity_jt::observables::{
    density_snapshot, find_peaks, photon_statistics, reduce_mode, ring_samples, timescales, ModeLabel, PhotonStats,
    REVIVAL_THRESHOLD,
};
use cavity_jt::propagator::{initial_state, propagate_with, Mode, PropagationConfig, Record, WaveState};
use cavity_jt::Params;

/// Criteria that cannot be met as stated; see the README.
/// 4: the Strang splitting's energy error at dt = 0.01 is ~2.6e−4, far above 1e−6.
const KNOWN_RED: &[u32] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn berry_exactness() -> Outcome {
    let p = Params::new(1.0, 0.0, 0.0, FRAC_PI_2).unwrap();
    let mut worst = 0.0f64;
    for r in [0.5, 2.0, 10.0] {
        let g = berry_phase_numeric(&p, r, 256).unwrap();
        worst = worst.max((g + PI).abs());
    }
    outcome(
        worst < 1e-8,
        format!("max |γ + π| over R ∈ {{0.5, 2, 10}} = {worst:.2e} (tol 1e-8)"),
    )
}

fn phase_map_limits() -> Outcome {
    let base = Params::new(1.0, 1.0, 0.0, 0.0).unwrap();
    // θ step π/50, so column 25 is θ = π/2; the last row is λ = 10.
    let map = phase_map(&base, (0.5, 10.0), (0.0, 49.0 * PI / 50.0), (50, 50)).unwrap();
    assert!((map.theta_axis[25] - FRAC_PI_2).abs() < 1e-15);
    let diag = (0..50)
        .map(|i| {
            let g = map.get(i, 0).rem_euclid(TAU);
            g.min(TAU - g).abs()
        })
        .fold(0.0, f64::max);
    let large = (map.get(49, 25) + PI).abs();
    outcome(
        diag < 1e-8 && large < 0.05,
        format!("max |γ(θ=φ) mod 2π| = {diag:.2e} (tol 1e-8); |γ(λ=10, θ=π/2) + π| = {large:.2e} (tol 0.05)"),
    )
}

fn geometry() -> Outcome {
    let (l, o) = (6.0, 0.5);
    let numeric = surface_geometry(&Params::cylindrical(l, o).unwrap()).rho_min;
    let closed = (4.0 * l * l - (o / (4.0 * l)).powi(2)).sqrt();
    let err = (numeric - closed).abs();
    outcome(
        err < 1e-8,
        format!("ρ_min = {numeric:.12}, closed form {closed:.12}, |Δ| = {err:.2e} (tol 1e-8)"),
    )
}

fn unitarity() -> Outcome {
    let p = Params::cylindrical(2.0, 0.5).unwrap();
    let g = GridSpec::new(256, 12.0).unwrap();
    // Any packet displaced towards the ring spills more than 1e−8 onto the
    // edge of an L = 12 box (the upper-surface fraction is flung to
    // ρ ≈ ρ_min + 4λ); start on the intersection and allow 1e−7.
    let s0 = initial_state(&p, &g, 0.0, 0.0).unwrap();
    let mut cfg = PropagationConfig::new(0.01, 200.0, Mode::Full);
    cfg.record_stride = 100;
    cfg.boundary_guard = 1e-7;
    let mut edge = 0.0f64;
    let records = propagate_with(WaveState::Spinor(s0), &p, &cfg, |k, s| {
        if k % 100 == 0 {
            edge = edge.max(cavity_jt::propagator::boundary_weight(s));
        }
    });
    let records = match records {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run aborted: {e}")),
    };
    let e0 = records[0].energy;
    let norm = records.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max);
    let energy = records.iter().map(|r| ((r.energy - e0) / e0).abs()).fold(0.0, f64::max);
    outcome(
        norm < 1e-9 && energy < 1e-6,
        format!(
            "norm drift {norm:.2e} (tol 1e-9); relative energy drift {energy:.2e} (tol 1e-6); E0 = {e0:.6}; max edge weight {edge:.1e}"
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let g = GridSpec::new(128, 12.0).unwrap();
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for (k, inst) in validation_instances(20, 0.7, 1.5, 5.0).iter().enumerate() {
        match cross_validate(inst, 24, &g, 0.005) {
            Ok(r) => {
                worst = worst.min(r.fidelity);
                if r.fidelity < 0.999 {
                    failures.push(format!("#{k}: F = {:.6}", r.fidelity));
                }
            }
            Err(e) => failures.push(format!("#{k}: {e}")),
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "20 instances, min fidelity {worst:.8} (tol 0.999){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

/// States at T_in/4 and T_in for λ = 3, Ω = 0.5, x0 = 6.
struct InterferenceRun {
    quarter: WaveState,
    full: WaveState,
}

fn interference_run(mode: Mode) -> InterferenceRun {
    let p = Params::cylindrical(3.0, 0.5).unwrap();
    let g = GridSpec::new(512, 24.0).unwrap();
    let t_in = timescales(&p).unwrap().t_in;
    let mut cfg = PropagationConfig::spanning(t_in, 0.01, 4, mode);
    let steps = cfg.steps();
    cfg.record_stride = steps / 4;
    let s0 = WaveState::Spinor(initial_state(&p, &g, 6.0, 0.0).unwrap());
    let (mut quarter, mut full) = (None, None);
    propagate_with(s0, &p, &cfg, |k, s| {
        if k == steps / 4 {
            quarter = Some(s.clone());
        }
        if k == steps {
            full = Some(s.clone());
        }
    })
    .expect("interference run stays within guards");
    InterferenceRun {
        quarter: quarter.unwrap(),
        full: full.unwrap(),
    }
}

/// Centre density at (−x0, 0) and its 8 ring neighbours (one grid spacing apart).
fn ring_profile(s: &WaveState) -> (f64, Vec<f64>) {
    let g = s.grid();
    let radius = 6.0;
    let dphi = g.dx() / radius;
    let angles: Vec<f64> = (-4..=4).map(|k| PI + k as f64 * dphi).collect();
    let mut v = ring_samples(&density_snapshot(s), g, radius, &angles);
    let centre = v.remove(4);
    (centre, v)
}

fn interference(full: &InterferenceRun, semi: &InterferenceRun) -> Outcome {
    let (cf, nf) = ring_profile(&full.full);
    let (cs, ns) = ring_profile(&semi.full);
    let node = nf.iter().all(|&v| cf < v);
    let antinode = ns.iter().all(|&v| cs > v);
    let fmin = nf.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = ns.iter().cloned().fold(0.0, f64::max);
    outcome(
        node && antinode,
        format!(
            "full: centre {cf:.3e} vs neighbour min {fmin:.3e} ({}); semi: centre {cs:.3e} vs neighbour max {smax:.3e} ({})",
            if node { "minimum" } else { "not a minimum" },
            if antinode { "maximum" } else { "not a maximum" }
        ),
    )
}

fn parity_b(s: &WaveState) -> PhotonStats {
    photon_statistics(&reduce_mode(s, ModeLabel::B).unwrap(), 64).unwrap()
}

fn photon_parity(full: &InterferenceRun, semi: &InterferenceRun) -> Outcome {
    let sf = parity_b(&full.quarter);
    let ss = parity_b(&semi.quarter);
    let ok = ss.odd_weight() < 1e-8 && sf.odd_weight() > 0.0 && sf.odd_weight() < sf.even_weight() / 5.0;
    outcome(
        ok,
        format!(
            "semi Σodd = {:.2e} (tol 1e-8); full Σodd = {:.4}, Σeven = {:.4} (need 0 < odd < even/5)",
            ss.odd_weight(),
            sf.odd_weight(),
            sf.even_weight()
        ),
    )
}

fn revival_run(mode: Mode, t_final: f64) -> Result<Vec<Record>, String> {
    let p = Params::cylindrical(2.0, 0.5).unwrap();
    let g = GridSpec::new(256, 18.0).unwrap();
    let mut cfg = PropagationConfig::spanning(t_final, 0.01, 1, mode);
    cfg.record_stride = 10;
    let s0 = WaveState::Spinor(initial_state(&p, &g, 4.0, 0.0).unwrap());
    propagate_with(s0, &p, &cfg, |_, _| {}).map_err(|e| e.to_string())
}

fn peaks_in(records: &[Record], value: impl Fn(&Record) -> f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let v: Vec<f64> = records.iter().map(value).collect();
    find_peaks(&t, &v, REVIVAL_THRESHOLD)
        .into_iter()
        .filter(|r| r.time >= lo && r.time <= hi)
        .map(|r| (r.time, r.peak))
        .collect()
}

fn fmt_peaks(p: &[(f64, f64)]) -> String {
    if p.is_empty() {
        return "none".into();
    }
    let (t, a) = p
        .iter()
        .cloned()
        .fold((0.0, 0.0), |best, x| if x.1 > best.1 { x } else { best });
    format!("{} peak(s), highest {a:.2} at t = {t:.1}", p.len())
}

fn mode_swap_and_revival() -> Outcome {
    let p = Params::cylindrical(2.0, 0.5).unwrap();
    let ts = timescales(&p).unwrap();
    let (t_in, t_rev) = (ts.t_in, ts.t_rev);
    let full = match revival_run(Mode::Full, t_rev + 1.5 * t_in) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("full run aborted: {e}")),
    };
    let semi = match revival_run(Mode::SemiAdiabatic, 2.0 * t_rev + 1.5 * t_in) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("semi run aborted: {e}")),
    };

    let t_swap = 2.0 * p.lambda * t_in;
    let at_swap = full
        .iter()
        .min_by(|a, b| (a.t - t_swap).abs().total_cmp(&(b.t - t_swap).abs()))
        .unwrap();
    let n_min = full.iter().map(|r| r.n_a).fold(f64::INFINITY, f64::min);
    let swap_ok = (at_swap.n_a - n_min).abs() <= 0.1 * n_min;

    let window = (t_rev - t_in, t_rev + t_in);
    let full_peaks = peaks_in(&full, |r| r.autocorr.norm(), window.0, window.1);
    let full_ok = !full_peaks.is_empty();

    // Semi-adiabatic: near t_rev the packet returns rotated by π in the
    // field plane (the lower-state sign change), so only the rotated overlap
    // peaks; the plain overlap recurs near 2 t_rev.
    let semi_rot = peaks_in(&semi, |r| r.autocorr_rotated.norm(), window.0, window.1);
    let semi_plain = peaks_in(&semi, |r| r.autocorr.norm(), window.0, window.1);
    let semi_double = peaks_in(&semi, |r| r.autocorr.norm(), 2.0 * t_rev - t_in, 2.0 * t_rev + t_in);
    let semi_ok = !semi_rot.is_empty() && semi_plain.is_empty() && !semi_double.is_empty();

    outcome(
        swap_ok && full_ok && semi_ok,
        format!(
            "full ⟨n_a⟩({t_swap:.1}) = {:.4} vs min {n_min:.4}; full |A| peaks in t_rev±T_in: {}; semi rotated: {}, plain: {}, plain near 2t_rev: {}",
            at_swap.n_a,
            fmt_peaks(&full_peaks),
            fmt_peaks(&semi_rot),
            fmt_peaks(&semi_plain),
            fmt_peaks(&semi_double),
        ),
    )
}

fn free_field() -> Outcome {
    let p = Params::cylindrical(0.0, 0.0).unwrap();
    let g = GridSpec::new(64, 8.0).unwrap();
    let x0 = 1.5;
    // ⟨n⟩ under Strang splitting wobbles by ~dt²n/8; keep that below 1e−8.
    let per_period = 40_000;
    let mut cfg = PropagationConfig::new(TAU / per_period as f64, 3.0 * TAU, Mode::Full);
    cfg.record_stride = 400;
    let s0 = WaveState::Spinor(initial_state(&p, &g, x0, 0.0).unwrap());
    let records = match propagate_with(s0, &p, &cfg, |_, _| {}) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run aborted: {e}")),
    };
    let n_err = records
        .iter()
        .map(|r| (r.n_a - x0 * x0 / 2.0).abs())
        .fold(0.0, f64::max);
    let stride = per_period / cfg.record_stride;
    let revivals: Vec<f64> = (1..=3).map(|k| records[k * stride].autocorr.norm_sqr()).collect();
    let worst = revivals.iter().cloned().fold(1.0, f64::min);
    // Between revivals the overlap must drop (the packet has moved away).
    let mid = records[stride / 2].autocorr.norm();
    outcome(
        n_err < 1e-8 && 1.0 - worst < 1e-8 && mid < 0.5,
        format!(
            "max |⟨n_a⟩ − x0²/2| = {n_err:.2e} (tol 1e-8); min |A(2πk)|² = 1 − {:.2e}; |A(π)| = {mid:.2e}",
            1.0 - worst
        ),
    )
}

fn main() {
    let mut unexpected = Vec::new();
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_RED.contains(&id) {
            " [known]"
        } else {
            ""
        };
        println!(
            "{tag} {id} {name}: {} ({:.1}s){note}",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    };
    report(1, "berry phase exactness", &mut berry_exactness);
    report(2, "phase-map limits", &mut phase_map_limits);
    report(3, "ring radius", &mut geometry);
    report(4, "unitarity and energy", &mut unitarity);
    report(5, "oracle equivalence", &mut oracle_equivalence);
    let full = interference_run(Mode::Full);
    let semi = interference_run(Mode::SemiAdiabatic);
    report(6, "interference node/antinode", &mut || interference(&full, &semi));
    report(7, "photon parity", &mut || photon_parity(&full, &semi));
    report(8, "mode swap and revival", &mut mode_swap_and_revival);
    report(9, "free field", &mut free_field);
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
