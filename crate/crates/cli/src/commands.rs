use std::fs;
use std::path::{Path, PathBuf};

use cavity_jt::berry::phase_map;
use cavity_jt::config::{nearest_step, RunConfig};
use cavity_jt::fock_oracle::{cross_validate, validation_instances, InstanceReport};
use cavity_jt::io::{self, IoError};
use cavity_jt::model::surface_geometry;
use cavity_jt::observables::{
    density_snapshot, husimi_q, photon_statistics, reduce_mode, timescales, AlphaGrid, ModeLabel, ObservableError,
};
use cavity_jt::propagator::{initial_state, propagate_with, Mode, PropagationError, WaveState};
use cavity_jt::{berry::BerryError, Params};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical guard: {0}")]
    Guard(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<PropagationError> for CliError {
    fn from(e: PropagationError) -> Self {
        match e {
            PropagationError::NormDrift { .. } | PropagationError::BoundaryLeak { .. } => {
                CliError::Guard(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ObservableError> for CliError {
    fn from(e: ObservableError) -> Self {
        CliError::Guard(e.to_string())
    }
}

impl From<BerryError> for CliError {
    fn from(e: BerryError) -> Self {
        match e {
            BerryError::Cell { .. } | BerryError::NotConverged { .. } => CliError::Guard(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| {
        IoError::Io {
            path: dir.to_path_buf(),
            source,
        }
        .into()
    })
}

fn write_text(path: &Path, text: String) -> Result<(), CliError> {
    fs::write(path, text + "\n").map_err(|source| {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("config has no '{section}' section"))
}

/// Writes V± tables (one per qubit frequency) and the ring geometry.
pub fn surfaces(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.surfaces.as_ref().ok_or_else(|| missing("surfaces"))?;
    create_dir(out)?;
    let mut written = Vec::new();
    let mut geometry = Vec::new();
    for (k, &omega) in spec.omegas.iter().enumerate() {
        let p = Params {
            omega_q: omega,
            ..cfg.params
        };
        let path = out.join(format!("surfaces_{k}.csv"));
        io::write_surfaces(&path, &p, spec.half_width, spec.points)?;
        geometry
            .push(json!({ "file": format!("surfaces_{k}.csv"), "omega_q": omega, "geometry": surface_geometry(&p) }));
        written.push(path);
    }
    let path = out.join("geometry.json");
    write_text(&path, serde_json::to_string_pretty(&geometry).expect("serializable"))?;
    written.push(path);
    Ok(written)
}

pub fn berry(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.berry.as_ref().ok_or_else(|| missing("berry"))?;
    create_dir(out)?;
    let map = phase_map(&cfg.params, spec.lambda_range, spec.theta_range, spec.resolution)?;
    let path = out.join("phase_map.csv");
    io::write_phase_map(&path, &map)?;
    Ok(vec![path])
}

pub fn report_timescales(cfg: &RunConfig) -> Result<String, CliError> {
    let ts = timescales(&cfg.params).map_err(|e| CliError::Config(e.to_string()))?;
    let report = json!({ "params": cfg.params, "timescales": ts, "geometry": surface_geometry(&cfg.params) });
    Ok(serde_json::to_string_pretty(&report).expect("serializable"))
}

/// Observables due at one step.
#[derive(Default)]
struct Due {
    photons: bool,
    q: bool,
    density: bool,
}

pub fn propagate(cfg: &RunConfig, out: &Path, only: Option<Mode>) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.propagation.as_ref().ok_or_else(|| missing("propagation"))?;
    let grid = cfg.grid().map_err(|e| CliError::Config(e.to_string()))?;
    let (x0, y0) = cfg.initial_position();
    let modes: Vec<Mode> = match only {
        Some(m) => vec![m],
        None => spec.modes.clone(),
    };
    create_dir(out)?;
    let p = &cfg.params;
    let obs = &cfg.observables;
    let mut written = Vec::new();
    for mode in modes {
        let pc = cfg
            .propagation_config(mode)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let resolve = |times: &[cavity_jt::config::TimeSpec]| -> Result<Vec<usize>, CliError> {
            times
                .iter()
                .map(|t| {
                    t.resolve(p)
                        .map(|t| nearest_step(t, pc.dt))
                        .map_err(|e| CliError::Config(e.to_string()))
                })
                .collect()
        };
        let photon_steps = resolve(&obs.photon_stats_times)?;
        let q_steps = resolve(&obs.q_function_times)?;
        let density_steps = resolve(&obs.density_times)?;
        let label = mode.label();
        let s0 = WaveState::Spinor(initial_state(p, &grid, x0, y0)?);
        let mut failure: Option<CliError> = None;
        let mut visit = |k: usize, s: &WaveState| -> Result<(), CliError> {
            let due = Due {
                photons: photon_steps.contains(&k),
                q: q_steps.contains(&k),
                density: density_steps.contains(&k),
            };
            let stamp = format!("t{:.4}", s.time());
            if due.density {
                let stem = format!("{label}_density_{stamp}");
                written.push(io::write_density(
                    out,
                    &stem,
                    &density_snapshot(s),
                    &grid,
                    p,
                    s.time(),
                    mode,
                )?);
                if obs.amplitudes {
                    written.push(io::write_snapshot(out, &format!("{label}_amplitude_{stamp}"), s, p)?);
                }
            }
            if due.photons || due.q {
                for m in [ModeLabel::A, ModeLabel::B] {
                    let r = reduce_mode(s, m)?;
                    let ml = m.label();
                    if due.photons {
                        let path = out.join(format!("{label}_photons_{ml}_{stamp}.csv"));
                        io::write_photon_stats(&path, &photon_statistics(&r, obs.n_max)?)?;
                        written.push(path);
                    }
                    if due.q {
                        let grid_q = AlphaGrid::covering(r.quadrature_mean_n(), obs.q_points);
                        let path = out.join(format!("{label}_q_{ml}_{stamp}.csv"));
                        io::write_q_function(&path, &husimi_q(&r, &grid_q, obs.q_coarse))?;
                        written.push(path);
                    }
                }
            }
            Ok(())
        };
        let records = propagate_with(s0, p, &pc, |k, s| {
            if failure.is_none() {
                if let Err(e) = visit(k, s) {
                    failure = Some(e);
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let path = out.join(format!("{label}_records.csv"));
        io::write_records(&path, &records)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the grid-versus-number-basis comparison and writes a JSON report.
/// Instances that fail to run are reported with their error.
pub fn oracle_check(cfg: &RunConfig, out: &Path) -> Result<(PathBuf, bool), CliError> {
    let spec = cfg.oracle.as_ref().ok_or_else(|| missing("oracle"))?;
    create_dir(out)?;
    let instances = validation_instances(spec.instances, spec.lambda_max, spec.x0_max, spec.t_max);
    let mut entries = Vec::new();
    let mut ok = true;
    let mut min_fidelity = f64::INFINITY;
    for inst in &instances {
        match cross_validate(inst, spec.fock_n, &spec.grid, spec.dt) {
            Ok(InstanceReport { fidelity, .. }) if fidelity >= spec.threshold => {
                min_fidelity = min_fidelity.min(fidelity);
                entries.push(json!({ "instance": inst, "fidelity": fidelity, "pass": true }));
            }
            Ok(r) => {
                ok = false;
                min_fidelity = min_fidelity.min(r.fidelity);
                entries.push(json!({ "instance": inst, "fidelity": r.fidelity, "pass": false }));
            }
            Err(e) => {
                ok = false;
                entries.push(json!({ "instance": inst, "error": e.to_string(), "pass": false }));
            }
        }
    }
    let report = json!({
        "threshold": spec.threshold,
        "fock_n": spec.fock_n,
        "grid": spec.grid,
        "dt": spec.dt,
        "min_fidelity": if min_fidelity.is_finite() { json!(min_fidelity) } else { json!(null) },
        "pass": ok,
        "instances": entries,
    });
    let path = out.join("oracle_report.json");
    write_text(&path, serde_json::to_string_pretty(&report).expect("serializable"))?;
    Ok((path, ok))
}
