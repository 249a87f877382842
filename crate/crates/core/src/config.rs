//! Run configuration: a single JSON document describing one reproducible
//! computation. Unknown keys are rejected; everything is validated before
//! any compute starts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridSpec;
use crate::model::surface_geometry;
use crate::observables::{timescales, TimeScales};
use crate::propagator::{Mode, PropagationConfig};
use crate::Params;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid model parameters: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("invalid grid: {0}")]
    Grid(#[from] crate::grid::GridError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    TIn,
    TFrac,
    TRev,
}

/// A time either in scaled units directly or as a multiple of a
/// characteristic time of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    Absolute(f64),
    Scaled { unit: TimeUnit, multiple: f64 },
}

impl TimeSpec {
    pub fn resolve(&self, p: &Params) -> Result<f64, ConfigError> {
        match *self {
            TimeSpec::Absolute(t) => Ok(t),
            TimeSpec::Scaled { unit, multiple } => {
                let ts: TimeScales<f64> = timescales(p).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let base = match unit {
                    TimeUnit::TIn => ts.t_in,
                    TimeUnit::TFrac => ts.t_frac,
                    TimeUnit::TRev => ts.t_rev,
                };
                Ok(base * multiple)
            }
        }
    }
}

fn default_dt() -> f64 {
    PropagationConfig::DEFAULT_DT
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_final: TimeSpec,
    #[serde(default = "one")]
    pub record_stride: usize,
    /// Modes to run; each writes its own outputs.
    pub modes: Vec<Mode>,
    /// Initial packet centre; defaults to (2λ, 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default)]
    pub y0: f64,
}

fn default_q_points() -> usize {
    101
}

fn default_n_max() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableRequests {
    /// Times at which photon statistics of both modes are written.
    #[serde(default)]
    pub photon_stats_times: Vec<TimeSpec>,
    #[serde(default)]
    pub q_function_times: Vec<TimeSpec>,
    #[serde(default)]
    pub density_times: Vec<TimeSpec>,
    /// Also dump the full amplitudes at the density times.
    #[serde(default)]
    pub amplitudes: bool,
    #[serde(default = "default_q_points")]
    pub q_points: usize,
    #[serde(default)]
    pub q_coarse: bool,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

impl Default for ObservableRequests {
    fn default() -> Self {
        Self {
            photon_stats_times: Vec::new(),
            q_function_times: Vec::new(),
            density_times: Vec::new(),
            amplitudes: false,
            q_points: default_q_points(),
            q_coarse: false,
            n_max: default_n_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfacesSpec {
    /// One table per qubit frequency, e.g. a degenerate and a gapped case.
    pub omegas: Vec<f64>,
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerrySpec {
    pub lambda_range: (f64, f64),
    pub theta_range: (f64, f64),
    pub resolution: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub instances: usize,
    pub lambda_max: f64,
    pub x0_max: f64,
    pub t_max: f64,
    pub fock_n: usize,
    pub grid: GridSpec,
    #[serde(default = "oracle_dt")]
    pub dt: f64,
    #[serde(default = "oracle_threshold")]
    pub threshold: f64,
}

fn oracle_dt() -> f64 {
    0.005
}

fn oracle_threshold() -> f64 {
    0.999
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    /// Defaults to [`crate::propagator::default_grid`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagationSpec>,
    #[serde(default)]
    pub observables: ObservableRequests,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surfaces: Option<SurfacesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub berry: Option<BerrySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        let g = match self.grid {
            Some(g) => g.validated()?,
            None => crate::propagator::default_grid(&self.params)?,
        };
        g.check_contains(surface_geometry(&self.params).rho_min)?;
        Ok(g)
    }

    pub fn initial_position(&self) -> (f64, f64) {
        let spec = self.propagation.as_ref();
        let x0 = spec.and_then(|s| s.x0).unwrap_or(2.0 * self.params.lambda);
        (x0, spec.map(|s| s.y0).unwrap_or(0.0))
    }

    /// Propagation config for `mode`; the step is shrunk (never grown) so
    /// that t_final is an integer number of steps.
    pub fn propagation_config(&self, mode: Mode) -> Result<PropagationConfig, ConfigError> {
        let spec = self
            .propagation
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("no propagation section".into()))?;
        let t_final = spec.t_final.resolve(&self.params)?;
        let mut cfg = PropagationConfig::spanning(t_final, spec.dt, 1, mode);
        cfg.record_stride = spec.record_stride;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validated()?;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Some(spec) = &self.propagation {
            self.grid()?;
            if !(spec.dt > 0.0 && spec.dt <= 0.02) {
                return bad(format!("dt={} must lie in (0, 0.02]", spec.dt));
            }
            if spec.modes.is_empty() {
                return bad("propagation.modes is empty".into());
            }
            if spec.record_stride == 0 {
                return bad("record_stride must be >= 1".into());
            }
            let t_final = spec.t_final.resolve(&self.params)?;
            if !(t_final > 0.0) || !t_final.is_finite() {
                return bad(format!("t_final resolves to {t_final}"));
            }
            let obs = &self.observables;
            for t in obs
                .photon_stats_times
                .iter()
                .chain(&obs.q_function_times)
                .chain(&obs.density_times)
            {
                let t = t.resolve(&self.params)?;
                if !(0.0..=t_final * (1.0 + 1e-12)).contains(&t) {
                    return bad(format!("requested time {t} lies outside [0, {t_final}]"));
                }
            }
            let (x0, y0) = self.initial_position();
            let margin = self.grid()?.half_width - 5.0;
            if x0.abs() > margin || y0.abs() > margin {
                return bad(format!("initial packet ({x0}, {y0}) does not fit the grid"));
            }
        }
        if let Some(s) = &self.surfaces {
            if s.points < 2 || !(s.half_width > 0.0) || s.omegas.iter().any(|o| !(*o >= 0.0)) {
                return bad("surfaces: need points >= 2, half_width > 0, omegas >= 0".into());
            }
        }
        if let Some(b) = &self.berry {
            if b.resolution.0 == 0
                || b.resolution.1 == 0
                || !(b.lambda_range.0 > 0.0)
                || b.lambda_range.1 < b.lambda_range.0
            {
                return bad("berry: need positive resolution and 0 < lambda_min <= lambda_max".into());
            }
        }
        if let Some(o) = &self.oracle {
            o.grid.validated()?;
            if o.instances == 0 || o.fock_n < 4 || !(o.t_max > 0.0) || !(o.lambda_max > 0.0) {
                return bad("oracle: need instances > 0, fock_n >= 4, t_max > 0, lambda_max > 0".into());
            }
        }
        Ok(())
    }
}

/// Step index closest to time `t` for a run with step `dt`.
pub fn nearest_step(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}
