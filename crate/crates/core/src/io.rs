//! CSV tables and the binary snapshot container.
//!
//! Floats are written with `{:.16e}` (17 significant digits), so identical
//! inputs give byte-identical files and values round-trip exactly.
//!
//! A snapshot `<stem>` is a JSON metadata document `<stem>.json` plus one
//! raw little-endian `f64` file per component, row-major `[ix, iy]`;
//! complex arrays interleave re/im.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::berry::PhaseMap;
use crate::grid::GridSpec;
use crate::model::adiabatic_surfaces;
use crate::observables::{PhotonStats, QFunction};
use crate::propagator::{Mode, Record, ScalarField, SpinorField, WaveState};
use crate::Params;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fixed-width float formatting shared by every table.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<W: Write>(mut w: W, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

fn write_file(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<(), IoError> {
    let f = File::create(path).map_err(io_err(path))?;
    write_rows(BufWriter::new(f), header, rows).map_err(io_err(path))
}

pub const SURFACE_HEADER: &str = "x,y,v_minus,v_plus";
pub const PHASE_MAP_HEADER: &str = "lambda,theta,gamma";
pub const RECORD_HEADER: &str = "t,norm,energy,n_a,n_b,sigma_z,autocorr_abs";
pub const PHOTON_HEADER: &str = "n,p_n";
pub const Q_HEADER: &str = "re_alpha,im_alpha,q";

/// V± on a `points × points` square of half width `half_width`.
pub fn surface_rows(p: &Params, half_width: f64, points: usize) -> Vec<Vec<f64>> {
    let step = 2.0 * half_width / (points.max(2) - 1) as f64;
    let mut rows = Vec::with_capacity(points * points);
    for i in 0..points {
        let x = -half_width + i as f64 * step;
        for j in 0..points {
            let y = -half_width + j as f64 * step;
            let (lo, hi) = adiabatic_surfaces(p, x.hypot(y), y.atan2(x));
            rows.push(vec![x, y, lo, hi]);
        }
    }
    rows
}

pub fn write_surfaces(path: &Path, p: &Params, half_width: f64, points: usize) -> Result<(), IoError> {
    write_file(path, SURFACE_HEADER, surface_rows(p, half_width, points).into_iter())
}

pub fn write_phase_map(path: &Path, map: &PhaseMap<f64>) -> Result<(), IoError> {
    let rows = map.lambda_axis.iter().enumerate().flat_map(|(i, &l)| {
        map.theta_axis
            .iter()
            .enumerate()
            .map(move |(j, &t)| vec![l, t, map.get(i, j)])
    });
    write_file(path, PHASE_MAP_HEADER, rows)
}

pub fn record_row(r: &Record) -> Vec<f64> {
    vec![r.t, r.norm, r.energy, r.n_a, r.n_b, r.sigma_z, r.autocorr.norm()]
}

pub fn write_records_to<W: Write>(w: W, records: &[Record]) -> std::io::Result<()> {
    write_rows(w, RECORD_HEADER, records.iter().map(record_row))
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<(), IoError> {
    write_file(path, RECORD_HEADER, records.iter().map(record_row))
}

pub fn write_photon_stats(path: &Path, stats: &PhotonStats) -> Result<(), IoError> {
    write_file(
        path,
        PHOTON_HEADER,
        stats.p_n.iter().enumerate().map(|(n, &p)| vec![n as f64, p]),
    )
}

pub fn write_q_function(path: &Path, q: &QFunction) -> Result<(), IoError> {
    let g = &q.alpha_grid;
    let rows = g.re_axis.iter().enumerate().flat_map(|(i, &re)| {
        g.im_axis
            .iter()
            .enumerate()
            .map(move |(j, &im)| vec![re, im, q.q[[i, j]]])
    });
    write_file(path, Q_HEADER, rows)
}

/// Reads a CSV written by this module back into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::Format {
            path: path.to_path_buf(),
            msg: "empty file".into(),
        })?
        .split(',')
        .map(str::to_owned)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: {e}", k + 2),
            })?;
        if row.len() != header.len() {
            return Err(IoError::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: {} columns, expected {}", k + 2, row.len(), header.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    /// Interleaved re/im pairs.
    Complex128,
    Float64,
}

/// Metadata document of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub params: Params,
    pub grid: GridSpec,
    pub time: f64,
    pub mode: Mode,
    pub dtype: DType,
    /// Component name → file name relative to the metadata document.
    pub components: Vec<(String, String)>,
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<(), IoError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>, IoError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::with_capacity(expected * 8);
    BufReader::new(f).read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.len() != expected * 8 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: format!("{} bytes, expected {}", bytes.len(), expected * 8),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_meta(dir: &Path, stem: &str, meta: &SnapshotMeta) -> Result<PathBuf, IoError> {
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(meta).map_err(|source| IoError::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

/// Writes a state as `<stem>.json` plus `<stem>_<component>.bin` files.
pub fn write_snapshot(dir: &Path, stem: &str, state: &WaveState, params: &Params) -> Result<PathBuf, IoError> {
    let names: &[&str] = match state {
        WaveState::Spinor(_) => &["e", "g"],
        WaveState::Scalar(_) => &["psi"],
    };
    let mut components = Vec::new();
    for (name, c) in names.iter().zip(state.components()) {
        let file = format!("{stem}_{name}.bin");
        write_f64s(&dir.join(&file), c.iter().flat_map(|z| [z.re, z.im]))?;
        components.push((name.to_string(), file));
    }
    let meta = SnapshotMeta {
        params: *params,
        grid: *state.grid(),
        time: state.time(),
        mode: state.mode(),
        dtype: DType::Complex128,
        components,
    };
    write_meta(dir, stem, &meta)
}

/// Writes a real field (e.g. a probability density) in the same container.
pub fn write_density(
    dir: &Path,
    stem: &str,
    density: &Array2<f64>,
    grid: &GridSpec,
    params: &Params,
    time: f64,
    mode: Mode,
) -> Result<PathBuf, IoError> {
    let file = format!("{stem}_density.bin");
    write_f64s(&dir.join(&file), density.iter().cloned())?;
    let meta = SnapshotMeta {
        params: *params,
        grid: *grid,
        time,
        mode,
        dtype: DType::Float64,
        components: vec![("density".into(), file)],
    };
    write_meta(dir, stem, &meta)
}

pub fn read_meta(path: &Path) -> Result<SnapshotMeta, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn read_complex(path: &Path, n: usize) -> Result<Array2<Complex64>, IoError> {
    let v = read_f64s(path, 2 * n * n)?;
    let data: Vec<Complex64> = v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Ok(Array2::from_shape_vec((n, n), data).expect("length checked"))
}

/// Reads a complex snapshot written by [`write_snapshot`].
pub fn read_snapshot(meta_path: &Path) -> Result<(SnapshotMeta, WaveState), IoError> {
    let meta = read_meta(meta_path)?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let n = meta.grid.n;
    let bad = |msg: &str| IoError::Format {
        path: meta_path.to_path_buf(),
        msg: msg.into(),
    };
    if meta.dtype != DType::Complex128 {
        return Err(bad("not an amplitude snapshot"));
    }
    let file = |name: &str| {
        meta.components
            .iter()
            .find(|(c, _)| c == name)
            .map(|(_, f)| dir.join(f))
            .ok_or_else(|| bad(&format!("missing component {name}")))
    };
    let state = match meta.mode {
        Mode::Full => WaveState::Spinor(SpinorField {
            grid: meta.grid,
            psi_e: read_complex(&file("e")?, n)?,
            psi_g: read_complex(&file("g")?, n)?,
            t: meta.time,
        }),
        Mode::SemiAdiabatic => WaveState::Scalar(ScalarField {
            grid: meta.grid,
            psi: read_complex(&file("psi")?, n)?,
            t: meta.time,
        }),
    };
    Ok((meta, state))
}

/// Reads a real field written by [`write_density`].
pub fn read_density(meta_path: &Path) -> Result<(SnapshotMeta, Array2<f64>), IoError> {
    let meta = read_meta(meta_path)?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let n = meta.grid.n;
    let (_, file) = meta
        .components
        .first()
        .filter(|_| meta.dtype == DType::Float64)
        .ok_or_else(|| IoError::Format {
            path: meta_path.to_path_buf(),
            msg: "not a density snapshot".into(),
        })?;
    let v = read_f64s(&dir.join(file), n * n)?;
    Ok((meta.clone(), Array2::from_shape_vec((n, n), v).expect("length checked")))
}
