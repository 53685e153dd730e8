//! Text file formats: demonstrations, trajectories, tables, metrics and
//! fitted mixtures.
//!
//! Numeric tables are comma separated with a single `#` header line. Floats
//! are written with 17 significant digits so that parsing gives back the same
//! bits.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{Component, Demonstration, GaussianMixture, TIMING_TOLERANCE};
use crate::kmp::OrientationSample;
use crate::so3::Rotation;

pub use config::RunConfig;

const ROTATION_COLUMNS: [&str; 9] = [
    "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22",
];

/// Canonical float rendering.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A data line split into numbers, with the source line kept for errors.
struct Row {
    line: usize,
    values: Vec<f64>,
}

fn parse_rows(text: &str, path: &Path) -> Result<(Option<String>, Vec<Row>)> {
    let mut header = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(h) = trimmed.strip_prefix('#') {
            if header.is_none() && rows.is_empty() {
                header = Some(h.trim().to_string());
            }
            continue;
        }
        let mut values = Vec::new();
        let mut column = 1;
        for field in raw.split(',') {
            let lead = field.len() - field.trim_start().len();
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: column + lead,
                message: format!("expected a number, found {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: column + lead,
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
            column += field.len() + 1;
        }
        rows.push(Row { line, values });
    }
    Ok((header, rows))
}

fn width_error(path: &Path, row: &Row, expected: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: row.line,
        column: 1,
        message: format!("expected {expected} columns, found {}", row.values.len()),
    }
}

/// `key=value` pairs of a header line.
fn header_field<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DemoLoadOptions {
    /// Rows hold `t, qw, qx, qy, qz` instead of nine matrix entries.
    pub quaternion: bool,
    /// Project slightly non-orthogonal matrices onto SO(3) instead of rejecting them.
    pub orthonormalize: bool,
}

/// Parses a demonstration file. Rotation errors report the 0-based sample index.
pub fn parse_demo(text: &str, path: &Path, opts: DemoLoadOptions) -> Result<Demonstration> {
    let (header, rows) = parse_rows(text, path)?;
    let (rot_width, label) = if opts.quaternion {
        (4, "5 or 8")
    } else {
        (9, "10 or 13")
    };
    let Some(first) = rows.first() else {
        return Err(Error::SeriesTooShort { len: 0, min: 2 });
    };
    let width = first.values.len();
    if width != 1 + rot_width && width != 4 + rot_width {
        return Err(width_error(path, first, label));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut rotations = Vec::with_capacity(rows.len());
    let mut positions = (width == 4 + rot_width).then(|| Vec::with_capacity(rows.len()));
    for (index, row) in rows.iter().enumerate() {
        if row.values.len() != width {
            return Err(width_error(path, row, &width.to_string()));
        }
        let v = &row.values;
        let rotation = if opts.quaternion {
            Rotation::from_quaternion(v[1], v[2], v[3], v[4])
        } else if opts.orthonormalize {
            Rotation::from_matrix_orthonormalized(nalgebra::Matrix3::from_row_slice(&v[1..10]))
        } else {
            Rotation::from_row_slice(&v[1..10])
        }
        .map_err(|e| Error::InvalidRow {
            path: path.to_path_buf(),
            row: index,
            source: Box::new(e),
        })?;
        times.push(v[0]);
        rotations.push(rotation);
        if let Some(p) = positions.as_mut() {
            p.push(Vector3::new(
                v[1 + rot_width],
                v[2 + rot_width],
                v[3 + rot_width],
            ));
        }
    }
    let demo = Demonstration::with_positions(times, rotations, positions).map_err(|e| match e {
        Error::InconsistentTiming(m) => {
            Error::InconsistentTiming(format!("{}: {m}", path.display()))
        }
        other => other,
    })?;
    if let Some(h) = &header {
        if let Some(len) = header_field(h, "length") {
            if len.parse::<usize>().ok() != Some(demo.len()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    column: 1,
                    message: format!(
                        "header declares length={len} but the file has {} rows",
                        demo.len()
                    ),
                });
            }
        }
        if let Some(dt) = header_field(h, "dt").and_then(|s| s.parse::<f64>().ok()) {
            if (dt - demo.dt()).abs() > TIMING_TOLERANCE {
                return Err(Error::InconsistentTiming(format!(
                    "{}: header dt={dt} but rows are spaced {}",
                    path.display(),
                    demo.dt()
                )));
            }
        }
    }
    Ok(demo)
}

pub fn read_demo(path: &Path, opts: DemoLoadOptions) -> Result<Demonstration> {
    parse_demo(&read_text(path)?, path, opts)
}

/// Loads a set of demonstrations that must share one time step.
pub fn load_demos<P: AsRef<Path>>(
    paths: &[P],
    opts: DemoLoadOptions,
) -> Result<Vec<Demonstration>> {
    let demos = paths
        .iter()
        .map(|p| read_demo(p.as_ref(), opts))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = demos.first() {
        for (d, p) in demos.iter().zip(paths).skip(1) {
            if (d.dt() - first.dt()).abs() > TIMING_TOLERANCE {
                return Err(Error::InconsistentTiming(format!(
                    "{} has dt = {} but {} has dt = {}",
                    p.as_ref().display(),
                    d.dt(),
                    paths[0].as_ref().display(),
                    first.dt()
                )));
            }
        }
    }
    Ok(demos)
}

pub fn format_demo(demo: &Demonstration) -> String {
    let mut columns = vec!["t"];
    columns.extend(ROTATION_COLUMNS);
    if demo.positions().is_some() {
        columns.extend(["px", "py", "pz"]);
    }
    let mut out = format!(
        "# dt={} length={} frame=row-major columns={}\n",
        fmt_f64(demo.dt()),
        demo.len(),
        columns.join(",")
    );
    for i in 0..demo.len() {
        let mut fields = vec![fmt_f64(demo.times()[i])];
        fields.extend(
            demo.rotations()[i]
                .to_row_array()
                .iter()
                .map(|v| fmt_f64(*v)),
        );
        if let Some(p) = demo.positions() {
            fields.extend(p[i].iter().map(|v| fmt_f64(*v)));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_demo(path: &Path, demo: &Demonstration) -> Result<()> {
    write_text(path, &format_demo(demo))
}

/// A numeric table with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn format(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(","));
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let (header, rows) = parse_rows(text, path)?;
        let columns: Vec<String> = header
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: 1,
                message: "missing '#' header".into(),
            })?
            .split(',')
            .map(|c| c.trim().to_string())
            .collect();
        for row in &rows {
            if row.values.len() != columns.len() {
                return Err(width_error(path, row, &columns.len().to_string()));
            }
        }
        Ok(Table {
            columns,
            rows: rows.into_iter().map(|r| r.values).collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.format())
    }
}

/// Trajectory table: `t, ψ, R (row-major), ω_world, w_0..w_K`.
pub fn trajectory_table(samples: &[OrientationSample], weights: &[Vec<f64>]) -> Result<Table> {
    let k = weights.first().map_or(0, Vec::len);
    if !weights.is_empty()
        && (weights.len() != samples.len() || weights.iter().any(|w| w.len() != k))
    {
        return Err(Error::InvalidInput(
            "weights do not match the trajectory".into(),
        ));
    }
    let mut columns: Vec<String> = ["t", "psi_x", "psi_y", "psi_z"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend(ROTATION_COLUMNS.iter().map(|s| s.to_string()));
    columns.extend(
        ["omega_x", "omega_y", "omega_z"]
            .iter()
            .map(|s| s.to_string()),
    );
    columns.extend((0..k).map(|i| format!("w{i}")));
    let mut table = Table::new(columns);
    for (i, s) in samples.iter().enumerate() {
        if i > 0 && !(s.t > samples[i - 1].t) {
            return Err(Error::InconsistentTiming(format!(
                "trajectory time not increasing at sample {i}"
            )));
        }
        let mut row = vec![s.t];
        row.extend(s.psi.iter());
        row.extend(s.rotation.to_row_array());
        row.extend(s.omega.iter());
        if let Some(w) = weights.get(i) {
            row.extend(w);
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn write_trajectory(
    path: &Path,
    samples: &[OrientationSample],
    weights: &[Vec<f64>],
) -> Result<()> {
    trajectory_table(samples, weights)?.write(path)
}

/// Inverse of [`trajectory_table`] after formatting.
pub fn parse_trajectory(
    text: &str,
    path: &Path,
) -> Result<(Vec<OrientationSample>, Vec<Vec<f64>>)> {
    let table = Table::parse(text, path)?;
    if table.columns.len() < 16 || table.columns[0] != "t" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "not a trajectory header".into(),
        });
    }
    let mut samples = Vec::with_capacity(table.rows.len());
    let mut weights = Vec::new();
    for (i, r) in table.rows.iter().enumerate() {
        let rotation = Rotation::from_row_slice(&r[4..13]).map_err(|e| Error::InvalidRow {
            path: path.to_path_buf(),
            row: i,
            source: Box::new(e),
        })?;
        samples.push(OrientationSample {
            t: r[0],
            psi: Vector3::new(r[1], r[2], r[3]),
            rotation,
            omega: Vector3::new(r[13], r[14], r[15]),
        });
        if table.columns.len() > 16 {
            weights.push(r[16..].to_vec());
        }
    }
    Ok((samples, weights))
}

pub fn read_trajectory(path: &Path) -> Result<(Vec<OrientationSample>, Vec<Vec<f64>>)> {
    parse_trajectory(&read_text(path)?, path)
}

/// Named scalar results, written as `name,value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub entries: Vec<(String, f64)>,
}

impl Metrics {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn format(&self) -> String {
        let mut out = String::from("# metric,value\n");
        for (name, value) in &self.entries {
            let _ = writeln!(out, "{name},{}", fmt_f64(*value));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut metrics = Metrics::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |column: usize, message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                column,
                message: message.into(),
            };
            let (name, value) = line
                .split_once(',')
                .ok_or_else(|| err(1, "expected name,value"))?;
            let value = value
                .trim()
                .parse()
                .map_err(|_| err(name.len() + 2, "expected a number"))?;
            metrics.push(name.trim(), value);
        }
        Ok(metrics)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.format())
    }
}

pub const MIXTURE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureFile {
    schema_version: u32,
    /// Auxiliary frame of the chart the mixture lives in, row-major.
    aux: Vec<f64>,
    t_start: f64,
    t_end: f64,
    components: Vec<ComponentFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    prior: f64,
    mean: Vec<f64>,
    /// Row-major.
    covariance: Vec<f64>,
}

/// A fitted mixture together with the chart and time span it was learned on.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredMixture {
    pub aux: Rotation,
    pub t_start: f64,
    pub t_end: f64,
    pub mixture: GaussianMixture,
}

impl StoredMixture {
    pub fn to_toml(&self) -> String {
        let file = MixtureFile {
            schema_version: MIXTURE_SCHEMA_VERSION,
            aux: self.aux.to_row_array().to_vec(),
            t_start: self.t_start,
            t_end: self.t_end,
            components: self
                .mixture
                .components()
                .iter()
                .map(|c| ComponentFile {
                    prior: c.prior,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c.covariance.transpose().iter().copied().collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("mixture serializes")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let file: MixtureFile = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
        if file.schema_version != MIXTURE_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                file.schema_version
            )));
        }
        let components = file
            .components
            .into_iter()
            .map(|c| {
                let d = c.mean.len();
                if c.covariance.len() != d * d {
                    return Err(Error::InvalidInput(format!(
                        "{}: covariance has {} entries for dimension {d}",
                        path.display(),
                        c.covariance.len()
                    )));
                }
                Ok(Component {
                    prior: c.prior,
                    mean: DVector::from_vec(c.mean),
                    covariance: DMatrix::from_row_slice(d, d, &c.covariance),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StoredMixture {
            aux: Rotation::from_row_slice(&file.aux)?,
            t_start: file.t_start,
            t_end: file.t_end,
            mixture: GaussianMixture::new(components)?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_toml())
    }
}

/// Maps a TOML error span to a line/column location.
pub(crate) fn toml_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let (line, column) = e.span().map_or((1, 1), |span| {
        let before = &text[..span.start.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        (line, column)
    });
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: e.message().to_string(),
    }
}

/// Resolves `p` against `base` unless it is absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
