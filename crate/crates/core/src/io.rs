//! File formats.
//!
//! Models are JSON documents:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dim": 2,
//!   "blocks": [{"name": "y", "width": 1}, {"name": "x", "width": 1}],
//!   "eta": [1.0e0, 2.0e0],
//!   "points": [[0.0e0, 1.0e0], ...],
//!   "coeffs": [a00, a10, a11, a20, a21, a22, ...],
//!   "metadata": {"key": "value"}
//! }
//! ```
//!
//! `coeffs` is the lower triangle of `A`, packed row by row. Numbers are
//! written with 17 significant digits, which round-trips every `f64`.
//! Samples and observations are CSV with a header row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{PsdError, Result};
use crate::hmm::HmmComponents;
use crate::kernel::{PointMatrix, Precision};
use crate::model::{GaussianPsdModel, VariableSplit};

pub const SCHEMA_VERSION: u32 = 1;

/// Models with more base points than this are written but flagged by the CLI.
pub const LARGE_MODEL: usize = 4096;

pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockEntry {
    name: String,
    width: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    dim: usize,
    blocks: Vec<BlockEntry>,
    eta: Vec<f64>,
    points: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    #[serde(default)]
    metadata: Metadata,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentsFile {
    schema_version: u32,
    transition: ModelFile,
    observation: ModelFile,
    initial: ModelFile,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn write_model_body(out: &mut String, model: &GaussianPsdModel, metadata: &Metadata, indent: &str) {
    let list = |vals: &mut dyn Iterator<Item = f64>| {
        vals.map(num).collect::<Vec<_>>().join(", ")
    };
    let _ = writeln!(out, "{{");
    let _ = writeln!(out, "{indent}  \"schema_version\": {SCHEMA_VERSION},");
    let _ = writeln!(out, "{indent}  \"dim\": {},", model.dim());
    let blocks: Vec<String> = model
        .split()
        .blocks()
        .iter()
        .map(|b| format!("{{\"name\": {}, \"width\": {}}}", json_string(&b.name), b.width))
        .collect();
    let _ = writeln!(out, "{indent}  \"blocks\": [{}],", blocks.join(", "));
    let _ = writeln!(
        out,
        "{indent}  \"eta\": [{}],",
        list(&mut model.precision().as_slice().iter().copied())
    );
    if model.n() == 0 {
        let _ = writeln!(out, "{indent}  \"points\": [],");
    } else {
        let _ = writeln!(out, "{indent}  \"points\": [");
        for (i, row) in model.points().iter_rows().enumerate() {
            let sep = if i + 1 < model.n() { "," } else { "" };
            let _ = writeln!(out, "{indent}    [{}]{sep}", list(&mut row.iter().copied()));
        }
        let _ = writeln!(out, "{indent}  ],");
    }
    let a = model.coeffs();
    let mut packed = Vec::with_capacity(model.n() * (model.n() + 1) / 2);
    for i in 0..model.n() {
        for j in 0..=i {
            packed.push(a[(i, j)]);
        }
    }
    let _ = writeln!(out, "{indent}  \"coeffs\": [{}],", list(&mut packed.into_iter()));
    let meta: Vec<String> = metadata
        .iter()
        .map(|(k, v)| format!("{}: {}", json_string(k), json_string(v)))
        .collect();
    let _ = writeln!(out, "{indent}  \"metadata\": {{{}}}", meta.join(", "));
    let _ = write!(out, "{indent}}}");
}

/// Serializes a model (trailing newline included).
pub fn model_to_json(model: &GaussianPsdModel, metadata: &Metadata) -> String {
    let mut out = String::new();
    write_model_body(&mut out, model, metadata, "");
    out.push('\n');
    out
}

fn build_model(file: ModelFile, context: &str) -> Result<(GaussianPsdModel, Metadata)> {
    let err = |msg: String| PsdError::Parse(format!("{context}{msg}"));
    if file.schema_version != SCHEMA_VERSION {
        return Err(err(format!(
            "field `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let d = file.dim;
    if d == 0 {
        return Err(err("field `dim`: must be >= 1".into()));
    }
    if file.eta.len() != d {
        return Err(err(format!("field `eta`: expected {d} values, found {}", file.eta.len())));
    }
    let width: usize = file.blocks.iter().map(|b| b.width).sum();
    if width != d {
        return Err(err(format!("field `blocks`: widths sum to {width}, expected dim = {d}")));
    }
    let n = file.points.len();
    if n == 0 {
        return Err(err("field `points`: at least one base point required".into()));
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, row) in file.points.iter().enumerate() {
        if row.len() != d {
            return Err(err(format!("field `points[{i}]`: expected {d} values, found {}", row.len())));
        }
        data.extend_from_slice(row);
    }
    if file.coeffs.len() != n * (n + 1) / 2 {
        return Err(err(format!(
            "field `coeffs`: expected {} packed values for {n} points, found {}",
            n * (n + 1) / 2,
            file.coeffs.len()
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            a[(i, j)] = file.coeffs[k];
            a[(j, i)] = file.coeffs[k];
            k += 1;
        }
    }
    let split = VariableSplit::new(file.blocks.into_iter().map(|b| (b.name, b.width)))?;
    let model = GaussianPsdModel::new(
        a,
        PointMatrix::new(n, d, data)?,
        Precision::new(file.eta)?,
        Some(split),
    )?;
    Ok((model, file.metadata))
}

fn json_error(e: serde_json::Error) -> PsdError {
    PsdError::Parse(format!("{e}"))
}

/// Parses a model. Shape errors name the offending field; an indefinite
/// coefficient matrix is reported as `NotPsd`.
pub fn model_from_json(text: &str) -> Result<(GaussianPsdModel, Metadata)> {
    let file: ModelFile = serde_json::from_str(text).map_err(json_error)?;
    build_model(file, "")
}

pub fn read_model(path: &Path) -> Result<(GaussianPsdModel, Metadata)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PsdError::Io(format!("{}: {e}", path.display())))?;
    model_from_json(&text).map_err(|e| match e {
        PsdError::Parse(msg) => PsdError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_model(path: &Path, model: &GaussianPsdModel, metadata: &Metadata) -> Result<()> {
    std::fs::write(path, model_to_json(model, metadata))
        .map_err(|e| PsdError::Io(format!("{}: {e}", path.display())))
}

/// Serializes HMM components as one JSON document.
pub fn components_to_json(components: &HmmComponents) -> String {
    let empty = Metadata::new();
    let mut out = String::new();
    let _ = writeln!(out, "{{");
    let _ = writeln!(out, "  \"schema_version\": {SCHEMA_VERSION},");
    for (key, model, sep) in [
        ("transition", components.transition(), ","),
        ("observation", components.observation(), ","),
        ("initial", components.initial(), ""),
    ] {
        let _ = write!(out, "  \"{key}\": ");
        write_model_body(&mut out, model, &empty, "  ");
        let _ = writeln!(out, "{sep}");
    }
    out.push_str("}\n");
    out
}

pub fn components_from_json(text: &str) -> Result<HmmComponents> {
    let file: ComponentsFile = serde_json::from_str(text).map_err(json_error)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(PsdError::Parse(format!(
            "field `schema_version`: unsupported version {}",
            file.schema_version
        )));
    }
    let (transition, _) = build_model(file.transition, "transition: ")?;
    let (observation, _) = build_model(file.observation, "observation: ")?;
    let (initial, _) = build_model(file.initial, "initial: ")?;
    HmmComponents::new(transition, observation, initial)
}

pub fn read_components(path: &Path) -> Result<HmmComponents> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PsdError::Io(format!("{}: {e}", path.display())))?;
    components_from_json(&text)
}

/// Rows of a CSV file with a header naming the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_points(&self) -> Result<PointMatrix> {
        let d = self.columns.len();
        PointMatrix::new(self.rows.len(), d, self.rows.concat())
    }
}

/// Reads a header + numeric rows CSV. An empty input yields an empty table.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| PsdError::Parse(format!("csv header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let columns = if columns.len() == 1 && columns[0].is_empty() { Vec::new() } else { columns };
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| PsdError::Parse(format!("csv line {line}: {e}")))?;
        if record.len() != columns.len() {
            return Err(PsdError::Parse(format!(
                "csv line {line}: expected {} fields, found {}",
                columns.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(record.len());
        for (field, name) in record.iter().zip(&columns) {
            let v: f64 = field.parse().map_err(|_| {
                PsdError::Parse(format!("csv line {line}, column `{name}`: `{field}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(PsdError::Parse(format!(
                    "csv line {line}, column `{name}`: non-finite value"
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| PsdError::Io(format!("{}: {e}", path.display())))?;
    read_table(file).map_err(|e| match e {
        PsdError::Parse(msg) => PsdError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes a header + rows CSV with 17 significant digits.
pub fn write_table<W: Write>(writer: W, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| PsdError::Io(e.to_string());
    w.write_record(&table.columns).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| num(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
