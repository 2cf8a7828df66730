//! Tables and their CSV / JSON encodings.

use std::io::Write;
use std::path::Path;

use heisen_core::Operator;
use serde::Serialize;

use crate::config::Format;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_float(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => csv_escape(s),
            Cell::Flag(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(k) => Some(*k as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Flag(b)
    }
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub run: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["time", "observable", "row", "col", "re", "im"];

impl Table {
    pub fn new(run: &str, columns: &[&str]) -> Self {
        Self {
            run: run.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn trajectories(run: &str) -> Self {
        Self::new(run, &TRAJECTORY_COLUMNS)
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// One row per matrix entry.
    pub fn push_operator(&mut self, t: f64, name: &str, op: &Operator) {
        let m = op.matrix();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                self.push(vec![t.into(), name.into(), i.into(), j.into(), z.re.into(), z.im.into()]);
            }
        }
    }

    pub fn append(&mut self, other: Table) {
        debug_assert_eq!(self.columns, other.columns);
        self.rows.extend(other.rows);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        // Non-finite numbers are not JSON; emit them as strings.
        let fixed = Table {
            rows: self
                .rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| match c {
                            Cell::Num(x) if !x.is_finite() => Cell::Text(fmt_float(*x)),
                            other => other.clone(),
                        })
                        .collect()
                })
                .collect(),
            ..self.clone()
        };
        let mut s = serde_json::to_string_pretty(&fixed).expect("tables serialise");
        s.push('\n');
        s
    }

    pub fn encode(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
