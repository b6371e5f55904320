//! CSV tables and the JSON manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const CSV_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_cell(c: &Cell) -> String {
    match c {
        Cell::Num(v) => fmt_num(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Bool(b) => b.to_string(),
        Cell::Text(s) => {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
    }
}

/// Parameters stamped into every CSV header.
#[derive(Clone, Debug, Serialize)]
pub struct Stamp {
    pub sigma: f64,
    pub nu: f64,
    pub kappa: Option<f64>,
    pub eps: f64,
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct Table {
    /// File stem, also the last part of the schema id.
    pub name: String,
    pub units: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, units: &str, columns: &[&'static str]) -> Self {
        Table { name: name.into(), units: units.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn schema_id(&self) -> String {
        format!("kglab.{}.v{CSV_VERSION}", self.name)
    }

    /// `stamp` is `None` for tables that carry no physics parameters.
    pub fn render(&self, stamp: Option<&Stamp>) -> String {
        let mut s = String::new();
        let _ = write!(s, "# schema_id={}; units: {}", self.schema_id(), self.units);
        if let Some(st) = stamp {
            let kappa = st.kappa.map(fmt_num).unwrap_or_else(|| "auto".into());
            let _ = write!(s, "; sigma={}; nu={}; kappa={}; eps={}; dt={}", fmt_num(st.sigma), fmt_num(st.nu), kappa, fmt_num(st.eps), fmt_num(st.dt));
        }
        s.push('\n');
        s.push_str("schema_id");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        let id = self.schema_id();
        for r in &self.rows {
            s.push_str(&id);
            for c in r {
                s.push(',');
                s.push_str(&fmt_cell(c));
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path, stamp: Option<&Stamp>) -> std::io::Result<PathBuf> {
        let p = dir.join(format!("{}.csv", self.name));
        std::fs::write(&p, self.render(stamp))?;
        Ok(p)
    }
}

/// Machine-readable error record, printed to stderr and written as `error.json`.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
    pub stage: &'static str,
}

impl ErrorRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "error": self })).unwrap_or_default()
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}
