//! Result rows and their CSV/JSON renderings.

use anyhow::{bail, Result};
use indexmap::IndexMap;
use jkext::scalar::{fraction, parse_fraction, Rational};
use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    /// Exact value, rendered `p/q`.
    Fraction(Rational),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            Cell::Fraction(r) => Some(jkext::scalar::rational_to_f64(r)),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => float_text(*x),
            Cell::Fraction(r) => fraction(r),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(x) => Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Cell::Fraction(r) => Value::String(fraction(r)),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Missing => Value::Null,
        }
    }

    fn from_json(v: &Value) -> Result<Cell> {
        Ok(match v {
            Value::Null => Cell::Missing,
            Value::Bool(b) => Cell::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) if !n.is_f64() => Cell::Int(i),
                _ => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => match (s.contains('/'), parse_fraction(s)) {
                (true, Some(r)) => Cell::Fraction(r),
                _ => Cell::Text(s.clone()),
            },
            other => bail!("unexpected JSON cell {other}"),
        })
    }
}

/// Seventeen significant digits; parses back to the same `f64`.
pub fn float_text(x: f64) -> String {
    format!("{x:.16e}")
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<Rational> for Cell {
    fn from(r: Rational) -> Self {
        Cell::Fraction(r)
    }
}

impl From<i64> for Cell {
    fn from(i: i64) -> Self {
        Cell::Int(i)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub kind: String,
    pub family: String,
    pub theta: Option<f64>,
    pub kernel: String,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub replications: usize,
    pub cells: IndexMap<String, Cell>,
}

const FIXED: [&str; 8] = ["kind", "family", "theta", "kernel", "m", "n", "seed", "replications"];

impl ResultRow {
    pub fn cell(&self, name: &str) -> Option<&Cell> {
        self.cells.get(name)
    }

    pub fn with(mut self, name: &str, cell: impl Into<Cell>) -> Self {
        self.cells.insert(name.to_string(), cell.into());
        self
    }

    /// Every float present is finite.
    pub fn check_finite(&self) -> Result<()> {
        if let Some(t) = self.theta {
            if !t.is_finite() {
                bail!("non-finite theta");
            }
        }
        for (name, cell) in &self.cells {
            if let Cell::Float(x) = cell {
                if !x.is_finite() {
                    bail!("non-finite value in column {name} ({} row)", self.kind);
                }
            }
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("kind".into(), Value::String(self.kind.clone()));
        obj.insert("family".into(), Value::String(self.family.clone()));
        obj.insert(
            "theta".into(),
            self.theta.and_then(Number::from_f64).map(Value::Number).unwrap_or(Value::Null),
        );
        obj.insert("kernel".into(), Value::String(self.kernel.clone()));
        obj.insert("m".into(), Value::from(self.m));
        obj.insert("n".into(), Value::from(self.n));
        obj.insert("seed".into(), Value::from(self.seed));
        obj.insert("replications".into(), Value::from(self.replications));
        for (k, c) in &self.cells {
            obj.insert(k.clone(), c.json());
        }
        Value::Object(obj)
    }

    fn from_json(v: &Value) -> Result<ResultRow> {
        let Value::Object(obj) = v else { bail!("row is not an object") };
        let text = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
        let uint = |k: &str| obj.get(k).and_then(Value::as_u64);
        let (Some(kind), Some(family), Some(kernel)) = (text("kind"), text("family"), text("kernel")) else {
            bail!("row lacks kind, family or kernel");
        };
        let (Some(m), Some(n), Some(seed), Some(reps)) = (uint("m"), uint("n"), uint("seed"), uint("replications")) else {
            bail!("row lacks m, n, seed or replications");
        };
        let mut cells = IndexMap::new();
        for (k, c) in obj {
            if !FIXED.contains(&k.as_str()) {
                cells.insert(k.clone(), Cell::from_json(c)?);
            }
        }
        Ok(ResultRow {
            kind,
            family,
            theta: obj.get("theta").and_then(Value::as_f64),
            kernel,
            m: m as usize,
            n: n as usize,
            seed,
            replications: reps as usize,
            cells,
        })
    }

    fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![
            self.kind.clone(),
            self.family.clone(),
            self.theta.map(float_text).unwrap_or_default(),
            self.kernel.clone(),
            self.m.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
            self.replications.to_string(),
        ];
        rec.extend(self.cells.values().map(Cell::csv));
        rec
    }
}

/// CSV with a header taken from the first row. All rows of one experiment
/// share a schema.
pub fn to_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    if let Some(first) = rows.first() {
        header.extend(first.cells.keys().cloned());
    }
    w.write_record(&header)?;
    for row in rows {
        if row.cells.len() + FIXED.len() != header.len() {
            bail!("rows of one experiment must share a schema");
        }
        w.write_record(row.csv_record())?;
    }
    Ok(w.into_inner()?)
}

pub fn to_json(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let arr = Value::Array(rows.iter().map(ResultRow::to_json).collect());
    let mut out = serde_json::to_vec_pretty(&arr)?;
    out.push(b'\n');
    Ok(out)
}

pub fn from_json(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    let v: Value = serde_json::from_slice(bytes)?;
    let Value::Array(items) = v else { bail!("expected a JSON array of rows") };
    items.iter().map(ResultRow::from_json).collect()
}
