//! Tables written as CSV or JSON with 17 significant digits.

use std::io::{self, Write};

use hamilton_potential::dynamics::fmt_f64;
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Empty => Value::Null,
        }
    }
}

/// Rows in input order under a fixed header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Csv => {
                writeln!(out, "{}", self.columns.join(","))?;
                for row in &self.rows {
                    let line: Vec<String> = row.iter().map(Cell::csv).collect();
                    writeln!(out, "{}", line.join(","))?;
                }
                Ok(())
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> =
                            self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                        Value::Object(obj)
                    })
                    .collect();
                write_json(&rows, out)
            }
        }
    }
}

/// Compact JSON whose floats carry 17 significant digits.
struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, out: &mut dyn Write) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *out, SignificantDigits);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    writeln!(out)
}

/// Column names `prefix1..prefixN`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Row-major component names of a rank-`rank` tensor, e.g. `g_12`, `T_111`.
pub fn components(prefix: &str, n: usize, rank: u32) -> Vec<String> {
    (0..n.pow(rank))
        .map(|mut idx| {
            let mut digits = vec![0; rank as usize];
            for d in digits.iter_mut().rev() {
                *d = idx % n + 1;
                idx /= n;
            }
            let s: String = digits.iter().map(|d| d.to_string()).collect();
            format!("{prefix}_{s}")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_names_are_row_major() {
        assert_eq!(components("g", 2, 2), ["g_11", "g_12", "g_21", "g_22"]);
        assert_eq!(components("T", 1, 3), ["T_111"]);
        assert_eq!(indexed("q_in", 2), ["q_in1", "q_in2"]);
    }

    #[test]
    fn csv_and_json_agree() {
        let mut t = Table::new(vec!["a".into(), "b".into(), "status".into()]);
        t.push(vec![Cell::Num(0.1), Cell::Empty, Cell::Text("ok".into())]);
        let mut csv = Vec::new();
        t.write(Format::Csv, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "a,b,status\n1.0000000000000001e-1,,ok\n");
        let mut json = Vec::new();
        t.write(Format::Json, &mut json).unwrap();
        let text = String::from_utf8(json).unwrap();
        assert_eq!(text, "[{\"a\":1.0000000000000001e-1,\"b\":null,\"status\":\"ok\"}]\n");
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back[0]["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn text_cells_are_quoted_when_needed() {
        assert_eq!(Cell::Text("error: a, b".into()).csv(), "\"error: a, b\"");
    }
}
