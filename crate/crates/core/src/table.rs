//! Minimal CSV tables with a fixed float format.
//!
//! Floats are written with 17 significant digits in exponent form so that
//! output is exact and byte-stable; text cells are quoted when needed.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum CsvValue {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl CsvValue {
    fn write(&self, out: &mut String) {
        match self {
            Self::Float(x) => write_float(out, *x),
            Self::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Self::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Self::Text(s) => write_text(out, s),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Float(x) => Some(*x),
            Self::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl From<f64> for CsvValue {
    fn from(x: f64) -> Self {
        Self::Float(x)
    }
}

impl From<f32> for CsvValue {
    fn from(x: f32) -> Self {
        Self::Float(x as f64)
    }
}

impl From<usize> for CsvValue {
    fn from(i: usize) -> Self {
        Self::Int(i as i64)
    }
}

impl From<u64> for CsvValue {
    fn from(i: u64) -> Self {
        Self::Int(i as i64)
    }
}

impl From<i64> for CsvValue {
    fn from(i: i64) -> Self {
        Self::Int(i)
    }
}

impl From<bool> for CsvValue {
    fn from(b: bool) -> Self {
        Self::Bool(b)
    }
}

impl From<&str> for CsvValue {
    fn from(s: &str) -> Self {
        Self::Text(s.to_string())
    }
}

impl From<String> for CsvValue {
    fn from(s: String) -> Self {
        Self::Text(s)
    }
}

pub fn write_float(out: &mut String, x: f64) {
    if x.is_nan() {
        out.push_str("NaN");
    } else if x.is_infinite() {
        out.push_str(if x > 0.0 { "inf" } else { "-inf" });
    } else {
        let _ = write!(out, "{x:.16e}");
    }
}

fn write_text(out: &mut String, s: &str) {
    if s.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&s.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(s);
    }
}

/// Named columns and rows of values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<CsvValue>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its width differs from the header.
    pub fn push(&mut self, row: Vec<CsvValue>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric values of a column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows.iter().map(|r| r[idx].as_f64()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, h) in self.header.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_text(&mut out, h);
        }
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                v.write(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let mut s = String::new();
            write_float(&mut s, x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn text_is_quoted_when_needed() {
        let mut t = CsvTable::new(["name", "value"]);
        t.push(vec!["a,b".into(), 1.5.into()]);
        t.push(vec!["say \"hi\"".into(), true.into()]);
        assert_eq!(
            t.to_csv(),
            "name,value\n\"a,b\",1.5000000000000000e0\n\"say \"\"hi\"\"\",true\n"
        );
        assert_eq!(t.column("value"), None);
    }
}
