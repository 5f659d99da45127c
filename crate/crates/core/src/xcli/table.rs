//! In-memory tables with deterministic CSV rendering.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    UInt(u64),
    Float(f64),
    Bool(bool),
    Str(String),
    Empty,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(v) => Some(v as f64),
            Value::UInt(v) => Some(v as f64),
            Value::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            Value::Int(v) => write!(out, "{v}").unwrap(),
            Value::UInt(v) => write!(out, "{v}").unwrap(),
            Value::Float(v) if v.is_nan() => out.push_str("nan"),
            Value::Float(v) if v.is_infinite() => out.push_str(if *v > 0.0 { "inf" } else { "-inf" }),
            // 17 significant digits round-trip every f64.
            Value::Float(v) => write!(out, "{v:.16e}").unwrap(),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Str(s) if s.contains([',', '"', '\n']) => {
                write!(out, "\"{}\"", s.replace('"', "\"\"")).unwrap()
            }
            Value::Str(s) => out.push_str(s),
            Value::Empty => {}
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        self.render(&mut s);
        f.write_str(&s)
    }
}

macro_rules! from_int {
    ($($t:ty => $v:ident),*) => {
        $(impl From<$t> for Value {
            fn from(x: $t) -> Self {
                Value::$v(x as _)
            }
        })*
    };
}
from_int!(i32 => Int, i64 => Int, u32 => UInt, u64 => UInt, usize => UInt);

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Str(x.to_string())
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Str(x)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(x: Option<T>) -> Self {
        x.map_or(Value::Empty, Into::into)
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Row) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of one column; panics on an unknown name.
    pub fn values(&self, name: &str) -> Vec<&Value> {
        let c = self.column(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| &r[c]).collect()
    }

    pub fn floats(&self, name: &str) -> Vec<f64> {
        self.values(name).into_iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                v.render(&mut out);
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
    fn renders_csv() {
        let mut t = Table::new(&["a", "b", "c", "d"]);
        t.push(vec![1usize.into(), 0.1.into(), true.into(), Value::Empty]);
        t.push(vec![(-2i64).into(), f64::NAN.into(), "x,y".into(), Some(3u64).into()]);
        let csv = t.to_csv();
        assert_eq!(csv, "a,b,c,d\n1,1.0000000000000001e-1,true,\n-2,nan,\"x,y\",3\n");
        assert_eq!(t.floats("a"), vec![1.0, -2.0]);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 123456.789e-300, -2.5e17, f64::MIN_POSITIVE] {
            let mut s = String::new();
            Value::Float(x).render(&mut s);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }
}
