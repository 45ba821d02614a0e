//! Deterministic CSV and JSON emission.

use serde_json::{Map, Value};

use crate::config::RunConfig;

/// Twelve significant digits; `nan` and `inf` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.11e}")
    }
}

/// A number rounded to twelve significant digits; null when not finite.
pub fn jnum(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    serde_json::Number::from_f64(if r == 0.0 { 0.0 } else { r }).map(Value::Number).unwrap_or(Value::Null)
}

pub fn jarr(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| jnum(x)).collect())
}

#[derive(Debug, Default)]
pub struct Csv {
    notes: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { header: header.iter().map(|s| s.to_string()).collect(), ..Csv::default() }
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.push((key.to_string(), value.into()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn nums(&mut self, xs: &[f64]) {
        self.row(xs.iter().map(|&x| num(x)).collect());
    }

    pub fn render(&self, cfg: &RunConfig) -> String {
        let mut out = format!("# tdelay {}\n", cfg.command);
        for (k, v) in cfg.resolved() {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for (k, v) in &self.notes {
            out.push_str(&format!("# result.{k} = {v}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Pretty JSON object with sorted keys, the command and resolved config
/// included.
pub fn render_json(cfg: &RunConfig, mut body: Map<String, Value>) -> String {
    let mut conf = Map::new();
    for (k, v) in cfg.resolved() {
        conf.insert(k, Value::String(v));
    }
    body.insert("command".into(), Value::String(cfg.command.clone()));
    body.insert("config".into(), Value::Object(conf));
    let mut s = serde_json::to_string_pretty(&Value::Object(body)).unwrap_or_default();
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(jnum(1.0 / 3.0).to_string(), "0.333333333333");
        assert_eq!(jnum(f64::INFINITY), Value::Null);
    }

    #[test]
    fn csv_has_config_block_and_header() {
        let mut cfg = RunConfig::new("delay");
        cfg.set("energy", "0.5", "--energy").unwrap();
        let mut c = Csv::new(&["a", "b"]);
        c.nums(&[1.0, 2.0]);
        let s = c.render(&cfg);
        assert_eq!(s, "# tdelay delay\n# energy = 0.5\na,b\n1.00000000000e0,2.00000000000e0\n");
    }
}
