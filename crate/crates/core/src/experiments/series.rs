use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Highest energy order with a CSV column (`E1..E4`, `X0..X3`).
pub const COLUMNS_K: usize = 4;

/// One diagnostic row. Cells that were not computed are `None` and print blank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Row {
    pub t: f64,
    /// `e[k-1][f]` is `E_k` of field `f` (0 = u, 1 = v).
    pub e: [[Option<f64>; 2]; COLUMNS_K],
    pub ghost: [[Option<f64>; 2]; COLUMNS_K],
    /// `x[k][f]` is `X_k` of field `f`.
    pub x: [[Option<f64>; 2]; COLUMNS_K],
    pub hyp_margin: Option<f64>,
    pub equiv_min: Option<f64>,
    pub equiv_max: Option<f64>,
    pub ghost_cum: Option<f64>,
    pub boundary_leak: Option<f64>,
    pub lower_violations: Option<f64>,
    pub geodesic_err: Option<f64>,
}

pub fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for k in 1..=COLUMNS_K {
        h.push(format!("E{k}_u"));
        h.push(format!("E{k}_v"));
    }
    for k in 1..=COLUMNS_K {
        h.push(format!("ghost{k}_u"));
        h.push(format!("ghost{k}_v"));
    }
    for k in 0..COLUMNS_K {
        h.push(format!("X{k}_u"));
        h.push(format!("X{k}_v"));
    }
    for s in [
        "hyp_margin",
        "equiv_min",
        "equiv_max",
        "ghost_cum",
        "boundary_leak",
        "lower_violations",
        "geodesic_err",
    ] {
        h.push(s.to_string());
    }
    h
}

impl Row {
    pub fn at(t: f64) -> Self {
        Row {
            t,
            ..Default::default()
        }
    }

    fn cells(&self) -> Vec<Option<f64>> {
        let mut c = vec![Some(self.t)];
        for block in [&self.e, &self.ghost, &self.x] {
            for pair in block.iter() {
                c.extend_from_slice(pair);
            }
        }
        c.extend([
            self.hyp_margin,
            self.equiv_min,
            self.equiv_max,
            self.ghost_cum,
            self.boundary_leak,
            self.lower_violations,
            self.geodesic_err,
        ]);
        c
    }

    fn from_cells(c: &[Option<f64>]) -> Result<Self> {
        let mut it = c.iter().copied();
        let mut next = || it.next().ok_or_else(|| Error::Config("short CSV row".to_string()));
        let mut row = Row {
            t: next()?.ok_or_else(|| Error::Config("CSV row without t".to_string()))?,
            ..Default::default()
        };
        for block in [&mut row.e, &mut row.ghost, &mut row.x] {
            for pair in block.iter_mut() {
                pair[0] = next()?;
                pair[1] = next()?;
            }
        }
        row.hyp_margin = next()?;
        row.equiv_min = next()?;
        row.equiv_max = next()?;
        row.ghost_cum = next()?;
        row.boundary_leak = next()?;
        row.lower_violations = next()?;
        row.geodesic_err = next()?;
        Ok(row)
    }

    /// Every cell in a fixed order, `None` as NaN; used by checkpoints.
    pub fn to_bits(&self) -> Vec<f64> {
        self.cells().into_iter().map(|c| c.unwrap_or(f64::NAN)).collect()
    }

    pub fn from_bits(v: &[f64]) -> Result<Self> {
        let cells: Vec<Option<f64>> = v.iter().map(|&x| if x.is_nan() { None } else { Some(x) }).collect();
        Row::from_cells(&cells)
    }

    pub fn width() -> usize {
        header().len()
    }
}

/// CSV text: one header line, then one line per row. Floats use the shortest representation
/// that reads back to the same bits.
pub fn to_csv(rows: &[Row]) -> String {
    let mut out = header().join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r
            .cells()
            .into_iter()
            .map(|c| c.map(|v| format!("{v:e}")).unwrap_or_default())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::Config("empty CSV".to_string()))?;
    if head.split(',').map(str::to_string).collect::<Vec<_>>() != header() {
        return Err(Error::Config("CSV header does not match the schema".to_string()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cells = l
                .split(',')
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>()
                            .map(Some)
                            .map_err(|e| Error::Config(format!("bad CSV cell `{c}`: {e}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Row::from_cells(&cells)
        })
        .collect()
}

/// Trapezoid integral of `f` over consecutive rows.
pub fn trapezoid(rows: &[Row], f: impl Fn(&Row) -> f64) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1])))
        .sum()
}

/// One pass/fail contract in a summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable requirement, e.g. `>= 3.5` or `in [1.8, 2.2]`.
    pub requirement: String,
    pub pass: bool,
}

/// Scalar verdicts, constants, margins and slopes of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub kind: String,
    pub pass: bool,
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
}

impl Summary {
    pub fn new(kind: &str) -> Self {
        Summary {
            kind: kind.to_string(),
            pass: true,
            values: BTreeMap::new(),
            checks: Vec::new(),
            abort: None,
        }
    }

    pub fn value(&mut self, name: impl Into<String>, v: f64) {
        self.values.insert(name.into(), v);
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, requirement: impl Into<String>, pass: bool) {
        self.pass &= pass;
        self.checks.push(Check {
            name: name.into(),
            value,
            requirement: requirement.into(),
            pass,
        });
    }

    pub fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.check(name, value, format!("<= {bound:e}"), value <= bound);
    }

    pub fn at_least(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.check(name, value, format!(">= {bound:e}"), value >= bound);
    }

    pub fn within(&mut self, name: impl Into<String>, value: f64, lo: f64, hi: f64) {
        self.check(name, value, format!("in [{lo:e}, {hi:e}]"), value >= lo && value <= hi);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// TOML text. Non-finite values are written as strings, which TOML readers accept everywhere.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {:?}", self.kind);
        let _ = writeln!(s, "pass = {}", self.pass);
        if let Some(a) = &self.abort {
            let _ = writeln!(s, "abort = {}", toml_str(a));
        }
        let _ = writeln!(s, "\n[values]");
        for (k, v) in &self.values {
            let _ = writeln!(s, "{} = {}", toml_key(k), toml_f64(*v));
        }
        for c in &self.checks {
            let _ = writeln!(s, "\n[[checks]]");
            let _ = writeln!(s, "name = {}", toml_str(&c.name));
            let _ = writeln!(s, "value = {}", toml_f64(c.value));
            let _ = writeln!(s, "requirement = {}", toml_str(&c.requirement));
            let _ = writeln!(s, "pass = {}", c.pass);
        }
        s
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn toml_key(k: &str) -> String {
    if k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        k.to_string()
    } else {
        toml_str(k)
    }
}

fn toml_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // `{:e}` always carries an exponent, so TOML reads it as a float
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let mut r = Row::at(0.1 + 0.2);
        r.e[0] = [Some(1.0 / 3.0), None];
        r.x[3][1] = Some(-7.25e-300);
        r.hyp_margin = Some(0.987654321);
        let rows = vec![r.clone(), Row::at(2.0)];
        let back = from_csv(&to_csv(&rows)).unwrap();
        assert_eq!(back, rows);
        assert_eq!(Row::from_bits(&r.to_bits()).unwrap(), r);
    }

    #[test]
    fn summary_is_valid_toml() {
        let mut s = Summary::new("stability_scaling");
        s.value("ratio eps0/eps1", 2.01);
        s.value("nan", f64::NAN);
        s.within("ratio", 2.01, 1.8, 2.2);
        s.at_most("bad", 3.0, 1.0);
        let parsed: toml::Table = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(parsed["pass"].as_bool(), Some(false));
        assert_eq!(parsed["checks"].as_array().unwrap().len(), 2);
    }
}
