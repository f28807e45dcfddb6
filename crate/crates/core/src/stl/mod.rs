//! Signal temporal logic: formulas, robustness semantics, monitors and the requirement library.

pub mod library;
pub mod offline;
pub mod online;
pub mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use library::{evaluate, first_violation, library_text, verdict_of, SAFETY_GOAL, requirement_library, Requirement, RequirementReport, Verdict};
pub use offline::{robustness, robustness_at, satisfied_at};
pub use online::OnlineMonitor;
pub use parser::{parse_requirements, parse_stl, ParseError};

/// Tolerance used when testing whether a sample time falls inside a window.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum StlError {
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("evaluation time {0} outside the trace horizon")]
    OutOfHorizon(f64),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("sample at t={got} does not follow t={last}")]
    Sequencing { last: f64, got: f64 },
    #[error("sample is missing signal `{0}`")]
    MissingSample(String),
    #[error("bad signal table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

/// Closed time window `[a, b]`; `b` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn contains_offset(&self, dt: f64) -> bool {
        dt >= self.a - TIME_EPS && dt <= self.b + TIME_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Atom { signal: String, cmp: Cmp, c: f64 },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Globally(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(signal: &str, cmp: Cmp, c: f64) -> Self {
        Formula::Atom {
            signal: signal.to_string(),
            cmp,
            c,
        }
    }

    pub fn signals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_signals(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_signals<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::Atom { signal, .. } => out.push(signal),
            Formula::Not(f) | Formula::Globally(_, f) | Formula::Eventually(_, f) => f.collect_signals(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(_, a, b) => {
                a.collect_signals(out);
                b.collect_signals(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom { .. } => 1,
            Formula::Not(f) | Formula::Globally(_, f) | Formula::Eventually(_, f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", fmt_num(self.a), fmt_num(self.b))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom { signal, cmp, c } => write!(f, "{signal} {} {}", cmp.symbol(), fmt_num(*c)),
            Formula::Not(x) => write!(f, "!({x})"),
            Formula::And(a, b) => write!(f, "({a} && {b})"),
            Formula::Or(a, b) => write!(f, "({a} || {b})"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::Globally(i, x) => write!(f, "G{i} ({x})"),
            Formula::Eventually(i, x) => write!(f, "F{i} ({x})"),
            Formula::Until(i, a, b) => write!(f, "(({a}) U{i} ({b}))"),
        }
    }
}

/// Sampled signals sharing one strictly increasing time base.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalTable {
    pub times: Vec<f64>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl SignalTable {
    pub fn new(times: Vec<f64>) -> Self {
        Self {
            times,
            columns: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, values: Vec<f64>) {
        self.columns.insert(name.to_string(), values);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64], StlError> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| StlError::UnknownSignal(name.to_string()))
    }

    pub fn validate(&self) -> Result<(), StlError> {
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StlError::Table("time column must be strictly increasing".into()));
        }
        if let Some((k, _)) = self.columns.iter().find(|(_, v)| v.len() != self.times.len()) {
            return Err(StlError::Table(format!("column `{k}` has the wrong length")));
        }
        Ok(())
    }

    /// Read a CSV with a header row and a `t` column; every other column becomes a signal.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, StlError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| StlError::Table(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let t_idx = headers
            .iter()
            .position(|h| h == "t")
            .ok_or_else(|| StlError::Table("missing `t` column".into()))?;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| StlError::Table(e.to_string()))?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| StlError::Table(format!("row {}: `{field}` is not a number", line + 2)))?;
                if let Some(c) = cols.get_mut(k) {
                    c.push(v);
                }
            }
        }
        let mut table = SignalTable::new(std::mem::take(&mut cols[t_idx]));
        for (k, h) in headers.iter().enumerate() {
            if k != t_idx {
                table.insert(h, std::mem::take(&mut cols[k]));
            }
        }
        table.validate()?;
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let names: Vec<&String> = self.columns.keys().collect();
        let mut s = String::from("t");
        for n in &names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            s.push_str(&crate::sim::trace::fmt_sig9(*t));
            for n in &names {
                let _ = write!(s, ",{}", crate::sim::trace::fmt_sig9(self.columns[*n][i]));
            }
            s.push('\n');
        }
        s
    }

    /// Merge another table with an identical time base.
    pub fn merge(&mut self, other: SignalTable) -> Result<(), StlError> {
        if other.times.len() != self.times.len() {
            return Err(StlError::Table("time bases differ in length".into()));
        }
        self.columns.extend(other.columns);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let mut t = SignalTable::new(vec![0.0, 0.1, 0.2]);
        t.insert("v", vec![1.0, 2.0, -0.5]);
        let back = SignalTable::from_csv(t.to_csv().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_unsorted_time() {
        let csv = "t,v\n0,1\n0,2\n";
        assert!(SignalTable::from_csv(csv.as_bytes()).is_err());
    }
}
