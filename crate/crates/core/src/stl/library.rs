//! Formalized safety goal and use-case requirements, and their evaluation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::offline::{robustness, satisfied};
use super::online::OnlineMonitor;
use super::{parse_stl, Formula, SignalTable, StlError};
use crate::odd::{OddSpec, RequirementParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub name: String,
    pub formula: Formula,
}

pub const SAFETY_GOAL: &str = "SAFETY-GOAL";
/// Speeds at or below this count as standing still.
pub const EPS_V: f64 = 1e-6;
/// Time after which tracking accuracy is required.
pub const TRACK_SETTLE: f64 = 1.0;
/// Allowed numerical slack on the planned clearance.
pub const CLEARANCE_TOL: f64 = 0.01;

/// The safety goal and UC-AVP-01..06 as formulas over trace signals.
pub fn requirement_library(params: &RequirementParams, odd: &OddSpec) -> Vec<Requirement> {
    let texts = [
        (
            SAFETY_GOAL.to_string(),
            format!("G[0,inf] (min_ped_dist > 0 || ego_speed <= {EPS_V})"),
        ),
        ("UC-AVP-01".into(), "G[0,inf] (uc01_ok > 0.5)".to_string()),
        ("UC-AVP-02".into(), format!("G[0,inf] (loc_error <= {})", params.e_local)),
        (
            "UC-AVP-03".into(),
            format!("G[0,inf] (path_clearance_margin >= {})", -CLEARANCE_TOL),
        ),
        (
            "UC-AVP-04".into(),
            format!("G[{TRACK_SETTLE},inf] (cross_track <= {})", params.e_track),
        ),
        (
            "UC-AVP-05".into(),
            format!(
                "G[0,inf] (aeb_condition > 0.5 -> F[0,{}] (cmd_a <= {}))",
                params.t_cycle, odd.ego_a_min
            ),
        ),
        ("UC-AVP-06".into(), format!("G[0,inf] (cycle_time <= {})", params.t_cycle)),
    ];
    texts
        .into_iter()
        .map(|(name, src)| Requirement {
            formula: parse_stl(&src).expect("library formulas parse"),
            name,
        })
        .collect()
}

/// Library rendered in the `NAME: formula` file format.
pub fn library_text(params: &RequirementParams, odd: &OddSpec) -> String {
    requirement_library(params, odd)
        .iter()
        .map(|r| format!("{}: {}\n", r.name, r.formula))
        .collect()
}

mod json_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        N(f64),
        S(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::N(v) => Ok(v),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub use json_f64::{deserialize as de_f64, serialize as ser_f64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementReport {
    pub name: String,
    pub verdict: Verdict,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub robustness: f64,
    pub first_violation_t: Option<f64>,
}

/// Offline verdict at time 0; a zero robustness is settled by Boolean semantics.
pub fn verdict_of(f: &Formula, tr: &SignalTable) -> Result<(Verdict, f64), StlError> {
    if tr.is_empty() {
        return Err(StlError::EmptyTrace);
    }
    let rho = robustness(f, tr)?[0];
    let v = if rho > 0.0 {
        Verdict::Satisfied
    } else if rho < 0.0 {
        Verdict::Violated
    } else if satisfied(f, tr)?[0] {
        Verdict::Satisfied
    } else {
        Verdict::Violated
    };
    Ok((v, rho))
}

/// Time of the first sample after which the online monitor reports a violation.
pub fn first_violation(f: &Formula, tr: &SignalTable) -> Result<Option<f64>, StlError> {
    let mut m = OnlineMonitor::new(f.clone());
    let names = f.signals();
    let cols: Vec<&[f64]> = names.iter().map(|n| tr.column(n)).collect::<Result<_, _>>()?;
    let mut sample = BTreeMap::new();
    for (i, t) in tr.times.iter().enumerate() {
        for (n, c) in names.iter().zip(&cols) {
            sample.insert(n.to_string(), c[i]);
        }
        if m.update(*t, &sample)?.verdict == Verdict::Violated {
            return Ok(Some(*t));
        }
    }
    Ok(None)
}

pub fn evaluate(name: &str, f: &Formula, tr: &SignalTable) -> Result<RequirementReport, StlError> {
    let (verdict, rho) = verdict_of(f, tr)?;
    let mut first = first_violation(f, tr)?;
    if verdict == Verdict::Violated && first.is_none() {
        first = tr.times.last().copied();
    }
    Ok(RequirementReport {
        name: name.to_string(),
        verdict,
        robustness: rho,
        first_violation_t: first,
    })
}
