//! Continuous-engineering loop: failure store, parameter-bound mining, ODD
//! update proposals and detector class updates.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::odd::ParameterRange;
use crate::perception::{in_view, match_detections, SensorConfig};
use crate::risk::ShieldConfig;
use crate::scenario::ConcreteScenario;
use crate::sim::Trace;
use crate::stl::{RequirementReport, Verdict};

/// Pseudo-requirement recorded when the runtime risk monitor reached the shield threshold.
pub const FUZZ_MONITOR: &str = "FUZZ-RISK";
/// Minimum pass-retention of a proposed interval.
pub const RETENTION_FLOOR: f64 = 0.9;
/// Exclusion must beat pass loss by this much for a restriction to be proposed.
pub const MIN_GAIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CeError {
    #[error("store line {line}: {message}")]
    CorruptStore { line: usize, message: String },
    #[error("parameter `{0}` is absent from the records")]
    MissingParameter(String),
    #[error("need at least one passing and one failing record for `{0}`")]
    NotEnoughData(String),
    #[error("no failure records to learn from")]
    NoFailures,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorSource {
    Stl,
    Fuzz,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub violated: Vec<String>,
    pub first_violation_t: Option<f64>,
    pub trace_path: Option<String>,
    pub parameters: BTreeMap<String, f64>,
    pub source: MonitorSource,
    /// Ground-truth classes the detector missed while the risk monitor fired.
    #[serde(default)]
    pub implicated_classes: Vec<String>,
}

/// Every scalar parameter of a scenario under its flattened name.
pub fn scenario_parameters(sc: &ConcreteScenario) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for name in ["ego_start_s", "ego_cruise_speed", "perception_noise_scale", "goal_bay"] {
        if let Some(v) = sc.get_parameter(name) {
            m.insert(name.to_string(), v);
        }
    }
    for i in 1..=sc.pedestrians.len() {
        for f in ["walk_speed", "trigger_distance", "heading_offset", "spawn_bay"] {
            let name = format!("ped{i}.{f}");
            if let Some(v) = sc.get_parameter(&name) {
                m.insert(name, v);
            }
        }
    }
    m
}

/// Classes of ground-truth objects left undetected while risk was at or above
/// the shield threshold.
pub fn implicated_classes(tr: &Trace, sensor: &SensorConfig, shield: &ShieldConfig) -> Vec<String> {
    let mut out = BTreeSet::new();
    for s in tr.samples.iter().filter(|s| s.risk >= shield.threshold) {
        let matched: BTreeSet<usize> = match_detections(&s.truth, &s.detections, sensor.match_gate)
            .into_iter()
            .map(|m| m.0)
            .collect();
        for (i, g) in s.truth.iter().enumerate() {
            if !matched.contains(&i) && in_view(&s.ego, g.position(), sensor.fov, sensor.max_range) {
                out.insert(g.class_label.clone());
            }
        }
    }
    out.into_iter().collect()
}

/// Failure record for an episode, if any monitor flagged it.
pub fn failure_record(
    sc: &ConcreteScenario,
    tr: &Trace,
    reports: &[RequirementReport],
    sensor: &SensorConfig,
    shield: &ShieldConfig,
    trace_path: Option<String>,
) -> Option<FailureRecord> {
    let mut violated: Vec<String> = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Violated)
        .map(|r| r.name.clone())
        .collect();
    let mut first = reports
        .iter()
        .filter_map(|r| r.first_violation_t)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
    let fuzz_t = tr.samples.iter().find(|s| s.risk >= shield.threshold).map(|s| s.t);
    if let Some(t) = fuzz_t {
        violated.push(FUZZ_MONITOR.into());
        first = Some(first.map_or(t, |a: f64| a.min(t)));
    }
    if violated.is_empty() && !tr.collided() {
        return None;
    }
    let source = if tr.collided() {
        MonitorSource::Collision
    } else if fuzz_t.is_some() && violated.len() == 1 {
        MonitorSource::Fuzz
    } else {
        MonitorSource::Stl
    };
    Some(FailureRecord {
        scenario_id: sc.scenario_id.clone(),
        seed: sc.seed,
        violated,
        first_violation_t: first,
        trace_path,
        parameters: scenario_parameters(sc),
        source,
        implicated_classes: if fuzz_t.is_some() {
            implicated_classes(tr, sensor, shield)
        } else {
            Vec::new()
        },
    })
}

pub fn load_store(path: &Path) -> Result<Vec<FailureRecord>, CeError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| CeError::CorruptStore {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Append records whose `(scenario_id, seed)` is not yet stored; returns how many were written.
pub fn record_results(records: &[FailureRecord], path: &Path) -> Result<usize, CeError> {
    let mut seen: BTreeSet<(String, u64)> = load_store(path)?
        .into_iter()
        .map(|r| (r.scenario_id, r.seed))
        .collect();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut n = 0;
    for r in records {
        if seen.insert((r.scenario_id.clone(), r.seed)) {
            writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
            n += 1;
        }
    }
    Ok(n)
}

/// A parameter vector with its pass/fail outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub parameters: BTreeMap<String, f64>,
    pub passed: bool,
}

impl From<&FailureRecord> for Observation {
    fn from(r: &FailureRecord) -> Self {
        Self {
            parameters: r.parameters.clone(),
            passed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Values at or above the threshold pass.
    MinPassing,
    /// Values at or below the threshold pass.
    MaxPassing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedSpec {
    pub parameter: String,
    pub direction: Direction,
    pub threshold: f64,
    pub margin: f64,
    pub separable: bool,
    pub pass_support: usize,
    pub fail_support: usize,
}

fn errors_at(pass: &[f64], fail: &[f64], th: f64, dir: Direction) -> usize {
    let passes = |v: f64| match dir {
        Direction::MinPassing => v >= th,
        Direction::MaxPassing => v <= th,
    };
    pass.iter().filter(|v| !passes(**v)).count() + fail.iter().filter(|v| passes(**v)).count()
}

fn best_threshold(pass: &[f64], fail: &[f64], dir: Direction) -> (f64, usize) {
    let mut vals: Vec<f64> = pass.iter().chain(fail).copied().collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let mut cands = vec![vals[0] - 1.0, vals[vals.len() - 1] + 1.0];
    cands.extend(vals.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.sort_by(f64::total_cmp);
    cands
        .into_iter()
        .map(|c| (c, errors_at(pass, fail, c, dir)))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("candidates")
}

/// Threshold on one parameter separating passing from failing records.
/// `fails` lists observations failing `requirement`; every other observation passes.
pub fn mine_parameter_bound(
    obs: &[Observation],
    param: &str,
    direction: Option<Direction>,
) -> Result<MinedSpec, CeError> {
    let mut pass = Vec::new();
    let mut fail = Vec::new();
    for o in obs {
        if let Some(v) = o.parameters.get(param) {
            if o.passed {
                pass.push(*v);
            } else {
                fail.push(*v);
            }
        }
    }
    if pass.is_empty() && fail.is_empty() {
        return Err(CeError::MissingParameter(param.into()));
    }
    if pass.is_empty() || fail.is_empty() {
        return Err(CeError::NotEnoughData(param.into()));
    }
    let lo_pass = pass.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_pass = pass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo_fail = fail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_fail = fail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dir = direction.unwrap_or_else(|| {
        let (_, e_min) = best_threshold(&pass, &fail, Direction::MinPassing);
        let (_, e_max) = best_threshold(&pass, &fail, Direction::MaxPassing);
        if e_max < e_min {
            Direction::MaxPassing
        } else {
            Direction::MinPassing
        }
    });
    let (worst_pass, best_fail) = match dir {
        Direction::MinPassing => (lo_pass, hi_fail),
        Direction::MaxPassing => (hi_pass, lo_fail),
    };
    let separable = match dir {
        Direction::MinPassing => worst_pass > best_fail,
        Direction::MaxPassing => worst_pass < best_fail,
    };
    let (threshold, margin) = if separable {
        (0.5 * (worst_pass + best_fail), 0.5 * (worst_pass - best_fail).abs())
    } else {
        (best_threshold(&pass, &fail, dir).0, 0.0)
    };
    Ok(MinedSpec {
        parameter: param.into(),
        direction: dir,
        threshold,
        margin,
        separable,
        pass_support: pass.len(),
        fail_support: fail.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterProposal {
    pub parameter: String,
    pub original: [f64; 2],
    pub proposed: [f64; 2],
    pub excluded_failure_fraction: f64,
    pub retained_pass_fraction: f64,
    /// Restriction does not beat the pass loss it causes.
    pub ineffective: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddUpdateProposal {
    pub parameters: Vec<ParameterProposal>,
    /// Parameters whose restriction is part of the combined proposal.
    pub applied: Vec<String>,
    pub excluded_failure_fraction: f64,
    pub retained_pass_fraction: f64,
    pub rationale: String,
}

impl OddUpdateProposal {
    /// Whether a parameter vector lies inside the combined proposal.
    pub fn admits(&self, params: &BTreeMap<String, f64>) -> bool {
        self.parameters
            .iter()
            .filter(|p| self.applied.contains(&p.parameter))
            .all(|p| {
                params
                    .get(&p.parameter)
                    .is_none_or(|v| *v >= p.proposed[0] && *v <= p.proposed[1])
            })
    }

    /// (excluded failure fraction, retained pass fraction) on a sample.
    pub fn score(&self, obs: &[Observation]) -> (f64, f64) {
        score(obs, |o| self.admits(&o.parameters))
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("# ODD update proposal\n\n");
        s.push_str(&format!(
            "Combined: excludes {:.1}% of failures, retains {:.1}% of passes.\n\n",
            100.0 * self.excluded_failure_fraction,
            100.0 * self.retained_pass_fraction
        ));
        s.push_str("| parameter | current | proposed | excluded fails | retained passes | applied |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for p in &self.parameters {
            s.push_str(&format!(
                "| {} | [{}, {}] | [{:.4}, {:.4}] | {:.3} | {:.3} | {} |\n",
                p.parameter,
                p.original[0],
                p.original[1],
                p.proposed[0],
                p.proposed[1],
                p.excluded_failure_fraction,
                p.retained_pass_fraction,
                if self.applied.contains(&p.parameter) { "yes" } else { "no" }
            ));
        }
        s.push_str(&format!("\n{}\n", self.rationale));
        s
    }
}

fn score(obs: &[Observation], admit: impl Fn(&Observation) -> bool) -> (f64, f64) {
    let (mut fails, mut excluded, mut passes, mut retained) = (0usize, 0usize, 0usize, 0usize);
    for o in obs {
        let inside = admit(o);
        if o.passed {
            passes += 1;
            retained += inside as usize;
        } else {
            fails += 1;
            excluded += (!inside) as usize;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    (frac(excluded, fails), frac(retained, passes))
}

/// Best sub-interval of one range: maximal failure exclusion with pass
/// retention at or above the floor, widest among equals.
fn sweep(range: &ParameterRange, obs: &[Observation]) -> ParameterProposal {
    let mut pts: Vec<(f64, bool)> = obs
        .iter()
        .filter_map(|o| o.parameters.get(&range.name).map(|v| (*v, o.passed)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pass = pts.iter().filter(|p| p.1).count();
    let n_fail = pts.len() - n_pass;
    let mut vals: Vec<f64> = pts.iter().map(|p| p.0).collect();
    vals.dedup();
    // boundaries sit midway between neighbouring observed values
    let mut bounds = vec![range.lo];
    bounds.extend(vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).filter(|b| *b > range.lo && *b < range.hi));
    bounds.push(range.hi);
    // prefix counts of passes/fails strictly below each boundary
    let below = |b: f64| {
        let k = pts.partition_point(|p| p.0 < b);
        let pass = pts[..k].iter().filter(|p| p.1).count();
        (pass, k - pass)
    };
    let upto = |b: f64| {
        let k = pts.partition_point(|p| p.0 <= b);
        let pass = pts[..k].iter().filter(|p| p.1).count();
        (pass, k - pass)
    };
    let lows: Vec<(usize, usize)> = bounds.iter().map(|b| below(*b)).collect();
    let highs: Vec<(usize, usize)> = bounds.iter().map(|b| upto(*b)).collect();
    let frac = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };

    let mut best = (range.lo, range.hi, 0.0, 1.0);
    let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..bounds.len() {
        for j in i + 1..bounds.len() {
            let pass_in = highs[j].0 - lows[i].0;
            let fail_in = highs[j].1 - lows[i].1;
            let retained = frac(pass_in, n_pass);
            if retained < RETENTION_FLOOR {
                continue;
            }
            let excluded = if n_fail == 0 { 0.0 } else { 1.0 - fail_in as f64 / n_fail as f64 };
            let key = (excluded, bounds[j] - bounds[i]);
            if key > best_key {
                best_key = key;
                best = (bounds[i], bounds[j], excluded, retained);
            }
        }
    }
    let ineffective = best.2 - (1.0 - best.3) < MIN_GAIN;
    if ineffective {
        let (excluded, retained) = score(obs, |_| true);
        best = (range.lo, range.hi, excluded, retained);
    }
    ParameterProposal {
        parameter: range.name.clone(),
        original: [range.lo, range.hi],
        proposed: [best.0, best.1],
        excluded_failure_fraction: best.2,
        retained_pass_fraction: best.3,
        ineffective,
    }
}

/// Per-parameter 1-D sweeps, then a greedy combination of the effective
/// restrictions that keeps joint pass retention above the floor.
pub fn propose_odd_update(obs: &[Observation], ranges: &[ParameterRange]) -> Result<OddUpdateProposal, CeError> {
    if !obs.iter().any(|o| !o.passed) {
        return Err(CeError::NoFailures);
    }
    let parameters: Vec<ParameterProposal> = ranges.iter().map(|r| sweep(r, obs)).collect();
    let mut order: Vec<&ParameterProposal> = parameters.iter().filter(|p| !p.ineffective).collect();
    order.sort_by(|a, b| {
        let ga = a.excluded_failure_fraction - (1.0 - a.retained_pass_fraction);
        let gb = b.excluded_failure_fraction - (1.0 - b.retained_pass_fraction);
        gb.total_cmp(&ga).then(a.parameter.cmp(&b.parameter))
    });
    let mut prop = OddUpdateProposal {
        parameters: parameters.clone(),
        applied: Vec::new(),
        excluded_failure_fraction: 0.0,
        retained_pass_fraction: 1.0,
        rationale: String::new(),
    };
    for p in order {
        prop.applied.push(p.parameter.clone());
        let (_, retained) = prop.score(obs);
        if retained < RETENTION_FLOOR {
            prop.applied.pop();
        }
    }
    let (excluded, retained) = prop.score(obs);
    prop.excluded_failure_fraction = excluded;
    prop.retained_pass_fraction = retained;
    let n_fail = obs.iter().filter(|o| !o.passed).count();
    prop.rationale = if prop.applied.is_empty() {
        format!(
            "No single-parameter restriction separates the {n_fail} failures from the passes; \
             failures depend on parameter interactions. The ODD is left unchanged."
        )
    } else {
        format!(
            "Restricting {} excludes {:.1}% of {n_fail} failures while keeping {:.1}% of passes.",
            prop.applied.join(", "),
            100.0 * excluded,
            100.0 * retained
        )
    };
    Ok(prop)
}

/// Add the classes implicated in risk-monitor failures to the detector's
/// known classes. Returns the new config and the added class names.
pub fn update_known_classes(sensor: &SensorConfig, records: &[FailureRecord]) -> (SensorConfig, Vec<String>) {
    let mut cfg = sensor.clone();
    let mut added = Vec::new();
    for r in records.iter().filter(|r| r.violated.iter().any(|v| v == FUZZ_MONITOR)) {
        for c in &r.implicated_classes {
            if cfg.known_classes.insert(c.clone()) {
                added.push(c.clone());
            }
        }
    }
    (cfg, added)
}
