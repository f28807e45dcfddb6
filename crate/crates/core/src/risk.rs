//! Cue/detection consistency, fuzzy risk estimation and the stopping shield.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Disc, OrientedRect, Vec2};
use crate::odd::OddSpec;
use crate::perception::{ego_gap, in_view, occluders_for, occlusion_fraction, Detection};
use crate::sim::{Command, EgoState, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum RuleBaseError {
    #[error("rule base has no rules")]
    NoRules,
    #[error("rule base lacks an output variable named `risk`")]
    NoOutput,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{var}` has no set `{label}`")]
    UnknownSet { var: String, label: String },
    #[error("set `{0}` is not a valid triangle (need a <= b <= c)")]
    BadTriangle(String),
    #[error("sets of `{0}` leave part of its domain uncovered")]
    Uncovered(String),
    #[error("invalid rule base JSON: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueConfig {
    pub fov: f64,
    pub max_range: f64,
    pub sigma: f64,
    /// Detection boxes are grown by this much before testing cue coverage.
    pub coverage_margin: f64,
    pub distance_cap: f64,
    /// Cues below this confidence are not emitted.
    pub min_confidence: f64,
    pub seed_stream: u64,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            fov: 120f64.to_radians(),
            max_range: 30.0,
            sigma: 0.3,
            coverage_margin: 1.2,
            distance_cap: 20.0,
            min_confidence: 0.05,
            seed_stream: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueRegion {
    pub disc: Disc,
    pub motion_flag: bool,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CueFrame {
    pub regions: Vec<CueRegion>,
}

/// Class-agnostic motion/depth cues for every moving agent in view. Parked
/// vehicles are part of the map and are not cued.
pub fn generate_cues<R: Rng>(w: &WorldState, cfg: &CueConfig, rng: &mut R) -> CueFrame {
    let origin = w.ego.sensor_origin();
    let mut regions = Vec::new();
    for p in &w.pedestrians {
        if !in_view(&w.ego, p.position(), cfg.fov, cfg.max_range) {
            continue;
        }
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let occ = occlusion_fraction(origin, &p.disc(), &occluders_for(w, p.id), 32);
        let dist = origin.distance(p.position());
        let confidence = ((1.0 - occ) * (1.0 - dist / cfg.max_range)).clamp(0.0, 1.0);
        if confidence < cfg.min_confidence {
            continue;
        }
        regions.push(CueRegion {
            disc: Disc::new(p.position() + Vec2::new(nx, ny) * cfg.sigma, p.radius),
            motion_flag: p.speed > 0.0,
            confidence,
        });
    }
    CueFrame { regions }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyFeatures {
    pub uncovered_cue_ratio: f64,
    pub nearest_uncovered_distance: f64,
    pub cue_count_mismatch: usize,
}

const COVERAGE_SAMPLES: usize = 64;

/// Deterministic, area-uniform sample points of the unit disc (sunflower pattern).
fn unit_disc_samples() -> impl Iterator<Item = Vec2> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..COVERAGE_SAMPLES).map(move |k| {
        let r = ((k as f64 + 0.5) / COVERAGE_SAMPLES as f64).sqrt();
        Vec2::from_angle(k as f64 * golden) * r
    })
}

fn covered_fraction(d: &Disc, boxes: &[OrientedRect]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let inside = unit_disc_samples()
        .filter(|u| {
            let p = d.center + *u * d.radius;
            boxes.iter().any(|b| b.contains(p))
        })
        .count();
    inside as f64 / COVERAGE_SAMPLES as f64
}

pub fn consistency(
    cues: &CueFrame,
    detections: &[Detection],
    ego: &EgoState,
    cfg: &CueConfig,
) -> ConsistencyFeatures {
    let boxes: Vec<OrientedRect> = detections
        .iter()
        .map(|d| {
            let mut b = d.bbox;
            b.half_extents = b.half_extents + Vec2::new(cfg.coverage_margin, cfg.coverage_margin);
            b
        })
        .collect();
    let mut total = 0.0;
    let mut uncovered = 0.0;
    let mut nearest = cfg.distance_cap;
    for c in &cues.regions {
        let area = c.disc.area();
        let frac = covered_fraction(&c.disc, &boxes);
        total += area;
        uncovered += area * (1.0 - frac);
        if frac < 0.5 {
            nearest = nearest.min(ego_gap(ego, c.disc.center, c.disc.radius));
        }
    }
    ConsistencyFeatures {
        uncovered_cue_ratio: if total > 0.0 {
            (uncovered / total).clamp(0.0, 1.0)
        } else {
            0.0
        },
        nearest_uncovered_distance: nearest.min(cfg.distance_cap),
        cue_count_mismatch: cues.regions.len().saturating_sub(detections.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangleSet {
    pub label: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TriangleSet {
    pub fn membership(&self, x: f64) -> f64 {
        if x < self.a || x > self.c {
            0.0
        } else if x == self.b {
            1.0
        } else if x < self.b {
            (x - self.a) / (self.b - self.a)
        } else {
            (self.c - x) / (self.c - self.b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyVariable {
    pub name: String,
    pub sets: Vec<TriangleSet>,
}

impl FuzzyVariable {
    fn set(&self, label: &str) -> Option<&TriangleSet> {
        self.sets.iter().find(|s| s.label == label)
    }

    fn domain(&self) -> (f64, f64) {
        let lo = self.sets.iter().map(|s| s.a).fold(f64::INFINITY, f64::min);
        let hi = self.sets.iter().map(|s| s.c).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyRule {
    #[serde(rename = "if")]
    pub antecedent: BTreeMap<String, String>,
    pub then: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyRuleBase {
    pub variables: Vec<FuzzyVariable>,
    pub rules: Vec<FuzzyRule>,
}

pub const OUTPUT_VARIABLE: &str = "risk";
const DEFAULT_RULES: &str = include_str!("../data/default_rules.json");

impl FuzzyRuleBase {
    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_RULES).expect("bundled rule base is valid")
    }

    pub fn from_json(s: &str) -> Result<Self, RuleBaseError> {
        let rb: Self = serde_json::from_str(s).map_err(|e| RuleBaseError::Parse(e.to_string()))?;
        rb.validate()?;
        Ok(rb)
    }

    pub fn variable(&self, name: &str) -> Option<&FuzzyVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn validate(&self) -> Result<(), RuleBaseError> {
        if self.rules.is_empty() {
            return Err(RuleBaseError::NoRules);
        }
        let out = self.variable(OUTPUT_VARIABLE).ok_or(RuleBaseError::NoOutput)?;
        for v in &self.variables {
            for s in &v.sets {
                if !(s.a <= s.b && s.b <= s.c) || !(s.a.is_finite() && s.c.is_finite()) {
                    return Err(RuleBaseError::BadTriangle(s.label.clone()));
                }
            }
            // coverage: every point of the domain has positive membership somewhere
            let (lo, hi) = v.domain();
            let n = 1000;
            let gap = (1..n).any(|k| {
                let x = lo + (hi - lo) * k as f64 / n as f64;
                v.sets.iter().all(|s| s.membership(x) <= 0.0)
            });
            if gap {
                return Err(RuleBaseError::Uncovered(v.name.clone()));
            }
        }
        for r in &self.rules {
            for (var, label) in &r.antecedent {
                let v = self
                    .variable(var)
                    .filter(|v| v.name != OUTPUT_VARIABLE)
                    .ok_or_else(|| RuleBaseError::UnknownVariable(var.clone()))?;
                v.set(label).ok_or_else(|| RuleBaseError::UnknownSet {
                    var: var.clone(),
                    label: label.clone(),
                })?;
            }
            out.set(&r.then).ok_or_else(|| RuleBaseError::UnknownSet {
                var: OUTPUT_VARIABLE.into(),
                label: r.then.clone(),
            })?;
        }
        Ok(())
    }

    /// Mamdani inference on named crisp inputs. Inputs not mentioned by a
    /// rule's antecedent do not affect it; an antecedent on an input that is
    /// absent from `inputs` never fires.
    pub fn infer(&self, inputs: &BTreeMap<String, f64>) -> f64 {
        let out = match self.variable(OUTPUT_VARIABLE) {
            Some(o) => o,
            None => return 0.0,
        };
        let mut fired: Vec<(f64, &TriangleSet)> = Vec::new();
        for r in &self.rules {
            let mut strength = 1.0f64;
            for (var, label) in &r.antecedent {
                let mu = match (inputs.get(var), self.variable(var).and_then(|v| v.set(label))) {
                    (Some(x), Some(set)) => set.membership(*x),
                    _ => 0.0,
                };
                strength = strength.min(mu);
            }
            if strength > 0.0 {
                if let Some(set) = out.set(&r.then) {
                    fired.push((strength, set));
                }
            }
        }
        centroid(&fired).clamp(0.0, 1.0)
    }
}

fn clipped(set: &TriangleSet, h: f64, y: f64) -> f64 {
    set.membership(y).min(h)
}

fn aggregate(fired: &[(f64, &TriangleSet)], y: f64) -> f64 {
    fired.iter().map(|(h, s)| clipped(s, *h, y)).fold(0.0, f64::max)
}

/// Exact centroid of the max-aggregate of clipped triangles. The aggregate is
/// piecewise linear; the integral is taken piece by piece after splitting at
/// every corner and every pairwise crossing.
fn centroid(fired: &[(f64, &TriangleSet)]) -> f64 {
    if fired.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = Vec::new();
    for (h, s) in fired {
        xs.extend([s.a, s.b, s.c]);
        if s.b > s.a {
            xs.push(s.a + h * (s.b - s.a));
        }
        if s.c > s.b {
            xs.push(s.c - h * (s.c - s.b));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    // pairwise crossings inside each elementary interval
    let mut all = xs.clone();
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 - x0 <= 0.0 {
            continue;
        }
        let vals: Vec<(f64, f64)> = fired
            .iter()
            .map(|(h, s)| (clipped(s, *h, x0), clipped(s, *h, x1)))
            .collect();
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                let d0 = vals[i].0 - vals[j].0;
                let d1 = vals[i].1 - vals[j].1;
                if d0 * d1 < 0.0 {
                    all.push(x0 + (x1 - x0) * d0 / (d0 - d1));
                }
            }
        }
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut area = 0.0;
    let mut moment = 0.0;
    for w in all.windows(2) {
        let (y0, y1) = (w[0], w[1]);
        let h = y1 - y0;
        if h <= 0.0 {
            continue;
        }
        let (f0, f1) = (aggregate(fired, y0), aggregate(fired, y1));
        area += 0.5 * (f0 + f1) * h;
        moment += h / 6.0 * (y0 * (2.0 * f0 + f1) + y1 * (f0 + 2.0 * f1));
    }
    if area > 0.0 {
        moment / area
    } else {
        0.0
    }
}

pub fn feature_inputs(f: &ConsistencyFeatures) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("uncovered_ratio".to_string(), f.uncovered_cue_ratio),
        ("distance".to_string(), f.nearest_uncovered_distance),
        ("mismatch".to_string(), f.cue_count_mismatch as f64),
    ])
}

pub fn infer_risk(f: &ConsistencyFeatures, rb: &FuzzyRuleBase) -> f64 {
    rb.infer(&feature_inputs(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShieldConfig {
    pub enabled: bool,
    pub threshold: f64,
}

impl Default for ShieldConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.6,
        }
    }
}

/// Full stop on high risk, latched until the ego stands still and the risk
/// has dropped below the threshold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Shield {
    pub latched: bool,
}

impl Shield {
    pub fn apply(&mut self, cmd: Command, risk: f64, ego: &EgoState, cfg: &ShieldConfig, odd: &OddSpec) -> (Command, bool) {
        if !cfg.enabled {
            return (cmd, false);
        }
        if risk >= cfg.threshold {
            self.latched = true;
        } else if self.latched && ego.v.abs() <= 1e-9 {
            self.latched = false;
        }
        if self.latched {
            (
                Command {
                    a_cmd: odd.ego_a_min,
                    delta_cmd: cmd.delta_cmd,
                },
                true,
            )
        } else {
            (cmd, false)
        }
    }
}
