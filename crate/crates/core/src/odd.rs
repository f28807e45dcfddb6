//! Operational design domain bounds and the symbolic requirement parameters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::ParkingLot;
use crate::scenario::ConcreteScenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddSpec {
    pub lot_length_min: f64,
    pub lot_width_min: f64,
    pub lane_width_min_oneway: f64,
    pub lane_width_min_twoway: f64,
    pub ego_v_min: f64,
    pub ego_v_max: f64,
    pub ego_a_min: f64,
    pub ego_a_max: f64,
    pub speed_limit: f64,
    pub ped_speed_max: f64,
    pub known_object_classes: BTreeSet<String>,
}

impl Default for OddSpec {
    fn default() -> Self {
        Self {
            lot_length_min: 5.0,
            lot_width_min: 2.3,
            lane_width_min_oneway: 3.0,
            lane_width_min_twoway: 5.0,
            ego_v_min: -1.0,
            ego_v_max: 2.8,
            ego_a_min: -7.0,
            ego_a_max: 2.0,
            // 10 km/h
            speed_limit: 10.0 / 3.6,
            ped_speed_max: 3.0,
            known_object_classes: ["pedestrian", "car"].into_iter().map(String::from).collect(),
        }
    }
}

impl OddSpec {
    /// Cruise cap actually usable by the planner.
    pub fn cruise_cap(&self) -> f64 {
        self.speed_limit.min(self.ego_v_max)
    }

    pub fn validate(&self) -> Result<(), OddError> {
        let bad = |m: &str| Err(OddError::InvalidSpec(m.to_string()));
        if !(self.ego_v_min < 0.0 && self.ego_v_max > 0.0) {
            return bad("ego_v_min < 0 < ego_v_max violated");
        }
        if !(self.ego_a_min < 0.0 && self.ego_a_max > 0.0) {
            return bad("ego_a_min < 0 < ego_a_max violated");
        }
        let minima = [
            self.lot_length_min,
            self.lot_width_min,
            self.lane_width_min_oneway,
            self.lane_width_min_twoway,
        ];
        if minima.iter().any(|m| !(*m > 0.0)) {
            return bad("geometric minima must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementParams {
    pub d_safety: f64,
    pub e_detect: f64,
    pub e_local: f64,
    pub e_track: f64,
    pub t_safety: f64,
    pub t_cycle: f64,
}

impl Default for RequirementParams {
    fn default() -> Self {
        Self {
            d_safety: 4.0,
            e_detect: 0.5,
            e_local: 0.2,
            e_track: 0.3,
            t_safety: 1.5,
            t_cycle: 0.1,
        }
    }
}

impl RequirementParams {
    pub fn validate(&self) -> Result<(), OddError> {
        let all = [
            self.d_safety,
            self.e_detect,
            self.e_local,
            self.e_track,
            self.t_safety,
            self.t_cycle,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(OddError::InvalidSpec("requirement parameters must be strictly positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeKind {
    Continuous,
    Integer,
}

/// One searchable scenario parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub kind: RangeKind,
}

impl ParameterRange {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            kind: RangeKind::Continuous,
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.to_string(),
            lo: lo as f64,
            hi: hi as f64,
            kind: RangeKind::Integer,
        }
    }

    /// Map a normalized coordinate in `[0, 1]` onto the range.
    pub fn decode(&self, g: f64) -> f64 {
        let g = g.clamp(0.0, 1.0);
        let v = self.lo + g * (self.hi - self.lo);
        match self.kind {
            RangeKind::Continuous => v.clamp(self.lo, self.hi),
            RangeKind::Integer => v.round().clamp(self.lo, self.hi),
        }
    }

    /// Inverse of [`decode`](Self::decode) for continuous ranges.
    pub fn encode(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            0.0
        } else {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddViolation {
    /// Table identifier of the violated element, e.g. `ODD-02`.
    pub code: String,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum OddError {
    #[error("map must contain at least one lane and one bay")]
    EmptyMap,
    #[error("invalid ODD specification: {0}")]
    InvalidSpec(String),
}

/// Check lot geometry against the ODD minima. Violations are data, not errors.
pub fn validate_odd(spec: &OddSpec, map: &ParkingLot) -> Result<Vec<OddViolation>, OddError> {
    if map.lanes.is_empty() || map.bays.is_empty() {
        return Err(OddError::EmptyMap);
    }
    let mut out = Vec::new();
    for bay in &map.bays {
        if bay.length() < spec.lot_length_min {
            out.push(OddViolation {
                code: "ODD-02".into(),
                subject: format!("bay {}", bay.index),
                message: format!("length {:.3} m < {:.3} m", bay.length(), spec.lot_length_min),
            });
        }
        if bay.width() < spec.lot_width_min {
            out.push(OddViolation {
                code: "ODD-02".into(),
                subject: format!("bay {}", bay.index),
                message: format!("width {:.3} m < {:.3} m", bay.width(), spec.lot_width_min),
            });
        }
    }
    for lane in &map.lanes {
        let min = if lane.one_way {
            spec.lane_width_min_oneway
        } else {
            spec.lane_width_min_twoway
        };
        if lane.width() < min {
            out.push(OddViolation {
                code: "ODD-03".into(),
                subject: format!("lane {}", lane.id),
                message: format!("width {:.3} m < {:.3} m", lane.width(), min),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddCheck {
    pub in_odd: bool,
    pub violations: Vec<OddViolation>,
}

/// Closed-interval conformance check of a concrete scenario.
pub fn check_in_odd(sc: &ConcreteScenario, spec: &OddSpec) -> OddCheck {
    let mut violations = Vec::new();
    let v = sc.ego_cruise_speed;
    if !(v >= spec.ego_v_min && v <= spec.ego_v_max) {
        violations.push(OddViolation {
            code: "ODD-05".into(),
            subject: "ego_cruise_speed".into(),
            message: format!(
                "cruise demand {v:.3} m/s outside [{}, {}]",
                spec.ego_v_min, spec.ego_v_max
            ),
        });
    }
    if !(sc.ego_start_s >= 0.0) {
        violations.push(OddViolation {
            code: "ODD-01".into(),
            subject: "ego_start_s".into(),
            message: "ego must start on the lane".into(),
        });
    }
    if !(sc.perception_noise_scale >= 0.0 && sc.perception_noise_scale.is_finite()) {
        violations.push(OddViolation {
            code: "SENSOR".into(),
            subject: "perception_noise_scale".into(),
            message: "noise scale must be finite and non-negative".into(),
        });
    }
    for (i, p) in sc.pedestrians.iter().enumerate() {
        if !(p.walk_speed >= 0.0 && p.walk_speed <= spec.ped_speed_max) {
            violations.push(OddViolation {
                code: "ODD-ACTORS".into(),
                subject: format!("ped{}.walk_speed", i + 1),
                message: format!(
                    "walk speed {:.3} m/s outside [0, {}]",
                    p.walk_speed, spec.ped_speed_max
                ),
            });
        }
    }
    OddCheck {
        in_odd: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Vec2};
    use crate::map::{Bay, BaySide, Lane};

    fn lot(bay_len: f64, bay_w: f64, lane_w: f64) -> ParkingLot {
        ParkingLot {
            bounds: Aabb::new(Vec2::new(0.0, -10.0), Vec2::new(20.0, 10.0)),
            lanes: vec![Lane {
                id: "l".into(),
                area: Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(20.0, lane_w)),
                one_way: true,
            }],
            bays: vec![Bay {
                index: 0,
                area: Aabb::new(Vec2::new(5.0, lane_w), Vec2::new(5.0 + bay_w, lane_w + bay_len)),
                side: BaySide::North,
            }],
            drop_off: Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)),
            obstacles: vec![],
        }
    }

    #[test]
    fn conformant_bay_and_lane() {
        let v = validate_odd(&OddSpec::default(), &lot(5.0, 2.3, 3.0)).unwrap();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn short_bay_violates_odd02() {
        let v = validate_odd(&OddSpec::default(), &lot(4.9, 2.3, 3.0)).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, "ODD-02");
    }

    #[test]
    fn narrow_lane_violates_odd03() {
        let v = validate_odd(&OddSpec::default(), &lot(5.0, 2.3, 2.9)).unwrap();
        assert_eq!(v[0].code, "ODD-03");
    }

    #[test]
    fn empty_map_is_precondition_error() {
        let mut m = lot(5.0, 2.3, 3.0);
        m.bays.clear();
        assert_eq!(validate_odd(&OddSpec::default(), &m), Err(OddError::EmptyMap));
    }

    #[test]
    fn shipped_default_map_conforms() {
        let v = validate_odd(&OddSpec::default(), &ParkingLot::default_lot()).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn speed_limit_is_ten_kph() {
        let odd = OddSpec::default();
        assert!((odd.speed_limit - 2.7778).abs() < 1e-4);
        assert!((odd.cruise_cap() - odd.speed_limit).abs() < 1e-12);
        odd.validate().unwrap();
    }

    fn scenario(cruise: f64, walk: f64) -> ConcreteScenario {
        let mut sc = ConcreteScenario::occluded_crossing();
        sc.ego_cruise_speed = cruise;
        for p in &mut sc.pedestrians {
            p.walk_speed = walk;
        }
        sc
    }

    #[test]
    fn in_odd_inside_bounds() {
        assert!(check_in_odd(&scenario(2.5, 1.4), &OddSpec::default()).in_odd);
    }

    #[test]
    fn cruise_above_v_max_is_out_of_odd() {
        let c = check_in_odd(&scenario(2.9, 1.4), &OddSpec::default());
        assert!(!c.in_odd);
        assert_eq!(c.violations[0].code, "ODD-05");
    }

    #[test]
    fn cruise_at_bound_is_in_odd() {
        assert!(check_in_odd(&scenario(2.8, 1.4), &OddSpec::default()).in_odd);
    }

    #[test]
    fn range_decode_integer_rounds() {
        let r = ParameterRange::integer("goal_bay", 0, 4);
        assert_eq!(r.decode(0.49), 2.0);
        assert_eq!(r.decode(1.0), 4.0);
        let c = ParameterRange::continuous("w", 1.0, 1.0);
        assert_eq!(c.decode(0.7), 1.0);
    }
}
