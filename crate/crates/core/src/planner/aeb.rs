//! Time-to-collision and the latching emergency brake.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::odd::RequirementParams;
use crate::perception::{Detection, ObjectTruth};
use crate::planner::path::PathPlan;
use crate::sim::EgoState;

/// Kinematic view of an object as consumed by TTC and AEB.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedObject {
    pub class_label: String,
    pub pos: Vec2,
    pub vel: Vec2,
    pub radius: f64,
}

impl From<&Detection> for TrackedObject {
    fn from(d: &Detection) -> Self {
        Self {
            class_label: d.class_label.clone(),
            pos: d.position(),
            vel: Vec2::new(d.vx, d.vy),
            radius: d.extent(),
        }
    }
}

impl From<&ObjectTruth> for TrackedObject {
    fn from(o: &ObjectTruth) -> Self {
        Self {
            class_label: o.class_label.clone(),
            pos: o.position(),
            vel: Vec2::new(o.vx, o.vy),
            radius: o.radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AebConfig {
    pub enabled: bool,
    /// Object classes the brake reacts to.
    pub classes: BTreeSet<String>,
    /// Feed ground truth instead of detections (oracle runs).
    pub use_ground_truth: bool,
    /// Measure the gap along the ego heading instead of along the path.
    pub straight_line_ttc: bool,
    /// Keep braking at standstill while a reacting-class object stays in the corridor.
    pub hold_at_standstill: bool,
}

impl Default for AebConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            classes: ["pedestrian", "animal"].into_iter().map(String::from).collect(),
            use_ground_truth: false,
            straight_line_ttc: false,
            hold_at_standstill: true,
        }
    }
}

/// Along-path gap and lateral offset of `pos` relative to the ego rear axle.
fn relative(ego: &EgoState, path: Option<&PathPlan>, pos: Vec2) -> (f64, f64, Vec2) {
    match path {
        Some(p) if !p.is_empty() => {
            let se = p.project(ego.position()).s;
            let po = p.project(pos);
            (po.s - se, po.distance, p.tangent_at(po.s))
        }
        _ => {
            let h = ego.heading_vec();
            let d = pos - ego.position();
            (d.dot(h), h.cross(d).abs(), h)
        }
    }
}

/// Whether `obj` lies in the swept corridor ahead of (or alongside) the ego.
pub fn in_corridor(ego: &EgoState, path: Option<&PathPlan>, obj: &TrackedObject, e_detect: f64) -> bool {
    let (ds, lat, _) = relative(ego, path, obj.pos);
    lat <= ego.half_width + obj.radius + e_detect && ds >= -ego.rear_overhang_length - obj.radius
}

/// Time to collision along the ego path; `+inf` when off the corridor,
/// behind, or not closing.
pub fn ttc(ego: &EgoState, path: Option<&PathPlan>, obj: &TrackedObject, e_detect: f64) -> f64 {
    if !in_corridor(ego, path, obj, e_detect) {
        return f64::INFINITY;
    }
    let (ds, _, tangent) = relative(ego, path, obj.pos);
    let gap = (ds - ego.front_length() - obj.radius).max(0.0);
    let closing = ego.v - obj.vel.dot(tangent);
    if closing <= 0.0 {
        return f64::INFINITY;
    }
    gap / closing
}

pub fn ttc_for(ego: &EgoState, path: &PathPlan, obj: &TrackedObject, e_detect: f64, cfg: &AebConfig) -> f64 {
    let p = (!cfg.straight_line_ttc).then_some(path);
    ttc(ego, p, obj, e_detect)
}

fn footprint_gap(ego: &EgoState, obj: &TrackedObject) -> f64 {
    ego.footprint().signed_distance(obj.pos) - obj.radius
}

/// Trigger condition: a reacting-class object within `d_safety` with TTC below `t_safety`.
pub fn aeb_condition(
    objs: &[TrackedObject],
    ego: &EgoState,
    path: &PathPlan,
    params: &RequirementParams,
    cfg: &AebConfig,
) -> bool {
    objs.iter().any(|o| {
        cfg.classes.contains(&o.class_label)
            && footprint_gap(ego, o) <= params.d_safety
            && ttc_for(ego, path, o, params.e_detect, cfg) < params.t_safety
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AebState {
    pub latched: bool,
}

impl AebState {
    /// Update the latch and return whether the brake is applied this cycle.
    pub fn decide(
        &mut self,
        objs: &[TrackedObject],
        ego: &EgoState,
        path: &PathPlan,
        params: &RequirementParams,
        cfg: &AebConfig,
    ) -> (bool, bool) {
        if !cfg.enabled {
            self.latched = false;
            return (false, false);
        }
        let cond = aeb_condition(objs, ego, path, params, cfg);
        if cond {
            self.latched = true;
        } else if self.latched && ego.v.abs() <= 1e-9 {
            let p = (!cfg.straight_line_ttc).then_some(path);
            let blocking = cfg.hold_at_standstill
                && objs.iter().any(|o| {
                    cfg.classes.contains(&o.class_label)
                        && footprint_gap(ego, o) <= params.d_safety
                        && in_corridor(ego, p, o, params.e_detect)
                });
            if !blocking {
                self.latched = false;
            }
        }
        (self.latched, cond)
    }
}
