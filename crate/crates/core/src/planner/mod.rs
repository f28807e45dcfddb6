//! Path planning, speed profile, emergency braking and tracking composed into one stack.

pub mod aeb;
pub mod path;
pub mod profile;
pub mod tracker;

use serde::{Deserialize, Serialize};

use crate::geometry::Aabb;
use crate::map::ParkingLot;
use crate::odd::{OddSpec, RequirementParams};
use crate::perception::{Detection, ObjectTruth};
use crate::sim::{Command, EgoState};

pub use aeb::{aeb_condition, ttc, AebConfig, AebState, TrackedObject};
pub use path::{plan_path, PathConfig, PathPlan, PlanError};
pub use profile::{static_profile, ProfileConfig, VelocityProfile};
pub use tracker::{track, TrackerGains};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackConfig {
    pub path: PathConfig,
    pub profile: ProfileConfig,
    pub tracker: TrackerGains,
    pub aeb: AebConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOutput {
    pub cmd: Command,
    pub brake_full: bool,
    pub aeb_condition: bool,
    /// TTC of the most urgent reacting-class object as seen by the stack.
    pub ttc: f64,
    pub cross_track: f64,
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct PlannerStack {
    pub config: StackConfig,
    pub params: RequirementParams,
    pub odd: OddSpec,
    pub path: PathPlan,
    pub profile: VelocityProfile,
    pub aeb: AebState,
}

impl PlannerStack {
    pub fn new(
        config: StackConfig,
        params: RequirementParams,
        odd: OddSpec,
        map: &ParkingLot,
        parked: &[Aabb],
        start: &EgoState,
        goal_bay: usize,
    ) -> Result<Self, PlanError> {
        let mut pc = config.path.clone();
        pc.d_safety = params.d_safety;
        pc.half_width = start.half_width;
        let path = plan_path(map, parked, start.position(), goal_bay, &pc)?;
        let profile = static_profile(&path, &odd, &config.profile);
        Ok(Self {
            config,
            params,
            odd,
            path,
            profile,
            aeb: AebState::default(),
        })
    }

    /// One plan-act step on the sensed world. The emergency brake overrides
    /// the tracker when engaged.
    pub fn plan_act_cycle(
        &mut self,
        ego_est: &EgoState,
        detections: &[Detection],
        truth: &[ObjectTruth],
    ) -> Result<CycleOutput, PlanError> {
        let objs: Vec<TrackedObject> = if self.config.aeb.use_ground_truth {
            truth.iter().map(TrackedObject::from).collect()
        } else {
            detections.iter().map(TrackedObject::from).collect()
        };
        let tr = track(&self.path, &self.profile, ego_est, &self.config.tracker)?;
        let (brake, cond) = self
            .aeb
            .decide(&objs, ego_est, &self.path, &self.params, &self.config.aeb);
        let ttc = objs
            .iter()
            .filter(|o| self.config.aeb.classes.contains(&o.class_label))
            .map(|o| aeb::ttc_for(ego_est, &self.path, o, self.params.e_detect, &self.config.aeb))
            .fold(f64::INFINITY, f64::min);
        let cmd = if brake {
            Command {
                a_cmd: self.odd.ego_a_min,
                delta_cmd: tr.cmd.delta_cmd,
            }
        } else {
            tr.cmd
        };
        Ok(CycleOutput {
            cmd,
            brake_full: brake,
            aeb_condition: cond,
            ttc,
            cross_track: tr.cross_track,
            s: tr.s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientedRect, Vec2};

    fn stack() -> (PlannerStack, EgoState) {
        let map = ParkingLot::default_lot();
        let ego = EgoState::at(Vec2::new(5.0, 0.0), 0.0);
        let s = PlannerStack::new(
            StackConfig::default(),
            RequirementParams::default(),
            OddSpec::default(),
            &map,
            &[],
            &ego,
            12,
        )
        .unwrap();
        (s, ego)
    }

    fn det(p: Vec2) -> Detection {
        Detection {
            class_label: "pedestrian".into(),
            x: p.x,
            y: p.y,
            bbox: OrientedRect::new(p, 0.3, 0.3, 0.0),
            v_est: None,
            vx: 0.0,
            vy: 0.0,
            score: 1.0,
        }
    }

    #[test]
    fn aeb_overrides_tracker() {
        let (mut s, mut ego) = stack();
        ego.v = 2.0;
        let d = det(Vec2::new(ego.x + ego.front_length() + 2.3, 0.0));
        let out = s.plan_act_cycle(&ego, &[d], &[]).unwrap();
        assert!(out.brake_full);
        assert_eq!(out.cmd.a_cmd, -7.0);
    }

    #[test]
    fn passthrough_without_trigger() {
        let (mut s, ego) = stack();
        let out = s.plan_act_cycle(&ego, &[], &[]).unwrap();
        let tr = track(&s.path, &s.profile, &ego, &s.config.tracker).unwrap();
        assert!(!out.brake_full);
        assert_eq!(out.cmd, tr.cmd);
    }
}
