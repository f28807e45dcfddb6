//! Pure-pursuit lateral control with a proportional speed loop.

use serde::{Deserialize, Serialize};

use crate::planner::path::{PathPlan, PlanError};
use crate::planner::profile::VelocityProfile;
use crate::sim::{Command, EgoState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerGains {
    pub lookahead_gain: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
    pub kp: f64,
    pub lost_distance: f64,
}

impl Default for TrackerGains {
    fn default() -> Self {
        Self {
            lookahead_gain: 0.8,
            lookahead_min: 1.0,
            lookahead_max: 3.0,
            kp: 1.5,
            lost_distance: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub cmd: Command,
    pub s: f64,
    pub cross_track: f64,
    pub v_target: f64,
}

pub fn track(
    path: &PathPlan,
    profile: &VelocityProfile,
    ego: &EgoState,
    gains: &TrackerGains,
) -> Result<TrackOutput, PlanError> {
    if path.is_empty() {
        return Err(PlanError::EmptyPath);
    }
    let proj = path.project(ego.position());
    if proj.distance > gains.lost_distance {
        return Err(PlanError::TrackingLost(proj.distance));
    }
    let v_target = profile.target_at(path, proj.s);
    let mut a_cmd = gains.kp * (v_target - ego.v);
    // on the terminal ramp, brake for the end of the path directly so the
    // speed loop's lag does not carry the vehicle past the goal
    if ego.v > 0.0 {
        let remaining = path.length() - proj.s;
        let need = if remaining > 1e-6 {
            ego.v * ego.v / (2.0 * remaining)
        } else {
            f64::INFINITY
        };
        if need >= profile.decel {
            a_cmd = a_cmd.min(-need);
        }
    }
    let look = (gains.lookahead_gain * ego.v.abs()).clamp(gains.lookahead_min, gains.lookahead_max);
    let delta_cmd = if path.len() < 2 {
        0.0
    } else {
        let target = path.point_at(proj.s + look);
        let d = target - ego.position();
        let ld = d.norm();
        if ld < 1e-9 {
            0.0
        } else {
            let alpha = ego.heading_vec().cross(d).atan2(ego.heading_vec().dot(d));
            (2.0 * ego.wheelbase * alpha.sin() / ld).atan()
        }
    };
    Ok(TrackOutput {
        cmd: Command { a_cmd, delta_cmd },
        s: proj.s,
        cross_track: proj.distance,
        v_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::odd::OddSpec;
    use crate::planner::profile::{static_profile, ProfileConfig};
    use crate::sim::ego_step;

    fn straight() -> PathPlan {
        PathPlan::from_points((0..=200).map(|k| Vec2::new(k as f64 * 0.25, 0.0)).collect(), 0.0).unwrap()
    }

    #[test]
    fn equilibrium_on_path() {
        let p = straight();
        let prof = static_profile(&p, &OddSpec::default(), &ProfileConfig::default());
        let mut e = EgoState::at(Vec2::new(10.0, 0.0), 0.0);
        e.v = prof.target_at(&p, 10.0);
        let out = track(&p, &prof, &e, &TrackerGains::default()).unwrap();
        assert_eq!(out.cmd.delta_cmd, 0.0);
        assert_eq!(out.cmd.a_cmd, 0.0);
    }

    #[test]
    fn left_offset_steers_right() {
        let p = straight();
        let prof = static_profile(&p, &OddSpec::default(), &ProfileConfig::default());
        let e = EgoState::at(Vec2::new(10.0, 0.2), 0.0);
        let out = track(&p, &prof, &e, &TrackerGains::default()).unwrap();
        assert!(out.cmd.delta_cmd < 0.0);
    }

    #[test]
    fn lost_when_far() {
        let p = straight();
        let prof = static_profile(&p, &OddSpec::default(), &ProfileConfig::default());
        let e = EgoState::at(Vec2::new(10.0, 6.0), 0.0);
        assert!(matches!(
            track(&p, &prof, &e, &TrackerGains::default()),
            Err(PlanError::TrackingLost(_))
        ));
    }

    #[test]
    fn circular_arc_steady_state() {
        let r = 10.0;
        let n = 1200;
        let pts: Vec<Vec2> = (0..=n)
            .map(|k| {
                let a = -std::f64::consts::FRAC_PI_2 + k as f64 * 0.025 / r * 1.0;
                Vec2::new(r * a.cos(), r + r * a.sin())
            })
            .collect();
        let p = PathPlan::from_points(pts, 0.0).unwrap();
        let prof = VelocityProfile {
            speeds: vec![1.5; p.len()],
            decel: 1.0,
        };
        let odd = OddSpec::default();
        let mut e = EgoState::at(Vec2::ZERO, 0.0);
        e.v = 1.5;
        let mut out = track(&p, &prof, &e, &TrackerGains::default()).unwrap();
        for step in 0..200 {
            if step % 2 == 0 {
                out = track(&p, &prof, &e, &TrackerGains::default()).unwrap();
            }
            e = ego_step(&e, &out.cmd, 0.05, &odd);
        }
        let expect = (e.wheelbase / r).atan();
        assert!((out.cmd.delta_cmd - expect).abs() / expect < 0.05, "{} vs {expect}", out.cmd.delta_cmd);
    }

    #[test]
    fn converges_from_half_metre_offset() {
        let p = straight();
        let prof = static_profile(&p, &OddSpec::default(), &ProfileConfig::default());
        let odd = OddSpec::default();
        let mut e = EgoState::at(Vec2::new(0.0, 0.5), 0.0);
        e.v = 2.5;
        let gains = TrackerGains::default();
        let mut out = track(&p, &prof, &e, &gains).unwrap();
        let mut k = 0;
        while e.x < 10.0 {
            if k % 2 == 0 {
                out = track(&p, &prof, &e, &gains).unwrap();
            }
            e = ego_step(&e, &out.cmd, 0.05, &odd);
            k += 1;
        }
        assert!(e.y.abs() < 0.3, "{}", e.y);
    }
}
