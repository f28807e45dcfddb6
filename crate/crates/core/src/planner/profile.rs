//! Static target-speed profile along a planned path.

use serde::{Deserialize, Serialize};

use crate::odd::OddSpec;
use crate::planner::path::PathPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub cruise: f64,
    /// Lateral acceleration bound used for curve slowdown, m/s².
    pub a_lat_max: f64,
    /// Comfortable deceleration used for ramps, m/s².
    pub decel_comfort: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            cruise: 2.5,
            a_lat_max: 0.5,
            decel_comfort: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub speeds: Vec<f64>,
    pub decel: f64,
}

impl VelocityProfile {
    /// Target speed at arc length `s`: linear between waypoints, capped by the
    /// exact stopping curve near the end of the path.
    pub fn target_at(&self, path: &PathPlan, s: f64) -> f64 {
        let n = self.speeds.len();
        if n < 2 {
            return 0.0;
        }
        let total = path.length();
        if s >= total {
            return 0.0;
        }
        let s = s.max(0.0);
        let i = match path.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => return self.speeds[i].min((2.0 * self.decel * (total - s)).sqrt()),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let (s0, s1) = (path.arc[i], path.arc[i + 1]);
        let f = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let v = self.speeds[i] + (self.speeds[i + 1] - self.speeds[i]) * f;
        v.min((2.0 * self.decel * (total - s)).sqrt())
    }
}

pub fn static_profile(path: &PathPlan, odd: &OddSpec, cfg: &ProfileConfig) -> VelocityProfile {
    let cruise = cfg.cruise.min(odd.speed_limit).min(odd.ego_v_max).max(0.0);
    let decel = cfg.decel_comfort.min(-odd.ego_a_min);
    let n = path.len();
    if n < 2 {
        return VelocityProfile {
            speeds: vec![0.0; n],
            decel,
        };
    }
    let total = path.length();
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let k = path.curvature(i);
            let curve = if k > 1e-9 {
                (cfg.a_lat_max / k).sqrt()
            } else {
                f64::INFINITY
            };
            cruise
                .min(curve)
                .min((2.0 * decel * (total - path.arc[i]).max(0.0)).sqrt())
        })
        .collect();
    // decelerate into curves ahead
    for i in (0..n - 1).rev() {
        let ds = path.arc[i + 1] - path.arc[i];
        v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * decel * ds).sqrt());
    }
    v[n - 1] = 0.0;
    VelocityProfile { speeds: v, decel }
}
