//! Occlusion- and noise-aware detector stand-in plus the IoGT/distance safety metric.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{intersection_area, Disc, OrientedRect, Vec2};
use crate::odd::RequirementParams;
use crate::scenario::PEDESTRIAN;
use crate::sim::{EgoState, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("ground-truth box has zero area")]
    ZeroAreaGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub fov: f64,
    pub max_range: f64,
    /// Position noise standard deviation before scenario scaling, metres.
    pub sigma: f64,
    pub dropout_base: f64,
    pub occlusion_dropout_gain: f64,
    pub known_classes: BTreeSet<String>,
    /// Stream selector for the per-episode random generator.
    pub seed_stream: u64,
    #[serde(default = "default_rays")]
    pub ray_count: usize,
    /// Self-localization noise standard deviation, metres.
    #[serde(default = "default_loc_sigma")]
    pub loc_sigma: f64,
    /// Gate for detection-to-truth matching, metres.
    #[serde(default = "default_gate")]
    pub match_gate: f64,
    /// Velocity tolerance for the detection requirement, m/s.
    #[serde(default = "default_vel_tol")]
    pub velocity_tolerance: f64,
}

fn default_rays() -> usize {
    32
}
fn default_loc_sigma() -> f64 {
    0.03
}
fn default_gate() -> f64 {
    2.0
}
fn default_vel_tol() -> f64 {
    0.5
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            fov: 120f64.to_radians(),
            max_range: 30.0,
            sigma: 0.05,
            dropout_base: 0.02,
            occlusion_dropout_gain: 0.9,
            known_classes: ["pedestrian", "car"].into_iter().map(String::from).collect(),
            seed_stream: 1,
            ray_count: default_rays(),
            loc_sigma: default_loc_sigma(),
            match_gate: default_gate(),
            velocity_tolerance: default_vel_tol(),
        }
    }
}

impl SensorConfig {
    /// Noise-free, dropout-free sensor that still only knows pedestrians and cars.
    pub fn perfect() -> Self {
        Self {
            sigma: 0.0,
            dropout_base: 0.0,
            occlusion_dropout_gain: 0.0,
            loc_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov > 0.0 && self.fov <= std::f64::consts::TAU) {
            return Err("fov must lie in (0, 2pi]".into());
        }
        if !(self.sigma >= 0.0 && self.loc_sigma >= 0.0) {
            return Err("noise sigmas must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_base) || self.occlusion_dropout_gain < 0.0 {
            return Err("dropout_base must be a probability and the gain non-negative".into());
        }
        if self.ray_count == 0 || !(self.max_range > 0.0) {
            return Err("ray_count and max_range must be positive".into());
        }
        Ok(())
    }
}

/// Ground-truth description of a dynamic object at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub id: usize,
    pub class_label: String,
    pub x: f64,
    pub y: f64,
    /// Velocity averaged over the last control period.
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
    pub heading: f64,
}

impl ObjectTruth {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn disc(&self) -> Disc {
        Disc::new(self.position(), self.radius)
    }

    pub fn bbox(&self) -> OrientedRect {
        OrientedRect::new(self.position(), self.radius, self.radius, self.heading)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub x: f64,
    pub y: f64,
    #[serde(rename = "box")]
    pub bbox: OrientedRect,
    /// Speed estimate; `None` until the object was seen in two consecutive cycles.
    pub v_est: Option<f64>,
    pub vx: f64,
    pub vy: f64,
    pub score: f64,
}

impl Detection {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Radius-like extent used for distance gaps.
    pub fn extent(&self) -> f64 {
        0.5 * (self.bbox.half_extents.x + self.bbox.half_extents.y)
    }
}

/// Something that can block a line of sight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Occluder {
    Rect(OrientedRect),
    Disc(Disc),
}

impl Occluder {
    fn blocks(&self, from: Vec2, to: Vec2) -> bool {
        let hit = match self {
            Occluder::Rect(r) => r.segment_entry(from, to),
            Occluder::Disc(d) => d.segment_entry(from, to),
        };
        matches!(hit, Some(t) if t < 1.0)
    }
}

/// Fraction of sight lines from `origin` to points on the target's boundary that
/// cross an occluder first. Boundary points sit at half-step angles so that
/// mirror-symmetric layouts split evenly.
pub fn occlusion_fraction(origin: Vec2, target: &Disc, occluders: &[Occluder], rays: usize) -> f64 {
    if occluders.is_empty() || rays == 0 {
        return 0.0;
    }
    let blocked = (0..rays)
        .filter(|k| {
            let ang = std::f64::consts::TAU * (*k as f64 + 0.5) / rays as f64;
            let p = target.center + Vec2::from_angle(ang) * target.radius;
            occluders.iter().any(|o| o.blocks(origin, p))
        })
        .count();
    blocked as f64 / rays as f64
}

/// Line-of-sight blockers for agent `skip` in `world`.
pub fn occluders_for(world: &WorldState, skip: usize) -> Vec<Occluder> {
    let mut v: Vec<Occluder> = world
        .parked_vehicles
        .iter()
        .map(|b| Occluder::Rect(b.to_oriented()))
        .collect();
    v.extend(world.map.obstacles.iter().map(|b| Occluder::Rect(b.to_oriented())));
    v.extend(
        world
            .pedestrians
            .iter()
            .filter(|p| p.id != skip)
            .map(|p| Occluder::Disc(p.disc())),
    );
    v
}

/// Whether `p` is inside the sensor's field of view and range from the ego.
pub fn in_view(ego: &EgoState, p: Vec2, fov: f64, range: f64) -> bool {
    let origin = ego.sensor_origin();
    let d = p - origin;
    if d.norm() > range {
        return false;
    }
    if fov >= std::f64::consts::TAU {
        return true;
    }
    let bearing = crate::geometry::wrap_angle(d.y.atan2(d.x) - ego.theta);
    bearing.abs() <= fov / 2.0
}

/// Simulated object detector. Every object inside the field of view consumes
/// the same three random draws whether or not it is reported, so changing the
/// class list never shifts the noise seen by other objects.
pub fn sense<R: Rng>(
    world: &WorldState,
    cfg: &SensorConfig,
    noise_scale: f64,
    rng: &mut R,
) -> Vec<Detection> {
    let origin = world.ego.sensor_origin();
    let sigma = cfg.sigma * noise_scale;
    let mut out = Vec::new();
    for p in &world.pedestrians {
        if !in_view(&world.ego, p.position(), cfg.fov, cfg.max_range) {
            continue;
        }
        let u: f64 = rng.random();
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        if !cfg.known_classes.contains(&p.class_label) {
            continue;
        }
        let occ = occlusion_fraction(origin, &p.disc(), &occluders_for(world, p.id), cfg.ray_count);
        let p_drop = (cfg.dropout_base + cfg.occlusion_dropout_gain * occ).min(1.0);
        if u < p_drop {
            continue;
        }
        let pos = p.position() + Vec2::new(nx, ny) * sigma;
        out.push(Detection {
            class_label: p.class_label.clone(),
            x: pos.x,
            y: pos.y,
            bbox: OrientedRect::new(pos, p.radius, p.radius, p.heading),
            v_est: None,
            vx: 0.0,
            vy: 0.0,
            score: 1.0 - 0.5 * occ,
        });
    }
    out
}

/// Fill velocity estimates by finite differences against the previous cycle's
/// detections (nearest same-class detection within `gate`).
pub fn estimate_velocities(prev: &[Detection], cur: &mut [Detection], period: f64, gate: f64) {
    for d in cur.iter_mut() {
        let best = prev
            .iter()
            .filter(|q| q.class_label == d.class_label)
            .map(|q| (q.position().distance(d.position()), q))
            .filter(|(dist, _)| *dist <= gate)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, q)) = best {
            let v = (d.position() - q.position()) * (1.0 / period);
            d.vx = v.x;
            d.vy = v.y;
            d.v_est = Some(v.norm());
        }
    }
}

/// Intersection over ground truth: `area(pred ∩ gt) / area(gt)`.
pub fn iogt(pred: &OrientedRect, gt: &OrientedRect) -> Result<f64, PerceptionError> {
    let gt_area = gt.area();
    if !(gt_area > 0.0) {
        return Err(PerceptionError::ZeroAreaGroundTruth);
    }
    Ok((intersection_area(pred, gt) / gt_area).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyMetric {
    pub iogt: f64,
    pub distance: f64,
    pub criticality: f64,
    pub safety_score: f64,
}

/// Gap between the ego footprint and a disc-shaped object, floored at zero.
pub fn ego_gap(ego: &EgoState, center: Vec2, radius: f64) -> f64 {
    (ego.footprint().signed_distance(center) - radius).max(0.0)
}

/// Distance-weighted detection safety: near objects must be covered, far ones do not matter.
pub fn safety_metric(
    pred: &Detection,
    gt: &ObjectTruth,
    ego: &EgoState,
    params: &RequirementParams,
) -> Result<SafetyMetric, PerceptionError> {
    let iou = iogt(&pred.bbox, &gt.bbox())?;
    let distance = ego_gap(ego, gt.position(), gt.radius);
    let criticality = (1.0 - distance / params.d_safety).clamp(0.0, 1.0);
    Ok(SafetyMetric {
        iogt: iou,
        distance,
        criticality,
        safety_score: (1.0 - criticality * (1.0 - iou)).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyMetricReport {
    pub objects: Vec<SafetyMetric>,
    pub min_score: f64,
    pub mean_score: f64,
    pub safe: usize,
    pub unsafe_count: usize,
    pub threshold: f64,
}

pub fn safety_report(metrics: Vec<SafetyMetric>, threshold: f64) -> SafetyMetricReport {
    let n = metrics.len();
    let min_score = metrics.iter().map(|m| m.safety_score).fold(1.0, f64::min);
    let mean_score = if n == 0 {
        1.0
    } else {
        metrics.iter().map(|m| m.safety_score).sum::<f64>() / n as f64
    };
    let safe = metrics.iter().filter(|m| m.safety_score >= threshold).count();
    SafetyMetricReport {
        objects: metrics,
        min_score,
        mean_score,
        safe,
        unsafe_count: n - safe,
        threshold,
    }
}

/// Greedy nearest-centre assignment within `gate`; returns `(truth_idx, det_idx, distance)`.
pub fn match_detections(gt: &[ObjectTruth], dets: &[Detection], gate: f64) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, d) in dets.iter().enumerate() {
            let dist = g.position().distance(d.position());
            if dist <= gate {
                pairs.push((i, j, dist));
            }
        }
    }
    pairs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_g = vec![false; gt.len()];
    let mut used_d = vec![false; dets.len()];
    let mut out = Vec::new();
    for (i, j, dist) in pairs {
        if !used_g[i] && !used_d[j] {
            used_g[i] = true;
            used_d[j] = true;
            out.push((i, j, dist));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCheck {
    pub pass: bool,
    pub margin: f64,
}

/// Detection requirement at one sample: every pedestrian within `d_safety` must
/// be matched within `e_detect`, with a velocity estimate (when available)
/// within the configured tolerance.
pub fn evaluate_uc_avp_01(
    gt: &[ObjectTruth],
    dets: &[Detection],
    ego: &EgoState,
    params: &RequirementParams,
    cfg: &SensorConfig,
) -> DetectionCheck {
    let matches = match_detections(gt, dets, cfg.match_gate);
    let mut margin = params.e_detect;
    let mut pass = true;
    for (i, g) in gt.iter().enumerate() {
        if g.class_label != PEDESTRIAN || ego_gap(ego, g.position(), g.radius) > params.d_safety {
            continue;
        }
        match matches.iter().find(|m| m.0 == i) {
            None => {
                pass = false;
                margin = margin.min(-params.e_detect);
            }
            Some(&(_, j, err)) => {
                margin = margin.min(params.e_detect - err);
                if err > params.e_detect {
                    pass = false;
                }
                if let Some(v) = dets[j].v_est {
                    let v_err = (v - g.speed()).abs();
                    margin = margin.min(cfg.velocity_tolerance - v_err);
                    if v_err > cfg.velocity_tolerance {
                        pass = false;
                    }
                }
            }
        }
    }
    DetectionCheck { pass, margin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::sim::{PedMode, PedestrianState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn no_occluders_zero() {
        let f = occlusion_fraction(Vec2::ZERO, &Disc::new(Vec2::new(10.0, 0.0), 0.3), &[], 32);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn wall_occludes_fully() {
        let wall = Occluder::Rect(Aabb::new(Vec2::new(4.0, -10.0), Vec2::new(5.0, 10.0)).to_oriented());
        let f = occlusion_fraction(Vec2::ZERO, &Disc::new(Vec2::new(10.0, 0.0), 0.3), &[wall], 32);
        assert_eq!(f, 1.0);
    }

    #[test]
    fn half_blocked_symmetric_layout() {
        // Wall covers every sight line above the x axis and none below it.
        let wall = Occluder::Rect(Aabb::new(Vec2::new(5.0, 1e-9), Vec2::new(5.1, 10.0)).to_oriented());
        let f = occlusion_fraction(Vec2::ZERO, &Disc::new(Vec2::new(10.0, 0.0), 1.0), &[wall], 32);
        assert_eq!(f, 0.5);
    }

    #[test]
    fn iogt_fixtures() {
        let gt = OrientedRect::new(Vec2::ZERO, 1.0, 0.5, 0.0);
        assert!((iogt(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
        let far = OrientedRect::new(Vec2::new(10.0, 0.0), 1.0, 0.5, 0.0);
        assert_eq!(iogt(&far, &gt).unwrap(), 0.0);
        let left = OrientedRect::new(Vec2::new(-0.5, 0.0), 0.5, 0.5, 0.0);
        assert!((iogt(&left, &gt).unwrap() - 0.5).abs() < 1e-12);
        let degenerate = OrientedRect::new(Vec2::ZERO, 0.0, 0.5, 0.0);
        assert_eq!(iogt(&gt, &degenerate), Err(PerceptionError::ZeroAreaGroundTruth));
    }

    #[test]
    fn iogt_rotated_matches_grid_oracle() {
        let gt = OrientedRect::new(Vec2::ZERO, 1.0, 0.5, 0.0);
        let pred = OrientedRect::new(Vec2::ZERO, 1.0, 0.5, FRAC_PI_4);
        // 0.1 mm midpoint grid over the ground-truth box
        let h = 1e-4;
        let (nx, ny) = (20_000usize, 10_000usize);
        let mut inside = 0usize;
        for i in 0..nx {
            let x = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..ny {
                let y = -0.5 + (j as f64 + 0.5) * h;
                if pred.contains(Vec2::new(x, y)) {
                    inside += 1;
                }
            }
        }
        let oracle = inside as f64 / (nx * ny) as f64;
        assert!((iogt(&pred, &gt).unwrap() - oracle).abs() < 1e-3);
    }

    fn ego_at_origin() -> EgoState {
        EgoState::at(Vec2::ZERO, 0.0)
    }

    fn det_at(p: Vec2, half: f64) -> Detection {
        Detection {
            class_label: PEDESTRIAN.into(),
            x: p.x,
            y: p.y,
            bbox: OrientedRect::new(p, half, half, 0.0),
            v_est: None,
            vx: 0.0,
            vy: 0.0,
            score: 1.0,
        }
    }

    fn truth_at(p: Vec2) -> ObjectTruth {
        ObjectTruth {
            id: 0,
            class_label: PEDESTRIAN.into(),
            x: p.x,
            y: p.y,
            vx: 0.0,
            vy: 0.0,
            radius: 0.3,
            heading: 0.0,
        }
    }

    #[test]
    fn safety_metric_examples() {
        let ego = ego_at_origin();
        let params = RequirementParams::default();
        let front = ego.front_length();
        // perfect box far away
        let g = truth_at(Vec2::new(front + 20.0, 0.0));
        let m = safety_metric(&det_at(g.position(), 0.3), &g, &ego, &params).unwrap();
        assert_eq!(m.safety_score, 1.0);
        // IoGT 0 but beyond d_safety
        let g = truth_at(Vec2::new(front + 0.3 + 4.0, 0.0));
        let m = safety_metric(&det_at(Vec2::new(50.0, 50.0), 0.3), &g, &ego, &params).unwrap();
        assert_eq!(m.criticality, 0.0);
        assert_eq!(m.safety_score, 1.0);
        // half of d_safety with IoGT 0.4: shift a 0.6 m box by 0.36 m
        let g = truth_at(Vec2::new(front + 0.3 + 2.0, 0.0));
        let pred = det_at(g.position() + Vec2::new(0.36, 0.0), 0.3);
        let m = safety_metric(&pred, &g, &ego, &params).unwrap();
        assert!((m.iogt - 0.4).abs() < 1e-9, "{m:?}");
        assert!((m.criticality - 0.5).abs() < 1e-12);
        assert!((m.safety_score - 0.7).abs() < 1e-9);
    }

    #[test]
    fn uc01_examples() {
        let ego = ego_at_origin();
        let params = RequirementParams::default();
        let cfg = SensorConfig::default();
        // nobody close: vacuous pass
        let far = truth_at(Vec2::new(30.0, 0.0));
        let r = evaluate_uc_avp_01(&[far], &[], &ego, &params, &cfg);
        assert!(r.pass);
        assert_eq!(r.margin, params.e_detect);
        // pedestrian 2 m in front of the bumper, detection 0.4 m off
        let g = truth_at(Vec2::new(ego.front_length() + 2.3, 0.0));
        let d = det_at(g.position() + Vec2::new(0.0, 0.4), 0.3);
        let r = evaluate_uc_avp_01(&[g.clone()], &[d], &ego, &params, &cfg);
        assert!(r.pass);
        assert!((r.margin - 0.1).abs() < 1e-12);
        // undetected
        let r = evaluate_uc_avp_01(&[g], &[], &ego, &params, &cfg);
        assert!(!r.pass);
        assert!(r.margin < 0.0);
    }

    fn world_with(label: &str, at: Vec2) -> WorldState {
        let mut w = WorldState::empty(crate::map::ParkingLot::default_lot());
        w.pedestrians.push(PedestrianState {
            id: 0,
            x: at.x,
            y: at.y,
            speed: 0.0,
            heading: 0.0,
            radius: 0.3,
            class_label: label.into(),
            mode: PedMode::Waiting,
            walk_speed: 1.0,
            trigger_distance: 0.0,
            stop_y: at.y,
        });
        w
    }

    #[test]
    fn unknown_class_never_detected() {
        let w = world_with("animal", Vec2::new(10.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sense(&w, &SensorConfig::perfect(), 1.0, &mut rng).is_empty());
    }

    #[test]
    fn noiseless_detection_is_exact() {
        let w = world_with(PEDESTRIAN, Vec2::new(10.0, 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = sense(&w, &SensorConfig::perfect(), 1.0, &mut rng);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].x, d[0].y), (10.0, 0.5));
    }

    #[test]
    fn saturated_dropout_never_detects() {
        let mut w = world_with(PEDESTRIAN, Vec2::new(10.0, 0.0));
        w.parked_vehicles.push(Aabb::new(Vec2::new(6.0, -3.0), Vec2::new(7.0, 3.0)));
        let cfg = SensorConfig {
            occlusion_dropout_gain: 1.0,
            ..SensorConfig::perfect()
        };
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert!(sense(&w, &cfg, 1.0, &mut rng).is_empty());
        }
    }

    #[test]
    fn outside_fov_not_detected() {
        let w = world_with(PEDESTRIAN, Vec2::new(-10.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sense(&w, &SensorConfig::perfect(), 1.0, &mut rng).is_empty());
    }

    #[test]
    fn velocity_from_finite_difference() {
        let prev = vec![det_at(Vec2::new(10.0, 0.0), 0.3)];
        let mut cur = vec![det_at(Vec2::new(10.0, -0.14), 0.3)];
        estimate_velocities(&prev, &mut cur, 0.1, 2.0);
        assert!((cur[0].v_est.unwrap() - 1.4).abs() < 1e-9);
        assert!((cur[0].vy + 1.4).abs() < 1e-9);
    }
}
