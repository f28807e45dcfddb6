//! Fixed-step kinematic world: ego vehicle, walking agents, parked cars.

pub mod episode;
pub mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{disc_touches_rect, wrap_angle, Aabb, Disc, OrientedRect, Vec2};
use crate::map::{Bay, ParkingLot};
use crate::odd::OddSpec;
use crate::scenario::{ConcreteScenario, ScenarioError, ANIMAL};

pub use episode::{run_episode, EpisodeConfig, EpisodeError};
pub use trace::{Trace, TraceSample};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("bay {0} does not exist in the map")]
    UnknownBay(usize),
    #[error("goal bay {0} is occupied by a parked vehicle")]
    GoalOccupied(usize),
    #[error("planning failed: {0}")]
    Plan(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub const WHEELBASE: f64 = 2.5;
pub const VEHICLE_HALF_WIDTH: f64 = 0.9;
pub const FRONT_OVERHANG: f64 = 0.95;
pub const REAR_OVERHANG: f64 = 0.95;
pub const MAX_STEER: f64 = 0.6;
pub const PEDESTRIAN_RADIUS: f64 = 0.3;
pub const ANIMAL_RADIUS: f64 = 0.25;
/// Depth inside its bay at which a walking agent waits.
pub const SPAWN_DEPTH: f64 = 2.0;

/// Rear-axle referenced kinematic bicycle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub a: f64,
    pub delta: f64,
    pub wheelbase: f64,
    pub half_width: f64,
    /// Distance from the front axle to the front bumper.
    pub front_overhang_length: f64,
    pub rear_overhang_length: f64,
    pub delta_max: f64,
}

impl EgoState {
    pub fn at(p: Vec2, theta: f64) -> Self {
        Self {
            x: p.x,
            y: p.y,
            theta,
            v: 0.0,
            a: 0.0,
            delta: 0.0,
            wheelbase: WHEELBASE,
            half_width: VEHICLE_HALF_WIDTH,
            front_overhang_length: FRONT_OVERHANG,
            rear_overhang_length: REAR_OVERHANG,
            delta_max: MAX_STEER,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading_vec(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// Rear axle to front bumper.
    pub fn front_length(&self) -> f64 {
        self.wheelbase + self.front_overhang_length
    }

    pub fn length(&self) -> f64 {
        self.front_length() + self.rear_overhang_length
    }

    pub fn footprint(&self) -> OrientedRect {
        let offset = (self.front_length() - self.rear_overhang_length) / 2.0;
        OrientedRect::new(
            self.position() + self.heading_vec() * offset,
            self.length() / 2.0,
            self.half_width,
            self.theta,
        )
    }

    /// Centre of the front bumper, where the forward sensors sit.
    pub fn sensor_origin(&self) -> Vec2 {
        self.position() + self.heading_vec() * self.front_length()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub a_cmd: f64,
    pub delta_cmd: f64,
}

/// Advance the ego by one explicit Euler step. Commands are clamped to the ODD
/// limits; braking stops the vehicle instead of driving it backwards.
pub fn ego_step(e: &EgoState, cmd: &Command, dt: f64, odd: &OddSpec) -> EgoState {
    let a = cmd.a_cmd.clamp(odd.ego_a_min, odd.ego_a_max);
    let delta = cmd.delta_cmd.clamp(-e.delta_max, e.delta_max);
    let mut n = *e;
    n.x += e.v * e.theta.cos() * dt;
    n.y += e.v * e.theta.sin() * dt;
    n.theta = wrap_angle(e.theta + e.v / e.wheelbase * delta.tan() * dt);
    let mut v = e.v + a * dt;
    if (e.v >= 0.0 && a < 0.0 && v < 0.0) || (e.v < 0.0 && a > 0.0 && v > 0.0) {
        v = 0.0;
    }
    n.v = v.clamp(odd.ego_v_min, odd.ego_v_max);
    n.a = a;
    n.delta = delta;
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedMode {
    Waiting,
    Walking,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub radius: f64,
    pub class_label: String,
    pub mode: PedMode,
    pub walk_speed: f64,
    pub trigger_distance: f64,
    /// Lateral line (far lane edge) at which the agent stops.
    pub stop_y: f64,
}

impl PedestrianState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn disc(&self) -> Disc {
        Disc::new(self.position(), self.radius)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

/// Signed gap between the ego footprint and a disc (negative on overlap).
pub fn footprint_gap(ego: &EgoState, d: &Disc) -> f64 {
    ego.footprint().signed_distance(d.center) - d.radius
}

/// Advance a walking agent by one step. The walk starts once the ego comes
/// within the trigger distance (inclusive); motion begins on the next step.
pub fn pedestrian_step(p: &PedestrianState, ego: &EgoState, dt: f64) -> PedestrianState {
    let mut n = p.clone();
    match p.mode {
        PedMode::Waiting => {
            if footprint_gap(ego, &p.disc()) <= p.trigger_distance {
                n.mode = PedMode::Walking;
                n.speed = p.walk_speed;
            }
        }
        PedMode::Walking => {
            let dir = Vec2::from_angle(p.heading);
            let next = p.position() + dir * (p.speed * dt);
            let crossing = if dir.y < 0.0 {
                next.y <= p.stop_y
            } else if dir.y > 0.0 {
                next.y >= p.stop_y
            } else {
                false
            };
            if crossing {
                let frac = ((p.stop_y - p.y) / (next.y - p.y)).clamp(0.0, 1.0);
                let stop = p.position() + (next - p.position()) * frac;
                n.x = stop.x;
                n.y = stop.y;
                n.speed = 0.0;
                n.mode = PedMode::Stopped;
            } else {
                n.x = next.x;
                n.y = next.y;
            }
        }
        PedMode::Stopped => {}
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub actor_id: usize,
    pub ego_v_at_impact: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub ego: EgoState,
    pub pedestrians: Vec<PedestrianState>,
    pub parked_vehicles: Vec<Aabb>,
    pub map: ParkingLot,
    pub collision: Option<CollisionEvent>,
}

impl WorldState {
    pub fn empty(map: ParkingLot) -> Self {
        let start = Vec2::new(map.lane_start_x(), map.lane_center_y());
        Self {
            time: 0.0,
            ego: EgoState::at(start, 0.0),
            pedestrians: Vec::new(),
            parked_vehicles: Vec::new(),
            map,
            collision: None,
        }
    }

    /// Minimum signed gap from the ego footprint to any walking agent.
    pub fn min_ped_distance(&self) -> Option<f64> {
        self.pedestrians
            .iter()
            .map(|p| footprint_gap(&self.ego, &p.disc()))
            .min_by(f64::total_cmp)
    }
}

/// Ego-vs-agent contact under closed-set semantics (touching counts). When
/// several agents touch, the deepest penetration wins so the report does not
/// depend on agent numbering except for exact ties.
pub fn collision_check(w: &WorldState) -> Option<CollisionEvent> {
    let fp = w.ego.footprint();
    w.pedestrians
        .iter()
        .filter(|p| disc_touches_rect(&p.disc(), &fp))
        .map(|p| (footprint_gap(&w.ego, &p.disc()), p.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| CollisionEvent {
            actor_id: id,
            ego_v_at_impact: w.ego.v,
            time: w.time,
        })
}

/// Advance the whole world by one step from a common snapshot. Walking agents
/// pause rather than step into a vehicle that is standing still.
pub fn world_step(w: &mut WorldState, cmd: &Command, dt: f64, odd: &OddSpec) {
    let old_ego = w.ego;
    let ego = ego_step(&old_ego, cmd, dt, odd);
    let fp = ego.footprint();
    let standing = ego.v.abs() <= STANDSTILL_EPS;
    for p in w.pedestrians.iter_mut() {
        let next = pedestrian_step(p, &old_ego, dt);
        if standing && next.mode == PedMode::Walking && disc_touches_rect(&next.disc(), &fp) {
            continue;
        }
        *p = next;
    }
    w.ego = ego;
    w.time += dt;
}

/// Speeds at or below this count as standing still.
pub const STANDSTILL_EPS: f64 = 1e-6;

/// Footprint of a car parked in `bay`, centred and aligned with the bay.
pub fn parked_footprint(bay: &Bay) -> Aabb {
    let c = bay.area.center();
    let half_len = (WHEELBASE + FRONT_OVERHANG + REAR_OVERHANG) / 2.0;
    if bay.area.height() >= bay.area.width() {
        Aabb::from_center(c, VEHICLE_HALF_WIDTH, half_len)
    } else {
        Aabb::from_center(c, half_len, VEHICLE_HALF_WIDTH)
    }
}

pub fn agent_radius(class_label: &str) -> f64 {
    if class_label == ANIMAL {
        ANIMAL_RADIUS
    } else {
        PEDESTRIAN_RADIUS
    }
}

/// Instantiate the world at `t = 0` for a concrete scenario.
pub fn build_world(sc: &ConcreteScenario, map: &ParkingLot) -> Result<WorldState, SimError> {
    sc.validate()?;
    if !(sc.ego_start_s.is_finite() && sc.ego_start_s >= 0.0) {
        return Err(SimError::Config("ego_start_s must be a finite non-negative number".into()));
    }
    map.bay(sc.goal_bay).ok_or(SimError::UnknownBay(sc.goal_bay))?;
    if sc.parked_vehicle_bays.contains(&sc.goal_bay) {
        return Err(SimError::GoalOccupied(sc.goal_bay));
    }
    let mut w = WorldState::empty(map.clone());
    w.ego = EgoState::at(
        Vec2::new(map.lane_start_x() + sc.ego_start_s, map.lane_center_y()),
        0.0,
    );
    for b in &sc.parked_vehicle_bays {
        let bay = map.bay(*b).ok_or(SimError::UnknownBay(*b))?;
        w.parked_vehicles.push(parked_footprint(bay));
    }
    for (id, p) in sc.pedestrians.iter().enumerate() {
        let bay = map.bay(p.spawn_bay).ok_or(SimError::UnknownBay(p.spawn_bay))?;
        let pos = bay.point_at_depth(SPAWN_DEPTH);
        let heading = wrap_angle(bay.inward_heading() + std::f64::consts::PI + p.heading_offset);
        let radius = agent_radius(&p.class_label);
        let (lo, hi) = map.lane_edges_at(bay.mouth()).unwrap_or((map.bounds.min.y, map.bounds.max.y));
        let walks_south = bay.inward().y > 0.0;
        w.pedestrians.push(PedestrianState {
            id,
            x: pos.x,
            y: pos.y,
            speed: 0.0,
            heading,
            radius,
            class_label: p.class_label.clone(),
            mode: PedMode::Waiting,
            walk_speed: p.walk_speed,
            trigger_distance: p.trigger_distance,
            stop_y: if walks_south { lo + radius } else { hi - radius },
        });
    }
    Ok(w)
}
