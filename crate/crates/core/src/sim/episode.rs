//! Closed-loop episode: sense, assess, plan, act, step the world.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::trace::{BrakeSource, EpisodeSummary, Trace, TraceEvent, TraceSample};
use super::{build_world, collision_check, world_step, PedMode, SimError, WorldState};
use crate::geometry::Vec2;
use crate::map::ParkingLot;
use crate::odd::{OddSpec, RequirementParams};
use crate::perception::{estimate_velocities, evaluate_uc_avp_01, sense, Detection, ObjectTruth, SensorConfig};
use crate::planner::{aeb, PlanError, PlannerStack, StackConfig, TrackedObject};
use crate::risk::{consistency, generate_cues, infer_risk, CueConfig, FuzzyRuleBase, Shield, ShieldConfig};
use crate::scenario::ConcreteScenario;

/// Stream used for self-localization noise.
const LOC_STREAM: u64 = 3;
/// Reported gap when the scenario has no walking agents.
pub const NO_AGENT_DISTANCE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub t_max: f64,
    pub map: ParkingLot,
    pub odd: OddSpec,
    pub params: RequirementParams,
    pub sensor: SensorConfig,
    pub stack: StackConfig,
    pub cues: CueConfig,
    pub rules: FuzzyRuleBase,
    pub shield: ShieldConfig,
    /// Rear axle distance to the goal point that counts as parked.
    pub goal_tolerance: f64,
    pub goal_speed: f64,
    /// Cycles a missed detection is propagated at its last velocity.
    pub coast_cycles: u32,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_max: 60.0,
            map: ParkingLot::default_lot(),
            odd: OddSpec::default(),
            params: RequirementParams::default(),
            sensor: SensorConfig::default(),
            stack: StackConfig::default(),
            cues: CueConfig::default(),
            rules: FuzzyRuleBase::default_rules(),
            shield: ShieldConfig::default(),
            goal_tolerance: 0.5,
            goal_speed: 0.05,
            coast_cycles: 2,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(SimError::Config("t_max must be positive".into()));
        }
        self.sensor.validate().map_err(SimError::Config)?;
        self.rules.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.params.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.odd.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let s = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(s.as_bytes()))
    }

    /// Simulation steps per plan-act cycle.
    pub fn steps_per_cycle(&self) -> usize {
        ((self.params.t_cycle / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    /// The episode stopped on a numerical or tracking fault; the trace holds
    /// every sample recorded before it.
    #[error("episode fault at t={t}: {message}")]
    Fault { t: f64, message: String, trace: Box<Trace> },
}

fn truths(w: &WorldState, prev: &[Vec2], period: f64) -> Vec<ObjectTruth> {
    w.pedestrians
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let v = match prev.get(k) {
                Some(q) if period > 0.0 => (p.position() - *q) * (1.0 / period),
                _ => p.velocity(),
            };
            ObjectTruth {
                id: p.id,
                class_label: p.class_label.clone(),
                x: p.x,
                y: p.y,
                vx: v.x,
                vy: v.y,
                radius: p.radius,
                heading: p.heading,
            }
        })
        .collect()
}

/// Carry missed detections forward at their last velocity for a few cycles.
fn coast(prev: &[(Detection, u32)], fresh: Vec<Detection>, period: f64, gate: f64, max_age: u32) -> Vec<(Detection, u32)> {
    let mut out: Vec<(Detection, u32)> = fresh.into_iter().map(|d| (d, 0)).collect();
    for (d, age) in prev {
        if *age >= max_age {
            continue;
        }
        let p = d.position() + Vec2::new(d.vx, d.vy) * period;
        let seen = out
            .iter()
            .any(|(f, a)| *a == 0 && f.class_label == d.class_label && f.position().distance(p) <= gate);
        if seen {
            continue;
        }
        let mut c = d.clone();
        c.x = p.x;
        c.y = p.y;
        c.bbox.center = p;
        out.push((c, age + 1));
    }
    out
}

struct Held {
    cmd: super::Command,
    brake: BrakeSource,
    risk: f64,
    ttc: f64,
    aeb_condition: bool,
    uc01_ok: bool,
    uc01_margin: f64,
    loc_error: f64,
    detections: Vec<Detection>,
}

/// Run one scenario to goal, collision, fault or timeout.
pub fn run_episode(sc: &ConcreteScenario, cfg: &EpisodeConfig) -> Result<Trace, EpisodeError> {
    cfg.validate()?;
    let mut world = build_world(sc, &cfg.map)?;
    let mut stack_cfg = cfg.stack.clone();
    stack_cfg.profile.cruise = sc.ego_cruise_speed;
    let mut stack = PlannerStack::new(
        stack_cfg,
        cfg.params.clone(),
        cfg.odd.clone(),
        &cfg.map,
        &world.parked_vehicles,
        &world.ego,
        sc.goal_bay,
    )
    .map_err(|e| SimError::Plan(e.to_string()))?;

    let base = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut sensor_rng = base.clone();
    sensor_rng.set_stream(cfg.sensor.seed_stream);
    let mut cue_rng = base.clone();
    cue_rng.set_stream(cfg.cues.seed_stream);
    let mut loc_rng = base;
    loc_rng.set_stream(LOC_STREAM);

    let mut trace = Trace {
        scenario_id: sc.scenario_id.clone(),
        seed: sc.seed,
        config_hash: cfg.hash(),
        samples: Vec::new(),
        events: Vec::new(),
        summary: EpisodeSummary::default(),
        cycle_times: Vec::new(),
    };
    let fault = |trace: Trace, t: f64, message: String| EpisodeError::Fault {
        t,
        message,
        trace: Box::new(trace),
    };

    let per_cycle = cfg.steps_per_cycle();
    let period = per_cycle as f64 * cfg.dt;
    let n_steps = (cfg.t_max / cfg.dt + 1e-9).floor() as usize;
    let mut shield = Shield::default();
    let mut tracked: Vec<(Detection, u32)> = Vec::new();
    let mut prev_pos: Vec<Vec2> = Vec::new();
    let mut held = Held {
        cmd: Default::default(),
        brake: BrakeSource::None,
        risk: 0.0,
        ttc: f64::INFINITY,
        aeb_condition: false,
        uc01_ok: true,
        uc01_margin: cfg.params.e_detect,
        loc_error: 0.0,
        detections: Vec::new(),
    };
    let mut truth = Vec::new();

    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        world.time = t;
        if k % per_cycle == 0 {
            let start = Instant::now();
            truth = truths(&world, &prev_pos, if k == 0 { 0.0 } else { period });
            prev_pos = world.pedestrians.iter().map(|p| p.position()).collect();

            let mut fresh = sense(&world, &cfg.sensor, sc.perception_noise_scale, &mut sensor_rng);
            let prev: Vec<Detection> = tracked.iter().map(|(d, _)| d.clone()).collect();
            estimate_velocities(&prev, &mut fresh, period, cfg.sensor.match_gate);
            tracked = coast(&tracked, fresh, period, cfg.sensor.match_gate, cfg.coast_cycles);
            let dets: Vec<Detection> = tracked.iter().map(|(d, _)| d.clone()).collect();

            let mut ego_est = world.ego;
            let nx: f64 = StandardNormal.sample(&mut loc_rng);
            let ny: f64 = StandardNormal.sample(&mut loc_rng);
            ego_est.x += nx * cfg.sensor.loc_sigma;
            ego_est.y += ny * cfg.sensor.loc_sigma;

            let cues = generate_cues(&world, &cfg.cues, &mut cue_rng);
            let feats = consistency(&cues, &dets, &ego_est, &cfg.cues);
            let risk = infer_risk(&feats, &cfg.rules);

            let out = match stack.plan_act_cycle(&ego_est, &dets, &truth) {
                Ok(o) => o,
                Err(e @ PlanError::TrackingLost(_)) => return Err(fault(trace, t, e.to_string())),
                Err(e) => return Err(SimError::Plan(e.to_string()).into()),
            };
            let (cmd, shield_on) = shield.apply(out.cmd, risk, &ego_est, &cfg.shield, &cfg.odd);
            let brake = BrakeSource::combine(out.brake_full, shield_on);
            let uc01 = evaluate_uc_avp_01(&truth, &dets, &world.ego, &cfg.params, &cfg.sensor);

            if out.brake_full && !matches!(held.brake, BrakeSource::Aeb | BrakeSource::Both) {
                trace.events.push(event(t, "aeb_trigger", format!("ttc={}", out.ttc)));
            }
            if shield_on && !matches!(held.brake, BrakeSource::Shield | BrakeSource::Both) {
                trace.events.push(event(t, "shield_engage", format!("risk={risk}")));
            }
            held = Held {
                cmd,
                brake,
                risk,
                ttc: out.ttc,
                aeb_condition: out.aeb_condition,
                uc01_ok: uc01.pass,
                uc01_margin: uc01.margin,
                loc_error: ego_est.position().distance(world.ego.position()),
                detections: dets,
            };
            trace.cycle_times.push((t, start.elapsed().as_secs_f64()));
        }

        let proj = stack.path.project(world.ego.position());
        let ttc_gt = truth
            .iter()
            .map(|o| aeb::ttc(&world.ego, Some(&stack.path), &TrackedObject::from(o), cfg.params.e_detect))
            .fold(f64::INFINITY, f64::min);
        let collision = collision_check(&world);
        trace.samples.push(TraceSample {
            t,
            ego: world.ego,
            cmd: held.cmd,
            min_ped_dist: world.min_ped_distance().unwrap_or(NO_AGENT_DISTANCE),
            ttc: held.ttc,
            ttc_gt,
            risk: held.risk,
            brake: held.brake,
            collision: collision.is_some(),
            n_detections: held.detections.len(),
            cross_track: proj.lateral.abs(),
            loc_error: held.loc_error,
            uc01_ok: held.uc01_ok,
            uc01_margin: held.uc01_margin,
            aeb_condition: held.aeb_condition,
            path_clearance_margin: stack.path.clearance_margin_at(proj.s),
            truth: truth.clone(),
            detections: held.detections.clone(),
        });

        if let Some(c) = collision {
            trace.events.push(event(t, "collision", format!("actor={} v={}", c.actor_id, c.ego_v_at_impact)));
            trace.summary.collision = Some(c);
            break;
        }
        if world.ego.position().distance(stack.path.goal()) <= cfg.goal_tolerance && world.ego.v.abs() <= cfg.goal_speed {
            trace.events.push(event(t, "goal_reached", format!("bay={}", sc.goal_bay)));
            trace.summary.goal_reached = true;
            break;
        }
        if k == n_steps {
            trace.events.push(event(t, "timeout", String::new()));
            trace.summary.timed_out = true;
            break;
        }

        let modes: Vec<PedMode> = world.pedestrians.iter().map(|p| p.mode).collect();
        world_step(&mut world, &held.cmd, cfg.dt, &cfg.odd);
        for (p, m) in world.pedestrians.iter().zip(modes) {
            if m == PedMode::Waiting && p.mode == PedMode::Walking {
                trace.events.push(event(t, "pedestrian_walk", format!("actor={}", p.id)));
            }
        }
        let e = &world.ego;
        if ![e.x, e.y, e.theta, e.v, e.a, e.delta].iter().all(|v| v.is_finite()) {
            let msg = "non-finite ego state".to_string();
            trace.summary.fault = Some(msg.clone());
            return Err(fault(trace, t + cfg.dt, msg));
        }
    }
    Ok(trace)
}

fn event(t: f64, kind: &str, detail: String) -> TraceEvent {
    TraceEvent {
        t,
        kind: kind.into(),
        detail,
    }
}
