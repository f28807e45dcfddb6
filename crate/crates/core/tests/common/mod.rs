//! Independent reference implementations used as test oracles. They follow
//! the textbook definitions directly and share no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use avp_core::geometry::{OrientedRect, Vec2};
use avp_core::odd::{OddSpec, RequirementParams};
use avp_core::planner::aeb::{aeb_condition, AebConfig, AebState, TrackedObject};
use avp_core::planner::path::PathPlan;
use avp_core::sim::{ego_step, Command, EgoState};
use avp_core::stl::{Cmp, Formula, Interval, SignalTable};
use rand::Rng;

// ---------------------------------------------------------------- STL

const EPS: f64 = 1e-9;

fn in_window(t0: f64, t: f64, iv: &Interval) -> bool {
    let d = t - t0;
    d >= iv.a - EPS && d <= iv.b + EPS
}

/// Robustness at every sample by explicit quantification over window samples.
pub fn brute_robustness(f: &Formula, tr: &SignalTable) -> Vec<f64> {
    let n = tr.times.len();
    let t = &tr.times;
    match f {
        Formula::Atom { signal, cmp, c } => tr.columns[signal]
            .iter()
            .map(|s| match cmp {
                Cmp::Gt | Cmp::Ge => s - c,
                Cmp::Lt | Cmp::Le => c - s,
            })
            .collect(),
        Formula::Not(x) => brute_robustness(x, tr).iter().map(|v| -v).collect(),
        Formula::And(a, b) => zip(a, b, tr, f64::min),
        Formula::Or(a, b) => zip(a, b, tr, f64::max),
        Formula::Implies(a, b) => zip(a, b, tr, |x, y| (-x).max(y)),
        Formula::Globally(iv, x) => {
            let r = brute_robustness(x, tr);
            (0..n)
                .map(|i| {
                    let mut m = f64::INFINITY;
                    for j in i..n {
                        if in_window(t[i], t[j], iv) {
                            m = m.min(r[j]);
                        }
                    }
                    m
                })
                .collect()
        }
        Formula::Eventually(iv, x) => {
            let r = brute_robustness(x, tr);
            (0..n)
                .map(|i| {
                    let mut m = f64::NEG_INFINITY;
                    for j in i..n {
                        if in_window(t[i], t[j], iv) {
                            m = m.max(r[j]);
                        }
                    }
                    m
                })
                .collect()
        }
        Formula::Until(iv, a, b) => {
            let (ra, rb) = (brute_robustness(a, tr), brute_robustness(b, tr));
            (0..n)
                .map(|i| {
                    let mut best = f64::NEG_INFINITY;
                    for j in i..n {
                        if !in_window(t[i], t[j], iv) {
                            continue;
                        }
                        let mut v = rb[j];
                        for k in i..j {
                            v = v.min(ra[k]);
                        }
                        best = best.max(v);
                    }
                    best
                })
                .collect()
        }
    }
}

fn zip(a: &Formula, b: &Formula, tr: &SignalTable, op: fn(f64, f64) -> f64) -> Vec<f64> {
    let (ra, rb) = (brute_robustness(a, tr), brute_robustness(b, tr));
    ra.iter().zip(&rb).map(|(x, y)| op(*x, *y)).collect()
}

pub const SIGNALS: [&str; 3] = ["a", "b", "c"];

fn random_interval<R: Rng>(rng: &mut R) -> Interval {
    let a = [0.0, 0.0, 0.1, 0.5, 1.0, 2.0][rng.random_range(0..6)];
    let b = match rng.random_range(0..5) {
        0 => f64::INFINITY,
        1 => a,
        _ => a + [0.1, 0.3, 1.0, 2.5, 5.0][rng.random_range(0..5)],
    };
    Interval::new(a, b)
}

/// Random formula with `Formula::depth() <= depth`.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    if depth <= 1 || rng.random_bool(0.2) {
        let cmp = [Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge][rng.random_range(0..4)];
        let c = (rng.random_range(-3.0..3.0f64) * 4.0).round() / 4.0;
        return Formula::atom(SIGNALS[rng.random_range(0..3)], cmp, c);
    }
    let sub = |rng: &mut R| Box::new(random_formula(rng, depth - 1));
    match rng.random_range(0..7) {
        0 => Formula::Not(sub(rng)),
        1 => Formula::And(sub(rng), sub(rng)),
        2 => Formula::Or(sub(rng), sub(rng)),
        3 => Formula::Implies(sub(rng), sub(rng)),
        4 => Formula::Globally(random_interval(rng), sub(rng)),
        5 => Formula::Eventually(random_interval(rng), sub(rng)),
        _ => Formula::Until(random_interval(rng), sub(rng), sub(rng)),
    }
}

/// Random trace on an irregular time grid; values are quarter-rounded so ties occur.
pub fn random_trace<R: Rng>(rng: &mut R, max_len: usize) -> SignalTable {
    let n = rng.random_range(1..=max_len);
    let mut times = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        times.push(t);
        t += [0.05, 0.1, 0.1, 0.25, 0.5][rng.random_range(0..5)];
    }
    let mut tr = SignalTable::new(times);
    for s in SIGNALS {
        let v = (0..n).map(|_| (rng.random_range(-4.0..4.0f64) * 4.0).round() / 4.0).collect();
        tr.insert(s, v);
    }
    tr
}

// ---------------------------------------------------------------- Pareto

pub fn brute_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Fronts by repeated peeling: front k holds the points no remaining point dominates.
pub fn brute_fronts(pts: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..pts.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| brute_dominates(&pts[j], &pts[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        out.push(front);
    }
    out
}

// ---------------------------------------------------------------- geometry

/// Intersection-over-ground-truth by counting the points of a `step`-spaced
/// grid over the ground-truth box that fall inside `pred`. Each grid row is
/// intersected with `pred` analytically, so the count is exact for the grid.
pub fn grid_iogt(pred: &OrientedRect, gt: &OrientedRect, step: f64) -> f64 {
    let (u, v) = (Vec2::from_angle(gt.heading), Vec2::from_angle(gt.heading + std::f64::consts::FRAC_PI_2));
    let nx = (2.0 * gt.half_extents.x / step).round() as i64;
    let ny = (2.0 * gt.half_extents.y / step).round() as i64;
    let pu = Vec2::from_angle(pred.heading);
    let pv = Vec2::from_angle(pred.heading + std::f64::consts::FRAC_PI_2);
    let mut inside = 0i64;
    for r in 0..ny {
        let ly = -gt.half_extents.y + (r as f64 + 0.5) * step;
        // points p(s) = c + u*s + v*ly, s = -hl + (k + 0.5) * step
        let base = gt.center + v * ly - pred.center;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut empty = false;
        for (axis, half) in [(pu, pred.half_extents.x), (pv, pred.half_extents.y)] {
            // |axis . (base + u s)| <= half
            let c0 = axis.dot(base);
            let c1 = axis.dot(u);
            if c1.abs() < 1e-15 {
                if c0.abs() > half {
                    empty = true;
                }
                continue;
            }
            let (a, b) = ((-half - c0) / c1, (half - c0) / c1);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        if empty || hi < lo {
            continue;
        }
        // count k in [0, nx) with lo <= -hl + (k + 0.5) step <= hi
        let k_lo = ((lo + gt.half_extents.x) / step - 0.5).ceil().max(0.0) as i64;
        let k_hi = ((hi + gt.half_extents.x) / step - 0.5).floor().min((nx - 1) as f64) as i64;
        if k_hi >= k_lo {
            inside += k_hi - k_lo + 1;
        }
    }
    inside as f64 / (nx * ny) as f64
}

// ---------------------------------------------------------------- braking

/// Distance from the point where the AEB condition first holds to standstill,
/// with the brake decided once per control cycle. Straight run at `v0` along
/// a random heading towards a standing pedestrian.
pub fn stop_distance<R: Rng>(rng: &mut R, v0: f64, params: &RequirementParams, dt: f64) -> (f64, bool, Vec<EgoState>) {
    let odd = OddSpec::default();
    let heading = rng.random_range(-PI..PI);
    let origin = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let dir = Vec2::from_angle(heading);
    let path = PathPlan::from_points((0..=400).map(|k| origin + dir * (k as f64 * 0.25)).collect(), 0.0).unwrap();
    let mut ego = EgoState::at(origin + dir * 5.0, heading);
    ego.v = v0;
    let lateral = rng.random_range(-ego.half_width..ego.half_width);
    let ahead = ego.front_length() + 0.3 + rng.random_range(6.0..12.0);
    let ped = TrackedObject {
        class_label: "pedestrian".into(),
        pos: ego.position() + dir * ahead + dir.rotate(PI / 2.0) * lateral,
        vel: Vec2::ZERO,
        radius: 0.3,
    };
    let cfg = AebConfig::default();
    let per_cycle = (params.t_cycle / dt).round() as usize;
    // random phase of the control grid relative to the approach
    let phase = rng.random_range(0..per_cycle);
    let mut aeb = AebState::default();
    let mut cmd = Command { a_cmd: 0.0, delta_cmd: 0.0 };
    let mut trigger: Option<Vec2> = None;
    let mut hit = false;
    let mut states = vec![ego];
    for k in 0..2000 {
        let probe = aeb_condition(std::slice::from_ref(&ped), &ego, &path, params, &cfg);
        if probe && trigger.is_none() {
            trigger = Some(ego.position());
        }
        if (k + phase) % per_cycle == 0 {
            let (brake, _) = aeb.decide(&[ped.clone()], &ego, &path, params, &cfg);
            cmd.a_cmd = if brake { odd.ego_a_min } else { 0.0 };
        }
        ego = ego_step(&ego, &cmd, dt, &odd);
        states.push(ego);
        hit |= ego.footprint().signed_distance(ped.pos) < ped.radius;
        if trigger.is_some() && ego.v == 0.0 {
            break;
        }
    }
    let d = trigger.map_or(f64::NAN, |p| (ego.position() - p).dot(dir));
    (d, hit, states)
}
