//! Functional scenario templates, concrete scenarios and the scenario database.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::ParkingLot;
use crate::odd::ParameterRange;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    pub(crate) fn from_json(path: &Path, e: serde_json::Error) -> Self {
        ScenarioError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub const PEDESTRIAN: &str = "pedestrian";
pub const ANIMAL: &str = "animal";

fn default_class() -> String {
    PEDESTRIAN.to_string()
}

fn default_cruise() -> f64 {
    2.5
}

/// Per-actor parameters of a walking agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianParams {
    pub spawn_bay: usize,
    pub walk_speed: f64,
    /// Ego-to-agent distance at or below which the agent starts walking.
    pub trigger_distance: f64,
    /// Deviation from the straight walk out of the bay, radians.
    pub heading_offset: f64,
    #[serde(default = "default_class")]
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcreteScenario {
    pub scenario_id: String,
    pub seed: u64,
    /// Start position of the ego rear axle along the lane, measured from the drop-off zone.
    pub ego_start_s: f64,
    pub goal_bay: usize,
    pub pedestrians: Vec<PedestrianParams>,
    pub parked_vehicle_bays: Vec<usize>,
    pub perception_noise_scale: f64,
    #[serde(default = "default_cruise")]
    pub ego_cruise_speed: f64,
}

impl ConcreteScenario {
    /// Two pedestrians walk out of adjacent north bays ahead of the ego, the
    /// farther one partly hidden behind the nearer one and a parked car.
    pub fn occluded_crossing() -> Self {
        Self {
            scenario_id: "occluded-crossing".into(),
            seed: 0,
            ego_start_s: 5.0,
            goal_bay: 12,
            pedestrians: vec![
                PedestrianParams {
                    spawn_bay: 6,
                    walk_speed: 1.0,
                    trigger_distance: 12.0,
                    heading_offset: 0.0,
                    class_label: default_class(),
                },
                PedestrianParams {
                    spawn_bay: 7,
                    walk_speed: 1.4,
                    trigger_distance: 14.0,
                    heading_offset: 0.0,
                    class_label: default_class(),
                },
            ],
            parked_vehicle_bays: vec![2, 4, 5, 8, 9, 17, 18, 21, 22, 25],
            perception_noise_scale: 1.0,
            ego_cruise_speed: default_cruise(),
        }
    }

    /// Plain parking run: no walking agents.
    pub fn nominal() -> Self {
        Self {
            scenario_id: "nominal".into(),
            pedestrians: Vec::new(),
            ..Self::occluded_crossing()
        }
    }

    /// A slow animal wanders onto the driveway ahead of the ego.
    pub fn animal_crossing() -> Self {
        Self {
            scenario_id: "animal-crossing".into(),
            pedestrians: vec![PedestrianParams {
                spawn_bay: 7,
                walk_speed: 0.4,
                trigger_distance: 30.0,
                heading_offset: 0.0,
                class_label: ANIMAL.into(),
            }],
            parked_vehicle_bays: vec![2, 4, 9, 17, 18, 21, 22, 25],
            ..Self::occluded_crossing()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (i, p) in self.pedestrians.iter().enumerate() {
            if p.spawn_bay == self.goal_bay {
                return Err(ScenarioError::Config(format!(
                    "ped{} spawn bay {} is the goal bay",
                    i + 1,
                    p.spawn_bay
                )));
            }
            if self.parked_vehicle_bays.contains(&p.spawn_bay) {
                return Err(ScenarioError::Config(format!(
                    "ped{} spawn bay {} holds a parked vehicle",
                    i + 1,
                    p.spawn_bay
                )));
            }
        }
        Ok(())
    }

    /// Read a named scalar parameter (`ego_start_s`, `ped2.walk_speed`, ...).
    pub fn get_parameter(&self, name: &str) -> Option<f64> {
        match name {
            "ego_start_s" => Some(self.ego_start_s),
            "ego_cruise_speed" => Some(self.ego_cruise_speed),
            "perception_noise_scale" => Some(self.perception_noise_scale),
            "goal_bay" => Some(self.goal_bay as f64),
            _ => {
                let (idx, field) = split_ped_name(name)?;
                let p = self.pedestrians.get(idx)?;
                match field {
                    "walk_speed" => Some(p.walk_speed),
                    "trigger_distance" => Some(p.trigger_distance),
                    "heading_offset" => Some(p.heading_offset),
                    "spawn_bay" => Some(p.spawn_bay as f64),
                    _ => None,
                }
            }
        }
    }

    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<(), ScenarioError> {
        let unknown = || ScenarioError::Config(format!("unknown scenario parameter `{name}`"));
        match name {
            "ego_start_s" => self.ego_start_s = value,
            "ego_cruise_speed" => self.ego_cruise_speed = value,
            "perception_noise_scale" => self.perception_noise_scale = value,
            "goal_bay" => self.goal_bay = value.round() as usize,
            _ => {
                let (idx, field) = split_ped_name(name).ok_or_else(unknown)?;
                let p = self.pedestrians.get_mut(idx).ok_or_else(unknown)?;
                match field {
                    "walk_speed" => p.walk_speed = value,
                    "trigger_distance" => p.trigger_distance = value,
                    "heading_offset" => p.heading_offset = value,
                    "spawn_bay" => p.spawn_bay = value.round() as usize,
                    _ => return Err(unknown()),
                }
            }
        }
        Ok(())
    }
}

/// `ped2.walk_speed` -> `(1, "walk_speed")`.
fn split_ped_name(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix("ped")?;
    let (num, field) = rest.split_once('.')?;
    let n: usize = num.parse().ok()?;
    (n >= 1).then_some((n - 1, field))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorRole {
    Ego,
    /// Nearer pedestrian, may occlude the walk-out pedestrian.
    OccluderSidePedestrian,
    WalkOutPedestrian,
    ParkedVehicle,
    /// Object class absent from the detector's training set.
    UnknownObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalScenario {
    pub name: String,
    pub map_layout: ParkingLot,
    pub actor_roles: Vec<ActorRole>,
    pub parameter_ranges: Vec<ParameterRange>,
    /// Values of everything not covered by a range.
    pub baseline: ConcreteScenario,
}

impl FunctionalScenario {
    pub fn occluded_crossing() -> Self {
        Self {
            name: "occluded_crossing".into(),
            map_layout: ParkingLot::default_lot(),
            actor_roles: vec![
                ActorRole::Ego,
                ActorRole::OccluderSidePedestrian,
                ActorRole::WalkOutPedestrian,
                ActorRole::ParkedVehicle,
            ],
            parameter_ranges: default_crossing_ranges(),
            baseline: ConcreteScenario::occluded_crossing(),
        }
    }

    pub fn animal() -> Self {
        Self {
            name: "animal".into(),
            map_layout: ParkingLot::default_lot(),
            actor_roles: vec![ActorRole::Ego, ActorRole::UnknownObject, ActorRole::ParkedVehicle],
            parameter_ranges: vec![ParameterRange::continuous("ego_start_s", 0.0, 10.0)],
            baseline: ConcreteScenario::animal_crossing(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for r in &self.parameter_ranges {
            if !(r.lo.is_finite() && r.hi.is_finite()) || r.lo > r.hi {
                return Err(ScenarioError::Config(format!(
                    "range `{}` is empty: [{}, {}]",
                    r.name, r.lo, r.hi
                )));
            }
            if self.baseline.get_parameter(&r.name).is_none() {
                return Err(ScenarioError::Config(format!(
                    "range `{}` does not name a scenario parameter",
                    r.name
                )));
            }
        }
        Ok(())
    }

    /// Decode a normalized genome (one coordinate per range) into a concrete scenario.
    pub fn decode(&self, genome: &[f64], seed: u64) -> Result<ConcreteScenario, ScenarioError> {
        if genome.len() != self.parameter_ranges.len() {
            return Err(ScenarioError::Config(format!(
                "genome has {} genes, space has {} parameters",
                genome.len(),
                self.parameter_ranges.len()
            )));
        }
        let mut sc = self.baseline.clone();
        for (r, g) in self.parameter_ranges.iter().zip(genome) {
            sc.set_parameter(&r.name, r.decode(*g))?;
        }
        sc.seed = seed;
        sc.scenario_id = format!("{}-{}", self.name, genome_tag(genome, seed));
        Ok(sc)
    }

    /// Normalized coordinates of a concrete scenario in this space.
    pub fn encode(&self, sc: &ConcreteScenario) -> Vec<f64> {
        self.parameter_ranges
            .iter()
            .map(|r| r.encode(sc.get_parameter(&r.name).unwrap_or(r.lo)))
            .collect()
    }
}

/// Default search space around the two-pedestrian walk-out.
pub fn default_crossing_ranges() -> Vec<ParameterRange> {
    let mut v = vec![ParameterRange::continuous("ego_start_s", 0.0, 10.0)];
    for i in 1..=2 {
        v.push(ParameterRange::continuous(&format!("ped{i}.walk_speed"), 0.5, 2.0));
        v.push(ParameterRange::continuous(&format!("ped{i}.trigger_distance"), 2.0, 15.0));
        v.push(ParameterRange::continuous(&format!("ped{i}.heading_offset"), -0.3, 0.3));
    }
    v.push(ParameterRange::continuous("perception_noise_scale", 0.5, 1.5));
    v
}

/// Short stable identifier for a decoded genome.
fn genome_tag(genome: &[f64], seed: u64) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for g in genome {
        h.update(g.to_bits().to_le_bytes());
    }
    h.update(seed.to_le_bytes());
    hex::encode(&h.finalize()[..6])
}

/// Draw a concrete scenario uniformly from the functional scenario's ranges.
pub fn sample_scenario(fs: &FunctionalScenario, seed: u64) -> Result<ConcreteScenario, ScenarioError> {
    fs.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genome: Vec<f64> = fs.parameter_ranges.iter().map(|_| rng.random::<f64>()).collect();
    let mut sc = fs.decode(&genome, seed)?;
    sc.scenario_id = format!("{}-s{seed}", fs.name);
    Ok(sc)
}

pub fn store_database(scenarios: &[ConcreteScenario], path: &Path) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(scenarios).map_err(|e| ScenarioError::from_json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| ScenarioError::io(path, e))
}

pub fn load_database(path: &Path) -> Result<Vec<ConcreteScenario>, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::from_json(path, e))
}

/// Read a single scenario file.
pub fn load_scenario(path: &Path) -> Result<ConcreteScenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::from_json(path, e))
}

pub fn load_functional(path: &Path) -> Result<FunctionalScenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let fs: FunctionalScenario =
        serde_json::from_str(&text).map_err(|e| ScenarioError::from_json(path, e))?;
    fs.validate()?;
    Ok(fs)
}

pub fn load_ranges(path: &Path) -> Result<Vec<ParameterRange>, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::from_json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odd::{check_in_odd, OddSpec};

    #[test]
    fn sampling_is_deterministic() {
        let fs = FunctionalScenario::occluded_crossing();
        assert_eq!(sample_scenario(&fs, 7).unwrap(), sample_scenario(&fs, 7).unwrap());
        assert_ne!(sample_scenario(&fs, 7).unwrap(), sample_scenario(&fs, 8).unwrap());
    }

    #[test]
    fn degenerate_range_is_exact() {
        let mut fs = FunctionalScenario::occluded_crossing();
        fs.parameter_ranges = vec![ParameterRange::continuous("ped1.walk_speed", 1.0, 1.0)];
        let sc = sample_scenario(&fs, 3).unwrap();
        assert_eq!(sc.pedestrians[0].walk_speed, 1.0);
    }

    #[test]
    fn empty_range_is_config_error() {
        let mut fs = FunctionalScenario::occluded_crossing();
        fs.parameter_ranges[1].lo = 3.0;
        assert!(matches!(sample_scenario(&fs, 0), Err(ScenarioError::Config(_))));
    }

    #[test]
    fn unknown_parameter_is_config_error() {
        let mut fs = FunctionalScenario::occluded_crossing();
        fs.parameter_ranges.push(ParameterRange::continuous("ped9.walk_speed", 0.0, 1.0));
        assert!(fs.validate().is_err());
    }

    #[test]
    fn thousand_samples_stay_in_range() {
        let fs = FunctionalScenario::occluded_crossing();
        let speeds: Vec<f64> = (0..1000)
            .map(|s| sample_scenario(&fs, s).unwrap().pedestrians[0].walk_speed)
            .collect();
        let min = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = speeds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= 0.5 && max <= 2.0, "{min} {max}");
        // and the range is actually explored
        assert!(min < 0.6 && max > 1.9);
    }

    #[test]
    fn sampled_scenarios_are_inside_odd() {
        let fs = FunctionalScenario::occluded_crossing();
        let odd = OddSpec::default();
        for s in 0..500 {
            let sc = sample_scenario(&fs, s).unwrap();
            assert!(check_in_odd(&sc, &odd).in_odd, "seed {s}");
            sc.validate().unwrap();
        }
    }

    #[test]
    fn parameter_names_round_trip() {
        let mut sc = ConcreteScenario::occluded_crossing();
        sc.set_parameter("ped2.trigger_distance", 4.5).unwrap();
        assert_eq!(sc.get_parameter("ped2.trigger_distance"), Some(4.5));
        assert!(sc.set_parameter("ped3.walk_speed", 1.0).is_err());
        assert!(sc.set_parameter("bogus", 1.0).is_err());
    }

    #[test]
    fn spawn_in_goal_bay_rejected() {
        let mut sc = ConcreteScenario::occluded_crossing();
        sc.pedestrians[0].spawn_bay = sc.goal_bay;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn encode_inverts_decode() {
        let fs = FunctionalScenario::occluded_crossing();
        let g = vec![0.25; fs.parameter_ranges.len()];
        let sc = fs.decode(&g, 1).unwrap();
        for (a, b) in fs.encode(&sc).iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
