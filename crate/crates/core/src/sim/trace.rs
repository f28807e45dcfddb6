//! Per-sample episode record and its CSV / JSON serializations.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::perception::{Detection, ObjectTruth};
use crate::sim::{CollisionEvent, Command, EgoState};
use crate::stl::SignalTable;

/// Which safety function commanded the brake at a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrakeSource {
    #[default]
    None,
    Aeb,
    Shield,
    Both,
}

impl BrakeSource {
    pub fn code(self) -> u8 {
        match self {
            BrakeSource::None => 0,
            BrakeSource::Aeb => 1,
            BrakeSource::Shield => 2,
            BrakeSource::Both => 3,
        }
    }

    pub fn combine(aeb: bool, shield: bool) -> Self {
        match (aeb, shield) {
            (false, false) => BrakeSource::None,
            (true, false) => BrakeSource::Aeb,
            (false, true) => BrakeSource::Shield,
            (true, true) => BrakeSource::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub ego: EgoState,
    pub cmd: Command,
    /// Signed footprint gap to the nearest walking agent; capped when none exist.
    pub min_ped_dist: f64,
    /// Time to collision against the nearest in-path detection.
    pub ttc: f64,
    /// Time to collision computed from ground truth.
    pub ttc_gt: f64,
    pub risk: f64,
    pub brake: BrakeSource,
    pub collision: bool,
    pub n_detections: usize,
    pub cross_track: f64,
    pub loc_error: f64,
    pub uc01_ok: bool,
    pub uc01_margin: f64,
    pub aeb_condition: bool,
    pub path_clearance_margin: f64,
    pub truth: Vec<ObjectTruth>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub goal_reached: bool,
    pub collision: Option<CollisionEvent>,
    pub timed_out: bool,
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub samples: Vec<TraceSample>,
    pub events: Vec<TraceEvent>,
    pub summary: EpisodeSummary,
    /// Wall-clock duration of every plan-act cycle, seconds. Not part of the
    /// deterministic outputs.
    #[serde(skip)]
    pub cycle_times: Vec<(f64, f64)>,
}

pub const TRACE_COLUMNS: [&str; 15] = [
    "t",
    "ego_x",
    "ego_y",
    "ego_theta",
    "ego_v",
    "ego_a",
    "ego_delta",
    "cmd_a",
    "cmd_delta",
    "min_ped_dist",
    "ttc",
    "risk",
    "brake_flag",
    "collision",
    "n_detections",
];

/// Shortest decimal representation of `x` rounded to 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn bool01(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl TraceSample {
    fn csv_values(&self) -> [f64; 15] {
        [
            self.t,
            self.ego.x,
            self.ego.y,
            self.ego.theta,
            self.ego.v,
            self.ego.a,
            self.ego.delta,
            self.cmd.a_cmd,
            self.cmd.delta_cmd,
            self.min_ped_dist,
            self.ttc,
            self.risk,
            self.brake.code() as f64,
            bool01(self.collision),
            self.n_detections as f64,
        ]
    }

    /// Extra signals used by requirement formulas, in [`SIGNAL_COLUMNS`] order.
    fn signal_values(&self) -> Vec<f64> {
        vec![
            self.ego.v.abs(),
            self.cross_track,
            self.loc_error,
            bool01(self.uc01_ok),
            self.uc01_margin,
            bool01(self.aeb_condition),
            self.path_clearance_margin,
            self.ttc_gt,
            bool01(matches!(self.brake, BrakeSource::Aeb | BrakeSource::Both)),
            bool01(matches!(self.brake, BrakeSource::Shield | BrakeSource::Both)),
        ]
    }
}

pub const SIGNAL_COLUMNS: [&str; 10] = [
    "ego_speed",
    "cross_track",
    "loc_error",
    "uc01_ok",
    "uc01_margin",
    "aeb_condition",
    "path_clearance_margin",
    "ttc_gt",
    "aeb_active",
    "shield_active",
];

/// Sample-and-hold `(t, duration)` cycle timings onto the table's time base.
/// Samples before the first cycle get the first duration.
pub fn add_cycle_times(table: &mut SignalTable, cycles: &[(f64, f64)]) {
    if cycles.is_empty() {
        return;
    }
    let col = table
        .times
        .iter()
        .map(|t| {
            let k = cycles.partition_point(|c| c.0 <= *t + crate::stl::TIME_EPS);
            cycles[k.saturating_sub(1)].1
        })
        .collect();
    table.insert("cycle_time", col);
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut s = TRACE_COLUMNS.join(",");
        s.push('\n');
        for smp in &self.samples {
            let row: Vec<String> = smp.csv_values().iter().map(|v| fmt_sig9(*v)).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    /// All trace columns plus the derived requirement signals.
    pub fn signals_csv(&self) -> String {
        let table = self.signal_table();
        table.to_csv()
    }

    pub fn signal_table(&self) -> SignalTable {
        let mut table = SignalTable::new(self.samples.iter().map(|s| s.t).collect());
        let rows: Vec<([f64; 15], Vec<f64>)> = self
            .samples
            .iter()
            .map(|s| (s.csv_values(), s.signal_values()))
            .collect();
        for (k, name) in TRACE_COLUMNS.iter().enumerate().skip(1) {
            table.insert(name, rows.iter().map(|r| r.0[k]).collect());
        }
        for (k, name) in SIGNAL_COLUMNS.iter().enumerate() {
            table.insert(name, rows.iter().map(|r| r.1[k]).collect());
        }
        table
    }

    /// Signal table plus a `cycle_time` column holding the duration of the
    /// most recent plan-act cycle at each sample.
    pub fn monitor_table(&self) -> SignalTable {
        let mut table = self.signal_table();
        add_cycle_times(&mut table, &self.cycle_times);
        table
    }

    pub fn sidecar_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            scenario_id: &'a str,
            seed: u64,
            config_hash: &'a str,
            events: &'a [TraceEvent],
            summary: &'a EpisodeSummary,
            samples: usize,
        }
        let sc = Sidecar {
            scenario_id: &self.scenario_id,
            seed: self.seed,
            config_hash: &self.config_hash,
            events: &self.events,
            summary: &self.summary,
            samples: self.samples.len(),
        };
        serde_json::to_string_pretty(&sc).expect("sidecar serializes")
    }

    pub fn cycle_time_json(&self) -> String {
        let v: Vec<[f64; 2]> = self.cycle_times.iter().map(|(t, d)| [*t, *d]).collect();
        serde_json::to_string(&v).expect("timings serialize")
    }

    /// Writes `<stem>.csv`, `<stem>.json`, `<stem>.signals.csv` and `<stem>.timing.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.sidecar_json())?;
        std::fs::write(dir.join(format!("{stem}.signals.csv")), self.signals_csv())?;
        std::fs::write(dir.join(format!("{stem}.timing.json")), self.cycle_time_json())?;
        Ok(())
    }

    pub fn collided(&self) -> bool {
        self.summary.collision.is_some()
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.ego.v.abs()).fold(0.0, f64::max)
    }

    pub fn min_ped_dist(&self) -> f64 {
        self.samples.iter().map(|s| s.min_ped_dist).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(0.1), "0.1");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(-2.0), "-2");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(f64::INFINITY), "inf");
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(-0.0), "0");
    }
}
