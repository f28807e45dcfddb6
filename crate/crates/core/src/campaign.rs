//! Batch plumbing behind the command-line entry points: config loading,
//! scenario runs with requirement reports, search output directories,
//! mining and aggregate reports. Every output directory gets a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ce::{self, FailureRecord, Observation};
use crate::odd::{OddSpec, ParameterRange};
use crate::perception::SensorConfig;
use crate::risk::FuzzyRuleBase;
use crate::scenario::{self, ConcreteScenario, FunctionalScenario};
use crate::search::{self, SearchConfig, SearchResult, SimEvaluator};
use crate::sim::trace::add_cycle_times;
use crate::sim::{run_episode, EpisodeConfig, EpisodeError, Trace};
use crate::stl::{self, parse_requirements, Requirement, RequirementReport, SignalTable, Verdict};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Stl(#[from] stl::StlError),
    #[error(transparent)]
    Search(#[from] search::SearchError),
    #[error(transparent)]
    Ce(#[from] ce::CeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> CampaignError {
    CampaignError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String, CampaignError> {
    std::fs::read_to_string(path).map_err(|e| file_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CampaignError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| file_err(path, e))
}

/// Main configuration document. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub odd: Option<PathBuf>,
    pub functional_scenario: Option<PathBuf>,
    pub requirements: Option<PathBuf>,
    pub rule_base: Option<PathBuf>,
    pub aeb_enabled: bool,
    pub shield_enabled: bool,
    pub ground_truth_aeb: bool,
    pub perfect_perception: bool,
    pub dt: f64,
    pub t_max: f64,
    pub seeds: Vec<u64>,
    pub workers: usize,
    /// Full episode settings; the fields above override the matching entries.
    pub episode: EpisodeConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let episode = EpisodeConfig::default();
        Self {
            odd: None,
            functional_scenario: None,
            requirements: None,
            rule_base: None,
            aeb_enabled: true,
            shield_enabled: true,
            ground_truth_aeb: false,
            perfect_perception: false,
            dt: episode.dt,
            t_max: episode.t_max,
            seeds: vec![0],
            workers: 0,
            episode,
        }
    }
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let mut c: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.odd, &mut c.functional_scenario, &mut c.requirements, &mut c.rule_base]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.seeds.is_empty() {
            return Err(CampaignError::Config("seeds must not be empty".into()));
        }
        for p in [&self.odd, &self.functional_scenario, &self.requirements, &self.rule_base]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(file_err(p, "referenced file does not exist"));
            }
        }
        Ok(())
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig, CampaignError> {
        let mut e = self.episode.clone();
        if let Some(p) = &self.odd {
            e.odd = read_json::<OddSpec>(p)?;
        }
        if let Some(p) = &self.rule_base {
            e.rules = FuzzyRuleBase::from_json(&read_text(p)?).map_err(|err| file_err(p, err))?;
        }
        if self.perfect_perception {
            let classes = e.sensor.known_classes.clone();
            e.sensor = SensorConfig {
                known_classes: classes,
                ..SensorConfig::perfect()
            };
        }
        e.stack.aeb.enabled = self.aeb_enabled;
        e.stack.aeb.use_ground_truth = self.ground_truth_aeb;
        e.shield.enabled = self.shield_enabled;
        e.dt = self.dt;
        e.t_max = self.t_max;
        e.validate().map_err(|err| CampaignError::Config(err.to_string()))?;
        Ok(e)
    }

    pub fn functional(&self) -> Result<FunctionalScenario, CampaignError> {
        match &self.functional_scenario {
            Some(p) => scenario::load_functional(p).map_err(|e| file_err(p, e)),
            None => Ok(FunctionalScenario::occluded_crossing()),
        }
    }

    pub fn requirement_set(&self, ecfg: &EpisodeConfig) -> Result<Vec<Requirement>, CampaignError> {
        match &self.requirements {
            Some(p) => load_requirements(p),
            None => Ok(stl::requirement_library(&ecfg.params, &ecfg.odd)),
        }
    }
}

pub fn load_requirements(path: &Path) -> Result<Vec<Requirement>, CampaignError> {
    let text = read_text(path)?;
    let parsed = parse_requirements(&text).map_err(|(line, e)| file_err(path, format!("line {line}: {e}")))?;
    Ok(parsed
        .into_iter()
        .map(|(name, formula)| Requirement { name, formula })
        .collect())
}

fn uses_timing(r: &Requirement) -> bool {
    r.formula.signals().contains(&"cycle_time")
}

/// Evaluate every requirement whose signals are present; missing signals are an error.
pub fn evaluate_all(reqs: &[Requirement], table: &SignalTable) -> Result<Vec<RequirementReport>, CampaignError> {
    reqs.iter()
        .map(|r| stl::evaluate(&r.name, &r.formula, table).map_err(CampaignError::from))
        .collect()
}

pub fn any_violated(reports: &[RequirementReport]) -> bool {
    reports.iter().any(|r| r.verdict == Verdict::Violated)
}

fn reports_json(reports: &[RequirementReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Outcome of one scenario run written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub stem: String,
    pub scenario: ConcreteScenario,
    pub trace: Trace,
    /// Requirements over deterministic signals.
    pub reports: Vec<RequirementReport>,
    /// Requirements over wall-clock cycle timing.
    pub timing_reports: Vec<RequirementReport>,
}

impl RunOutcome {
    pub fn violated(&self) -> bool {
        any_violated(&self.reports) || any_violated(&self.timing_reports)
    }
}

/// Run one scenario and evaluate the requirements on its trace.
pub fn run_one(sc: &ConcreteScenario, ecfg: &EpisodeConfig, reqs: &[Requirement]) -> Result<RunOutcome, CampaignError> {
    let trace = run_episode(sc, ecfg)?;
    let (timed, plain): (Vec<Requirement>, Vec<Requirement>) = reqs.iter().cloned().partition(uses_timing);
    let reports = evaluate_all(&plain, &trace.signal_table())?;
    let timing_reports = evaluate_all(&timed, &trace.monitor_table())?;
    Ok(RunOutcome {
        stem: format!("{}-s{}", sc.scenario_id, sc.seed),
        scenario: sc.clone(),
        trace,
        reports,
        timing_reports,
    })
}

/// Trace files plus `<stem>.report.json` and `<stem>.report.timing.json`.
pub fn write_run(out: &Path, o: &RunOutcome) -> Result<(), CampaignError> {
    o.trace.write_files(out, &o.stem)?;
    std::fs::write(out.join(format!("{}.report.json", o.stem)), reports_json(&o.reports))?;
    std::fs::write(
        out.join(format!("{}.report.timing.json", o.stem)),
        reports_json(&o.timing_reports),
    )?;
    Ok(())
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// `run`: the scenario once per configured seed. Returns whether any requirement was violated.
pub fn cmd_run(scenario_path: &Path, cc: &CampaignConfig, out: &Path) -> Result<Vec<RunOutcome>, CampaignError> {
    let base = scenario::load_scenario(scenario_path).map_err(|e| file_err(scenario_path, e))?;
    let ecfg = cc.episode_config()?;
    let reqs = cc.requirement_set(&ecfg)?;
    std::fs::create_dir_all(out)?;
    let outcomes: Vec<Result<RunOutcome, CampaignError>> = pool(cc.workers).install(|| {
        cc.seeds
            .par_iter()
            .map(|s| {
                let mut sc = base.clone();
                sc.seed = *s;
                run_one(&sc, &ecfg, &reqs)
            })
            .collect()
    });
    let outcomes: Vec<RunOutcome> = outcomes.into_iter().collect::<Result<_, _>>()?;
    for o in &outcomes {
        write_run(out, o)?;
    }
    write_manifest(out, "run", &cc.seeds)?;
    Ok(outcomes)
}

/// `search`: NSGA-II (or random sampling) over a parameter space.
pub fn cmd_search(
    space: Option<&Path>,
    cc: &CampaignConfig,
    scfg: &SearchConfig,
    algorithm: &str,
    out: &Path,
) -> Result<SearchResult, CampaignError> {
    let mut fs = cc.functional()?;
    if let Some(p) = space {
        fs.parameter_ranges = scenario::load_ranges(p).map_err(|e| file_err(p, e))?;
    }
    fs.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
    scfg.validate()?;
    let ecfg = cc.episode_config()?;
    let ev = SimEvaluator {
        space: fs.clone(),
        config: ecfg.clone(),
    };
    let n = fs.parameter_ranges.len();
    let res = match algorithm {
        "nsga2" => search::nsga2_run(&ev, n, scfg)?,
        "random" => search::random_run(&ev, n, scfg)?,
        other => return Err(CampaignError::Config(format!("unknown algorithm `{other}`"))),
    };
    write_search(out, &fs, &ev, &res, scfg.workers)?;
    Ok(res)
}

/// Observations (parameter vector + outcome) of every valid archive member.
pub fn archive_observations(fs: &FunctionalScenario, res: &SearchResult) -> Vec<Observation> {
    res.archive
        .iter()
        .filter(|i| i.valid)
        .filter_map(|i| {
            let sc = fs.decode(&i.genome, i.seed).ok()?;
            Some(Observation {
                parameters: fs
                    .parameter_ranges
                    .iter()
                    .filter_map(|r| sc.get_parameter(&r.name).map(|v| (r.name.clone(), v)))
                    .collect(),
                passed: !i.failed,
            })
        })
        .collect()
}

pub fn write_search(
    out: &Path,
    fs: &FunctionalScenario,
    ev: &SimEvaluator,
    res: &SearchResult,
    workers: usize,
) -> Result<(), CampaignError> {
    std::fs::create_dir_all(out.join("failures"))?;
    let names: Vec<String> = fs.parameter_ranges.iter().map(|r| r.name.clone()).collect();
    std::fs::write(out.join("archive.csv"), search::archive_csv(res, &names))?;
    std::fs::write(out.join("front.json"), search::front_json(res))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        algorithm: &'a str,
        seed: u64,
        evaluations: usize,
        failures: usize,
        front: &'a [usize],
        population: &'a [usize],
        parameters: &'a [String],
    }
    let summary = Summary {
        algorithm: &res.algorithm,
        seed: res.seed,
        evaluations: res.evaluations,
        failures: res.failures.len(),
        front: &res.front,
        population: &res.population,
        parameters: &names,
    };
    std::fs::write(
        out.join("result.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    // failing episodes are re-simulated; runs are deterministic so this
    // reproduces the searched traces exactly
    let reqs = stl::requirement_library(&ev.config.params, &ev.config.odd);
    let failing: Vec<Result<Option<(RunOutcome, FailureRecord)>, CampaignError>> = pool(workers).install(|| {
        res.failures
            .par_iter()
            .map(|&i| {
                let ind = &res.archive[i];
                let sc = fs
                    .decode(&ind.genome, ind.seed)
                    .map_err(|e| CampaignError::Config(e.to_string()))?;
                // faulted episodes have no complete trace to store
                let o = match run_one(&sc, &ev.config, &reqs) {
                    Ok(o) => o,
                    Err(CampaignError::Episode(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let path = format!("failures/{}.csv", o.stem);
                Ok(ce::failure_record(&sc, &o.trace, &o.reports, &ev.config.sensor, &ev.config.shield, Some(path))
                    .map(|rec| (o, rec)))
            })
            .collect()
    });
    let mut records = Vec::new();
    for f in failing {
        if let Some((o, rec)) = f? {
            o.trace.write_files(&out.join("failures"), &o.stem)?;
            records.push(rec);
        }
    }
    let lines: String = records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect();
    std::fs::write(out.join("failures.jsonl"), lines)?;
    let obs: String = archive_observations(fs, res)
        .iter()
        .map(|o| serde_json::to_string(o).expect("observation serializes") + "\n")
        .collect();
    std::fs::write(out.join("observations.jsonl"), obs)?;
    write_manifest(out, &res.algorithm, &[res.seed])?;
    Ok(())
}

/// Observations and failure records from a JSON-lines file.
pub fn load_observations(path: &Path) -> Result<(Vec<Observation>, Vec<FailureRecord>), CampaignError> {
    let text = read_text(path)?;
    let mut obs = Vec::new();
    let mut recs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| file_err(path, format!("line {}: {e}", i + 1)))?;
        if v.get("violated").is_some() {
            let r: FailureRecord =
                serde_json::from_value(v).map_err(|e| file_err(path, format!("line {}: {e}", i + 1)))?;
            recs.push(r);
        } else {
            let o: Observation = serde_json::from_value(v).map_err(|e| file_err(path, format!("line {}: {e}", i + 1)))?;
            obs.push(o);
        }
    }
    Ok((obs, recs))
}

#[derive(Debug, Clone, Serialize)]
pub struct MineOutput {
    pub mined: Vec<ce::MinedSpec>,
    pub proposal: Option<ce::OddUpdateProposal>,
    pub sensor: Option<SensorConfig>,
    pub added_classes: Vec<String>,
}

/// `mine`: parameter bounds, an ODD proposal when ranges are given, and a
/// known-class update when risk-monitor failures are present.
pub fn cmd_mine(
    inputs: &[PathBuf],
    params: &[String],
    direction: Option<ce::Direction>,
    ranges: Option<&Path>,
    cc: &CampaignConfig,
    out: &Path,
) -> Result<MineOutput, CampaignError> {
    let mut obs = Vec::new();
    let mut recs = Vec::new();
    for p in inputs {
        let (o, r) = load_observations(p)?;
        obs.extend(o);
        recs.extend(r);
    }
    // failure records stand in for observations only when none were given,
    // otherwise they would count every failure twice
    if obs.is_empty() {
        obs = recs.iter().map(Observation::from).collect();
    }
    let mined = params
        .iter()
        .map(|p| ce::mine_parameter_bound(&obs, p, direction).map_err(CampaignError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let proposal = match ranges {
        Some(p) => {
            let r: Vec<ParameterRange> = scenario::load_ranges(p).map_err(|e| file_err(p, e))?;
            Some(ce::propose_odd_update(&obs, &r)?)
        }
        None => None,
    };
    let ecfg = cc.episode_config()?;
    let (sensor, added) = ce::update_known_classes(&ecfg.sensor, &recs);
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("mined.json"),
        serde_json::to_string_pretty(&mined).expect("mined serializes"),
    )?;
    if let Some(p) = &proposal {
        std::fs::write(
            out.join("proposal.json"),
            serde_json::to_string_pretty(p).expect("proposal serializes"),
        )?;
        std::fs::write(out.join("proposal.md"), p.markdown())?;
    }
    let sensor = (!added.is_empty()).then_some(sensor);
    if let Some(s) = &sensor {
        #[derive(Serialize)]
        struct Update<'a> {
            sensor: &'a SensorConfig,
            added_classes: &'a [String],
        }
        std::fs::write(
            out.join("sensor_update.json"),
            serde_json::to_string_pretty(&Update {
                sensor: s,
                added_classes: &added,
            })
            .expect("update serializes"),
        )?;
    }
    write_manifest(out, "mine", &[])?;
    Ok(MineOutput {
        mined,
        proposal,
        sensor,
        added_classes: added,
    })
}

/// Signal table of a trace on disk: the trace CSV, its `.signals.csv`
/// sibling when present, and the `.timing.json` cycle timings when present.
pub fn load_trace_table(path: &Path) -> Result<SignalTable, CampaignError> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| file_err(p, e));
    let mut table = SignalTable::from_csv(open(path)?).map_err(|e| file_err(path, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let stem = name
        .strip_suffix(".signals.csv")
        .or_else(|| name.strip_suffix(".csv"))
        .unwrap_or(name)
        .to_string();
    let dir = path.parent().unwrap_or(Path::new("."));
    let signals = dir.join(format!("{stem}.signals.csv"));
    if signals != path && signals.exists() {
        let extra = SignalTable::from_csv(open(&signals)?).map_err(|e| file_err(&signals, e))?;
        for (k, v) in extra.columns {
            table.columns.entry(k).or_insert(v);
        }
    }
    if !table.columns.contains_key("ego_speed") {
        if let Ok(v) = table.column("ego_v") {
            let s = v.iter().map(|x| x.abs()).collect();
            table.insert("ego_speed", s);
        }
    }
    let timing = dir.join(format!("{stem}.timing.json"));
    if timing.exists() {
        let cycles: Vec<[f64; 2]> = read_json(&timing)?;
        let cycles: Vec<(f64, f64)> = cycles.into_iter().map(|c| (c[0], c[1])).collect();
        add_cycle_times(&mut table, &cycles);
    }
    table.validate().map_err(|e| file_err(path, e))?;
    Ok(table)
}

/// `monitor`: evaluate requirements on an existing trace.
pub fn cmd_monitor(
    trace: &Path,
    requirements: Option<&Path>,
    cc: &CampaignConfig,
    out: Option<&Path>,
) -> Result<Vec<RequirementReport>, CampaignError> {
    let table = load_trace_table(trace)?;
    let reqs = match requirements {
        Some(p) => load_requirements(p)?,
        None => cc.requirement_set(&cc.episode_config()?)?,
    };
    let reports = evaluate_all(&reqs, &table)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), reports_json(&reports))?;
        write_manifest(dir, "monitor", &[])?;
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub runs: usize,
    pub requirements: Vec<String>,
    /// Per requirement: (satisfied, violated, inconclusive) counts.
    pub counts: BTreeMap<String, [usize; 3]>,
    pub search_results: usize,
    pub failures: usize,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// `report`: pass/fail matrix over every run report under `input` and the
/// fitness fronts of every search archive, written to `out`.
pub fn cmd_report(input: &Path, out: &Path) -> Result<CampaignSummary, CampaignError> {
    let mut files = Vec::new();
    walk(input, &mut files)?;
    let rel = |p: &Path| p.strip_prefix(input).unwrap_or(p).to_string_lossy().replace('\\', "/");
    let mut rows: Vec<(String, BTreeMap<String, Verdict>)> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut fronts = csv::Writer::from_writer(Vec::new());
    let mut front_header = false;
    let mut search_results = 0;
    let mut failures = 0;
    for f in &files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with("report.json") || name.ends_with(".report.timing.json") {
            if f.starts_with(out) {
                continue;
            }
            let reports: Vec<RequirementReport> = read_json(f)?;
            if reports.is_empty() {
                continue;
            }
            let stem = rel(f)
                .trim_end_matches(".report.timing.json")
                .trim_end_matches(".report.json")
                .trim_end_matches("report.json")
                .to_string();
            let row = match rows.iter_mut().find(|r| r.0 == stem) {
                Some(r) => r,
                None => {
                    rows.push((stem, BTreeMap::new()));
                    rows.last_mut().expect("pushed")
                }
            };
            for r in reports {
                if !names.contains(&r.name) {
                    names.push(r.name.clone());
                }
                row.1.insert(r.name, r.verdict);
            }
        } else if name == "archive.csv" {
            search_results += 1;
            let mut rdr = csv::Reader::from_path(f).map_err(|e| file_err(f, e))?;
            let header = rdr.headers().map_err(|e| file_err(f, e))?.clone();
            let objectives: Vec<usize> = search::OBJECTIVES
                .iter()
                .filter_map(|o| header.iter().position(|h| h == *o))
                .collect();
            let in_front = header.iter().position(|h| h == "in_front");
            let verdict = header.iter().position(|h| h == "safety_goal");
            if !front_header {
                let mut h = vec!["archive", "index"];
                h.extend(search::OBJECTIVES);
                fronts.write_record(&h).expect("in-memory write");
                front_header = true;
            }
            for rec in rdr.records() {
                let rec = rec.map_err(|e| file_err(f, e))?;
                if verdict.is_some_and(|k| &rec[k] == "violated") {
                    failures += 1;
                }
                if in_front.is_some_and(|k| &rec[k] == "true") {
                    let mut row = vec![rel(f), rec[0].to_string()];
                    row.extend(objectives.iter().map(|k| rec[*k].to_string()));
                    fronts.write_record(&row).expect("in-memory write");
                }
            }
        }
    }
    names.sort();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    std::fs::create_dir_all(out)?;
    let mut m = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_string()];
    header.extend(names.iter().cloned());
    m.write_record(&header).expect("in-memory write");
    let mut counts: BTreeMap<String, [usize; 3]> = names.iter().map(|n| (n.clone(), [0; 3])).collect();
    for (stem, verdicts) in &rows {
        let mut row = vec![stem.clone()];
        for n in &names {
            let cell = match verdicts.get(n) {
                Some(v) => {
                    let c = counts.get_mut(n).expect("known name");
                    match v {
                        Verdict::Satisfied => {
                            c[0] += 1;
                            "satisfied"
                        }
                        Verdict::Violated => {
                            c[1] += 1;
                            "violated"
                        }
                        Verdict::Inconclusive => {
                            c[2] += 1;
                            "inconclusive"
                        }
                    }
                }
                None => "",
            };
            row.push(cell.to_string());
        }
        m.write_record(&row).expect("in-memory write");
    }
    std::fs::write(out.join("matrix.csv"), m.into_inner().expect("flush"))?;
    std::fs::write(out.join("fronts.csv"), fronts.into_inner().expect("flush"))?;
    let summary = CampaignSummary {
        runs: rows.len(),
        requirements: names,
        counts,
        search_results,
        failures,
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    write_manifest(out, "report", &[])?;
    Ok(summary)
}

pub const MANIFEST: &str = "manifest.json";

/// Files whose content depends on wall-clock time and is excluded from hashing.
pub fn is_nondeterministic(rel: &str) -> bool {
    rel.ends_with(".timing.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seeds: Vec<u64>,
    pub files: Vec<ManifestEntry>,
    /// Listed without hashes: wall-clock timing sidecars.
    pub unhashed: Vec<String>,
}

/// Hash every file under `dir` (sorted by relative path) into `manifest.json`.
pub fn write_manifest(dir: &Path, command: &str, seeds: &[u64]) -> Result<Manifest, CampaignError> {
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let mut m = Manifest {
        command: command.into(),
        seeds: seeds.to_vec(),
        files: Vec::new(),
        unhashed: Vec::new(),
    };
    let mut rels: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().replace('\\', "/"), p))
        .filter(|(r, _)| r != MANIFEST)
        .collect();
    rels.sort();
    for (rel, p) in rels {
        if is_nondeterministic(&rel) {
            m.unhashed.push(rel);
            continue;
        }
        let bytes = std::fs::read(&p)?;
        m.files.push(ManifestEntry {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    std::fs::write(
        dir.join(MANIFEST),
        serde_json::to_string_pretty(&m).expect("manifest serializes"),
    )?;
    Ok(m)
}
