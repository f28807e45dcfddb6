//! Multi-objective search for failure-revealing scenarios (NSGA-II) and a
//! random-sampling baseline at equal budget.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{ConcreteScenario, FunctionalScenario};
use crate::sim::{run_episode, EpisodeConfig, EpisodeError, Trace};
use crate::stl::{evaluate, requirement_library, Verdict, SAFETY_GOAL};

pub const DISTANCE_CAP: f64 = 10.0;
pub const TTC_CAP: f64 = 10.0;
pub const OBJECTIVES: [&str; 3] = ["min_ped_distance", "min_ttc", "neg_speed_at_closest"];

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("fitness arity mismatch: {0} vs {1}")]
    Arity(usize, usize),
    #[error("invalid search configuration: {0}")]
    Config(String),
}

/// Objectives to minimize, all finite.
pub fn fitness_from_trace(tr: &Trace) -> Vec<f64> {
    if tr.samples.is_empty() {
        return worst_fitness();
    }
    let closest = tr
        .samples
        .iter()
        .min_by(|a, b| a.min_ped_dist.total_cmp(&b.min_ped_dist))
        .expect("non-empty");
    let f1 = closest.min_ped_dist.clamp(0.0, DISTANCE_CAP);
    let f2 = tr
        .samples
        .iter()
        .map(|s| s.ttc_gt)
        .fold(TTC_CAP, f64::min)
        .clamp(0.0, TTC_CAP);
    let f3 = if closest.truth.is_empty() { 0.0 } else { -closest.ego.v.abs() };
    vec![quantize(f1), quantize(f2), quantize(f3)]
}

/// Objective resolution (1 mm, 1 ms, 1 mm/s). Differences below it are
/// integration noise and would otherwise create spurious trade-offs.
pub const RESOLUTION: f64 = 1e-3;

fn quantize(x: f64) -> f64 {
    let q = (x / RESOLUTION).round() * RESOLUTION;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

pub fn worst_fitness() -> Vec<f64> {
    vec![DISTANCE_CAP, TTC_CAP, 0.0]
}

/// `a` is no worse everywhere and strictly better somewhere (minimization).
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, SearchError> {
    if a.len() != b.len() {
        return Err(SearchError::Arity(a.len(), b.len()));
    }
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return Ok(false);
        }
        if x < y {
            strict = true;
        }
    }
    Ok(strict)
}

fn dom(a: &[f64], b: &[f64]) -> bool {
    dominates(a, b).expect("equal arity")
}

/// Fast non-dominated sort; each front lists indices in ascending order.
pub fn nondominated_sort(fits: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = fits.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dom(&fits[i], &fits[j]) {
                dominated_by[i].push(j);
                count[j] += 1;
            } else if dom(&fits[j], &fits[i]) {
                dominated_by[j].push(i);
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front`, in the same order.
pub fn crowding(fits: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n == 0 {
        return d;
    }
    let m = fits[front[0]].len();
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| fits[front[a]][k].total_cmp(&fits[front[b]][k]).then(a.cmp(&b)));
        let lo = fits[front[order[0]]][k];
        let hi = fits[front[order[n - 1]]][k];
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        if hi - lo <= 0.0 {
            continue;
        }
        for w in 1..n.saturating_sub(1) {
            let gap = fits[front[order[w + 1]]][k] - fits[front[order[w - 1]]][k];
            d[order[w]] += gap / (hi - lo);
        }
    }
    d
}

/// Area dominated by a 2-objective front up to `reference` (minimization).
pub fn hypervolume_2d(points: &[Vec<f64>], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .map(|p| (p[0], p[1]))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for (x, y) in pts {
        if y < best_y {
            area += (reference[0] - x) * (best_y - y);
            best_y = y;
        }
    }
    area
}

/// Outcome of one simulator call.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: Vec<f64>,
    pub valid: bool,
    /// SAFETY-GOAL violated.
    pub failed: bool,
    pub robustness: f64,
    pub scenario: Option<ConcreteScenario>,
}

pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &[f64], seed: u64) -> Evaluation;
}

/// Decodes genomes in a functional scenario and runs closed-loop episodes.
pub struct SimEvaluator {
    pub space: FunctionalScenario,
    pub config: EpisodeConfig,
}

impl SimEvaluator {
    pub fn run(&self, genome: &[f64], seed: u64) -> Result<(ConcreteScenario, Result<Trace, EpisodeError>), String> {
        let sc = self.space.decode(genome, seed).map_err(|e| e.to_string())?;
        let tr = run_episode(&sc, &self.config);
        Ok((sc, tr))
    }
}

/// SAFETY-GOAL verdict and robustness of a trace.
pub fn safety_verdict(tr: &Trace, cfg: &EpisodeConfig) -> (Verdict, f64) {
    let lib = requirement_library(&cfg.params, &cfg.odd);
    let goal = lib.iter().find(|r| r.name == SAFETY_GOAL).expect("library has the safety goal");
    match evaluate(SAFETY_GOAL, &goal.formula, &tr.signal_table()) {
        Ok(r) => (r.verdict, r.robustness),
        Err(_) => (Verdict::Inconclusive, f64::NAN),
    }
}

impl Evaluator for SimEvaluator {
    fn evaluate(&self, genome: &[f64], seed: u64) -> Evaluation {
        let invalid = |scenario| Evaluation {
            fitness: worst_fitness(),
            valid: false,
            failed: false,
            robustness: f64::NAN,
            scenario,
        };
        match self.run(genome, seed) {
            Err(_) => invalid(None),
            Ok((sc, Err(_))) => invalid(Some(sc)),
            Ok((sc, Ok(tr))) => {
                let (verdict, robustness) = safety_verdict(&tr, &self.config);
                Evaluation {
                    fitness: fitness_from_trace(&tr),
                    valid: true,
                    failed: verdict == Verdict::Violated,
                    robustness,
                    scenario: Some(sc),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub budget: usize,
    pub pop_size: usize,
    pub seed: u64,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    pub p_crossover: f64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 500,
            pop_size: 20,
            seed: 0,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
            p_crossover: 0.9,
            workers: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.pop_size < 4 || self.pop_size % 2 != 0 {
            return Err(SearchError::Config("pop_size must be an even number ≥ 4".into()));
        }
        if self.budget < self.pop_size {
            return Err(SearchError::Config("budget must be at least pop_size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Position in evaluation order.
    pub index: usize,
    pub genome: Vec<f64>,
    pub seed: u64,
    pub scenario_id: String,
    pub fitness: Vec<f64>,
    pub valid: bool,
    pub failed: bool,
    #[serde(serialize_with = "crate::stl::library::ser_f64", deserialize_with = "crate::stl::library::de_f64")]
    pub robustness: f64,
    pub rank: usize,
    #[serde(serialize_with = "crate::stl::library::ser_f64", deserialize_with = "crate::stl::library::de_f64")]
    pub crowding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub algorithm: String,
    pub seed: u64,
    pub evaluations: usize,
    /// Every evaluated individual in evaluation order.
    pub archive: Vec<Individual>,
    /// Final population, best first.
    pub population: Vec<usize>,
    /// Non-dominated members of the archive.
    pub front: Vec<usize>,
    /// Archive members violating the safety goal.
    pub failures: Vec<usize>,
}

/// Scenario seed of the `index`-th evaluation of a run.
pub fn evaluation_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// Evaluate a batch in parallel; results come back in genome order.
fn evaluate_batch<E: Evaluator>(
    ev: &E,
    genomes: Vec<Vec<f64>>,
    run_seed: u64,
    archive: &mut Vec<Individual>,
    pool: &rayon::ThreadPool,
) -> Vec<usize> {
    let start = archive.len();
    let results: Vec<Evaluation> = pool.install(|| {
        genomes
            .par_iter()
            .enumerate()
            .map(|(k, g)| ev.evaluate(g, evaluation_seed(run_seed, start + k)))
            .collect()
    });
    let mut idx = Vec::with_capacity(results.len());
    for (k, (g, r)) in genomes.into_iter().zip(results).enumerate() {
        let index = start + k;
        archive.push(Individual {
            index,
            seed: evaluation_seed(run_seed, index),
            scenario_id: r.scenario.as_ref().map(|s| s.scenario_id.clone()).unwrap_or_default(),
            genome: g,
            fitness: r.fitness,
            valid: r.valid,
            failed: r.failed,
            robustness: r.robustness,
            rank: 0,
            crowding: 0.0,
        });
        idx.push(index);
    }
    idx
}

/// Rank and crowding of `members` computed among themselves, written into the archive.
fn assign_rank(archive: &mut [Individual], members: &[usize]) -> Vec<Vec<usize>> {
    let fits: Vec<Vec<f64>> = members.iter().map(|&i| archive[i].fitness.clone()).collect();
    let fronts = nondominated_sort(&fits);
    for (r, f) in fronts.iter().enumerate() {
        let cd = crowding(&fits, f);
        for (k, &local) in f.iter().enumerate() {
            let a = &mut archive[members[local]];
            a.rank = r;
            a.crowding = cd[k];
        }
    }
    fronts
        .into_iter()
        .map(|f| f.into_iter().map(|l| members[l]).collect())
        .collect()
}

fn better(a: &Individual, b: &Individual) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then(b.crowding.total_cmp(&a.crowding))
        .then(a.index.cmp(&b.index))
}

fn sbx<R: Rng>(p1: &[f64], p2: &[f64], eta: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        let u_apply: f64 = rng.random();
        let u: f64 = rng.random();
        let u_swap: f64 = rng.random();
        if u_apply > 0.5 || (p1[i] - p2[i]).abs() < 1e-14 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * y1 / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (1.0 - y2) / (y2 - y1));
        let mut a = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(0.0, 1.0);
        let mut b = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(0.0, 1.0);
        if u_swap < 0.5 {
            std::mem::swap(&mut a, &mut b);
        }
        c1[i] = a;
        c2[i] = b;
    }
    (c1, c2)
}

fn mutate<R: Rng>(g: &mut [f64], eta: f64, rng: &mut R) {
    let p = 1.0 / g.len().max(1) as f64;
    let pow = 1.0 / (eta + 1.0);
    for x in g.iter_mut() {
        let u_apply: f64 = rng.random();
        let u: f64 = rng.random();
        if u_apply >= p {
            continue;
        }
        let dq = if u < 0.5 {
            let xy = 1.0 - *x;
            let val = 2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let xy = *x;
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *x = (*x + dq).clamp(0.0, 1.0);
    }
}

fn random_genome<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn finish(algorithm: &str, cfg: &SearchConfig, mut archive: Vec<Individual>, mut population: Vec<usize>) -> SearchResult {
    assign_rank(&mut archive, &population);
    population.sort_by(|&a, &b| better(&archive[a], &archive[b]));
    let all: Vec<Vec<f64>> = archive.iter().map(|i| i.fitness.clone()).collect();
    let front = nondominated_sort(&all).into_iter().next().unwrap_or_default();
    let failures = archive.iter().filter(|i| i.failed).map(|i| i.index).collect();
    SearchResult {
        algorithm: algorithm.into(),
        seed: cfg.seed,
        evaluations: archive.len(),
        archive,
        population,
        front,
        failures,
    }
}

/// NSGA-II over normalized genomes of length `n_genes`.
pub fn nsga2_run<E: Evaluator>(ev: &E, n_genes: usize, cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let pool = pool(cfg.workers);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = Vec::with_capacity(cfg.budget);
    let init: Vec<Vec<f64>> = (0..cfg.pop_size).map(|_| random_genome(n_genes, &mut rng)).collect();
    let mut pop = evaluate_batch(ev, init, cfg.seed, &mut archive, &pool);
    assign_rank(&mut archive, &pop);

    while archive.len() < cfg.budget {
        let n_off = cfg.pop_size.min(cfg.budget - archive.len());
        let mut children = Vec::with_capacity(n_off + 1);
        while children.len() < n_off {
            let pick = |rng: &mut ChaCha8Rng| {
                let a = pop[rng.random_range(0..pop.len())];
                let b = pop[rng.random_range(0..pop.len())];
                if better(&archive[a], &archive[b]) == Ordering::Greater {
                    b
                } else {
                    a
                }
            };
            let p1 = pick(&mut rng);
            let p2 = pick(&mut rng);
            let u: f64 = rng.random();
            let (mut c1, mut c2) = if u < cfg.p_crossover {
                sbx(&archive[p1].genome, &archive[p2].genome, cfg.eta_crossover, &mut rng)
            } else {
                (archive[p1].genome.clone(), archive[p2].genome.clone())
            };
            mutate(&mut c1, cfg.eta_mutation, &mut rng);
            mutate(&mut c2, cfg.eta_mutation, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        children.truncate(n_off);
        let offspring = evaluate_batch(ev, children, cfg.seed, &mut archive, &pool);

        let combined: Vec<usize> = pop.iter().chain(&offspring).copied().collect();
        let fronts = assign_rank(&mut archive, &combined);
        let mut next = Vec::with_capacity(cfg.pop_size);
        for f in fronts {
            if next.len() + f.len() <= cfg.pop_size {
                next.extend(f);
            } else {
                let mut rest = f;
                rest.sort_by(|&a, &b| better(&archive[a], &archive[b]));
                next.extend(rest.into_iter().take(cfg.pop_size - next.len()));
            }
            if next.len() == cfg.pop_size {
                break;
            }
        }
        pop = next;
        assign_rank(&mut archive, &pop);
    }
    Ok(finish("nsga2", cfg, archive, pop))
}

/// Uniform random sampling with the same budget and seeding scheme.
pub fn random_run<E: Evaluator>(ev: &E, n_genes: usize, cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    if cfg.budget == 0 {
        return Err(SearchError::Config("budget must be positive".into()));
    }
    let pool = pool(cfg.workers);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = Vec::with_capacity(cfg.budget);
    let genomes: Vec<Vec<f64>> = (0..cfg.budget).map(|_| random_genome(n_genes, &mut rng)).collect();
    let all = evaluate_batch(ev, genomes, cfg.seed, &mut archive, &pool);
    Ok(finish("random", cfg, archive, all))
}

/// `archive.csv`: one row per evaluation.
pub fn archive_csv(res: &SearchResult, gene_names: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string(), "seed".into(), "scenario_id".into()];
    header.extend(gene_names.iter().cloned());
    header.extend(OBJECTIVES.iter().map(|s| s.to_string()));
    header.extend(["valid", "safety_goal", "robustness", "in_front"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for ind in &res.archive {
        let mut row = vec![ind.index.to_string(), ind.seed.to_string(), ind.scenario_id.clone()];
        row.extend(ind.genome.iter().map(|g| g.to_string()));
        row.extend(ind.fitness.iter().map(|f| f.to_string()));
        let verdict = if !ind.valid {
            "invalid"
        } else if ind.failed {
            "violated"
        } else {
            "satisfied"
        };
        row.push(ind.valid.to_string());
        row.push(verdict.into());
        row.push(crate::sim::trace::fmt_sig9(ind.robustness));
        row.push(res.front.binary_search(&ind.index).is_ok().to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// `front.json`: the non-dominated archive members.
pub fn front_json(res: &SearchResult) -> String {
    let front: Vec<&Individual> = res.front.iter().map(|&i| &res.archive[i]).collect();
    serde_json::to_string_pretty(&front).expect("front serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_examples() {
        assert_eq!(dominates(&[1.0, 1.0], &[2.0, 2.0]), Ok(true));
        assert_eq!(dominates(&[1.0, 3.0], &[2.0, 2.0]), Ok(false));
        assert_eq!(dominates(&[2.0, 2.0], &[1.0, 3.0]), Ok(false));
        assert_eq!(dominates(&[1.0, 2.0], &[1.0, 2.0]), Ok(false));
        assert_eq!(dominates(&[1.0], &[1.0, 2.0]), Err(SearchError::Arity(1, 2)));
    }

    #[test]
    fn chain_gives_singleton_fronts() {
        let fits = vec![vec![3.0, 3.0], vec![1.0, 1.0], vec![4.0, 4.0], vec![2.0, 2.0]];
        assert_eq!(nondominated_sort(&fits), vec![vec![1], vec![3], vec![0], vec![2]]);
    }

    #[test]
    fn identical_fitness_one_front() {
        let fits = vec![vec![1.0, 2.0]; 5];
        assert_eq!(nondominated_sort(&fits), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn crowding_boundaries_infinite() {
        let fits = vec![vec![0.0, 4.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![4.0, 0.0]];
        let cd = crowding(&fits, &[0, 1, 2, 3]);
        assert!(cd[0].is_infinite() && cd[3].is_infinite());
        // (2-0)/4 + (4-1)/4 and (4-1)/4 + (2-0)/4
        assert!((cd[1] - 1.25).abs() < 1e-12);
        assert!((cd[2] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_staircase() {
        let pts = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![3.5, 3.5]];
        // reference (4,4): 3*1 + 2*1 + 1*1
        assert!((hypervolume_2d(&pts, [4.0, 4.0]) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn operators_stay_in_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a = random_genome(6, &mut rng);
            let b = random_genome(6, &mut rng);
            let (mut c, mut d) = sbx(&a, &b, 15.0, &mut rng);
            mutate(&mut c, 20.0, &mut rng);
            mutate(&mut d, 20.0, &mut rng);
            assert!(c.iter().chain(&d).all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn evaluation_seeds_distinct() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| evaluation_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn config_validation() {
        let mut c = SearchConfig { pop_size: 5, ..Default::default() };
        assert!(c.validate().is_err());
        c.pop_size = 20;
        c.budget = 10;
        assert!(c.validate().is_err());
    }
}
