use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use avp_core::campaign::{self, CampaignConfig};
use avp_core::ce::Direction;
use avp_core::search::SearchConfig;
use avp_core::stl::{RequirementReport, Verdict};
use clap::{Parser, Subcommand, ValueEnum};

/// Simulation-based verification harness for automated valet parking.
#[derive(Parser, Debug)]
#[command(name = "avp-vv", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate a concrete scenario and check requirements.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        requirements: Option<PathBuf>,
        /// Overrides the seeds listed in the config.
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search a parameter space for critical scenarios.
    Search {
        /// Functional scenario (JSON); defaults to the config's.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Parameter ranges (JSON); defaults to the functional scenario's own.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        budget: usize,
        #[arg(long, default_value_t = 20)]
        pop: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Algorithm::Nsga2)]
        algorithm: Algorithm,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check requirements on a recorded trace.
    Monitor {
        trace: PathBuf,
        #[arg(long)]
        requirements: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine parameter bounds and ODD / perception updates from outcomes.
    Mine {
        /// archive.csv-adjacent observations.jsonl or failures.jsonl files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long, value_enum)]
        direction: Option<Dir>,
        /// Parameter ranges to propose an ODD restriction over.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate run reports and search archives under a directory.
    Report {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algorithm {
    Nsga2,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dir {
    MinPassing,
    MaxPassing,
}

fn load_config(p: &Option<PathBuf>) -> Result<CampaignConfig> {
    match p {
        Some(p) => Ok(CampaignConfig::load(p)?),
        None => Ok(CampaignConfig::default()),
    }
}

fn print_reports(prefix: &str, reports: &[RequirementReport]) {
    for r in reports {
        let verdict = match r.verdict {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "VIOLATED",
            Verdict::Inconclusive => "inconclusive",
        };
        match r.first_violation_t {
            Some(t) => println!("{prefix}{:<16} {verdict:<12} rho={:.4} first_violation_t={t:.2}", r.name, r.robustness),
            None => println!("{prefix}{:<16} {verdict:<12} rho={:.4}", r.name, r.robustness),
        }
    }
}

/// Ok(true) when some requirement or safety goal was violated.
fn dispatch(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run {
            scenario,
            config,
            requirements,
            seed,
            workers,
            out,
        } => {
            let mut cc = load_config(&config)?;
            if requirements.is_some() {
                cc.requirements = requirements;
            }
            if !seed.is_empty() {
                cc.seeds = seed;
            }
            if let Some(w) = workers {
                cc.workers = w;
            }
            cc.validate()?;
            let outcomes = campaign::cmd_run(&scenario, &cc, &out)?;
            let mut violated = false;
            for o in &outcomes {
                let sum = &o.trace.summary;
                let end = if sum.collision.is_some() {
                    "collision"
                } else if sum.goal_reached {
                    "goal"
                } else {
                    "timeout"
                };
                println!("{} end={end} t={:.2}", o.stem, o.trace.samples.last().map_or(0.0, |s| s.t));
                print_reports("  ", &o.reports);
                print_reports("  ", &o.timing_reports);
                violated |= o.violated();
            }
            Ok(violated)
        }
        Cmd::Search {
            scenario,
            space,
            config,
            budget,
            pop,
            seed,
            workers,
            algorithm,
            out,
        } => {
            let mut cc = load_config(&config)?;
            if scenario.is_some() {
                cc.functional_scenario = scenario;
                cc.validate()?;
            }
            let scfg = SearchConfig {
                budget,
                pop_size: pop,
                seed,
                workers,
                ..SearchConfig::default()
            };
            let alg = match algorithm {
                Algorithm::Nsga2 => "nsga2",
                Algorithm::Random => "random",
            };
            let res = campaign::cmd_search(space.as_deref(), &cc, &scfg, alg, &out)?;
            println!(
                "{alg}: {} evaluations, {} failures, {} on the front",
                res.evaluations,
                res.failures.len(),
                res.front.len()
            );
            Ok(!res.failures.is_empty())
        }
        Cmd::Monitor {
            trace,
            requirements,
            config,
            out,
        } => {
            let cc = load_config(&config)?;
            let reports = campaign::cmd_monitor(&trace, requirements.as_deref(), &cc, out.as_deref())?;
            print_reports("", &reports);
            Ok(campaign::any_violated(&reports))
        }
        Cmd::Mine {
            inputs,
            params,
            direction,
            space,
            config,
            out,
        } => {
            let cc = load_config(&config)?;
            if params.is_empty() && space.is_none() {
                bail!("nothing to mine: give --param and/or --space");
            }
            let dir = direction.map(|d| match d {
                Dir::MinPassing => Direction::MinPassing,
                Dir::MaxPassing => Direction::MaxPassing,
            });
            let m = campaign::cmd_mine(&inputs, &params, dir, space.as_deref(), &cc, &out)?;
            for s in &m.mined {
                println!("{}", serde_json::to_string(s)?);
            }
            if let Some(p) = &m.proposal {
                print!("{}", p.markdown());
            }
            if !m.added_classes.is_empty() {
                println!("known classes added: {}", m.added_classes.join(", "));
            }
            Ok(false)
        }
        Cmd::Report { input, out } => {
            if !Path::new(&input).is_dir() {
                bail!("{} is not a directory", input.display());
            }
            let s = campaign::cmd_report(&input, &out)?;
            println!(
                "{} runs, {} requirements, {} search archives, {} failing evaluations",
                s.runs,
                s.requirements.len(),
                s.search_results,
                s.failures
            );
            for (name, c) in &s.counts {
                println!("  {name:<16} satisfied={} violated={} inconclusive={}", c[0], c[1], c[2]);
            }
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command).context("avp-vv") {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
