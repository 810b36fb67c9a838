use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use intersnap::par::{self, Execution};
use intersnap::sim::metrics::{outcome_name, rationale_name};
use intersnap::sim::presets::{fault_demo, fault_demo_expectation, random_scenario};
use intersnap::sim::verify::verify_run;
use intersnap::sim::{run_scenario, run_to_dir, RunError, ScenarioConfig, World};

#[derive(Parser)]
#[command(
    name = "intersnap",
    version,
    about = "Cross-ledger snapshot archival and dispute simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and export metrics and final state.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the three built-in fault demonstrations.
    FaultDemo {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        case: u8,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also export the run here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check every invariant over a run's exported state.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run and verify a batch of randomized scenarios.
    Battery {
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
    detail: Value,
}

impl Failure {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        Failure {
            kind,
            message: message.to_string(),
            detail: Value::Null,
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let kind = match &e {
            RunError::World(intersnap::sim::WorldError::Config(_)) => "config_invalid",
            RunError::World(_) => "store_failure",
            RunError::Export(_) => "io_failure",
            RunError::OutputExists(_) => "output_exists",
        };
        Failure::new(kind, e)
    }
}

fn print(v: &Value) {
    use std::io::Write;
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(v).expect("json")
    );
}

fn verdicts(world: &World) -> Value {
    world
        .metrics
        .disputes
        .iter()
        .map(|d| {
            json!({
                "tick": d.tick,
                "origin": d.origin,
                "kind": d.case.as_ref().map(|c| c.kind),
                "outcome": d.verdict.as_ref().map(|v| outcome_name(v.outcome)),
                "rationale": d.verdict.as_ref().map(|v| rationale_name(v.rationale)),
                "evidence": d.verdict.as_ref().map(|v| v.evidence.len()),
                "error": d.error,
            })
        })
        .collect()
}

fn run(scenario: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let text =
        fs::read_to_string(scenario).map_err(|e| Failure::new("io_failure", format!("{}: {e}", scenario.display())))?;
    let config = ScenarioConfig::from_json(&text).map_err(|e| Failure::new("config_invalid", e))?;
    let world = run_to_dir(config, seed, out)?;
    print(&json!({
        "scenario": world.config.name,
        "seed": seed,
        "ticks": world.tick,
        "state_hash": world.state_hash(),
        "snapshots": world.metrics.snapshots.len(),
        "success_rate": world.metrics.success_rate(),
        "verdicts": verdicts(&world),
        "out": out,
    }));
    Ok(())
}

fn demo(case: u8, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let config = fault_demo(case).expect("case range checked by clap");
    let world = match out {
        Some(dir) => run_to_dir(config, seed, dir)?,
        None => run_scenario(config, seed).map_err(|e| Failure::from(RunError::World(e)))?,
    };
    let (outcome, rationale) = fault_demo_expectation(case).expect("case in range");
    let got = world.metrics.disputes.iter().find_map(|d| d.verdict.clone());
    let report = json!({
        "case": case,
        "scenario": world.config.name,
        "seed": seed,
        "state_hash": world.state_hash(),
        "expected": { "outcome": outcome_name(outcome), "rationale": rationale_name(rationale) },
        "verdicts": verdicts(&world),
    });
    match got {
        Some(v) if v.outcome == outcome && v.rationale == rationale => {
            print(&report);
            Ok(())
        }
        _ => Err(Failure {
            kind: "unexpected_verdict",
            message: format!("fault demo {case} did not reach the expected verdict"),
            detail: report,
        }),
    }
}

fn verify(out: &Path) -> Result<(), Failure> {
    let report = verify_run(out).map_err(|e| Failure::new("io_failure", e))?;
    let value = serde_json::to_value(&report).expect("json");
    if report.passed {
        print(&value);
        Ok(())
    } else {
        Err(Failure {
            kind: "invariant_violation",
            message: "one or more checks failed".into(),
            detail: value,
        })
    }
}

fn battery(count: u64, first: u64, out: &Path, sequential: bool) -> Result<(), Failure> {
    let mode = if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let seeds: Vec<u64> = (first..first + count).collect();
    let results = par::map(seeds, mode, |seed| {
        let dir = out.join(format!("seed-{seed}"));
        let res = run_to_dir(random_scenario(seed), seed, &dir)
            .map_err(|e| e.to_string())
            .and_then(|_| verify_run(&dir).map_err(|e| e.to_string()));
        (seed, res)
    });
    let mut failed = Vec::new();
    for (seed, res) in &results {
        match res {
            Ok(r) if r.passed => {}
            Ok(r) => failed.push(json!({
                "seed": seed,
                "checks": r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>(),
            })),
            Err(e) => failed.push(json!({ "seed": seed, "error": e })),
        }
    }
    let report = json!({ "runs": count, "failed": failed });
    if failed.is_empty() {
        print(&report);
        Ok(())
    } else {
        Err(Failure {
            kind: "invariant_violation",
            message: format!("{} of {count} runs failed verification", failed.len()),
            detail: report,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run { scenario, seed, out } => run(scenario, *seed, out),
        Command::FaultDemo { case, seed, out } => demo(*case, *seed, out.as_deref()),
        Command::Verify { out } => verify(out),
        Command::Battery {
            count,
            first_seed,
            out,
            sequential,
        } => battery(*count, *first_seed, out, *sequential),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = json!({ "error": { "kind": f.kind, "message": f.message, "detail": f.detail } });
            eprintln!("{}", serde_json::to_string(&record).expect("json"));
            ExitCode::FAILURE
        }
    }
}
