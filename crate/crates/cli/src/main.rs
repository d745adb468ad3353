use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use condwalk::harness::acceptance::{criteria, matches_command, preset, run_criterion};
use condwalk::harness::config::ExperimentConfig;
use condwalk::harness::report::{replay_verdicts, verify_manifest};
use condwalk::harness::run::run_and_write;

#[derive(Parser)]
#[command(name = "condwalk", version, about = "Conditioned random walks, stable limit laws and BPRE experiments")]
struct Cli {
    #[command(subcommand)]
    group: Group,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    partitions: Option<usize>,
    /// Directory for the CSV tables, report and manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory of reusable intermediate tables.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Group {
    /// Stable sampler and characteristic function.
    Stable {
        #[command(subcommand)]
        command: StableCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Renewal functions, exact kernels and conditioned samplers.
    Walk {
        #[command(subcommand)]
        command: WalkCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Meander, bridge, constants and limit laws.
    Limits {
        #[command(subcommand)]
        command: LimitsCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Branching processes in random environment.
    Bpre {
        #[command(subcommand)]
        command: BpreCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Acceptance criteria and stored reports.
    Verify {
        #[command(subcommand)]
        command: VerifyCmd,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum StableCmd {
    Check,
}

#[derive(Subcommand, Clone, Copy)]
enum WalkCmd {
    Renewal,
    Kernel,
    Conditioned,
}

#[derive(Subcommand, Clone, Copy)]
enum LimitsCmd {
    Meander,
    Bridge,
    Constants,
    Laws,
}

#[derive(Subcommand, Clone, Copy)]
enum BpreCmd {
    Regime,
    Smalldev,
    Tcond,
    B2check,
}

#[derive(Subcommand, Clone)]
enum VerifyCmd {
    /// Run every acceptance criterion.
    All,
    /// Re-hash a report directory and recompute its verdicts from the CSVs.
    Replay { dir: PathBuf },
}

fn resolve(group: &str, command: &str, common: &Common) -> Result<ExperimentConfig, String> {
    let mut config = match &common.config {
        Some(path) => {
            let c = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
            if !matches_command(&c, group, command) {
                return Err(format!("config kind {} does not belong to `{group} {command}`", c.kind()));
            }
            c
        }
        None => {
            let (Some(seed), Some(partitions)) = (common.seed, common.partitions) else {
                return Err("--seed and --partitions are required without --config".into());
            };
            preset(group, command, seed, partitions).ok_or_else(|| format!("unknown command {group} {command}"))?
        }
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(p) = common.partitions {
        config.partitions = p;
    }
    if common.out.is_some() {
        config.out = common.out.clone();
    }
    Ok(config)
}

fn run_one(group: &str, command: &str, common: &Common) -> Result<bool, String> {
    let config = resolve(group, command, common)?;
    let report = run_and_write(&config, common.cache.as_deref(), None).map_err(|e| e.to_string())?;
    for c in &report.checks {
        println!("{:<4} {:<20} {:>12.6}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.statistic, c.bound);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("replicas: {}  wall clock: {:.1}s", report.replicas, report.wall_clock_seconds);
    match &config.out {
        Some(dir) => println!("report: {}", dir.display()),
        None => println!("{}", serde_json::to_string_pretty(&report.tables.iter().map(|t| &t.name).collect::<Vec<_>>()).unwrap_or_default()),
    }
    Ok(report.pass)
}

fn verify_all(common: &Common) -> Result<bool, String> {
    let (Some(seed), Some(partitions)) = (common.seed, common.partitions) else {
        return Err("verify all needs --seed and --partitions".into());
    };
    let mut all = true;
    for c in criteria(seed, partitions) {
        let outcome = run_criterion(&c, common.cache.as_deref(), common.out.as_deref());
        println!("{}", outcome.line());
        all &= outcome.pass;
    }
    Ok(all)
}

fn replay(dir: &std::path::Path) -> Result<bool, String> {
    let problems = verify_manifest(dir).map_err(|e| e.to_string())?;
    if !problems.is_empty() {
        for p in &problems {
            println!("manifest: {p}");
        }
        return Ok(false);
    }
    let r = replay_verdicts(dir).map_err(|e| e.to_string())?;
    for (name, stat, pass) in &r.checks {
        println!("{:<4} {name:<20} {stat:>12.6}", if *pass { "PASS" } else { "FAIL" });
    }
    println!("stored verdicts {}", if r.consistent { "reproduced" } else { "NOT reproduced" });
    Ok(r.pass && r.consistent)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.group {
        Group::Stable { command: StableCmd::Check, common } => run_one("stable", "check", common),
        Group::Walk { command, common } => {
            let c = match command {
                WalkCmd::Renewal => "renewal",
                WalkCmd::Kernel => "kernel",
                WalkCmd::Conditioned => "conditioned",
            };
            run_one("walk", c, common)
        }
        Group::Limits { command, common } => {
            let c = match command {
                LimitsCmd::Meander => "meander",
                LimitsCmd::Bridge => "bridge",
                LimitsCmd::Constants => "constants",
                LimitsCmd::Laws => "laws",
            };
            run_one("limits", c, common)
        }
        Group::Bpre { command, common } => {
            let c = match command {
                BpreCmd::Regime => "regime",
                BpreCmd::Smalldev => "smalldev",
                BpreCmd::Tcond => "tcond",
                BpreCmd::B2check => "b2check",
            };
            run_one("bpre", c, common)
        }
        Group::Verify { command: VerifyCmd::All, common } => verify_all(common),
        Group::Verify { command: VerifyCmd::Replay { dir }, .. } => replay(dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
