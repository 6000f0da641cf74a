//! Experiment runner: executes schedules against the simulated vehicle and
//! reports the resulting metrics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use exprec_core::harness::{
    format_compare, format_summary, load_summary, run_experiment, write_outputs,
    ExperimentSchedule, Method, MidRunSwitch,
};

#[derive(Parser)]
#[command(
    name = "exprec",
    about = "Closed-loop vehicle experiments with experience-driven disturbance models",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a schedule and write logs to an output directory.
    Run {
        /// Schedule file (TOML).
        #[arg(long)]
        schedule: PathBuf,
        /// Experience-selection method; overrides the schedule file's value.
        #[arg(long)]
        method: Option<Method>,
        /// Master seed; overrides the schedule file's value.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Stress override: switch the plant mid-run. Format RUN:STEP:MODE,
        /// e.g. 2:100:altered. Repeatable.
        #[arg(long = "switch", value_name = "RUN:STEP:MODE")]
        switches: Vec<String>,
        /// Suppress the summary table on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Print the metric tables of a finished experiment.
    Report {
        /// Output directory of a previous `run`.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Paired per-run comparison of two finished experiments.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn parse_switch(text: &str) -> anyhow::Result<MidRunSwitch> {
    let parts: Vec<&str> = text.splitn(3, ':').collect();
    if parts.len() != 3 || parts[2].is_empty() {
        bail!("switch '{text}' is not RUN:STEP:MODE");
    }
    Ok(MidRunSwitch {
        run: parts[0].parse().with_context(|| format!("bad run in switch '{text}'"))?,
        step: parts[1].parse().with_context(|| format!("bad step in switch '{text}'"))?,
        mode: parts[2].to_string(),
    })
}

fn cmd_run(
    schedule_path: &Path,
    method: Option<Method>,
    seed: Option<u64>,
    out: &Path,
    switches: &[String],
    quiet: bool,
) -> anyhow::Result<ExitCode> {
    let schedule = ExperimentSchedule::load(schedule_path)
        .with_context(|| format!("loading schedule {}", schedule_path.display()))?;
    let method = method.or_else(|| schedule.method()).context(
        "no method given: pass --method or set `method` in the schedule file",
    )?;
    let seed = seed.or_else(|| schedule.seed()).context(
        "no seed given: pass --seed or set `seed` in the schedule file",
    )?;
    let switches = switches
        .iter()
        .map(|s| parse_switch(s))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let result = run_experiment(&schedule, method, seed, &switches)?;
    write_outputs(out, &result)
        .with_context(|| format!("writing outputs to {}", out.display()))?;

    if !quiet {
        print!("{}", format_summary(&load_summary(out)?));
    }
    let failed: Vec<String> = result
        .runs
        .iter()
        .filter(|r| !r.outcome.completed())
        .map(|r| format!("run {} ({}): {}", r.run, r.label, r.outcome.status()))
        .collect();
    if !failed.is_empty() {
        eprintln!("{} run(s) failed:", failed.len());
        for f in &failed {
            eprintln!("  {f}");
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { schedule, method, seed, out, switches, quiet } => {
            cmd_run(&schedule, method, seed, &out, &switches, quiet)
        }
        Cmd::Report { input } => {
            let doc = load_summary(&input)
                .with_context(|| format!("loading summary from {}", input.display()))?;
            print!("{}", format_summary(&doc));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare { a, b } => {
            let da = load_summary(&a)
                .with_context(|| format!("loading summary from {}", a.display()))?;
            let db = load_summary(&b)
                .with_context(|| format!("loading summary from {}", b.display()))?;
            print!("{}", format_compare(&da, &db));
            Ok(ExitCode::SUCCESS)
        }
    }
}
