//! Experiment harness: executes multi-run schedules against the simulated
//! vehicle, swaps experience-selection methods, computes the evaluation
//! metrics, and writes deterministic logs.
//!
//! The harness is the only layer allowed to look at ground-truth mode
//! labels — and even here they flow solely into reporting (confusion
//! matrices, per-run rows). The recommendation engine underneath never
//! receives them.

mod experiment;
mod logs;
mod metrics;
mod report;
mod schedule;

pub use experiment::{
    run_experiment, ExperimentError, ExperimentResult, MidRunSwitch, RunOutcome, RunResult,
    ScoreEvent, StepRecord,
};
pub use logs::{load_summary, write_outputs, SummaryDoc};
pub use metrics::{m_rmse, m_rmsz, MetricsError};
pub use report::{format_compare, format_summary};
pub use schedule::{CourseRef, ExperimentSchedule, ScheduleError};

use std::fmt;
use std::str::FromStr;

/// Experience-selection policy an experiment runs under.
#[derive(Clone, Copy, Debug, Eq, Hash, PartialEq)]
pub enum Method {
    /// Score stored runs against the live window every control step and
    /// feed the winner's upcoming data to the control model.
    Proposed,
    /// Always draw from the immediately preceding run, no scoring.
    LastRun,
    /// Keep the control model empty (prior) for the whole experiment.
    PriorOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::LastRun, Method::PriorOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::LastRun => "last_run",
            Method::PriorOnly => "prior_only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "last_run" => Ok(Method::LastRun),
            "prior_only" => Ok(Method::PriorOnly),
            other => Err(format!(
                "unknown method '{other}' (expected proposed, last_run, or prior_only)"
            )),
        }
    }
}

/// Derive an independent substream seed from the master seed. Distinct
/// `salt` values separate consumers (plant noise vs. recommender
/// subsampling); `index` separates runs, so every run's plant noise is a
/// function of (master, run) alone and stays identical across methods —
/// the basis for paired-seed comparisons.
pub fn mix_seed(master: u64, salt: u64, index: u64) -> u64 {
    let mut z = master
        ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    // Two rounds of splitmix64 finalization.
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Salt for the plant-noise stream (one per run).
pub(crate) const PLANT_SALT: u64 = 0x706c_616e;
/// Salt for the recommender's subsampling stream (one per experiment).
pub(crate) const RECOMMENDER_SALT: u64 = 0x7265_636f;
