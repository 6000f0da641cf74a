//! Experiment schedule files: which modes run in which order, on which
//! course, with optional custom mode definitions.
//!
//! ```toml
//! course = "default"            # or a path to a course file
//! runs = ["nominal", "altered", "nominal"]
//! method = "proposed"           # optional; CLI flag overrides
//! seed = 7                      # optional; CLI flag overrides
//!
//! [modes.muddy]                 # optional extra modes, referenced by name
//! turn_gain = 0.8
//! lateral_slip_gain = 0.03
//! drag_gain = 0.01
//! noise_std = [0.02, 0.02, 0.03]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::Method;
use crate::path::{CourseError, CourseSpec};
use crate::sim::ModeConfig;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("failed to read schedule: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse schedule: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("schedule lists no runs")]
    NoRuns,
    #[error("run {index} references undefined mode '{name}'")]
    UnknownMode { index: usize, name: String },
    #[error("mode '{name}' is invalid: {reason}")]
    InvalidMode { name: String, reason: String },
    #[error("invalid method in schedule: {0}")]
    InvalidMethod(String),
    #[error("course file error: {0}")]
    Course(#[from] CourseError),
}

/// Where the course geometry comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum CourseRef {
    /// The built-in benchmark S-course.
    Default,
    /// A course file; relative paths resolve against the schedule file's
    /// directory.
    File(PathBuf),
}

#[derive(Deserialize)]
struct RawSchedule {
    #[serde(default = "default_course")]
    course: String,
    runs: Vec<String>,
    method: Option<String>,
    seed: Option<u64>,
    #[serde(default)]
    modes: BTreeMap<String, ModeConfig>,
}

fn default_course() -> String {
    "default".to_string()
}

/// A validated experiment schedule.
#[derive(Clone, Debug)]
pub struct ExperimentSchedule {
    course: CourseRef,
    runs: Vec<String>,
    modes: BTreeMap<String, ModeConfig>,
    method: Option<Method>,
    seed: Option<u64>,
}

impl ExperimentSchedule {
    /// Parse and validate a schedule document. `base_dir` anchors relative
    /// course paths (typically the schedule file's directory).
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ScheduleError> {
        let raw: RawSchedule = toml::from_str(text)?;
        if raw.runs.is_empty() {
            return Err(ScheduleError::NoRuns);
        }
        for (name, mode) in &raw.modes {
            mode.validate().map_err(|reason| ScheduleError::InvalidMode {
                name: name.clone(),
                reason,
            })?;
        }
        let method = match raw.method {
            Some(s) => {
                Some(s.parse::<Method>().map_err(ScheduleError::InvalidMethod)?)
            }
            None => None,
        };
        let course = if raw.course == "default" {
            CourseRef::Default
        } else {
            let p = PathBuf::from(&raw.course);
            CourseRef::File(if p.is_absolute() { p } else { base_dir.join(p) })
        };
        let schedule = ExperimentSchedule {
            course,
            runs: raw.runs,
            modes: raw.modes,
            method,
            seed: raw.seed,
        };
        for (i, name) in schedule.runs.iter().enumerate() {
            if schedule.resolve_mode(name).is_none() {
                return Err(ScheduleError::UnknownMode { index: i + 1, name: name.clone() });
            }
        }
        Ok(schedule)
    }

    /// Load a schedule from a file.
    pub fn load(path: &Path) -> Result<Self, ScheduleError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentSchedule::from_toml_str(&text, base)
    }

    /// Build a simple schedule in code (used heavily by tests).
    pub fn from_runs(runs: &[&str]) -> Result<Self, ScheduleError> {
        let schedule = ExperimentSchedule {
            course: CourseRef::Default,
            runs: runs.iter().map(|s| s.to_string()).collect(),
            modes: BTreeMap::new(),
            method: None,
            seed: None,
        };
        if schedule.runs.is_empty() {
            return Err(ScheduleError::NoRuns);
        }
        for (i, name) in schedule.runs.iter().enumerate() {
            if schedule.resolve_mode(name).is_none() {
                return Err(ScheduleError::UnknownMode { index: i + 1, name: name.clone() });
            }
        }
        Ok(schedule)
    }

    /// Mode labels in run order (run 1 first).
    pub fn runs(&self) -> &[String] {
        &self.runs
    }

    pub fn course_ref(&self) -> &CourseRef {
        &self.course
    }

    /// Method named in the file, if any (CLI flags take precedence).
    pub fn method(&self) -> Option<Method> {
        self.method
    }

    /// Seed named in the file, if any (CLI flags take precedence).
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Resolve a mode name: schedule-local definitions shadow built-ins.
    pub fn resolve_mode(&self, name: &str) -> Option<ModeConfig> {
        self.modes.get(name).cloned().or_else(|| ModeConfig::builtin(name))
    }

    /// Materialize the course geometry.
    pub fn course(&self) -> Result<CourseSpec, ScheduleError> {
        match &self.course {
            CourseRef::Default => Ok(CourseSpec::benchmark()),
            CourseRef::File(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(CourseSpec::from_toml_str(&text)?)
            }
        }
    }
}
