//! Deterministic experiment outputs: one JSON summary plus per-run CSV
//! logs.
//!
//! Every value written here is a pure function of (schedule, method,
//! master seed): no wall-clock times, no machine identifiers, map keys in
//! sorted order, floats in shortest round-trip decimal form. Re-running the
//! same experiment must reproduce every output file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, RunResult};
use crate::store::{write_path_csv, write_run_log};

/// Serializable experiment summary (the `summary.json` document).
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct SummaryDoc {
    pub method: String,
    pub master_seed: u64,
    pub course: CourseInfo,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct CourseInfo {
    pub total_length: f64,
    pub vertices: usize,
    pub closed: bool,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: u32,
    pub label: String,
    pub status: String,
    pub steps: usize,
    pub sim_duration_s: f64,
    pub average_speed: f64,
    pub m_rmse: Option<f64>,
    pub m_rmsz: Option<f64>,
    pub cumulative_cost: f64,
    pub mean_abs_lateral: f64,
    pub max_abs_lateral: f64,
    pub safety_steps: usize,
    pub scored_cycles: usize,
    pub none_fraction: Option<f64>,
    /// Fraction of scored cycles choosing each source label ("none"
    /// included); empty under baseline policies.
    pub chosen_fractions: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct Aggregate {
    pub completed_runs: usize,
    pub failed_runs: usize,
    pub total_cumulative_cost: f64,
    /// Means over completed runs that produced the metric.
    pub mean_m_rmse: Option<f64>,
    pub mean_m_rmsz: Option<f64>,
    /// live label -> chosen label (or "none") -> fraction.
    pub confusion: BTreeMap<String, BTreeMap<String, f64>>,
}

fn run_summary(result: &ExperimentResult, run: &RunResult) -> RunSummary {
    let mut chosen: BTreeMap<String, usize> = BTreeMap::new();
    for e in &run.scores {
        let col = match e.chosen {
            Some(id) => result.label_of(id).to_string(),
            None => "none".to_string(),
        };
        *chosen.entry(col).or_default() += 1;
    }
    let scored = run.scores.len();
    let chosen_fractions = chosen
        .into_iter()
        .map(|(k, n)| (k, n as f64 / scored as f64))
        .collect();
    let mean_abs_lateral = if run.steps.is_empty() {
        0.0
    } else {
        run.steps.iter().map(|s| s.lateral.abs()).sum::<f64>() / run.steps.len() as f64
    };
    let max_abs_lateral =
        run.steps.iter().map(|s| s.lateral.abs()).fold(0.0f64, f64::max);
    RunSummary {
        run: run.run.0,
        label: run.label.clone(),
        status: run.outcome.status(),
        steps: run.steps.len(),
        sim_duration_s: run.sim_duration(),
        average_speed: run.average_speed,
        m_rmse: run.m_rmse,
        m_rmsz: run.m_rmsz,
        cumulative_cost: run.cumulative_cost,
        mean_abs_lateral,
        max_abs_lateral,
        safety_steps: run.safety_steps,
        scored_cycles: scored,
        none_fraction: run.none_fraction(),
        chosen_fractions,
    }
}

/// Reduce an experiment result to its summary document.
pub fn summarize(result: &ExperimentResult) -> SummaryDoc {
    let runs: Vec<RunSummary> =
        result.runs.iter().map(|r| run_summary(result, r)).collect();
    let completed = result.runs.iter().filter(|r| r.outcome.completed()).count();
    let mean_of = |vals: Vec<f64>| {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let mean_m_rmse = mean_of(
        result
            .runs
            .iter()
            .filter(|r| r.outcome.completed())
            .filter_map(|r| r.m_rmse)
            .collect(),
    );
    let mean_m_rmsz = mean_of(
        result
            .runs
            .iter()
            .filter(|r| r.outcome.completed())
            .filter_map(|r| r.m_rmsz)
            .collect(),
    );
    SummaryDoc {
        method: result.method.to_string(),
        master_seed: result.master_seed,
        course: CourseInfo {
            total_length: result.path.total_length(),
            vertices: result.path.len(),
            closed: result.path.is_closed(),
        },
        runs,
        aggregate: Aggregate {
            completed_runs: completed,
            failed_runs: result.runs.len() - completed,
            total_cumulative_cost: result.total_cost(),
            mean_m_rmse,
            mean_m_rmsz,
            confusion: result.confusion(),
        },
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_runs_csv<W: Write>(w: &mut W, doc: &SummaryDoc) -> io::Result<()> {
    writeln!(
        w,
        "run,label,status,steps,sim_duration_s,average_speed,m_rmse,m_rmsz,\
         cumulative_cost,mean_abs_lateral,max_abs_lateral,safety_steps,\
         scored_cycles,none_fraction"
    )?;
    for r in &doc.runs {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run,
            r.label,
            r.status,
            r.steps,
            r.sim_duration_s,
            r.average_speed,
            fmt_opt(r.m_rmse),
            fmt_opt(r.m_rmsz),
            r.cumulative_cost,
            r.mean_abs_lateral,
            r.max_abs_lateral,
            r.safety_steps,
            r.scored_cycles,
            fmt_opt(r.none_fraction),
        )?;
    }
    Ok(())
}

fn write_steps_csv<W: Write>(w: &mut W, run: &RunResult) -> io::Result<()> {
    writeln!(
        w,
        "step,t,x,y,theta,vertex,v_cmd,omega_cmd,lateral,heading,cost,\
         warm_cost,iterations,safety,ctl_size,ctl_gen"
    )?;
    for s in &run.steps {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.step,
            s.t,
            s.state.x,
            s.state.y,
            s.state.theta,
            s.vertex,
            s.command.v,
            s.command.omega,
            s.lateral,
            s.heading,
            s.cost,
            s.warm_cost,
            s.iterations,
            s.safety_flag as u8,
            s.control_set_size,
            s.control_generation,
        )?;
    }
    Ok(())
}

fn write_scores_csv<W: Write>(w: &mut W, run: &RunResult) -> io::Result<()> {
    writeln!(
        w,
        "step,t,run,p_b,n_out,trials,live_samples,log_prob,prior_log_prob,\
         accepted,chosen"
    )?;
    for e in &run.scores {
        for s in &e.scores {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.step,
                e.t,
                s.run,
                s.p_b,
                s.n_out,
                s.trials,
                s.live_samples,
                s.log_prob,
                s.prior_log_prob,
                s.accepted as u8,
                (e.chosen == Some(s.run)) as u8,
            )?;
        }
    }
    Ok(())
}

/// Write the full output tree for one experiment into `dir`:
///
/// ```text
/// dir/
///   summary.json
///   path.csv
///   runs.csv
///   steps/run_NN.csv         per-step controller records
///   scores/run_NN.csv        per-cycle candidate scores (scoring runs only)
///   experiences/run_NN.csv   recorded experiences (the run log format)
/// ```
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::create_dir_all(dir.join("steps"))?;
    fs::create_dir_all(dir.join("experiences"))?;
    let doc = summarize(result);

    let mut json = serde_json::to_string_pretty(&doc).expect("summary serializes");
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("path.csv"))?);
    write_path_csv(&mut w, &result.path)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("runs.csv"))?);
    write_runs_csv(&mut w, &doc)?;
    w.flush()?;

    let any_scores = result.runs.iter().any(|r| !r.scores.is_empty());
    if any_scores {
        fs::create_dir_all(dir.join("scores"))?;
    }
    for run in &result.runs {
        let name = format!("run_{:02}.csv", run.run.0);
        let mut w = BufWriter::new(fs::File::create(dir.join("steps").join(&name))?);
        write_steps_csv(&mut w, run)?;
        w.flush()?;
        if any_scores {
            let mut w = BufWriter::new(fs::File::create(dir.join("scores").join(&name))?);
            write_scores_csv(&mut w, run)?;
            w.flush()?;
        }
        let exps = result
            .store
            .run(run.run)
            .map(|r| r.experiences().to_vec())
            .unwrap_or_default();
        let mut w =
            BufWriter::new(fs::File::create(dir.join("experiences").join(&name))?);
        write_run_log(&mut w, &exps)?;
        w.flush()?;
    }
    Ok(())
}

/// Load the summary document back from an output directory.
pub fn load_summary(dir: &Path) -> io::Result<SummaryDoc> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
