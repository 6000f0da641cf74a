//! Closed-loop execution of an experiment schedule.
//!
//! Each scheduled run resets the vehicle to the path start and simulates
//! the control loop at the fixed control rate until the lap completes, the
//! tracking diverges, the controller faults, or a step limit trips. Every
//! step follows the same order: solve, apply the command to the plant,
//! record the observed disturbance, then let the experience-selection
//! policy update the control model. Policy compute happens between control
//! steps and is not charged to the simulated clock.
//!
//! Plant noise is seeded per (master seed, run index) — never per method —
//! so different methods face byte-identical disturbance realizations and
//! can be compared pairwise.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use super::metrics::{m_rmse, m_rmsz, MetricsError};
use super::schedule::{ExperimentSchedule, ScheduleError};
use super::{mix_seed, Method, PLANT_SALT, RECOMMENDER_SALT};
use crate::gp::{GpError, Hyperparameters};
use crate::mpc::{localize, stage_cost, tracking_error, Controller, ControllerConfig};
use crate::path::{wrap_angle, CourseError, RefPath, VertexId};
use crate::recommender::{
    CycleOutcome, Recommender, RecommenderConfig, RecommenderError, RunScore,
};
use crate::sim::{self, Command, VehicleState, CONTROL_DT};
use crate::store::{compute_disturbance, Experience, ExperienceStore, RunId, StoreError};

/// Lateral divergence beyond this aborts the run [m].
pub const ABORT_LATERAL: f64 = 2.0;
/// Step budget per run, as a multiple of the nominal lap step count.
pub const MAX_STEP_FACTOR: usize = 3;

/// Stress-test override: switch the plant to a different mode partway
/// through a run. Runs are 1-based, the switch applies from `step` on. The
/// run keeps its scheduled ground-truth label.
#[derive(Clone, Debug, PartialEq)]
pub struct MidRunSwitch {
    pub run: usize,
    pub step: usize,
    pub mode: String,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Course(#[from] CourseError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Recommender(#[from] RecommenderError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("mid-run switch references undefined mode '{0}'")]
    UnknownSwitchMode(String),
}

/// Everything recorded about one control step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    /// Simulated time the command was issued [s].
    pub t: f64,
    /// Vehicle state the solve saw.
    pub state: VehicleState,
    /// Reference vertex at decision time.
    pub vertex: VertexId,
    pub command: Command,
    /// Tracking error at decision time.
    pub lateral: f64,
    pub heading: f64,
    /// Solver cost of the accepted plan and of its warm start.
    pub cost: f64,
    pub warm_cost: f64,
    pub iterations: usize,
    pub safety_flag: bool,
    /// Control-set size and generation the solve's model was fitted from.
    pub control_set_size: usize,
    pub control_generation: u64,
    /// Predicted turn rate (mean, std) for each horizon step of the
    /// accepted plan — commanded rate plus the disturbance model's belief.
    pub predicted_turn_rate: Vec<(f64, f64)>,
}

/// One recommendation cycle that actually scored candidates.
#[derive(Clone, Debug)]
pub struct ScoreEvent {
    pub step: usize,
    pub t: f64,
    pub chosen: Option<RunId>,
    pub scores: Vec<RunScore>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Completed,
    Aborted { reason: String },
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        matches!(self, RunOutcome::Completed)
    }

    /// Compact machine-readable status string used in logs.
    pub fn status(&self) -> String {
        match self {
            RunOutcome::Completed => "completed".to_string(),
            RunOutcome::Aborted { reason } => format!("aborted:{reason}"),
        }
    }
}

/// Full record of one run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: RunId,
    pub label: String,
    pub outcome: RunOutcome,
    pub steps: Vec<StepRecord>,
    /// State after the final recorded step.
    pub final_state: VehicleState,
    /// Scored recommendation cycles (empty under baseline policies).
    pub scores: Vec<ScoreEvent>,
    /// Mean over prediction start times of the horizon RMS turn-rate
    /// error; `None` when no full horizon fits in the run.
    pub m_rmse: Option<f64>,
    /// Same aggregation of the horizon RMS z-score.
    pub m_rmsz: Option<f64>,
    /// Realized tracking cost accumulated over the run.
    pub cumulative_cost: f64,
    /// Ground distance over simulated duration [m/s].
    pub average_speed: f64,
    /// Steps on which the tightened corridor collapsed.
    pub safety_steps: usize,
}

impl RunResult {
    pub fn sim_duration(&self) -> f64 {
        self.steps.len() as f64 * CONTROL_DT
    }

    /// Fraction of scored cycles that recommended nothing. `None` when no
    /// cycle scored (baselines, or a run too short to ever fill the live
    /// window).
    pub fn none_fraction(&self) -> Option<f64> {
        if self.scores.is_empty() {
            return None;
        }
        let none = self.scores.iter().filter(|e| e.chosen.is_none()).count();
        Some(none as f64 / self.scores.len() as f64)
    }
}

/// Outcome of a whole schedule under one method and seed.
pub struct ExperimentResult {
    pub method: Method,
    pub master_seed: u64,
    pub runs: Vec<RunResult>,
    /// The experience store as the experiment left it (all runs sealed).
    pub store: ExperienceStore,
    pub path: Arc<RefPath>,
}

impl ExperimentResult {
    /// Ground-truth label of a stored run (evaluation side only).
    pub fn label_of(&self, run: RunId) -> &str {
        self.store.run(run).map(|r| r.mode_label()).unwrap_or("?")
    }

    /// Sum of realized tracking cost over all runs.
    pub fn total_cost(&self) -> f64 {
        self.runs.iter().map(|r| r.cumulative_cost).sum()
    }

    /// Per live mode, the fraction of scored cycles whose chosen run
    /// carried each label, with `none` counting cycles that rejected
    /// everything. Fractions per live mode sum to one.
    pub fn confusion(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for r in &self.runs {
            if r.scores.is_empty() {
                continue;
            }
            let row = counts.entry(r.label.clone()).or_default();
            for e in &r.scores {
                let col = match e.chosen {
                    Some(id) => self.label_of(id).to_string(),
                    None => "none".to_string(),
                };
                *row.entry(col).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .map(|(live, row)| {
                let total: usize = row.values().sum();
                let fracs = row
                    .into_iter()
                    .map(|(col, n)| (col, n as f64 / total as f64))
                    .collect();
                (live, fracs)
            })
            .collect()
    }
}

/// Execute a schedule under one method and master seed.
pub fn run_experiment(
    schedule: &ExperimentSchedule,
    method: Method,
    master_seed: u64,
    switches: &[MidRunSwitch],
) -> Result<ExperimentResult, ExperimentError> {
    for sw in switches {
        if schedule.resolve_mode(&sw.mode).is_none() {
            return Err(ExperimentError::UnknownSwitchMode(sw.mode.clone()));
        }
    }
    let course = schedule.course()?;
    let path = Arc::new(RefPath::generate(&course)?);
    let ctl_cfg = ControllerConfig::default();
    let rec_cfg = RecommenderConfig::default();
    let hyper = vec![Hyperparameters::disturbance_default(); 3];

    let mut store = ExperienceStore::new(Arc::clone(&path));
    let mut controller = Controller::new(ctl_cfg.clone());
    let mut recommender = Recommender::new(
        rec_cfg.clone(),
        hyper,
        mix_seed(master_seed, RECOMMENDER_SALT, 0),
    )?;

    let nominal_steps =
        (path.total_length() / (ctl_cfg.v_desired * CONTROL_DT)).ceil() as usize;
    let max_steps = MAX_STEP_FACTOR * nominal_steps.max(1);
    let start = path.vertex(VertexId(0)).clone();

    let mut runs = Vec::with_capacity(schedule.runs().len());
    for (idx, label) in schedule.runs().iter().enumerate() {
        let run_no = idx + 1;
        let base_mode = schedule
            .resolve_mode(label)
            .expect("schedule validated at construction");
        let mut mode = base_mode.clone();
        let mut plant_rng =
            ChaCha12Rng::seed_from_u64(mix_seed(master_seed, PLANT_SALT, idx as u64));
        controller.reset();
        let run = store.begin_run(label);
        let mut state = VehicleState::new(start.x, start.y, start.theta);
        let mut prev_cmd = Command::ZERO;
        let mut steps: Vec<StepRecord> = Vec::with_capacity(nominal_steps + 8);
        let mut scores: Vec<ScoreEvent> = Vec::new();
        let mut cumulative_cost = 0.0;
        let mut distance = 0.0;
        let mut safety_steps = 0;
        let mut outcome = RunOutcome::Completed;

        for step in 0..max_steps {
            for sw in switches {
                if sw.run == run_no && sw.step == step {
                    mode = schedule
                        .resolve_mode(&sw.mode)
                        .expect("switch modes validated above");
                }
            }
            let t = step as f64 * CONTROL_DT;
            let model = recommender.control_model();
            let sol = controller.step(&state, &model, &path);
            if sol.fault {
                outcome = RunOutcome::Aborted { reason: "controller_fault".to_string() };
                break;
            }
            let v0 = sol.vertex.expect("non-fault solutions carry a vertex");
            let err0 = tracking_error(&state, &path, v0);
            let cmd = sol.command;
            let next = sim::step(&state, &cmd, &mode, CONTROL_DT, &mut plant_rng);

            let first = &sol.rollout[0];
            store.record(Experience {
                run,
                vertex: v0,
                t,
                a: first.feature.clone(),
                g_hat: compute_disturbance(&state, &cmd, &next, CONTROL_DT),
            })?;

            let predicted_turn_rate: Vec<(f64, f64)> = sol
                .rollout
                .iter()
                .map(|rs| (rs.command.omega + rs.predictions[2].mean, rs.predictions[2].std()))
                .collect();
            if sol.safety_flag {
                safety_steps += 1;
            }
            steps.push(StepRecord {
                step,
                t,
                state,
                vertex: v0,
                command: cmd,
                lateral: err0.lateral,
                heading: err0.heading,
                cost: sol.cost,
                warm_cost: sol.warm_cost,
                iterations: sol.iterations,
                safety_flag: sol.safety_flag,
                control_set_size: recommender.control_set().len(),
                control_generation: recommender.control_set().generation(),
                predicted_turn_rate,
            });

            let (v_next, err_next) = localize(&next, &path);
            cumulative_cost += stage_cost(
                &ctl_cfg,
                err_next.lateral,
                err_next.heading,
                cmd,
                prev_cmd,
                ctl_cfg.lateral_bound,
            );
            distance += (next.x - state.x).hypot(next.y - state.y);
            prev_cmd = cmd;
            state = next;
            let now = (step + 1) as f64 * CONTROL_DT;

            match method {
                Method::Proposed => {
                    if let CycleOutcome::Scored { chosen, scores: s } =
                        recommender.cycle(&store, run, now, v_next)?
                    {
                        scores.push(ScoreEvent { step, t: now, chosen, scores: s });
                    }
                }
                Method::LastRun => {
                    if idx > 0 {
                        let prev_run = RunId(idx as u32);
                        let ahead = store.window_ahead(
                            prev_run,
                            v_next,
                            recommender.config().ahead_window_vertices,
                        )?;
                        recommender.apply_update(Some(ahead))?;
                    }
                }
                Method::PriorOnly => {}
            }

            if v_next == path.last_vertex() {
                break;
            }
            if err_next.lateral.abs() > ABORT_LATERAL {
                outcome = RunOutcome::Aborted { reason: "lateral_divergence".to_string() };
                break;
            }
            if step + 1 == max_steps {
                outcome = RunOutcome::Aborted { reason: "step_limit".to_string() };
            }
        }
        store.seal_run(run)?;

        let (rmse, rmsz) =
            horizon_turn_metrics(&steps, &state, CONTROL_DT, ctl_cfg.horizon)?;
        let duration = steps.len() as f64 * CONTROL_DT;
        let average_speed = if duration > 0.0 { distance / duration } else { 0.0 };
        runs.push(RunResult {
            run,
            label: label.clone(),
            outcome,
            steps,
            final_state: state,
            scores,
            m_rmse: rmse,
            m_rmsz: rmsz,
            cumulative_cost,
            average_speed,
            safety_steps,
        });
    }

    Ok(ExperimentResult { method, master_seed, runs, store, path })
}

/// Aggregate the horizon prediction metrics over a run: for every step
/// whose full horizon fits inside the run, compare the predicted turn-rate
/// sequence against the realized one, then average.
fn horizon_turn_metrics(
    steps: &[StepRecord],
    final_state: &VehicleState,
    dt: f64,
    horizon: usize,
) -> Result<(Option<f64>, Option<f64>), MetricsError> {
    let n = steps.len();
    if n < horizon {
        return Ok((None, None));
    }
    let theta_at = |j: usize| {
        if j < n {
            steps[j].state.theta
        } else {
            final_state.theta
        }
    };
    let realized: Vec<f64> =
        (0..n).map(|j| wrap_angle(theta_at(j + 1) - theta_at(j)) / dt).collect();
    let mut rmse_acc = 0.0;
    let mut rmsz_acc = 0.0;
    let mut count = 0usize;
    for k in 0..=(n - horizon) {
        let pred = &steps[k].predicted_turn_rate;
        debug_assert_eq!(pred.len(), horizon);
        let means: Vec<f64> = pred.iter().map(|(m, _)| *m).collect();
        let window = &realized[k..k + horizon];
        rmse_acc += m_rmse(&means, window)?;
        rmsz_acc += m_rmsz(pred, window)?;
        count += 1;
    }
    if count == 0 {
        return Ok((None, None));
    }
    Ok((Some(rmse_acc / count as f64), Some(rmsz_acc / count as f64)))
}
