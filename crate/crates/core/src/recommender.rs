//! Selection of which past experiences feed the control-loop disturbance
//! model.
//!
//! Every control cycle the live vehicle has a short window of fresh
//! observations. Each stored run that covers the same stretch of path is
//! scored against that window in two stages:
//!
//! 1. **Deviation gate.** Fit a GP to the candidate's data, predict the live
//!    features, and count how many (sample, dimension) pairs fall outside
//!    the 3-sigma band. Under a correct model each pair is an outlier with
//!    probability `p = 0.0027`, so the number of outliers in `m` trials is
//!    binomially distributed; if the upper-tail probability of the observed
//!    count drops below a significance level `alpha`, the candidate's
//!    dynamics are demonstrably not the live dynamics and it is rejected.
//! 2. **Likelihood ranking.** Surviving candidates are ranked by the joint
//!    log-likelihood of the live window under their posterior; a candidate
//!    must also beat the *prior* likelihood (an empty model), otherwise
//!    using it would be worse than using nothing.
//!
//! The winner's upcoming-terrain experiences are blended into a bounded
//! control set (add up to 10, keep at most 50). When nothing is acceptable
//! the set is instead shrunk by 10, so repeated rejection decays the control
//! model back to the conservative prior — a safe mode with honest, wide
//! uncertainty bands.
//!
//! Nothing in this module reads ground-truth mode labels; scoring is a pure
//! function of recorded experience data.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::gp::{FeatureVector, GpError, GpModel, Hyperparameters, Prediction};
use crate::path::VertexId;
use crate::store::{vertex_span, Experience, ExperienceStore, RunId, StoreError};

/// Output dimensions of a disturbance observation.
const D_OUT: usize = 3;

/// Tuning of the recommendation engine.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommenderConfig {
    /// Significance level of the deviation gate.
    pub alpha: f64,
    /// Per-trial outlier probability under a correct model (two-sided
    /// 3-sigma mass of a Gaussian).
    pub outlier_p: f64,
    /// Experiences drawn from the recommended run per update.
    pub n_add: usize,
    /// Control-set capacity.
    pub n_ctl: usize,
    /// Experiences removed per update when nothing is recommended.
    pub n_drop: usize,
    /// Length of the live observation window [s].
    pub live_window_secs: f64,
    /// Vertices of upcoming terrain the winner's data is drawn from
    /// (matches the controller's prediction horizon at nominal speed).
    pub ahead_window_vertices: usize,
    /// Below this many live samples the cycle is skipped entirely.
    pub min_live_samples: usize,
    /// At most this many most-recent sealed runs are scored per cycle.
    pub max_candidate_runs: usize,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            alpha: 0.05,
            outlier_p: 0.0027,
            n_add: 10,
            n_ctl: 50,
            n_drop: 10,
            live_window_secs: 3.0,
            ahead_window_vertices: 15,
            min_live_samples: 10,
            max_candidate_runs: 300,
        }
    }
}

/// Upper tail of the binomial distribution: the probability of observing
/// `n_out` or more successes in `trials` Bernoulli trials with success
/// probability `p`. Computed in log space (anchor term by compensated log
/// recurrence, then log-sum-exp), which keeps it usable out to `trials`
/// around a thousand without under- or overflow.
pub fn binomial_tail(n_out: usize, trials: usize, p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "outlier probability must lie strictly in (0, 1), got {p}");
    assert!(n_out <= trials, "cannot observe {n_out} outliers in {trials} trials");
    if n_out == 0 {
        return 1.0; // full sum over the support
    }
    let m = trials as f64;
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p(); // ln(1 - p), accurate for small p
    // ln C(trials, n_out), Kahan-compensated.
    let mut ln_binom = 0.0f64;
    let mut comp = 0.0f64;
    let kahan_add = |acc: &mut f64, c: &mut f64, term: f64| {
        let y = term - *c;
        let t = *acc + y;
        *c = (t - *acc) - y;
        *acc = t;
    };
    for i in 1..=n_out {
        let ratio = ((m - n_out as f64 + i as f64) / i as f64).ln();
        kahan_add(&mut ln_binom, &mut comp, ratio);
    }
    // Walk the log terms from x = n_out to x = trials.
    let mut ln_terms = Vec::with_capacity(trials - n_out + 1);
    let mut ln_t = ln_binom + n_out as f64 * ln_p + (m - n_out as f64) * ln_q;
    let mut t_comp = 0.0f64;
    ln_terms.push(ln_t);
    for x in n_out..trials {
        let inc = (m - x as f64).ln() - (x as f64 + 1.0).ln() + ln_p - ln_q;
        kahan_add(&mut ln_t, &mut t_comp, inc);
        ln_terms.push(ln_t);
    }
    // log-sum-exp with compensated accumulation of the exponentials.
    let max = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut s_comp = 0.0f64;
    for lt in ln_terms {
        kahan_add(&mut sum, &mut s_comp, (lt - max).exp());
    }
    (max.exp() * sum).clamp(0.0, 1.0)
}

/// Count 3-sigma outliers over (sample, dimension) trials. Each item pairs
/// one sample's per-dimension predictions with its observations; a trial is
/// an outlier iff the absolute deviation *strictly* exceeds three predictive
/// standard deviations (noise included). Returns `(outliers, trials)`.
pub fn count_outliers<'a, I>(pairs: I) -> (usize, usize)
where
    I: IntoIterator<Item = (&'a [Prediction], &'a [f64])>,
{
    let mut n_out = 0;
    let mut trials = 0;
    for (preds, obs) in pairs {
        assert_eq!(preds.len(), obs.len(), "prediction/observation dimension mismatch");
        for (p, y) in preds.iter().zip(obs) {
            trials += 1;
            if (y - p.mean).abs() > 3.0 * p.std() {
                n_out += 1;
            }
        }
    }
    (n_out, trials)
}

/// Verdict for one candidate run against the live window.
#[derive(Clone, Debug, PartialEq)]
pub struct RunScore {
    pub run: RunId,
    /// Binomial upper-tail probability of the observed outlier count.
    pub p_b: f64,
    /// Outliers observed over `trials` (sample, dimension) pairs.
    pub n_out: usize,
    pub trials: usize,
    /// Live samples the candidate was scored against.
    pub live_samples: usize,
    /// Log-likelihood of the live window under the candidate's posterior.
    pub log_prob: f64,
    /// Log-likelihood of the live window under the prior (empty model).
    pub prior_log_prob: f64,
    pub accepted: bool,
    /// Present when scoring could not proceed normally (e.g. fit failure).
    pub diagnostic: Option<String>,
}

fn training_columns(exps: &[Experience]) -> (Vec<FeatureVector>, Vec<Vec<f64>>) {
    let inputs: Vec<FeatureVector> = exps.iter().map(|e| e.a.clone()).collect();
    let outputs: Vec<Vec<f64>> =
        (0..D_OUT).map(|d| exps.iter().map(|e| e.g_hat[d]).collect()).collect();
    (inputs, outputs)
}

fn live_pairs(live: &[Experience]) -> impl Iterator<Item = (&FeatureVector, &[f64])> {
    live.iter().map(|e| (&e.a, &e.g_hat[..]))
}

/// Score one candidate run's windowed data against the live window.
///
/// An empty candidate window degenerates to the prior model; it then ties
/// the prior likelihood and is **not** accepted (reusing nothing must beat
/// reusing nothing). A candidate whose GP cannot be fit is rejected with a
/// diagnostic rather than failing the cycle.
pub fn score_run(
    run: RunId,
    candidate: &[Experience],
    live: &[Experience],
    hyper: &[Hyperparameters],
    config: &RecommenderConfig,
) -> RunScore {
    assert!(!live.is_empty(), "live window must not be empty");
    assert_eq!(hyper.len(), D_OUT, "disturbance observations carry {D_OUT} dimensions");
    let live_samples = live.len();

    let prior = GpModel::prior(hyper).expect("validated hyperparameters");
    let prior_log_prob = prior
        .log_likelihood(live_pairs(live))
        .expect("live window is nonempty and aligned");

    let (inputs, outputs) = training_columns(candidate);
    let model = match GpModel::fit(inputs, &outputs, hyper) {
        Ok(m) => m,
        Err(e) => {
            return RunScore {
                run,
                p_b: 0.0,
                n_out: 0,
                trials: live_samples * D_OUT,
                live_samples,
                log_prob: f64::NEG_INFINITY,
                prior_log_prob,
                accepted: false,
                diagnostic: Some(format!("candidate fit failed: {e}")),
            };
        }
    };

    let predictions: Vec<Vec<Prediction>> = live
        .iter()
        .map(|e| model.predict(&e.a).expect("aligned dimensions"))
        .collect();
    let (n_out, trials) = count_outliers(
        predictions.iter().map(|p| p.as_slice()).zip(live.iter().map(|e| &e.g_hat[..])),
    );
    let p_b = binomial_tail(n_out, trials, config.outlier_p);
    let log_prob = model
        .log_likelihood(live_pairs(live))
        .expect("live window is nonempty and aligned");

    // Acceptance: survive the deviation gate AND strictly beat the prior.
    let accepted = p_b >= config.alpha && log_prob > prior_log_prob;
    RunScore {
        run,
        p_b,
        n_out,
        trials,
        live_samples,
        log_prob,
        prior_log_prob,
        accepted,
        diagnostic: None,
    }
}

/// Score every candidate and pick the accepted run with the highest live
/// log-likelihood; ties resolve to the most recent run (highest id).
/// Returns the winner (if any) and all scores in candidate order.
pub fn recommend(
    live: &[Experience],
    candidates: &[(RunId, Vec<Experience>)],
    hyper: &[Hyperparameters],
    config: &RecommenderConfig,
) -> (Option<RunId>, Vec<RunScore>) {
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, RunId)> = None;
    for (run, window) in candidates {
        let s = score_run(*run, window, live, hyper, config);
        if s.accepted {
            let better = match best {
                None => true,
                Some((l, id)) => s.log_prob > l || (s.log_prob == l && run.0 > id.0),
            };
            if better {
                best = Some((s.log_prob, *run));
            }
        }
        scores.push(s);
    }
    (best.map(|(_, id)| id), scores)
}

/// Bounded multiset of experiences currently feeding the control GP.
#[derive(Clone, Debug, Default)]
pub struct ControlSet {
    experiences: Vec<Experience>,
    generation: u64,
}

impl ControlSet {
    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    /// Bumped on every update, including pure decay.
    pub fn generation(&self) -> u64 {
        self.generation
    }
}

/// One control-set update step.
///
/// With a recommendation: draw up to `n_add` of the recommended run's
/// ahead-window experiences uniformly without replacement, append them, and
/// if the union exceeds `n_ctl`, keep a uniform subsample of `n_ctl`.
/// Without one: remove up to `n_drop` uniformly. Relative order of the
/// surviving experiences is preserved, so the result is deterministic for a
/// given RNG state.
pub fn update_control_set<R: Rng + ?Sized>(
    current: &ControlSet,
    recommended_ahead: Option<&[Experience]>,
    config: &RecommenderConfig,
    rng: &mut R,
) -> ControlSet {
    let mut next: Vec<Experience> = current.experiences.clone();
    match recommended_ahead {
        Some(ahead) => {
            let take = config.n_add.min(ahead.len());
            if take > 0 {
                let mut picked = rand::seq::index::sample(rng, ahead.len(), take).into_vec();
                picked.sort_unstable();
                next.extend(picked.into_iter().map(|i| ahead[i].clone()));
            }
            if next.len() > config.n_ctl {
                let mut keep = rand::seq::index::sample(rng, next.len(), config.n_ctl).into_vec();
                keep.sort_unstable();
                next = keep.into_iter().map(|i| next[i].clone()).collect();
            }
        }
        None => {
            let drop = config.n_drop.min(next.len());
            if drop > 0 {
                let mut gone = rand::seq::index::sample(rng, next.len(), drop).into_vec();
                gone.sort_unstable();
                for i in gone.into_iter().rev() {
                    next.remove(i);
                }
            }
        }
    }
    ControlSet { experiences: next, generation: current.generation + 1 }
}

#[derive(Debug, Error)]
pub enum RecommenderError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Outcome of one recommendation cycle.
#[derive(Clone, Debug)]
pub enum CycleOutcome {
    /// Too little live data; the control set was left untouched.
    Skipped { live_samples: usize },
    /// Candidates were scored and the control set updated.
    Scored { chosen: Option<RunId>, scores: Vec<RunScore> },
}

/// Stateful recommendation engine: owns the control set, its fitted model,
/// and the RNG stream driving subsampling.
pub struct Recommender {
    config: RecommenderConfig,
    hyper: Vec<Hyperparameters>,
    rng: ChaCha12Rng,
    control: ControlSet,
    model: Arc<GpModel>,
}

impl Recommender {
    pub fn new(
        config: RecommenderConfig,
        hyper: Vec<Hyperparameters>,
        seed: u64,
    ) -> Result<Self, GpError> {
        let model = Arc::new(GpModel::prior(&hyper)?);
        Ok(Recommender {
            config,
            hyper,
            rng: ChaCha12Rng::seed_from_u64(seed),
            control: ControlSet::default(),
            model,
        })
    }

    pub fn config(&self) -> &RecommenderConfig {
        &self.config
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control
    }

    /// The current control model. Cheap to clone; the harness hands this to
    /// the controller each step so a mid-cycle update can never tear.
    pub fn control_model(&self) -> Arc<GpModel> {
        Arc::clone(&self.model)
    }

    /// Run one full cycle: take the live tail, score candidate runs over the
    /// same vertex interval, and apply the control-set update.
    pub fn cycle(
        &mut self,
        store: &ExperienceStore,
        live_run: RunId,
        now: f64,
        current_vertex: VertexId,
    ) -> Result<CycleOutcome, RecommenderError> {
        let live = store.live_tail(live_run, now, self.config.live_window_secs)?;
        if live.len() < self.config.min_live_samples {
            return Ok(CycleOutcome::Skipped { live_samples: live.len() });
        }
        let (span_from, span_to) = vertex_span(&live).expect("nonempty live window");

        let mut sealed = store.sealed_runs();
        sealed.retain(|r| *r != live_run);
        if sealed.len() > self.config.max_candidate_runs {
            let skip = sealed.len() - self.config.max_candidate_runs;
            sealed.drain(..skip);
        }
        let mut candidates = Vec::with_capacity(sealed.len());
        for run in sealed {
            let window = store.window_interval(run, span_from, span_to)?;
            candidates.push((run, window));
        }

        let (chosen, scores) = recommend(&live, &candidates, &self.hyper, &self.config);
        let ahead = match chosen {
            Some(run) => {
                Some(store.window_ahead(run, current_vertex, self.config.ahead_window_vertices)?)
            }
            None => None,
        };
        self.apply_update(ahead)?;
        Ok(CycleOutcome::Scored { chosen, scores })
    }

    /// Apply one control-set update outside the scoring flow. `None` decays
    /// the set; `Some(window)` blends the window in. This is also the hook
    /// baseline policies use to bypass scoring.
    pub fn apply_update(&mut self, recommended_ahead: Option<Vec<Experience>>) -> Result<(), GpError> {
        self.control =
            update_control_set(&self.control, recommended_ahead.as_deref(), &self.config, &mut self.rng);
        let (inputs, outputs) = training_columns(&self.control.experiences);
        self.model = Arc::new(GpModel::fit(inputs, &outputs, &self.hyper)?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_hyper() -> Vec<Hyperparameters> {
        vec![Hyperparameters::disturbance_default(); 3]
    }

    fn mk_exp(run: u32, vertex: usize, t: f64, a: [f64; 3], g: [f64; 3]) -> Experience {
        Experience {
            run: RunId(run),
            vertex: VertexId(vertex),
            t,
            a: FeatureVector::new(a.to_vec()).unwrap(),
            g_hat: g,
        }
    }

    /// A deterministic corner-ish window: varying commands and curvature,
    /// disturbance from a turn-gain law plus a tiny reproducible ripple.
    fn window(run: u32, gain: f64, n: usize, offset: f64) -> Vec<Experience> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.1;
                let omega = 0.6 * (1.0 + 0.1 * (k as f64 * 0.7).sin());
                let v = 1.5;
                let ripple = 0.004 * (k as f64 * 1.3).sin();
                let g_theta = (gain - 1.0) * omega + ripple + offset;
                mk_exp(run, k, t, [v, omega, 0.4], [ripple, -ripple, g_theta])
            })
            .collect()
    }

    #[test]
    fn tail_of_zero_outliers_is_one() {
        assert_eq!(binomial_tail(0, 300, 0.0027), 1.0);
        assert_eq!(binomial_tail(0, 0, 0.5), 1.0);
    }

    #[test]
    fn tail_of_all_outliers_is_p_to_the_m() {
        assert_relative_eq!(binomial_tail(3, 3, 0.5), 0.125, epsilon = 1e-15);
        assert_relative_eq!(binomial_tail(2, 2, 0.25), 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn tail_simple_cases_match_hand_arithmetic() {
        // P(X >= 1) for B(2, 0.5) = 1 - 0.25.
        assert_relative_eq!(binomial_tail(1, 2, 0.5), 0.75, epsilon = 1e-14);
        // P(X >= 1) for B(1, p) = p.
        assert_relative_eq!(binomial_tail(1, 1, 0.0027), 0.0027, epsilon = 1e-16);
    }

    #[test]
    fn tail_is_monotone_in_outlier_count() {
        let mut prev = 1.0;
        for n in 0..=200 {
            let t = binomial_tail(n, 200, 0.0027);
            assert!(t <= prev + 1e-15, "tail must not increase: n={n}");
            assert!((0.0..=1.0).contains(&t));
            prev = t;
        }
    }

    #[test]
    #[should_panic(expected = "strictly in (0, 1)")]
    fn tail_rejects_degenerate_probability() {
        binomial_tail(1, 2, 0.0);
    }

    #[test]
    fn outlier_boundary_is_strict() {
        let p = Prediction { mean: 0.1, variance: 0.04 }; // std 0.2
        let preds = [p, p, p];
        // Exactly +3 sigma, just inside, just outside.
        let obs = [0.1 + 0.6, 0.1 + 0.6 - 1e-9, 0.1 + 0.6 + 1e-9];
        let (n_out, trials) = count_outliers([(&preds[..], &obs[..])]);
        assert_eq!(trials, 3);
        assert_eq!(n_out, 1);
    }

    #[test]
    fn matching_candidate_is_accepted() {
        let live = window(10, 0.7, 30, 0.0);
        let cand = window(3, 0.7, 30, 0.0);
        let s = score_run(RunId(3), &cand, &live, &default_hyper(), &RecommenderConfig::default());
        assert!(s.accepted, "same-law candidate must be accepted: {s:?}");
        assert!(s.p_b >= 0.05);
        assert!(s.log_prob > s.prior_log_prob);
        assert_eq!(s.trials, 90);
    }

    #[test]
    fn grossly_shifted_candidate_fails_the_deviation_gate() {
        let live = window(10, 1.0, 30, 0.0);
        // Offset of ten noise stds in every dimension's disturbance.
        let shift = 10.0 * 0.05;
        let cand: Vec<Experience> = window(3, 1.0, 30, 0.0)
            .into_iter()
            .map(|mut e| {
                for d in 0..3 {
                    e.g_hat[d] += shift;
                }
                e
            })
            .collect();
        let s = score_run(RunId(3), &cand, &live, &default_hyper(), &RecommenderConfig::default());
        assert!(!s.accepted);
        assert!(s.p_b < 0.05, "p_b = {}", s.p_b);
        assert!(s.n_out > s.trials / 2);
    }

    #[test]
    fn empty_candidate_ties_prior_and_is_rejected() {
        let live = window(10, 1.0, 30, 0.0);
        let s = score_run(RunId(3), &[], &live, &default_hyper(), &RecommenderConfig::default());
        assert!(!s.accepted);
        assert_eq!(s.log_prob, s.prior_log_prob);
        // The gate itself is clean (prior never claims 3-sigma confidence it
        // doesn't have), so rejection comes purely from the prior tie.
        assert!(s.p_b >= 0.05);
    }

    #[test]
    fn recommendation_prefers_matching_dynamics() {
        let live = window(10, 0.7, 30, 0.0);
        let candidates = vec![
            (RunId(1), window(1, 1.0, 30, 0.0)),
            (RunId(2), window(2, 0.7, 30, 0.0)),
            (RunId(3), window(3, 1.15, 30, 0.0)),
        ];
        let (chosen, scores) =
            recommend(&live, &candidates, &default_hyper(), &RecommenderConfig::default());
        assert_eq!(chosen, Some(RunId(2)));
        assert_eq!(scores.len(), 3);
        let s2 = &scores[1];
        for s in &scores {
            if s.run != RunId(2) {
                assert!(s2.log_prob > s.log_prob || !s.accepted);
            }
        }
    }

    #[test]
    fn likelihood_ties_go_to_the_most_recent_run() {
        let live = window(10, 0.7, 30, 0.0);
        let same = window(0, 0.7, 30, 0.0);
        // Identical windows except for the run id: identical scores.
        let candidates = vec![(RunId(4), same.clone()), (RunId(9), same)];
        let (chosen, scores) =
            recommend(&live, &candidates, &default_hyper(), &RecommenderConfig::default());
        assert_eq!(scores[0].log_prob, scores[1].log_prob);
        assert_eq!(chosen, Some(RunId(9)));
    }

    #[test]
    fn no_candidates_means_no_recommendation() {
        let live = window(10, 0.7, 30, 0.0);
        let (chosen, scores) =
            recommend(&live, &[], &default_hyper(), &RecommenderConfig::default());
        assert_eq!(chosen, None);
        assert!(scores.is_empty());
    }

    #[test]
    fn control_set_update_caps_at_capacity() {
        let config = RecommenderConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut set = ControlSet::default();
        let ahead = window(1, 1.0, 40, 0.0);
        for _ in 0..20 {
            set = update_control_set(&set, Some(&ahead), &config, &mut rng);
            assert!(set.len() <= 50);
        }
        assert_eq!(set.len(), 50);
        assert_eq!(set.generation(), 20);
    }

    #[test]
    fn control_set_update_adds_ten_when_room_remains() {
        let config = RecommenderConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let set = ControlSet::default();
        let ahead = window(1, 1.0, 40, 0.0);
        let set = update_control_set(&set, Some(&ahead), &config, &mut rng);
        assert_eq!(set.len(), 10);
        let set = update_control_set(&set, Some(&ahead), &config, &mut rng);
        assert_eq!(set.len(), 20);
        // A short ahead window contributes everything it has.
        let set = update_control_set(&set, Some(&ahead[..4]), &config, &mut rng);
        assert_eq!(set.len(), 24);
    }

    #[test]
    fn rejection_decays_to_empty_in_five_updates() {
        let config = RecommenderConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut set = ControlSet::default();
        let ahead = window(1, 1.0, 60, 0.0);
        while set.len() < 50 {
            set = update_control_set(&set, Some(&ahead), &config, &mut rng);
        }
        let mut updates = 0;
        while !set.is_empty() {
            set = update_control_set(&set, None, &config, &mut rng);
            updates += 1;
            assert!(updates <= 5, "decay took more than five updates");
        }
        assert_eq!(updates, 5);
        // Decaying an empty set is a no-op that still counts a generation.
        let gen = set.generation();
        set = update_control_set(&set, None, &config, &mut rng);
        assert_eq!(set.len(), 0);
        assert_eq!(set.generation(), gen + 1);
    }

    #[test]
    fn control_set_never_invents_experiences() {
        let config = RecommenderConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut set = ControlSet::default();
        let ahead_a = window(1, 1.0, 25, 0.0);
        let ahead_b = window(2, 0.7, 25, 0.0);
        let mut legal: Vec<Experience> = ahead_a.iter().chain(ahead_b.iter()).cloned().collect();
        legal.dedup();
        for k in 0..12 {
            let src = if k % 2 == 0 { &ahead_a } else { &ahead_b };
            set = update_control_set(&set, Some(src), &config, &mut rng);
            for e in set.experiences() {
                assert!(legal.contains(e), "experience not drawn from any input window");
            }
        }
    }

    #[test]
    fn control_set_update_is_deterministic_per_seed() {
        let config = RecommenderConfig::default();
        let ahead = window(1, 1.0, 40, 0.0);
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut set = ControlSet::default();
            for k in 0..10 {
                let rec = if k == 7 { None } else { Some(&ahead[..]) };
                set = update_control_set(&set, rec, &config, &mut rng);
            }
            set.experiences().to_vec()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }
}
