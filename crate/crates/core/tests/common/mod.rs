//! Shared oracles and generators for the integration suites.
//!
//! The oracles here deliberately avoid the library's computational paths:
//! the GP oracle predicts through an explicit dense matrix inverse instead
//! of a cached Cholesky factorization, and the binomial oracle sums the
//! distribution in plain linear space (with an exact big-rational variant
//! for spot checks) instead of working with logarithms. Agreement between
//! the two routes is what the equivalence tests certify.
#![allow(dead_code)] // each test binary uses its own subset of the helpers

use nalgebra::{DMatrix, DVector};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use exprec_core::gp::{FeatureVector, GpModel, Hyperparameters};
use exprec_core::path::VertexId;
use exprec_core::recommender::binomial_tail;
use exprec_core::store::{Experience, RunId};

/// Squared-exponential kernel written from its textbook definition.
pub fn se_kernel(a: &[f64], b: &[f64], lengths: &[f64], sf2: f64) -> f64 {
    let q: f64 = a
        .iter()
        .zip(b)
        .zip(lengths)
        .map(|((x, y), l)| ((x - y) / l) * ((x - y) / l))
        .sum();
    sf2 * (-0.5 * q).exp()
}

/// GP posterior at one query point through a dense inverse of the training
/// covariance. Returns `(mean, variance)` with the variance observation-
/// noise-inclusive and clamped to `[sn2, sf2 + sn2]`, mirroring the
/// documented prediction contract. `jitter` is whatever diagonal the fitted
/// model reports having needed, so both routes factor the same matrix
/// (normally zero).
pub fn dense_gp_predict(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    lengths: &[f64],
    sf2: f64,
    sn2: f64,
    jitter: f64,
    query: &[f64],
) -> (f64, f64) {
    let m = inputs.len();
    if m == 0 {
        return (0.0, sf2 + sn2);
    }
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            k[(i, j)] = se_kernel(&inputs[i], &inputs[j], lengths, sf2);
        }
        k[(i, i)] += sn2 + jitter;
    }
    let kinv = k.try_inverse().expect("oracle covariance must be invertible");
    let y = DVector::from_column_slice(outputs);
    let kstar =
        DVector::from_iterator(m, inputs.iter().map(|x| se_kernel(query, x, lengths, sf2)));
    let mean = kstar.dot(&(&kinv * &y));
    let latent = (sf2 - kstar.dot(&(&kinv * &kstar))).clamp(0.0, sf2);
    (mean, latent + sn2)
}

/// Binomial upper tail `P[X >= n_out]` by direct linear-space summation:
/// every probability mass term is produced by the forward recurrence from
/// `x = 0` and the tail terms are accumulated with Neumaier compensation.
pub fn binomial_tail_direct(n_out: usize, trials: usize, p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p must lie strictly in (0, 1)");
    assert!(n_out <= trials);
    let q = 1.0 - p;
    let ratio = p / q;
    let mut term = q.powi(trials as i32); // P[X = 0]
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in 0..=trials {
        if x >= n_out {
            let t = term;
            let s = sum + t;
            if sum.abs() >= t.abs() {
                comp += (sum - s) + t;
            } else {
                comp += (t - s) + sum;
            }
            sum = s;
        }
        if x < trials {
            term *= (trials - x) as f64 / (x + 1) as f64 * ratio;
        }
    }
    (sum + comp).clamp(0.0, 1.0)
}

/// Exact binomial upper tail in big-rational arithmetic, for pinning spot
/// values. `p = p_num / p_den`. Cost grows quickly with `trials`; keep it
/// to double-digit trial counts and a handful of calls.
pub fn binomial_tail_exact(n_out: usize, trials: usize, p_num: i64, p_den: i64) -> BigRational {
    assert!(p_num > 0 && p_den > p_num);
    assert!(n_out <= trials);
    let p = BigRational::new(BigInt::from(p_num), BigInt::from(p_den));
    let q = BigRational::one() - &p;
    // term = P[X = x], starting at x = 0 with q^trials.
    let mut term = BigRational::one();
    for _ in 0..trials {
        term *= &q;
    }
    let mut sum = BigRational::zero();
    for x in 0..=trials {
        if x >= n_out {
            sum += &term;
        }
        if x < trials {
            term = term * BigRational::from_integer(BigInt::from((trials - x) as i64))
                / BigRational::from_integer(BigInt::from((x + 1) as i64))
                * &p
                / &q;
        }
    }
    sum
}

/// Outcome of a randomized factored-vs-dense GP comparison sweep.
pub struct GpSweep {
    pub problems: usize,
    pub comparisons: usize,
    /// Worst `|impl - oracle| / (1 + |oracle|)` over all means and variances.
    pub max_err: f64,
}

/// Compare the library's factored GP predictions against the dense-inverse
/// oracle on `n_problems` randomized problems: random sizes up to `max_m`,
/// random hyperparameters per output dimension, inputs at driving-feature
/// scales with occasional exact duplicates, queries both near and far from
/// the data.
pub fn gp_oracle_sweep(n_problems: usize, max_m: usize, seed: u64) -> GpSweep {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_err = 0.0f64;
    let mut comparisons = 0usize;
    for _ in 0..n_problems {
        let m = rng.random_range(0..=max_m);
        let hyper: Vec<Hyperparameters> = (0..3)
            .map(|_| {
                Hyperparameters::new(
                    vec![
                        rng.random_range(0.3..1.5),
                        rng.random_range(0.3..1.5),
                        rng.random_range(0.3..1.5),
                    ],
                    rng.random_range(0.05..0.25),
                    rng.random_range(0.001..0.005),
                )
                .unwrap()
            })
            .collect();
        let mut inputs_raw: Vec<Vec<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            if i > 0 && rng.random_range(0.0..1.0) < 0.15 {
                // Exact duplicate input: the noise floor must keep this
                // factorable, and both routes must agree on the result.
                let j = rng.random_range(0..i);
                inputs_raw.push(inputs_raw[j].clone());
            } else {
                inputs_raw.push(vec![
                    rng.random_range(0.0..2.0),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-0.5..0.5),
                ]);
            }
        }
        let outputs: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..m)
                    .map(|_| 0.2 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        let inputs: Vec<FeatureVector> =
            inputs_raw.iter().map(|v| FeatureVector::from_slice(v).unwrap()).collect();
        let model = GpModel::fit(inputs, &outputs, &hyper).unwrap();

        for qi in 0..5 {
            let query: Vec<f64> = if qi < 3 && m > 0 {
                let base = &inputs_raw[rng.random_range(0..m)];
                base.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect()
            } else {
                vec![
                    rng.random_range(-1.0..3.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.0..1.0),
                ]
            };
            let q = FeatureVector::from_slice(&query).unwrap();
            for d in 0..3 {
                let got = model.predict_dim(d, &q).unwrap();
                let h = &hyper[d];
                let (mean, var) = dense_gp_predict(
                    &inputs_raw,
                    &outputs[d],
                    h.length_scales(),
                    h.signal_variance(),
                    h.noise_variance(),
                    model.jitter(d).unwrap(),
                    &query,
                );
                let em = (got.mean - mean).abs() / (1.0 + mean.abs());
                let ev = (got.variance - var).abs() / (1.0 + var.abs());
                max_err = max_err.max(em).max(ev);
                comparisons += 1;
            }
        }
    }
    GpSweep { problems: n_problems, comparisons, max_err }
}

/// Worst absolute disagreement between the log-space tail implementation and
/// the linear-space oracle over every `(trials <= max_trials, n_out <=
/// trials, p in ps)` triple.
pub fn binomial_sweep_max_error(max_trials: usize, ps: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for &p in ps {
        for m in 0..=max_trials {
            for n in 0..=m {
                let d = (binomial_tail(n, m, p) - binomial_tail_direct(n, m, p)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
    }
    worst
}

/// Deterministic, noise-free-looking window of driving experiences for a
/// vehicle whose realized turn rate is `turn_gain` times the command:
/// cornering features around 0.6 rad/s at 1.5 m/s on 0.4-curvature terrain,
/// with a small deterministic ripple standing in for observation noise.
pub fn synthetic_window(run: u32, turn_gain: f64, n: usize, vertex0: usize) -> Vec<Experience> {
    (0..n)
        .map(|k| {
            let phase = 0.7 * k as f64 + run as f64;
            let omega = 0.6 * (1.0 + 0.1 * phase.sin());
            let ripple = 0.01 * (1.3 * k as f64 + 0.5 * run as f64).sin();
            Experience {
                run: RunId(run),
                vertex: VertexId(vertex0 + k),
                t: k as f64 * 0.1,
                a: FeatureVector::new(vec![1.5, omega, 0.4]).unwrap(),
                g_hat: [ripple, -ripple, (turn_gain - 1.0) * omega + ripple],
            }
        })
        .collect()
}
