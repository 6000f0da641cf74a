//! Prediction-quality metrics over a look-ahead horizon.
//!
//! Both metrics compare the turn-rate sequence a solve predicted against
//! what the vehicle then actually did. The RMS error measures raw accuracy;
//! the RMS z-score divides each deviation by the model's own predicted
//! standard deviation, so it measures *calibration*: values near one mean
//! the error bars are honest, well below one means over-conservative,
//! well above one means overconfident.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric over an empty horizon")]
    Empty,
    #[error("predicted and realized sequences differ in length ({predicted} vs {realized})")]
    LengthMismatch { predicted: usize, realized: usize },
    #[error("zero or negative predictive standard deviation at horizon step {step}")]
    ZeroVariance { step: usize },
    #[error("non-finite value at horizon step {step}")]
    NonFinite { step: usize },
}

/// Root-mean-square error between predicted means and realized values over
/// one horizon.
pub fn m_rmse(predicted: &[f64], realized: &[f64]) -> Result<f64, MetricsError> {
    if predicted.len() != realized.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            realized: realized.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut acc = 0.0;
    for (step, (mu, y)) in predicted.iter().zip(realized).enumerate() {
        if !(mu.is_finite() && y.is_finite()) {
            return Err(MetricsError::NonFinite { step });
        }
        let d = y - mu;
        acc += d * d;
    }
    Ok((acc / predicted.len() as f64).sqrt())
}

/// Root-mean-square z-score: each deviation is normalized by the predicted
/// standard deviation before squaring. `predicted` pairs are `(mean, std)`.
pub fn m_rmsz(predicted: &[(f64, f64)], realized: &[f64]) -> Result<f64, MetricsError> {
    if predicted.len() != realized.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            realized: realized.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut acc = 0.0;
    for (step, ((mu, sigma), y)) in predicted.iter().zip(realized).enumerate() {
        if !(mu.is_finite() && sigma.is_finite() && y.is_finite()) {
            return Err(MetricsError::NonFinite { step });
        }
        if *sigma <= 0.0 {
            return Err(MetricsError::ZeroVariance { step });
        }
        let z = (y - mu) / sigma;
        acc += z * z;
    }
    Ok((acc / predicted.len() as f64).sqrt())
}
