//! Gaussian-process regression over command/terrain features.
//!
//! Disturbance observations are modelled per output dimension by independent
//! GPs with a squared-exponential kernel over a *shared* input set. The
//! models here are deliberately small (tens of points): they are refit every
//! control cycle from whichever experiences are currently selected, so fits
//! must be cheap and numerically boring.
//!
//! Two conventions hold throughout the crate:
//!
//! * Predictive variance always **includes** observation noise, i.e. the
//!   reported variance is `latent + noise_variance`. Outlier tests,
//!   likelihood scores and controller bounds all consume this same quantity.
//! * An empty model is a valid model: it predicts the prior, mean zero with
//!   variance `signal_variance + noise_variance`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("misaligned training data: {0}")]
    MisalignedData(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("covariance not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("empty data set where at least one point is required")]
    EmptyData,
    #[error("no output dimension {0}")]
    NoSuchDimension(usize),
}

/// Input point for the regression: finite values, fixed dimensionality.
///
/// In this system features are `(v_cmd [m/s], omega_cmd [rad/s],
/// path curvature [1/m])`, but nothing in this module depends on that
/// composition.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GpError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite("feature vector"));
        }
        Ok(FeatureVector(DVector::from_vec(values)))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, GpError> {
        Self::new(values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Squared-exponential kernel hyperparameters for one output dimension.
///
/// Validated at construction: length scales strictly positive and finite,
/// both variances strictly positive (the noise floor is what keeps repeated
/// inputs factorizable).
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    length_scales: DVector<f64>,
    inv_sq_lengths: DVector<f64>,
    signal_variance: f64,
    noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(
        length_scales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self, GpError> {
        if length_scales.is_empty() {
            return Err(GpError::InvalidHyperparameters("no length scales".into()));
        }
        if length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::InvalidHyperparameters(format!(
                "length scales must be finite and positive, got {length_scales:?}"
            )));
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(GpError::InvalidHyperparameters(format!(
                "signal variance must be finite and positive, got {signal_variance}"
            )));
        }
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(GpError::InvalidHyperparameters(format!(
                "noise variance must be finite and positive, got {noise_variance}"
            )));
        }
        let inv_sq = length_scales.iter().map(|l| 1.0 / (l * l)).collect::<Vec<_>>();
        Ok(Hyperparameters {
            length_scales: DVector::from_vec(length_scales),
            inv_sq_lengths: DVector::from_vec(inv_sq),
            signal_variance,
            noise_variance,
        })
    }

    /// Defaults for the disturbance model over `(v_cmd, omega_cmd,
    /// curvature)` features: length scales `(1.0, 0.5, 0.5)`, signal std
    /// 0.3, noise std 0.05. Fixed across operating conditions; there is no
    /// online hyperparameter optimization anywhere in the system.
    pub fn disturbance_default() -> Self {
        Hyperparameters::new(vec![1.0, 0.5, 0.5], 0.09, 0.0025)
            .expect("defaults are valid")
    }

    pub fn input_dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn length_scales(&self) -> &[f64] {
        self.length_scales.as_slice()
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Variance reported when no data constrains the prediction.
    pub fn prior_predictive_variance(&self) -> f64 {
        self.signal_variance + self.noise_variance
    }

    fn kernel_slices(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..a.len() {
            let d = a[i] - b[i];
            q += d * d * self.inv_sq_lengths[i];
        }
        self.signal_variance * (-0.5 * q).exp()
    }
}

/// Squared-exponential covariance between two feature vectors.
pub fn kernel(a: &FeatureVector, b: &FeatureVector, hyper: &Hyperparameters) -> Result<f64, GpError> {
    if a.dim() != hyper.input_dim() {
        return Err(GpError::DimensionMismatch { expected: hyper.input_dim(), got: a.dim() });
    }
    if b.dim() != hyper.input_dim() {
        return Err(GpError::DimensionMismatch { expected: hyper.input_dim(), got: b.dim() });
    }
    Ok(hyper.kernel_slices(a.as_slice(), b.as_slice()))
}

/// Posterior prediction for one output dimension at one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Predictive variance, observation noise included.
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

struct DimModel {
    hyper: Hyperparameters,
    /// `None` when the model is empty (prior).
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    /// Diagonal jitter that had to be added to factorize, zero normally.
    jitter: f64,
}

/// Multi-output GP: independent per-dimension models over one shared input
/// set. Refit from scratch on every data change; factorizations are cached
/// inside and never recomputed per query.
pub struct GpModel {
    inputs: Vec<FeatureVector>,
    dims: Vec<DimModel>,
}

impl GpModel {
    /// Fit one GP per output dimension. `outputs[d]` and `hyper[d]` belong
    /// to dimension `d`; every `outputs[d]` must align with `inputs`.
    /// `inputs` may be empty, which yields the prior model.
    ///
    /// If the covariance fails to factorize, diagonal jitter is escalated
    /// from `1e-10 * signal_variance` by factors of ten up to
    /// `1e-6 * signal_variance` before giving up.
    pub fn fit(
        inputs: Vec<FeatureVector>,
        outputs: &[Vec<f64>],
        hyper: &[Hyperparameters],
    ) -> Result<GpModel, GpError> {
        if hyper.is_empty() {
            return Err(GpError::MisalignedData("no output dimensions".into()));
        }
        if outputs.len() != hyper.len() {
            return Err(GpError::MisalignedData(format!(
                "{} output dimensions but {} hyperparameter sets",
                outputs.len(),
                hyper.len()
            )));
        }
        let input_dim = hyper[0].input_dim();
        if hyper.iter().any(|h| h.input_dim() != input_dim) {
            return Err(GpError::InvalidHyperparameters(
                "per-dimension hyperparameters disagree on input dimension".into(),
            ));
        }
        for a in &inputs {
            if a.dim() != input_dim {
                return Err(GpError::DimensionMismatch { expected: input_dim, got: a.dim() });
            }
        }
        let m = inputs.len();
        for (d, ys) in outputs.iter().enumerate() {
            if ys.len() != m {
                return Err(GpError::MisalignedData(format!(
                    "dimension {d} has {} outputs for {m} inputs",
                    ys.len()
                )));
            }
            if ys.iter().any(|y| !y.is_finite()) {
                return Err(GpError::NonFinite("training outputs"));
            }
        }

        let mut dims = Vec::with_capacity(hyper.len());
        for (d, h) in hyper.iter().enumerate() {
            let y = DVector::from_vec(outputs[d].clone());
            if m == 0 {
                dims.push(DimModel {
                    hyper: h.clone(),
                    chol: None,
                    alpha: DVector::zeros(0),
                    jitter: 0.0,
                });
                continue;
            }
            let mut k = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..=i {
                    let v = h.kernel_slices(inputs[i].as_slice(), inputs[j].as_slice());
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
                k[(i, i)] += h.noise_variance();
            }
            let (chol, jitter) = factor_with_jitter(&k, h.signal_variance())?;
            let alpha = chol.solve(&y);
            dims.push(DimModel { hyper: h.clone(), chol: Some(chol), alpha, jitter });
        }
        Ok(GpModel { inputs, dims })
    }

    /// The empty (prior) model: mean zero, full prior variance everywhere.
    pub fn prior(hyper: &[Hyperparameters]) -> Result<GpModel, GpError> {
        let outputs = vec![Vec::new(); hyper.len()];
        GpModel::fit(Vec::new(), &outputs, hyper)
    }

    /// Number of training points.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Number of output dimensions.
    pub fn output_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn inputs(&self) -> &[FeatureVector] {
        &self.inputs
    }

    pub fn hyper(&self, dim: usize) -> Result<&Hyperparameters, GpError> {
        self.dims.get(dim).map(|d| &d.hyper).ok_or(GpError::NoSuchDimension(dim))
    }

    /// Diagonal jitter applied to a dimension's covariance during fitting
    /// (zero in the ordinary well-conditioned case).
    pub fn jitter(&self, dim: usize) -> Result<f64, GpError> {
        self.dims.get(dim).map(|d| d.jitter).ok_or(GpError::NoSuchDimension(dim))
    }

    /// Lower-triangular Cholesky factor of a dimension's training
    /// covariance, `None` for the empty model. Exposed for diagnostics and
    /// for verification that the factor reproduces the covariance.
    pub fn factor_l(&self, dim: usize) -> Result<Option<DMatrix<f64>>, GpError> {
        let d = self.dims.get(dim).ok_or(GpError::NoSuchDimension(dim))?;
        Ok(d.chol.as_ref().map(|c| c.l()))
    }

    /// Posterior prediction for every output dimension at one input.
    pub fn predict(&self, at: &FeatureVector) -> Result<Vec<Prediction>, GpError> {
        (0..self.dims.len()).map(|d| self.predict_dim(d, at)).collect()
    }

    /// Posterior prediction for one output dimension at one input.
    ///
    /// The variance includes observation noise and is clamped to
    /// `[noise_variance, signal_variance + noise_variance]`; it can never
    /// collapse below the noise floor or exceed the prior.
    pub fn predict_dim(&self, dim: usize, at: &FeatureVector) -> Result<Prediction, GpError> {
        let d = self.dims.get(dim).ok_or(GpError::NoSuchDimension(dim))?;
        if at.dim() != d.hyper.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: d.hyper.input_dim(),
                got: at.dim(),
            });
        }
        let Some(chol) = &d.chol else {
            return Ok(Prediction { mean: 0.0, variance: d.hyper.prior_predictive_variance() });
        };
        let m = self.inputs.len();
        let mut k_star = DVector::zeros(m);
        for i in 0..m {
            k_star[i] = d.hyper.kernel_slices(at.as_slice(), self.inputs[i].as_slice());
        }
        let mean = d.alpha.dot(&k_star);
        let w = chol.solve(&k_star);
        let latent = (d.hyper.signal_variance() - k_star.dot(&w))
            .clamp(0.0, d.hyper.signal_variance());
        Ok(Prediction { mean, variance: latent + d.hyper.noise_variance() })
    }

    /// Gradient of the posterior mean of one output dimension with respect
    /// to the input, evaluated at `at`. Zero for the empty model.
    pub fn mean_gradient(&self, dim: usize, at: &FeatureVector) -> Result<DVector<f64>, GpError> {
        let d = self.dims.get(dim).ok_or(GpError::NoSuchDimension(dim))?;
        if at.dim() != d.hyper.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: d.hyper.input_dim(),
                got: at.dim(),
            });
        }
        let mut grad = DVector::zeros(at.dim());
        if d.chol.is_none() {
            return Ok(grad);
        }
        for (i, xi) in self.inputs.iter().enumerate() {
            let k = d.hyper.kernel_slices(at.as_slice(), xi.as_slice());
            let coeff = d.alpha[i] * k;
            for j in 0..at.dim() {
                grad[j] -= coeff * d.hyper.inv_sq_lengths[j] * (at.as_slice()[j] - xi.as_slice()[j]);
            }
        }
        Ok(grad)
    }

    /// Joint log-likelihood of independent observations under the posterior:
    /// the sum over points and output dimensions of the Gaussian log-density
    /// with this model's predictive mean and (noise-inclusive) variance.
    pub fn log_likelihood<'a, I>(&self, points: I) -> Result<f64, GpError>
    where
        I: IntoIterator<Item = (&'a FeatureVector, &'a [f64])>,
    {
        let mut total = 0.0;
        let mut any = false;
        for (a, ys) in points {
            any = true;
            if ys.len() != self.dims.len() {
                return Err(GpError::MisalignedData(format!(
                    "observation has {} dimensions, model has {}",
                    ys.len(),
                    self.dims.len()
                )));
            }
            for (d, y) in ys.iter().enumerate() {
                let p = self.predict_dim(d, a)?;
                total += gaussian_log_pdf(*y, p.mean, p.variance);
            }
        }
        if !any {
            return Err(GpError::EmptyData);
        }
        Ok(total)
    }
}

/// Log-density of `N(mean, variance)` at `y`. `variance` must be positive,
/// which predictive variances guarantee by construction.
pub fn gaussian_log_pdf(y: f64, mean: f64, variance: f64) -> f64 {
    let d = y - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + d * d / variance)
}

fn factor_with_jitter(
    k: &DMatrix<f64>,
    signal_variance: f64,
) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let mut jitter = 0.0f64;
    let cap = 1e-6 * signal_variance;
    loop {
        let mut kj = k.clone();
        if jitter > 0.0 {
            for i in 0..kj.nrows() {
                kj[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(kj) {
            return Ok((chol, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 * signal_variance } else { jitter * 10.0 };
        if jitter > cap * (1.0 + 1e-12) {
            return Err(GpError::NotPositiveDefinite);
        }
    }
}
