//! The linear detector: one affine map over a frozen embedding followed by a
//! sigmoid, producing P(fake). Trained with mean binary cross-entropy.

mod io;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::bank::{EmbeddingBank, EmbeddingRecord, Label};

pub use io::{load_probe, probe_from_json, probe_to_json, save_probe, PROBE_FORMAT};
pub use train::{train_probe, AdamState, EarlyStop, TrainConfig, TrainHistory};

/// Probabilities are clipped to `[eps, 1 - eps]` before any logarithm.
pub const DEFAULT_PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("dimension mismatch: probe expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("cannot compute a loss over an empty set of records")]
    Empty,
    #[error("training bank must contain both classes (real: {real}, fake: {fake})")]
    SingleClass { real: usize, fake: usize },
    #[error("non-finite loss at epoch {epoch}: train {train_loss}, val {val_loss:?}")]
    NonFiniteLoss {
        epoch: usize,
        train_loss: f64,
        val_loss: Option<f64>,
    },
    #[error("probe parameters must be finite")]
    NonFiniteParameter,
    #[error("probe dimension must be positive")]
    ZeroDim,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("probe document: {0}")]
    Schema(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Detector parameters plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    weights: Vec<f64>,
    bias: f64,
    input_backbones: Vec<String>,
    trained_on: String,
    config_digest: String,
    l2_normalize: bool,
}

impl LinearProbe {
    pub fn new(weights: Vec<f64>, bias: f64, input_backbones: Vec<String>) -> Result<Self, ProbeError> {
        if weights.is_empty() {
            return Err(ProbeError::ZeroDim);
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(ProbeError::NonFiniteParameter);
        }
        Ok(Self {
            weights,
            bias,
            input_backbones,
            trained_on: String::new(),
            config_digest: String::new(),
            l2_normalize: false,
        })
    }

    pub fn zeros(dim: usize, input_backbones: Vec<String>) -> Result<Self, ProbeError> {
        Self::new(vec![0.0; dim], 0.0, input_backbones)
    }

    pub fn with_provenance(mut self, trained_on: impl Into<String>, config_digest: impl Into<String>) -> Self {
        self.trained_on = trained_on.into();
        self.config_digest = config_digest.into();
        self
    }

    /// When set, every input vector is scaled to unit L2 norm before the affine map.
    pub fn with_l2_normalize(mut self, on: bool) -> Self {
        self.l2_normalize = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn input_backbones(&self) -> &[String] {
        &self.input_backbones
    }

    pub fn trained_on(&self) -> &str {
        &self.trained_on
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn l2_normalize(&self) -> bool {
        self.l2_normalize
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut f64) {
        (&mut self.weights, &mut self.bias)
    }

    fn check_dim(&self, got: usize) -> Result<(), ProbeError> {
        if got != self.dim() {
            return Err(ProbeError::DimMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// The input as the affine map sees it (normalized if configured).
    pub(crate) fn features(&self, vector: &[f32]) -> Vec<f64> {
        let mut x: Vec<f64> = vector.iter().map(|&v| f64::from(v)).collect();
        if self.l2_normalize {
            normalize_in_place(&mut x);
        }
        x
    }

    pub(crate) fn affine(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// `weights · vector + bias`, the pre-sigmoid score.
    pub fn logit(&self, vector: &[f32]) -> Result<f64, ProbeError> {
        self.check_dim(vector.len())?;
        Ok(self.affine(&self.features(vector)))
    }

    /// P(fake), clipped to `[1e-7, 1 - 1e-7]`.
    pub fn predict(&self, vector: &[f32]) -> Result<f64, ProbeError> {
        self.predict_clipped(vector, DEFAULT_PROB_CLIP)
    }

    pub fn predict_clipped(&self, vector: &[f32], eps: f64) -> Result<f64, ProbeError> {
        Ok(clip(sigmoid(self.logit(vector)?), eps))
    }

    /// Scores every record of `bank` in order.
    pub fn predict_bank(&self, bank: &EmbeddingBank) -> Result<Vec<f64>, ProbeError> {
        self.check_dim(bank.dim())?;
        Ok(bank
            .records()
            .iter()
            .map(|r| clip(sigmoid(self.affine(&self.features(&r.vector))), DEFAULT_PROB_CLIP))
            .collect())
    }
}

pub(crate) fn normalize_in_place(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Logistic function, evaluated without overflow for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clip(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Cross-entropy of one clipped probability against its label.
pub(crate) fn bce_term(p: f64, label: Label) -> f64 {
    match label {
        Label::Fake => -p.ln(),
        Label::Real => -(1.0 - p).ln(),
    }
}

/// Mean binary cross-entropy of `probe` over `bank`: fakes contribute
/// `-ln ψ`, reals `-ln(1 - ψ)`, with ψ clipped at the default epsilon.
pub fn bce_loss(probe: &LinearProbe, bank: &EmbeddingBank) -> Result<f64, ProbeError> {
    bce_loss_with_clip(probe, bank, DEFAULT_PROB_CLIP)
}

pub fn bce_loss_with_clip(probe: &LinearProbe, bank: &EmbeddingBank, eps: f64) -> Result<f64, ProbeError> {
    probe.check_dim(bank.dim())?;
    mean_loss(probe, bank.records(), eps)
}

fn mean_loss(probe: &LinearProbe, records: &[EmbeddingRecord], eps: f64) -> Result<f64, ProbeError> {
    if records.is_empty() {
        return Err(ProbeError::Empty);
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let p = clip(sigmoid(probe.affine(&probe.features(&r.vector))), eps);
            bce_term(p, r.label)
        })
        .sum();
    Ok(total / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Gradient of the mean BCE over `batch`: per record `(ψ - y)·x` for the
/// weights and `ψ - y` for the bias, averaged, plus `weight_decay · w` on
/// the weights. ψ is the unclipped sigmoid.
pub fn loss_gradient(
    probe: &LinearProbe,
    batch: &[EmbeddingRecord],
    weight_decay: f64,
) -> Result<Gradient, ProbeError> {
    if batch.is_empty() {
        return Err(ProbeError::Empty);
    }
    for r in batch {
        probe.check_dim(r.vector.len())?;
    }
    let mut grad = Gradient {
        weights: vec![0.0; probe.dim()],
        bias: 0.0,
    };
    for r in batch {
        let x = probe.features(&r.vector);
        accumulate(probe, &x, r.label.target(), &mut grad);
    }
    finish_gradient(probe, batch.len(), weight_decay, &mut grad);
    Ok(grad)
}

pub(crate) fn accumulate(probe: &LinearProbe, x: &[f64], target: f64, grad: &mut Gradient) {
    let residual = sigmoid(probe.affine(x)) - target;
    for (g, v) in grad.weights.iter_mut().zip(x) {
        *g += residual * v;
    }
    grad.bias += residual;
}

pub(crate) fn finish_gradient(probe: &LinearProbe, n: usize, weight_decay: f64, grad: &mut Gradient) {
    let inv = 1.0 / n as f64;
    for (g, w) in grad.weights.iter_mut().zip(&probe.weights) {
        *g = *g * inv + weight_decay * w;
    }
    grad.bias *= inv;
}
