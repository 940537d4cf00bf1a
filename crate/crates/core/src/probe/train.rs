use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accumulate, bce_term, clip, finish_gradient, normalize_in_place, sigmoid, Gradient, LinearProbe, ProbeError};
use crate::bank::{EmbeddingBank, Label};
use crate::digest::config_digest;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    /// Epochs without sufficient improvement before stopping.
    pub patience: usize,
    /// Improvement smaller than this does not reset the patience counter.
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub prob_clip_epsilon: f64,
    pub seed: u64,
    pub l2_normalize: bool,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            weight_decay: 0.0,
            prob_clip_epsilon: 1e-7,
            seed: 0,
            l2_normalize: false,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.prob_clip_epsilon > 0.0 && self.prob_clip_epsilon < 0.5) {
            return bad("prob_clip_epsilon must lie in (0, 0.5)");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if let Some(es) = &self.early_stop {
            if es.patience == 0 || es.min_delta.is_nan() || es.min_delta < 0.0 {
                return bad("early_stop needs patience >= 1 and min_delta >= 0");
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        config_digest(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss over the full training bank after each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Option<Vec<f64>>,
    pub epochs_run: usize,
}

/// Adam moments for a weight vector and a scalar bias.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: i32,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: f64,
    v_b: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            step: 0,
            m_w: vec![0.0; dim],
            v_w: vec![0.0; dim],
            m_b: 0.0,
            v_b: 0.0,
        }
    }

    /// One bias-corrected Adam update of `weights` and `bias` along `grad`.
    pub fn step(&mut self, cfg: &TrainConfig, weights: &mut [f64], bias: &mut f64, grad: &Gradient) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let update = |m: &mut f64, v: &mut f64, g: f64, p: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        };
        for (i, w) in weights.iter_mut().enumerate() {
            update(&mut self.m_w[i], &mut self.v_w[i], grad.weights[i], w);
        }
        update(&mut self.m_b, &mut self.v_b, grad.bias, bias);
    }
}

/// Dense f64 copy of a bank's inputs as the probe sees them.
struct Design {
    rows: Vec<f64>,
    targets: Vec<f64>,
    labels: Vec<Label>,
    dim: usize,
}

impl Design {
    /// Rows are laid out in ascending id order so that the seeded shuffle does
    /// not depend on how the bank happened to be ordered.
    fn new(bank: &EmbeddingBank, l2: bool) -> Self {
        let mut order: Vec<usize> = (0..bank.len()).collect();
        order.sort_by(|&a, &b| bank.records()[a].id.cmp(&bank.records()[b].id));
        let dim = bank.dim();
        let mut rows = Vec::with_capacity(bank.len() * dim);
        let mut targets = Vec::with_capacity(bank.len());
        let mut labels = Vec::with_capacity(bank.len());
        for i in order {
            let r = &bank.records()[i];
            let start = rows.len();
            rows.extend(r.vector.iter().map(|&v| f64::from(v)));
            if l2 {
                normalize_in_place(&mut rows[start..]);
            }
            targets.push(r.label.target());
            labels.push(r.label);
        }
        Self {
            rows,
            targets,
            labels,
            dim,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.targets.len()
    }

    fn mean_loss(&self, probe: &LinearProbe, eps: f64) -> f64 {
        let total: f64 = (0..self.len())
            .map(|i| bce_term(clip(sigmoid(probe.affine(self.row(i))), eps), self.labels[i]))
            .sum();
        total / self.len() as f64
    }
}

/// Trains a zero-initialized probe on `train` with Adam on the mean BCE.
///
/// Each epoch visits the records in a fresh seeded permutation, in batches
/// of `batch_size` (the last batch may be smaller). After every epoch the
/// full-bank training loss, and the validation loss if `val` is given, are
/// recorded. Early stopping watches the validation loss when available and
/// the training loss otherwise.
pub fn train_probe(
    train: &EmbeddingBank,
    val: Option<&EmbeddingBank>,
    config: &TrainConfig,
) -> Result<(LinearProbe, TrainHistory), ProbeError> {
    config.validate()?;
    let real = train.count(Label::Real);
    let fake = train.count(Label::Fake);
    if real == 0 || fake == 0 {
        return Err(ProbeError::SingleClass { real, fake });
    }
    if let Some(v) = val {
        if v.dim() != train.dim() {
            return Err(ProbeError::DimMismatch {
                expected: train.dim(),
                got: v.dim(),
            });
        }
        if v.is_empty() {
            return Err(ProbeError::Empty);
        }
    }

    let backbones = train.backbone_id().split('+').map(str::to_string).collect();
    let mut probe = LinearProbe::zeros(train.dim(), backbones)?
        .with_provenance(train.generator_tags().join(","), config.digest())
        .with_l2_normalize(config.l2_normalize);

    let design = Design::new(train, config.l2_normalize);
    let val_design = val.map(|v| Design::new(v, config.l2_normalize));
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: val_design.as_ref().map(|_| Vec::with_capacity(config.epochs)),
        epochs_run: 0,
    };

    let mut adam = AdamState::new(train.dim());
    let mut rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..design.len()).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradient {
                weights: vec![0.0; design.dim],
                bias: 0.0,
            };
            for &i in batch {
                accumulate(&probe, design.row(i), design.targets[i], &mut grad);
            }
            finish_gradient(&probe, batch.len(), config.weight_decay, &mut grad);
            let (w, b) = probe.params_mut();
            adam.step(config, w, b, &grad);
        }

        let train_loss = design.mean_loss(&probe, config.prob_clip_epsilon);
        let val_loss = val_design.as_ref().map(|d| d.mean_loss(&probe, config.prob_clip_epsilon));
        let params_ok = probe.bias().is_finite() && probe.weights().iter().all(|w| w.is_finite());
        if !train_loss.is_finite() || !val_loss.is_none_or(f64::is_finite) || !params_ok {
            return Err(ProbeError::NonFiniteLoss {
                epoch,
                train_loss,
                val_loss,
            });
        }
        history.train_loss.push(train_loss);
        if let (Some(h), Some(v)) = (history.val_loss.as_mut(), val_loss) {
            h.push(v);
        }
        history.epochs_run = epoch + 1;

        if let Some(es) = &config.early_stop {
            let watched = val_loss.unwrap_or(train_loss);
            if watched < best - es.min_delta {
                best = watched;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    break;
                }
            }
        }
    }
    Ok((probe, history))
}
