//! Per-generator evaluation: average precision, class-averaged accuracy and
//! the mAP / avg-acc aggregates across generators.

mod report;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{EmbeddingBank, Label};
use crate::probe::{LinearProbe, ProbeError};

pub use report::{read_report_json, report_to_csv, report_to_json, write_report, ReportFormat};

/// Default decision threshold on P(fake).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no records to score")]
    Empty,
    #[error("average precision needs at least one positive label")]
    NoPositives,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("accuracy needs both classes (real: {real}, fake: {fake})")]
    SingleClass { real: usize, fake: usize },
    #[error("generator `{tag}` cannot be evaluated: {reason}")]
    BadGroup { tag: String, reason: String },
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("report: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    Ok(())
}

/// Non-interpolated average precision with fakes as the positive class.
///
/// Records are ranked by descending score; equal scores keep their input
/// order. AP sums the precision at each positive's rank, weighted by the
/// recall step `1 / #positives`.
pub fn average_precision(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|l| l.is_fake()).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort: ties keep ascending index
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i].is_fake() {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancedAccuracy {
    pub real_acc: f64,
    pub fake_acc: f64,
    pub balanced: f64,
}

/// Accuracy on each class at `threshold` (score >= threshold means fake) and their mean.
pub fn balanced_accuracy(scores: &[f64], labels: &[Label], threshold: f64) -> Result<BalancedAccuracy, MetricsError> {
    check_inputs(scores, labels)?;
    let (mut real, mut fake, mut real_ok, mut fake_ok) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let says_fake = s >= threshold;
        match l {
            Label::Real => {
                real += 1;
                real_ok += usize::from(!says_fake);
            }
            Label::Fake => {
                fake += 1;
                fake_ok += usize::from(says_fake);
            }
        }
    }
    if real == 0 || fake == 0 {
        return Err(MetricsError::SingleClass { real, fake });
    }
    let real_acc = real_ok as f64 / real as f64;
    let fake_acc = fake_ok as f64 / fake as f64;
    Ok(BalancedAccuracy {
        real_acc,
        fake_acc,
        balanced: (real_acc + fake_acc) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetrics {
    pub generator_tag: String,
    pub ap: f64,
    pub real_acc: f64,
    pub fake_acc: f64,
    pub balanced_acc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backbones: Vec<String>,
    pub config_digest: String,
    pub threshold: f64,
    pub generators: Vec<GeneratorMetrics>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub avg_acc: f64,
}

impl EvalReport {
    /// Assembles a report, computing mAP and avg-acc as unweighted means over generators.
    pub fn from_generators(
        backbones: Vec<String>,
        config_digest: String,
        threshold: f64,
        generators: Vec<GeneratorMetrics>,
    ) -> Result<Self, MetricsError> {
        if generators.is_empty() {
            return Err(MetricsError::Empty);
        }
        let g = generators.len() as f64;
        let map = generators.iter().map(|m| m.ap).sum::<f64>() / g;
        let avg_acc = generators.iter().map(|m| m.balanced_acc).sum::<f64>() / g;
        Ok(Self {
            backbones,
            config_digest,
            threshold,
            generators,
            map,
            avg_acc,
        })
    }
}

/// Scores `bank` with `probe` and computes metrics per generator tag, in
/// order of first appearance. Every tag group must hold at least one real
/// and one fake record.
pub fn evaluate(probe: &LinearProbe, bank: &EmbeddingBank, threshold: f64) -> Result<EvalReport, MetricsError> {
    if probe.dim() != bank.dim() {
        return Err(ProbeError::DimMismatch {
            expected: probe.dim(),
            got: bank.dim(),
        }
        .into());
    }
    if bank.is_empty() {
        return Err(MetricsError::Empty);
    }
    let scores = probe.predict_bank(bank)?;

    let tags = bank.generator_tags();
    let slot: HashMap<&str, usize> = tags.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut group_scores: Vec<Vec<f64>> = vec![Vec::new(); tags.len()];
    let mut group_labels: Vec<Vec<Label>> = vec![Vec::new(); tags.len()];
    for (r, s) in bank.records().iter().zip(&scores) {
        let g = slot[r.generator_tag.as_str()];
        group_scores[g].push(*s);
        group_labels[g].push(r.label);
    }

    let mut generators = Vec::with_capacity(tags.len());
    for ((tag, s), l) in tags.iter().zip(&group_scores).zip(&group_labels) {
        let n_real = l.iter().filter(|x| **x == Label::Real).count();
        let n_fake = l.len() - n_real;
        if n_real == 0 || n_fake == 0 {
            return Err(MetricsError::BadGroup {
                tag: tag.to_string(),
                reason: format!("needs both classes, has {n_real} real and {n_fake} fake"),
            });
        }
        let ap = average_precision(s, l)?;
        let acc = balanced_accuracy(s, l, threshold)?;
        generators.push(GeneratorMetrics {
            generator_tag: tag.to_string(),
            ap,
            real_acc: acc.real_acc,
            fake_acc: acc.fake_acc,
            balanced_acc: acc.balanced,
            n_real,
            n_fake,
        });
    }
    EvalReport::from_generators(
        probe.input_backbones().to_vec(),
        probe.config_digest().to_string(),
        threshold,
        generators,
    )
}
