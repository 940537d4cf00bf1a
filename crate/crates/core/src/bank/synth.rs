use serde::{Deserialize, Serialize};

use super::{BankError, EmbeddingBank, EmbeddingRecord, Label};
use crate::rng::PolarNormal;

/// A cluster mean: either a full vector or one value broadcast to every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterMean {
    Vector(Vec<f64>),
    Fill(f64),
}

impl ClusterMean {
    fn resolve(&self, dim: usize) -> Vec<f64> {
        match self {
            ClusterMean::Vector(v) => v.clone(),
            ClusterMean::Fill(x) => vec![*x; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCluster {
    pub label: Label,
    pub generator_tag: String,
    pub mean: ClusterMean,
    pub stddev: f64,
    pub count: usize,
}

/// Isotropic Gaussian clusters for desk-scale experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    pub seed: u64,
    #[serde(default = "default_backbone")]
    pub backbone_id: String,
    pub clusters: Vec<SynthCluster>,
}

fn default_backbone() -> String {
    "synthetic".to_string()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), BankError> {
        let bad = |msg: String| Err(BankError::InvalidSynthSpec(msg));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        for (i, c) in self.clusters.iter().enumerate() {
            let name = format!("cluster {i} ({})", c.generator_tag);
            if c.count == 0 {
                return bad(format!("{name}: count must be positive"));
            }
            if !(c.stddev > 0.0 && c.stddev.is_finite()) {
                return bad(format!("{name}: stddev must be positive, got {}", c.stddev));
            }
            let mean = c.mean.resolve(self.dim);
            if mean.len() != self.dim {
                return bad(format!("{name}: mean has {} components, dim is {}", mean.len(), self.dim));
            }
            if mean.iter().any(|m| !m.is_finite()) {
                return bad(format!("{name}: mean has a non-finite component"));
            }
        }
        Ok(())
    }
}

/// Draws `count` samples per cluster from N(mean, stddev² I).
///
/// One normal stream seeded with `spec.seed` feeds the clusters in order,
/// component by component. Record ids are `c<cluster>_<index>`.
pub fn synth_bank(spec: &SynthSpec) -> Result<EmbeddingBank, BankError> {
    spec.validate()?;
    let mut normal = PolarNormal::new(spec.seed);
    let total: usize = spec.clusters.iter().map(|c| c.count).sum();
    let mut records = Vec::with_capacity(total);
    for (ci, c) in spec.clusters.iter().enumerate() {
        let mean = c.mean.resolve(spec.dim);
        for i in 0..c.count {
            let vector = mean
                .iter()
                .map(|&m| (m + c.stddev * normal.sample()) as f32)
                .collect();
            records.push(EmbeddingRecord {
                id: format!("c{ci}_{i}"),
                label: c.label,
                generator_tag: c.generator_tag.clone(),
                vector,
            });
        }
    }
    EmbeddingBank::new(spec.backbone_id.clone(), spec.dim, records)
}
