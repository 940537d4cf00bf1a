//! Feature fusion: record-aligned concatenation of embeddings from several
//! backbones, followed by a single probe trained on the combined features.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::bank::{l2_normalize_f32, BankError, EmbeddingBank, EmbeddingRecord};
use crate::probe::{train_probe, LinearProbe, ProbeError, TrainConfig, TrainHistory};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("fusion needs at least two banks, got {0}")]
    TooFewBanks(usize),
    #[error("backbone `{0}` appears more than once (allow duplicates to fuse it with itself)")]
    DuplicateBackbone(String),
    #[error("record id `{id}` is missing from bank {bank} ({backbone})")]
    MissingId { id: String, bank: usize, backbone: String },
    #[error("record id `{id}` in bank {bank} ({backbone}) is not present in bank 0")]
    ExtraId { id: String, bank: usize, backbone: String },
    #[error("record `{id}`: {field} disagrees between bank 0 and bank {bank}")]
    Conflict { id: String, bank: usize, field: &'static str },
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

#[derive(Debug, Clone)]
pub struct FusionSource {
    pub bank: EmbeddingBank,
    /// Scale each of this bank's vectors to unit L2 norm before concatenation.
    pub l2_normalize: bool,
}

impl FusionSource {
    pub fn new(bank: EmbeddingBank) -> Self {
        Self {
            bank,
            l2_normalize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionSpec {
    pub sources: Vec<FusionSource>,
    pub allow_duplicate_backbones: bool,
}

impl FusionSpec {
    pub fn new(banks: Vec<EmbeddingBank>) -> Self {
        Self {
            sources: banks.into_iter().map(FusionSource::new).collect(),
            allow_duplicate_backbones: false,
        }
    }

    pub fn allow_duplicates(mut self, allow: bool) -> Self {
        self.allow_duplicate_backbones = allow;
        self
    }

    pub fn l2_per_bank(mut self, on: bool) -> Self {
        for s in &mut self.sources {
            s.l2_normalize = on;
        }
        self
    }

    /// `(offset, len)` of each source's slice in a fused vector.
    pub fn offsets(&self) -> Vec<(usize, usize)> {
        let mut at = 0;
        self.sources
            .iter()
            .map(|s| {
                let span = (at, s.bank.dim());
                at += s.bank.dim();
                span
            })
            .collect()
    }

    fn validate(&self) -> Result<(), FusionError> {
        if self.sources.len() < 2 {
            return Err(FusionError::TooFewBanks(self.sources.len()));
        }
        if !self.allow_duplicate_backbones {
            let mut seen = HashSet::new();
            for s in &self.sources {
                if !seen.insert(s.bank.backbone_id()) {
                    return Err(FusionError::DuplicateBackbone(s.bank.backbone_id().to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Concatenates the sources' vectors record by record, aligned on record id.
///
/// All banks must hold exactly the same ids, and each id must carry the same
/// label and generator tag everywhere. The fused bank follows the first
/// bank's record order; its backbone id joins the sources' ids with `+`.
pub fn fuse_banks(spec: &FusionSpec) -> Result<EmbeddingBank, FusionError> {
    spec.validate()?;
    let first = &spec.sources[0].bank;
    let lookups: Vec<HashMap<&str, &EmbeddingRecord>> = spec
        .sources
        .iter()
        .map(|s| s.bank.records().iter().map(|r| (r.id.as_str(), r)).collect())
        .collect();

    for (b, s) in spec.sources.iter().enumerate().skip(1) {
        for r in first.records() {
            let other = lookups[b].get(r.id.as_str()).ok_or_else(|| FusionError::MissingId {
                id: r.id.clone(),
                bank: b,
                backbone: s.bank.backbone_id().to_string(),
            })?;
            if other.label != r.label {
                return Err(FusionError::Conflict {
                    id: r.id.clone(),
                    bank: b,
                    field: "label",
                });
            }
            if other.generator_tag != r.generator_tag {
                return Err(FusionError::Conflict {
                    id: r.id.clone(),
                    bank: b,
                    field: "generator_tag",
                });
            }
        }
        if s.bank.len() != first.len() {
            let extra = s
                .bank
                .records()
                .iter()
                .find(|r| !lookups[0].contains_key(r.id.as_str()))
                .expect("unique ids and a larger bank imply an id outside bank 0");
            return Err(FusionError::ExtraId {
                id: extra.id.clone(),
                bank: b,
                backbone: s.bank.backbone_id().to_string(),
            });
        }
    }

    let dim: usize = spec.sources.iter().map(|s| s.bank.dim()).sum();
    let records = first
        .records()
        .iter()
        .map(|r| {
            let mut vector = Vec::with_capacity(dim);
            for (source, lookup) in spec.sources.iter().zip(&lookups) {
                let part = &lookup[r.id.as_str()].vector;
                if source.l2_normalize {
                    vector.extend(l2_normalize_f32(part));
                } else {
                    vector.extend_from_slice(part);
                }
            }
            EmbeddingRecord {
                vector,
                ..r.clone()
            }
        })
        .collect();
    let backbone_id = spec
        .sources
        .iter()
        .map(|s| s.bank.backbone_id())
        .collect::<Vec<_>>()
        .join("+");
    Ok(EmbeddingBank::new(backbone_id, dim, records)?)
}

/// Fuses the training banks and trains one probe on the combined features.
pub fn train_fused(spec: &FusionSpec, config: &TrainConfig) -> Result<(LinearProbe, TrainHistory), FusionError> {
    let fused = fuse_banks(spec)?;
    Ok(train_probe(&fused, None, config)?)
}

/// The part of a fused vector that came from source `index`.
pub fn source_slice<'a>(spec: &FusionSpec, fused: &'a [f32], index: usize) -> &'a [f32] {
    let (at, len) = spec.offsets()[index];
    &fused[at..at + len]
}
