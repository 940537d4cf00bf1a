//! Embedding banks: labeled, generator-tagged collections of fixed-dimension
//! feature vectors produced by one backbone.

mod format;
mod synth;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub use format::{decode_bank, encode_bank, read_bank, write_bank, EBANK_MAGIC, EBANK_VERSION};
pub use synth::{synth_bank, ClusterMean, SynthCluster, SynthSpec};

#[derive(Debug, Error)]
pub enum BankError {
    #[error("bank dimension must be positive")]
    ZeroDim,
    #[error("dimension {0} does not fit the u32 header field")]
    DimTooLarge(usize),
    #[error("record `{id}` has {got} components, bank dimension is {dim}")]
    DimMismatch { id: String, dim: usize, got: usize },
    #[error("record `{id}` has a non-finite component at index {component}")]
    NonFinite { id: String, component: usize },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("{what} is {len} bytes, longer than the 65535-byte limit")]
    StringTooLong { what: &'static str, len: usize },
    #[error("bad magic {0:?}, expected \"EBNK\"")]
    BadMagic([u8; 4]),
    #[error("unsupported EBANK version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file: {0}")]
    Truncated(TruncatedAt),
    #[error("record {record}: invalid label byte {value}")]
    InvalidLabel { record: u64, value: u8 },
    #[error("record {record}: {field} is not valid UTF-8")]
    InvalidUtf8 { record: u64, field: &'static str },
    #[error("{0} unexpected trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("train fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("cannot split an empty bank")]
    EmptyBank,
    #[error("sample size {requested} exceeds the bank's {available} records")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where decoding ran out of bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncatedAt {
    Header,
    Record(u64),
}

impl fmt::Display for TruncatedAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncatedAt::Header => write!(f, "in header"),
            TruncatedAt::Record(i) => write!(f, "in record {i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    /// Training target: 1 for fake, 0 for real.
    pub fn target(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: Label,
    pub generator_tag: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(
        id: impl Into<String>,
        label: Label,
        generator_tag: impl Into<String>,
        vector: Vec<f32>,
    ) -> Self {
        Self {
            id: id.into(),
            label,
            generator_tag: generator_tag.into(),
            vector,
        }
    }
}

/// An immutable, validated bank. Every constructor checks the invariants:
/// positive dimension, all vectors of that length, finite components and
/// unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBank {
    backbone_id: String,
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingBank {
    pub fn new(
        backbone_id: impl Into<String>,
        dim: usize,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, BankError> {
        let bank = Self {
            backbone_id: backbone_id.into(),
            dim,
            records,
        };
        bank.validate()?;
        Ok(bank)
    }

    fn validate(&self) -> Result<(), BankError> {
        if self.dim == 0 {
            return Err(BankError::ZeroDim);
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if r.vector.len() != self.dim {
                return Err(BankError::DimMismatch {
                    id: r.id.clone(),
                    dim: self.dim,
                    got: r.vector.len(),
                });
            }
            if let Some(component) = r.vector.iter().position(|x| !x.is_finite()) {
                return Err(BankError::NonFinite {
                    id: r.id.clone(),
                    component,
                });
            }
            if !seen.insert(r.id.as_str()) {
                return Err(BankError::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }

    /// Builds a bank from records already known to satisfy the invariants
    /// (a subset of a valid bank, for instance).
    fn from_valid_parts(backbone_id: String, dim: usize, records: Vec<EmbeddingRecord>) -> Self {
        Self {
            backbone_id,
            dim,
            records,
        }
    }

    pub fn backbone_id(&self) -> &str {
        &self.backbone_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Distinct generator tags in order of first appearance.
    pub fn generator_tags(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.generator_tag.as_str()))
            .map(|r| r.generator_tag.as_str())
            .collect()
    }

    /// Records whose generator tag is in `tags`, in their original order.
    pub fn filter_by_generator<S: AsRef<str>>(&self, tags: &[S]) -> EmbeddingBank {
        let wanted: BTreeSet<&str> = tags.iter().map(AsRef::as_ref).collect();
        let records = self
            .records
            .iter()
            .filter(|r| wanted.contains(r.generator_tag.as_str()))
            .cloned()
            .collect();
        Self::from_valid_parts(self.backbone_id.clone(), self.dim, records)
    }

    /// Stratified train/held-out split.
    ///
    /// Strata are `(label, generator_tag)` pairs in order of first appearance.
    /// The training side receives `round(fraction * len)` records in total,
    /// allotted by largest remainder so that every stratum gets either the
    /// floor or the ceiling of its proportional share (earlier strata win
    /// ties). Within a stratum the members are shuffled with `seed` and the
    /// first ones go to training. Both outputs keep the original record order.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(EmbeddingBank, EmbeddingBank), BankError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(BankError::BadFraction(train_fraction));
        }
        if self.records.is_empty() {
            return Err(BankError::EmptyBank);
        }
        let strata = self.strata(|r| (r.label, r.generator_tag.as_str()));
        let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
        let quotas = largest_remainder(&sizes, train_fraction, (train_fraction * self.len() as f64).round() as usize);

        let mut rng = rng::seeded(seed);
        let mut in_train = vec![false; self.records.len()];
        for (members, quota) in strata.iter().zip(quotas) {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            for &i in &shuffled[..quota] {
                in_train[i] = true;
            }
        }
        let (train, held): (Vec<_>, Vec<_>) = self
            .records
            .iter()
            .zip(&in_train)
            .partition(|(_, &t)| t);
        let collect = |v: Vec<(&EmbeddingRecord, &bool)>| {
            Self::from_valid_parts(
                self.backbone_id.clone(),
                self.dim,
                v.into_iter().map(|(r, _)| r.clone()).collect(),
            )
        };
        Ok((collect(train), collect(held)))
    }

    /// Label-stratified subsample of exactly `n` records (largest-remainder
    /// allotment per label, seeded choice within each label), original order kept.
    pub fn stratified_sample(&self, n: usize, seed: u64) -> Result<EmbeddingBank, BankError> {
        if n > self.len() {
            return Err(BankError::SampleTooLarge {
                requested: n,
                available: self.len(),
            });
        }
        if n == self.len() {
            return Ok(self.clone());
        }
        let strata = self.strata(|r| r.label);
        let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
        let fraction = n as f64 / self.len() as f64;
        let quotas = largest_remainder(&sizes, fraction, n);
        let mut rng = rng::seeded(seed);
        let mut keep = vec![false; self.len()];
        for (members, quota) in strata.iter().zip(quotas) {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            for &i in &shuffled[..quota] {
                keep[i] = true;
            }
        }
        let records = self
            .records
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect();
        Ok(Self::from_valid_parts(self.backbone_id.clone(), self.dim, records))
    }

    /// Copy with every vector scaled to unit L2 norm. Zero vectors are kept as-is.
    pub fn l2_normalized(&self) -> EmbeddingBank {
        let records = self
            .records
            .iter()
            .map(|r| EmbeddingRecord {
                vector: l2_normalize_f32(&r.vector),
                ..r.clone()
            })
            .collect();
        Self::from_valid_parts(self.backbone_id.clone(), self.dim, records)
    }

    /// Groups record indices by `key`, groups ordered by first appearance.
    fn strata<'a, K, F>(&'a self, key: F) -> Vec<Vec<usize>>
    where
        K: Eq + std::hash::Hash,
        F: Fn(&'a EmbeddingRecord) -> K,
    {
        let mut slot: HashMap<K, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let next = groups.len();
            let g = *slot.entry(key(r)).or_insert(next);
            if g == groups.len() {
                groups.push(Vec::new());
            }
            groups[g].push(i);
        }
        groups
    }
}

pub(crate) fn l2_normalize_f32(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|&x| (f64::from(x) / norm) as f32).collect()
}

/// Splits `total` across groups proportionally to `sizes * fraction`: floors
/// first, then one extra each to the largest fractional remainders.
fn largest_remainder(sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &s)| (e.floor() as usize).min(s))
        .collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // stable: equal remainders keep first-appearance order
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra)
    });
    let mut left = total.saturating_sub(assigned);
    for g in order {
        if left == 0 {
            break;
        }
        if quotas[g] < sizes[g] {
            quotas[g] += 1;
            left -= 1;
        }
    }
    quotas
}
