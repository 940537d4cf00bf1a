//! 2-D projections of embedding banks for separability analysis: exact kNN
//! graphs, a deterministic UMAP layout and a trustworthiness score.

mod knn;
mod trust;
mod umap;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{EmbeddingBank, Label};

pub use knn::{knn_graph, pairwise_distance, KnnGraph, Neighbor};
pub use trust::trustworthiness;
pub use umap::{fit_curve, umap_project, CurveParams};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("k = {k} must be at least 1 and below the record count {n}")]
    BadK { k: usize, n: usize },
    #[error("record `{0}` is the zero vector, which has no cosine direction")]
    ZeroVector(String),
    #[error("n_neighbors = {n_neighbors} needs more records than that (have {n})")]
    TooFewRecords { n_neighbors: usize, n: usize },
    #[error("invalid projection parameters: {0}")]
    InvalidParams(String),
    #[error("bandwidth search for record {record} did not converge in {iterations} iterations")]
    BandwidthSearch { record: usize, iterations: usize },
    #[error("projection has {points} points but the bank has {records} records")]
    SizeMismatch { points: usize, records: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric `{other}` (expected euclidean or cosine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub metric: Metric,
    pub seed: u64,
    pub negative_sample_rate: usize,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 200,
            metric: Metric::Cosine,
            seed: 0,
            negative_sample_rate: 5,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self, n_records: usize) -> Result<(), ProjectionError> {
        if self.n_neighbors < 2 {
            return Err(ProjectionError::InvalidParams("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist > 0.0 && self.min_dist.is_finite()) {
            return Err(ProjectionError::InvalidParams("min_dist must be positive".into()));
        }
        if self.n_epochs == 0 {
            return Err(ProjectionError::InvalidParams("n_epochs must be at least 1".into()));
        }
        if n_records <= self.n_neighbors {
            return Err(ProjectionError::TooFewRecords {
                n_neighbors: self.n_neighbors,
                n: n_records,
            });
        }
        Ok(())
    }
}

/// 2-D coordinates aligned with a bank's record order.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub ids: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<Label>,
    pub generator_tags: Vec<String>,
}

impl Projection2D {
    pub fn from_points(bank: &EmbeddingBank, points: Vec<[f64; 2]>) -> Result<Self, ProjectionError> {
        if points.len() != bank.len() {
            return Err(ProjectionError::SizeMismatch {
                points: points.len(),
                records: bank.len(),
            });
        }
        Ok(Self {
            ids: bank.records().iter().map(|r| r.id.clone()).collect(),
            labels: bank.records().iter().map(|r| r.label).collect(),
            generator_tags: bank.records().iter().map(|r| r.generator_tag.clone()).collect(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with columns `id,x,y,label,generator_tag`; label is 0 (real) or 1 (fake).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "x", "y", "label", "generator_tag"])
            .expect("in-memory csv write");
        for i in 0..self.len() {
            let [x, y] = self.points[i];
            w.write_record([
                self.ids[i].clone(),
                x.to_string(),
                y.to_string(),
                self.labels[i].as_u8().to_string(),
                self.generator_tags[i].clone(),
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is UTF-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ProjectionError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| ProjectionError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
