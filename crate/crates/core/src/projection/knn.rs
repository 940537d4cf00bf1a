use std::cmp::Ordering;

use rayon::prelude::*;

use super::{Metric, ProjectionError};
use crate::bank::EmbeddingBank;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// For each record, its `k` nearest other records by ascending distance,
/// equal distances ordered by index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    pub neighbors: Vec<Vec<Neighbor>>,
}

pub(crate) fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

/// Bank vectors in f64, pre-normalized to unit length under the cosine metric.
pub(crate) struct Prepared {
    data: Vec<f64>,
    dim: usize,
    metric: Metric,
}

impl Prepared {
    pub(crate) fn new(bank: &EmbeddingBank, metric: Metric) -> Result<Self, ProjectionError> {
        let dim = bank.dim();
        let mut data = Vec::with_capacity(bank.len() * dim);
        for r in bank.records() {
            let start = data.len();
            data.extend(r.vector.iter().map(|&v| f64::from(v)));
            if metric == Metric::Cosine {
                let row = &mut data[start..];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(ProjectionError::ZeroVector(r.id.clone()));
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(Self { data, dim, metric })
    }

    pub(crate) fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn distance(&self, i: usize, j: usize) -> f64 {
        pairwise_distance(self.metric, self.row(i), self.row(j))
    }

    /// Every other record sorted by distance from `i`, ties by index.
    pub(crate) fn ranked_from(&self, i: usize) -> Vec<Neighbor> {
        let mut all = self.others(i);
        all.sort_by(by_distance_then_index);
        all
    }

    fn others(&self, i: usize) -> Vec<Neighbor> {
        (0..self.len())
            .filter(|&j| j != i)
            .map(|j| Neighbor {
                index: j,
                distance: self.distance(i, j),
            })
            .collect()
    }

    pub(crate) fn nearest(&self, i: usize, k: usize) -> Vec<Neighbor> {
        let mut all = self.others(i);
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_distance_then_index);
            all.truncate(k);
        }
        all.sort_by(by_distance_then_index);
        all
    }
}

/// Distance between two prepared rows. Cosine rows are unit vectors and
/// use `½‖u − v‖²`, which equals `1 − cos` and is exactly 0 for identical inputs.
pub fn pairwise_distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    match metric {
        Metric::Euclidean => sq.sqrt(),
        Metric::Cosine => 0.5 * sq,
    }
}

/// Exact k-nearest-neighbor graph by brute force, parallel over query records.
pub fn knn_graph(bank: &EmbeddingBank, k: usize, metric: Metric) -> Result<KnnGraph, ProjectionError> {
    let n = bank.len();
    if k == 0 || k >= n {
        return Err(ProjectionError::BadK { k, n });
    }
    let prepared = Prepared::new(bank, metric)?;
    Ok(knn_from_prepared(&prepared, k))
}

pub(crate) fn knn_from_prepared(prepared: &Prepared, k: usize) -> KnnGraph {
    let neighbors = (0..prepared.len())
        .into_par_iter()
        .map(|i| prepared.nearest(i, k))
        .collect();
    KnnGraph { k, neighbors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{EmbeddingRecord, Label};

    fn line(xs: &[f32]) -> EmbeddingBank {
        let recs = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| EmbeddingRecord::new(format!("p{i}"), Label::Real, "g", vec![x, 1.0]))
            .collect();
        EmbeddingBank::new("b", 2, recs).unwrap()
    }

    #[test]
    fn collinear_points() {
        // distances: |0-1| = 1, |0-3| = 3, |1-3| = 2
        let g = knn_graph(&line(&[0.0, 1.0, 3.0]), 1, Metric::Euclidean).unwrap();
        let nn: Vec<usize> = g.neighbors.iter().map(|v| v[0].index).collect();
        assert_eq!(nn, vec![1, 0, 1]);
        assert_eq!(g.neighbors[2][0].distance, 2.0);
    }

    #[test]
    fn duplicates_are_mutual_at_zero() {
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let g = knn_graph(&line(&[5.0, 0.0, 5.0]), 1, metric).unwrap();
            assert_eq!(g.neighbors[0][0], Neighbor { index: 2, distance: 0.0 });
            assert_eq!(g.neighbors[2][0], Neighbor { index: 0, distance: 0.0 });
        }
    }

    #[test]
    fn ties_break_by_index() {
        let g = knn_graph(&line(&[0.0, -1.0, 1.0]), 2, Metric::Euclidean).unwrap();
        assert_eq!(g.neighbors[0][0].index, 1);
        assert_eq!(g.neighbors[0][1].index, 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            knn_graph(&line(&[0.0, 1.0]), 2, Metric::Euclidean),
            Err(ProjectionError::BadK { k: 2, n: 2 })
        ));
        let bank = EmbeddingBank::new(
            "b",
            2,
            vec![
                EmbeddingRecord::new("ok", Label::Real, "g", vec![1.0, 0.0]),
                EmbeddingRecord::new("zero", Label::Real, "g", vec![0.0, 0.0]),
            ],
        )
        .unwrap();
        assert!(matches!(
            knn_graph(&bank, 1, Metric::Cosine),
            Err(ProjectionError::ZeroVector(id)) if id == "zero"
        ));
        assert!(knn_graph(&bank, 1, Metric::Euclidean).is_ok());
    }

    #[test]
    fn cosine_matches_one_minus_cos() {
        let a = [0.6, 0.8];
        let b = [1.0, 0.0];
        assert!((pairwise_distance(Metric::Cosine, &a, &b) - 0.4).abs() < 1e-15);
    }
}
