use rayon::prelude::*;

use super::knn::{by_distance_then_index, Neighbor, Prepared};
use super::{Metric, Projection2D, ProjectionError};
use crate::bank::EmbeddingBank;

/// Rank-based trustworthiness of `projection` with respect to `bank`.
///
/// For every point, each of its `k` nearest neighbors in the projection that
/// is not among its `k` nearest in the original space costs `rank − k`, where
/// `rank` is that neighbor's 1-based rank in the original space (measured
/// with `metric`). The total is divided by the largest total achievable and
/// subtracted from 1. For `k < n/2` the divisor equals the usual
/// `n·k·(2n − 3k − 1) / 2`; for larger `k` it is the exact worst case, so
/// the score stays in `[0, 1]`. Ties in either space break by index.
pub fn trustworthiness(
    bank: &EmbeddingBank,
    projection: &Projection2D,
    k: usize,
    metric: Metric,
) -> Result<f64, ProjectionError> {
    let n = bank.len();
    if projection.len() != n {
        return Err(ProjectionError::SizeMismatch {
            points: projection.len(),
            records: n,
        });
    }
    if k == 0 || k >= n {
        return Err(ProjectionError::BadK { k, n });
    }
    let original = Prepared::new(bank, metric)?;
    let points = &projection.points;

    let penalties: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rank = vec![0usize; n];
            for (r, nb) in original.ranked_from(i).iter().enumerate() {
                rank[nb.index] = r + 1;
            }
            let mut low: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dx = points[i][0] - points[j][0];
                    let dy = points[i][1] - points[j][1];
                    Neighbor {
                        index: j,
                        distance: (dx * dx + dy * dy).sqrt(),
                    }
                })
                .collect();
            low.sort_by(by_distance_then_index);
            low[..k]
                .iter()
                .map(|nb| rank[nb.index].saturating_sub(k))
                .sum()
        })
        .collect();
    let total: usize = penalties.iter().sum();
    if total == 0 {
        return Ok(1.0);
    }
    // worst case per point: the projection's k neighbors are the original's
    // farthest points, each outside the original k-neighborhood
    let worst_per_point: usize = (k.max(n - 1 - k) + 1..n).map(|r| r - k).sum();
    let worst = (n * worst_per_point) as f64;
    Ok(1.0 - total as f64 / worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{EmbeddingRecord, Label};

    fn planar_bank(points: &[[f32; 2]], extra_dims: usize) -> EmbeddingBank {
        let recs = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut v = p.to_vec();
                v.extend(std::iter::repeat_n(3.0, extra_dims));
                EmbeddingRecord::new(format!("p{i}"), Label::Real, "g", v)
            })
            .collect();
        EmbeddingBank::new("b", 2 + extra_dims, recs).unwrap()
    }

    fn grid() -> Vec<[f32; 2]> {
        // irregular spacing avoids distance ties
        (0..30).map(|i| [(i % 6) as f32 * 1.1 + (i as f32) * 0.013, (i / 6) as f32 * 0.9]).collect()
    }

    #[test]
    fn faithful_projection_scores_one() {
        let pts = grid();
        let bank = planar_bank(&pts, 3);
        let proj = Projection2D::from_points(&bank, pts.iter().map(|p| [f64::from(p[0]), f64::from(p[1])]).collect()).unwrap();
        for k in [1, 5, 10, 20] {
            assert_eq!(trustworthiness(&bank, &proj, k, Metric::Euclidean).unwrap(), 1.0);
        }
    }

    #[test]
    fn n_equals_k_plus_one_is_vacuous() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 5.0], [9.0, 9.0]];
        let bank = planar_bank(&pts, 0);
        let scrambled = vec![[3.0, 3.0], [0.0, 0.0], [1.0, 7.0], [-2.0, 0.5]];
        let proj = Projection2D::from_points(&bank, scrambled).unwrap();
        assert_eq!(trustworthiness(&bank, &proj, 3, Metric::Euclidean).unwrap(), 1.0);
    }

    #[test]
    fn reversed_neighborhoods_stay_in_range() {
        // points on a line, projection reverses distances around each point as far as possible
        let pts: Vec<[f32; 2]> = (0..12).map(|i| [(i * i) as f32, 0.0]).collect();
        let bank = planar_bank(&pts, 0);
        let proj = Projection2D::from_points(&bank, (0..12).map(|i| [((i * 7) % 12) as f64, 0.0]).collect()).unwrap();
        for k in 1..12 {
            let t = trustworthiness(&bank, &proj, k, Metric::Euclidean).unwrap();
            assert!((0.0..=1.0).contains(&t), "k {k}: {t}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        let pts = grid();
        let bank = planar_bank(&pts, 0);
        let proj = Projection2D::from_points(&bank, vec![[0.0, 0.0]; 30]).unwrap();
        assert!(matches!(trustworthiness(&bank, &proj, 30, Metric::Euclidean), Err(ProjectionError::BadK { .. })));
    }
}
