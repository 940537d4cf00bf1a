//! UMAP layout in two dimensions.
//!
//! Pipeline: exact kNN (`n_neighbors` other records) → per-record bandwidth
//! search so that the smoothed neighbor memberships sum to `log2(k)` → fuzzy
//! union `a + b − ab` of the directed graph → stochastic layout with
//! attraction along edges and repulsion from uniformly drawn vertices, using
//! the curve `1 / (1 + a·d^(2b))` fitted to `min_dist`.
//!
//! Every random draw comes from one seeded stream and edges are visited in a
//! fixed order, so the layout is a pure function of `(bank, params)`.

use std::collections::BTreeMap;

use rand::Rng;

use super::knn::{knn_from_prepared, Neighbor, Prepared};
use super::{Projection2D, ProjectionError, ProjectionParams};
use crate::bank::EmbeddingBank;
use crate::rng;

const BANDWIDTH_ITERATIONS: usize = 64;
const BANDWIDTH_TOLERANCE: f64 = 1e-5;
const MIN_BANDWIDTH_SCALE: f64 = 1e-3;
const CURVE_SPREAD: f64 = 1.0;
const CURVE_SAMPLES: usize = 300;
const CURVE_MAX_ITERATIONS: usize = 300;
const GRADIENT_CLIP: f64 = 4.0;
const INIT_RANGE: f64 = 10.0;

/// Parameters of the low-dimensional similarity `1 / (1 + a·d^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub a: f64,
    pub b: f64,
}

/// Least-squares fit of `1 / (1 + a·x^(2b))` to the target that is 1 below
/// `min_dist` and `exp(-(x - min_dist) / spread)` above it, sampled at 300
/// points on `[0, 3·spread]`. Levenberg–Marquardt from `a = b = 1`, at most
/// 300 iterations.
pub fn fit_curve(spread: f64, min_dist: f64) -> CurveParams {
    let xs: Vec<f64> = (0..CURVE_SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (CURVE_SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();

    let cost = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut current = cost(a, b);
    let mut lambda = 1e-3;
    for _ in 0..CURVE_MAX_ITERATIONS {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue; // f(0) = 1 regardless of (a, b): zero residual and zero Jacobian
            }
            let u = x.powf(2.0 * b);
            let denom = 1.0 + a * u;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -u / (denom * denom);
            let db = -a * u * 2.0 * x.ln() / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let m_aa = jaa * (1.0 + lambda);
            let m_bb = jbb * (1.0 + lambda);
            let det = m_aa * m_bb - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m_bb * ga - jab * gb) / det;
            let step_b = -(m_aa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let candidate = if na > 0.0 && nb > 0.0 { cost(na, nb) } else { f64::INFINITY };
            if candidate < current {
                let small = step_a.abs() <= 1e-12 * a.abs() && step_b.abs() <= 1e-12 * b.abs();
                a = na;
                b = nb;
                let gain = current - candidate;
                current = candidate;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !small && gain > 1e-16 * current.max(f64::MIN_POSITIVE);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    CurveParams { a, b }
}

/// Bandwidth for one record: `rho` is the nearest positive distance and
/// `sigma` solves `Σ exp(-max(d - rho, 0) / sigma) = log2(k)` by bisection.
fn smooth_bandwidth(
    record: usize,
    neighbors: &[Neighbor],
    mean_distance: f64,
) -> Result<(f64, f64), ProjectionError> {
    let target = (neighbors.len() as f64).log2();
    let rho = neighbors
        .iter()
        .map(|n| n.distance)
        .find(|&d| d > 0.0)
        .unwrap_or(0.0);
    let membership_sum = |sigma: f64| -> f64 {
        neighbors
            .iter()
            .map(|n| {
                let d = n.distance - rho;
                if d > 0.0 { (-d / sigma).exp() } else { 1.0 }
            })
            .sum()
    };

    // As sigma -> 0 the sum tends to the number of neighbors at or inside rho.
    let saturated = neighbors.iter().filter(|n| n.distance - rho <= 0.0).count() as f64;
    let mut sigma = 1.0;
    if saturated < target {
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut converged = false;
        for _ in 0..BANDWIDTH_ITERATIONS {
            let psum = membership_sum(sigma);
            if (psum - target).abs() < BANDWIDTH_TOLERANCE {
                converged = true;
                break;
            }
            if psum > target {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = if hi.is_infinite() { sigma * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        if !converged {
            return Err(ProjectionError::BandwidthSearch {
                record,
                iterations: BANDWIDTH_ITERATIONS,
            });
        }
    } else {
        // the target is unreachable; fall through to the floor below
        sigma = 0.0;
    }

    let local_mean = neighbors.iter().map(|n| n.distance).sum::<f64>() / neighbors.len() as f64;
    let floor = if rho > 0.0 { local_mean } else { mean_distance } * MIN_BANDWIDTH_SCALE;
    Ok((rho, sigma.max(floor).max(f64::MIN_POSITIVE)))
}

/// Symmetric fuzzy graph as parallel edge arrays (both directions present).
struct FuzzyGraph {
    heads: Vec<usize>,
    tails: Vec<usize>,
    weights: Vec<f64>,
}

fn fuzzy_graph(prepared: &Prepared, n_neighbors: usize) -> Result<FuzzyGraph, ProjectionError> {
    let knn = knn_from_prepared(prepared, n_neighbors);
    let n = knn.neighbors.len();
    let mean_distance = knn
        .neighbors
        .iter()
        .flat_map(|v| v.iter().map(|x| x.distance))
        .sum::<f64>()
        / (n * n_neighbors) as f64;

    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, neighbors) in knn.neighbors.iter().enumerate() {
        let (rho, sigma) = smooth_bandwidth(i, neighbors, mean_distance)?;
        for nb in neighbors {
            let d = nb.distance - rho;
            let w = if d > 0.0 { (-d / sigma).exp() } else { 1.0 };
            directed.insert((i, nb.index), w);
        }
    }

    let mut symmetric: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let back = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let union = w + back - w * back;
        symmetric.insert((i, j), union);
        symmetric.insert((j, i), union);
    }

    let mut graph = FuzzyGraph {
        heads: Vec::with_capacity(symmetric.len()),
        tails: Vec::with_capacity(symmetric.len()),
        weights: Vec::with_capacity(symmetric.len()),
    };
    for ((i, j), w) in symmetric {
        graph.heads.push(i);
        graph.tails.push(j);
        graph.weights.push(w);
    }
    Ok(graph)
}

fn clip(g: f64) -> f64 {
    g.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Projects `bank` to two dimensions.
pub fn umap_project(bank: &EmbeddingBank, params: &ProjectionParams) -> Result<Projection2D, ProjectionError> {
    params.validate(bank.len())?;
    let prepared = Prepared::new(bank, params.metric)?;
    let graph = fuzzy_graph(&prepared, params.n_neighbors)?;
    let CurveParams { a, b } = fit_curve(CURVE_SPREAD, params.min_dist);
    let n = bank.len();
    let n_epochs = params.n_epochs;

    // Edges too weak to be sampled even once over the run are dropped.
    let max_w = graph.weights.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..graph.weights.len())
        .filter(|&e| graph.weights[e] >= max_w / n_epochs as f64)
        .collect();
    let epochs_per_sample: Vec<f64> = keep.iter().map(|&e| max_w / graph.weights[e]).collect();
    let neg_rate = params.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|&e| if neg_rate > 0.0 { e / neg_rate } else { f64::INFINITY })
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut rng = rng::seeded(params.seed);
    let mut emb: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                rng.gen_range(-INIT_RANGE..INIT_RANGE),
                rng.gen_range(-INIT_RANGE..INIT_RANGE),
            ]
        })
        .collect();

    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs as f64;
        let now = epoch as f64;
        for (slot, &e) in keep.iter().enumerate() {
            if next_sample[slot] > now {
                continue;
            }
            let (i, j) = (graph.heads[e], graph.tails[e]);
            let dx = emb[i][0] - emb[j][0];
            let dy = emb[i][1] - emb[j][1];
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                let gx = clip(coeff * dx) * alpha;
                let gy = clip(coeff * dy) * alpha;
                emb[i][0] += gx;
                emb[i][1] += gy;
                emb[j][0] -= gx;
                emb[j][1] -= gy;
            }
            next_sample[slot] += epochs_per_sample[slot];

            let n_neg = ((now - next_negative[slot]) / epochs_per_negative[slot]).max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.gen_range(0..n);
                if k == i {
                    continue;
                }
                let dx = emb[i][0] - emb[k][0];
                let dy = emb[i][1] - emb[k][1];
                let d2 = dx * dx + dy * dy;
                if d2 > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    emb[i][0] += clip(coeff * dx) * alpha;
                    emb[i][1] += clip(coeff * dy) * alpha;
                }
            }
            next_negative[slot] += n_neg as f64 * epochs_per_negative[slot];
        }
    }

    Projection2D::from_points(bank, emb)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.optimize.curve_fit on the same 300-point grid.
    #[test]
    fn curve_fit_matches_reference() {
        for (min_dist, a_ref, b_ref) in [
            (0.1, 1.5769434602697652, 0.8950608778515733),
            (0.5, 0.5830300203414425, 1.3341669924314914),
            (0.01, 1.8956058664339035, 0.8006378442860499),
        ] {
            let c = fit_curve(1.0, min_dist);
            assert!((c.a - a_ref).abs() < 1e-4 * a_ref, "min_dist {min_dist}: a {} vs {a_ref}", c.a);
            assert!((c.b - b_ref).abs() < 1e-4 * b_ref, "min_dist {min_dist}: b {} vs {b_ref}", c.b);
        }
    }

    fn nb(distances: &[f64]) -> Vec<Neighbor> {
        distances
            .iter()
            .enumerate()
            .map(|(i, &d)| Neighbor { index: i + 1, distance: d })
            .collect()
    }

    #[test]
    fn bandwidth_hits_log2_k() {
        let neighbors = nb(&[0.5, 0.7, 0.9, 1.0, 1.4, 2.0, 2.2, 3.0]);
        let (rho, sigma) = smooth_bandwidth(0, &neighbors, 1.0).unwrap();
        assert_eq!(rho, 0.5);
        let sum: f64 = neighbors.iter().map(|n| (-(n.distance - rho).max(0.0) / sigma).exp()).sum();
        assert!((sum - 3.0).abs() < 1e-4, "{sum}");
    }

    #[test]
    fn bandwidth_saturated_falls_back_to_floor() {
        // every neighbor at the same distance: the sum is k for any sigma
        let neighbors = nb(&[1.0; 8]);
        let (rho, sigma) = smooth_bandwidth(0, &neighbors, 1.0).unwrap();
        assert_eq!(rho, 1.0);
        assert!((sigma - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_ignores_zero_distance_duplicates() {
        let neighbors = nb(&[0.0, 0.4, 0.6, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let (rho, _) = smooth_bandwidth(0, &neighbors, 1.0).unwrap();
        assert_eq!(rho, 0.4);
    }
}
