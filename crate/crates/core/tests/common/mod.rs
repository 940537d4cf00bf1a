#![allow(dead_code)]

use rand::Rng;
use sidkit::bank::{synth_bank, ClusterMean, SynthCluster, SynthSpec};
use sidkit::rng::{seeded, PolarNormal};
use sidkit::{EmbeddingBank, EmbeddingRecord, Label};

/// Bank with Gaussian vectors and random labels/tags, guaranteed to hold both classes.
pub fn random_bank(seed: u64, n: usize, dim: usize, tags: &[&str]) -> EmbeddingBank {
    let mut rng = seeded(seed);
    let mut normal = PolarNormal::new(seed ^ 0x5eed);
    let records = (0..n)
        .map(|i| {
            let label = match i {
                0 => Label::Real,
                1 => Label::Fake,
                _ if rng.gen_bool(0.5) => Label::Fake,
                _ => Label::Real,
            };
            let tag = tags[rng.gen_range(0..tags.len())];
            let vector = (0..dim).map(|_| normal.sample() as f32).collect();
            EmbeddingRecord::new(format!("r{i:04}"), label, tag, vector)
        })
        .collect();
    EmbeddingBank::new("rand", dim, records).unwrap()
}

pub fn cluster(label: Label, tag: &str, mean: ClusterMean, count: usize) -> SynthCluster {
    SynthCluster {
        label,
        generator_tag: tag.into(),
        mean,
        stddev: 1.0,
        count,
    }
}

/// Real cluster at `-offset/sqrt(dim)` and fake cluster at `+offset/sqrt(dim)`
/// per component, so the centers are `2·offset` apart.
pub fn separable(dim: usize, per_class: usize, offset: f64, seed: u64, tag: &str) -> EmbeddingBank {
    let m = offset / (dim as f64).sqrt();
    synth_bank(&SynthSpec {
        dim,
        seed,
        backbone_id: "synthetic".into(),
        clusters: vec![
            cluster(Label::Real, tag, ClusterMean::Fill(-m), per_class),
            cluster(Label::Fake, tag, ClusterMean::Fill(m), per_class),
        ],
    })
    .unwrap()
}

pub fn with_records(bank: &EmbeddingBank, records: Vec<EmbeddingRecord>) -> EmbeddingBank {
    EmbeddingBank::new(bank.backbone_id(), bank.dim(), records).unwrap()
}

/// Error-free transformation a*b = p + e (needs fused multiply-add).
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Dot product in doubled working precision (Ogita–Rump–Oishi Dot2).
pub fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (p, pe) = two_product(x, y);
        let (t, te) = two_sum(s, p);
        s = t;
        c += pe + te;
    }
    s + c
}

/// Average precision by brute force: for each cutoff k the top-k set is
/// recomputed from scratch by counting how many records outrank each one
/// (higher score, or equal score and lower index).
pub fn ap_oracle(scores: &[f64], labels: &[Label]) -> f64 {
    let n = scores.len();
    let rank: Vec<usize> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        })
        .collect();
    let positives = labels.iter().filter(|l| **l == Label::Fake).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=n {
        let tp = (0..n).filter(|&i| rank[i] < k && labels[i] == Label::Fake).count() as f64;
        let recall = tp / positives;
        let precision = tp / k as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}
