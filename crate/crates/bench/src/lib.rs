//! Benchmark fixtures shared by the criterion benches.

use sidkit::bank::{synth_bank, ClusterMean, SynthCluster, SynthSpec};
use sidkit::{EmbeddingBank, Label};

/// Two balanced Gaussian clusters at `±offset / sqrt(dim)` per component.
pub fn two_clusters(dim: usize, per_class: usize, offset: f64, seed: u64) -> EmbeddingBank {
    let m = offset / (dim as f64).sqrt();
    let cluster = |label, mean| SynthCluster {
        label,
        generator_tag: "bench".into(),
        mean: ClusterMean::Fill(mean),
        stddev: 1.0,
        count: per_class,
    };
    synth_bank(&SynthSpec {
        dim,
        seed,
        backbone_id: "bench".into(),
        clusters: vec![cluster(Label::Real, -m), cluster(Label::Fake, m)],
    })
    .expect("valid bench spec")
}
