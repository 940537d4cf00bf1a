//! Synthetic-image detection in embedding space.
//!
//! Everything downstream of a frozen feature extractor: embedding banks and
//! their on-disk format, the linear detector and its training loop, the
//! per-generator evaluation protocol, record-aligned feature fusion across
//! backbones, and 2-D projections for separability analysis.

pub mod bank;
pub mod digest;
pub mod fusion;
pub mod metrics;
pub mod probe;
pub mod projection;
pub mod rng;

pub use bank::{EmbeddingBank, EmbeddingRecord, Label, SynthCluster, SynthSpec};
pub use fusion::{FusionSource, FusionSpec};
pub use metrics::{EvalReport, GeneratorMetrics, ReportFormat};
pub use probe::{LinearProbe, TrainConfig, TrainHistory};
pub use projection::{Metric, Projection2D, ProjectionParams};
