//! Seeded randomness shared by every stochastic routine in the crate.
//!
//! All streams are ChaCha8 seeded from a `u64`, so results are reproducible
//! within this implementation. Normal deviates come from the Marsaglia polar
//! method, which consumes uniform pairs and caches the second deviate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal sampler using the Marsaglia polar method.
#[derive(Debug, Clone)]
pub struct PolarNormal {
    rng: SeededRng,
    spare: Option<f64>,
}

impl PolarNormal {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seeded(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u: f64 = self.rng.gen_range(-1.0..1.0);
            let v: f64 = self.rng.gen_range(-1.0..1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}
