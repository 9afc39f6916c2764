//! Seeded synthetic tensors.
//!
//! Samples are drawn from integer ChaCha8 output converted to uniforms in
//! `[0, 1)` with 53 bits, then shaped with `libm` transcendental functions, so
//! a given `(distribution, length, seed)` produces the same bits on every
//! platform. The tensor is cut into chunks of [`CHUNK`] elements and each chunk
//! draws from its own ChaCha stream, which keeps generation parallel and
//! independent of the worker count.

use super::Tensor;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const CHUNK: usize = 4096;

/// Synthetic data families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    /// Standard normal.
    Gaussian,
    /// Laplace with location 0 and scale 1.
    Laplacian,
    /// Contaminated normal: with probability `fraction` the sample is drawn
    /// from `N(0, scale^2)` instead of `N(0, 1)`.
    OutlierMixture { fraction: f64, scale: f64 },
}

impl Distribution {
    /// 1% outliers at 20x the bulk standard deviation.
    pub const OUTLIERS: Distribution = Distribution::OutlierMixture {
        fraction: 0.01,
        scale: 20.0,
    };

    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Laplacian => "laplacian",
            Distribution::OutlierMixture { .. } => "outliers",
        }
    }
}

impl std::str::FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "laplacian" | "laplace" => Ok(Distribution::Laplacian),
            "outliers" | "mixture" => Ok(Distribution::OUTLIERS),
            other => Err(format!("unknown distribution {other:?} (gaussian, laplacian, outliers)")),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box-Muller, cosine branch only; consumes two words.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

fn laplace(rng: &mut ChaCha8Rng) -> f64 {
    let u = uniform(rng) - 0.5;
    let mag = -libm::log(1.0 - 2.0 * u.abs());
    if u < 0.0 {
        -mag
    } else {
        mag
    }
}

fn sample(dist: Distribution, rng: &mut ChaCha8Rng) -> f64 {
    match dist {
        Distribution::Gaussian => normal(rng),
        Distribution::Laplacian => laplace(rng),
        Distribution::OutlierMixture { fraction, scale } => {
            let outlier = uniform(rng) < fraction;
            let z = normal(rng);
            if outlier {
                scale * z
            } else {
                z
            }
        }
    }
}

/// `len` samples as `f64` (rounded through `f32`, like a tensor payload).
pub fn synth_values(dist: Distribution, len: usize, seed: u64) -> Vec<f64> {
    synth_f32(dist, len, seed).into_iter().map(f64::from).collect()
}

fn synth_f32(dist: Distribution, len: usize, seed: u64) -> Vec<f32> {
    let chunks = len.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(len - c * CHUNK);
            (0..n).map(move |_| sample(dist, &mut rng) as f32)
        })
        .collect()
}

pub fn synth_tensor(dist: Distribution, shape: &[usize], seed: u64) -> Tensor {
    let len = shape.iter().product();
    Tensor {
        dims: shape.to_vec(),
        data: synth_f32(dist, len, seed),
    }
}
