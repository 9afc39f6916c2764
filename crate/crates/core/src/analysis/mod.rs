//! Quantization error measurement and the block-exponent variance model.
//!
//! For round-to-nearest block quantization the error is zero-mean with variance
//!
//! ```text
//! sigma^2 = 2^(-2 L_m) / 12 * sum_i p(gamma_i) * 2^(2 gamma_i)
//! ```
//!
//! where `gamma_i` ranges over the exponent levels that scale each element's
//! quantization step. Levels here are *unbiased*: `gamma = e_s - bias`. With
//! that convention an element's step is `2^(1-m) * 2^gamma`, so the model is
//! evaluated with `L_m = m - 1` fractional mantissa bits (see
//! [`predicted_variance`]).
//!
//! In BBFP a flagged element's step is `2^(m-o)` times coarser than its block's
//! step. [`exponent_histogram`] tallies the shared exponent per block;
//! [`element_exponent_histogram`] tallies each element's flag-adjusted level,
//! which is what the variance model needs once blocks mix flagged and
//! unflagged elements.

use crate::format::{exponent_bias, BbfpConfig, BlockFormat, ExponentStrategy, FormatError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("empty input")]
    Empty,
    #[error("offset {offset} exceeds mantissa width {mantissa_bits}")]
    OffsetTooLarge { offset: u32, mantissa_bits: u8 },
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Empirical probability mass function over unbiased exponent levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentHistogram {
    levels: Vec<i32>,
    masses: Vec<f64>,
}

impl ExponentHistogram {
    /// Builds a histogram from explicit levels and masses. Masses must be
    /// non-negative, sum to 1 within `1e-12`, and levels must be distinct.
    pub fn new(levels: Vec<i32>, masses: Vec<f64>) -> Result<Self, AnalysisError> {
        if levels.is_empty() || levels.len() != masses.len() {
            return Err(AnalysisError::InvalidHistogram(format!(
                "{} levels with {} masses",
                levels.len(),
                masses.len()
            )));
        }
        if masses.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(AnalysisError::InvalidHistogram("negative mass".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(AnalysisError::InvalidHistogram(format!("masses sum to {total}")));
        }
        let mut sorted = levels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != levels.len() {
            return Err(AnalysisError::InvalidHistogram("repeated level".into()));
        }
        Ok(Self { levels, masses })
    }

    fn from_counts(counts: &BTreeMap<i32, u64>) -> Result<Self, AnalysisError> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(AnalysisError::Empty);
        }
        let levels = counts.keys().copied().collect();
        let masses = counts.values().map(|&c| c as f64 / total as f64).collect::<Vec<_>>();
        // renormalize so the masses sum to one within rounding
        let s: f64 = masses.iter().sum();
        let masses = masses.iter().map(|p| p / s).collect();
        Self::new(levels, masses)
    }

    pub fn levels(&self) -> &[i32] {
        &self.levels
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mean(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.masses)
            .map(|(&l, &p)| f64::from(l) * p)
            .sum()
    }

    /// Number of distinct levels `N_gamma`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// `2^(-2 L_m) / 12 * sum_i p_i * 2^(2 gamma_i)`.
pub fn model_variance(mantissa_length: u32, hist: &ExponentHistogram) -> f64 {
    let sum: f64 = hist
        .levels
        .iter()
        .zip(&hist.masses)
        .map(|(&g, &p)| p * 2f64.powi(2 * g))
        .sum();
    2f64.powi(-2 * mantissa_length as i32) / 12.0 * sum
}

/// The model evaluated for `format`: `L_m = m - 1` under unbiased levels.
pub fn predicted_variance(format: &BlockFormat, hist: &ExponentHistogram) -> f64 {
    model_variance(u32::from(format.mantissa_bits()) - 1, hist)
}

/// Summary of `decode(encode(x)) - x` over a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub strategy: String,
    pub mse: f64,
    pub variance: f64,
    pub mean: f64,
    pub samples: usize,
    pub blocks: usize,
}

/// Human-readable strategy label: `max` for max alignment, `max-k` otherwise.
pub fn strategy_label(format: &BlockFormat, strategy: ExponentStrategy) -> String {
    match format {
        BlockFormat::Bfp(_) => "max".to_string(),
        BlockFormat::Bbfp(c) => match strategy.offset(c) {
            0 => "max".to_string(),
            k => format!("max-{k}"),
        },
    }
}

fn check_strategy(format: &BlockFormat, strategy: ExponentStrategy) -> Result<(), AnalysisError> {
    if let BlockFormat::Bbfp(c) = format {
        let offset = strategy.offset(c);
        if offset > u32::from(c.mantissa_bits) {
            return Err(AnalysisError::OffsetTooLarge {
                offset,
                mantissa_bits: c.mantissa_bits,
            });
        }
    }
    Ok(())
}

#[derive(Default, Clone, Copy)]
struct Moments {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

/// Quantizes `values` block by block and measures the reconstruction error.
///
/// Blocks are processed in parallel; per-block moments are combined in block
/// order, so the result does not depend on the worker count.
pub fn empirical_error(
    values: &[f64],
    format: &BlockFormat,
    strategy: ExponentStrategy,
) -> Result<ErrorReport, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    check_strategy(format, strategy)?;
    let n = format.block_size();
    let per_block = values
        .par_chunks(n)
        .map(|chunk| {
            let (decoded, _) = format.round_trip_block(chunk, strategy)?;
            let mut m = Moments::default();
            for (d, x) in decoded.iter().zip(chunk) {
                let e = d - x;
                m.sum += e;
                m.sum_sq += e * e;
                m.count += 1;
            }
            Ok(m)
        })
        .collect::<Result<Vec<Moments>, FormatError>>()?;
    let total = per_block.iter().fold(Moments::default(), |a, b| Moments {
        sum: a.sum + b.sum,
        sum_sq: a.sum_sq + b.sum_sq,
        count: a.count + b.count,
    });
    let count = total.count as f64;
    let mean = total.sum / count;
    let mse = total.sum_sq / count;
    Ok(ErrorReport {
        strategy: strategy_label(format, strategy),
        mse,
        variance: (mse - mean * mean).max(0.0),
        mean,
        samples: total.count,
        blocks: per_block.len(),
    })
}

/// Histogram of the realized shared exponent per block (unbiased).
pub fn exponent_histogram(
    values: &[f64],
    format: &BlockFormat,
    strategy: ExponentStrategy,
) -> Result<ExponentHistogram, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    check_strategy(format, strategy)?;
    let bias = exponent_bias(format.exponent_bits());
    let shared = values
        .par_chunks(format.block_size())
        .map(|chunk| format.round_trip_block(chunk, strategy).map(|(_, e)| i32::from(e) - bias))
        .collect::<Result<Vec<i32>, FormatError>>()?;
    let mut counts = BTreeMap::new();
    for e in shared {
        *counts.entry(e).or_insert(0u64) += 1;
    }
    ExponentHistogram::from_counts(&counts)
}

/// Histogram of each element's step exponent: the block's unbiased shared
/// exponent, plus `m - o` for flagged BBFP elements.
pub fn element_exponent_histogram(
    values: &[f64],
    format: &BlockFormat,
    strategy: ExponentStrategy,
) -> Result<ExponentHistogram, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    check_strategy(format, strategy)?;
    let bias = exponent_bias(format.exponent_bits());
    let per_block = values
        .par_chunks(format.block_size())
        .map(|chunk| element_levels(chunk, format, strategy, bias))
        .collect::<Result<Vec<Vec<i32>>, FormatError>>()?;
    let mut counts = BTreeMap::new();
    for e in per_block.into_iter().flatten() {
        *counts.entry(e).or_insert(0u64) += 1;
    }
    ExponentHistogram::from_counts(&counts)
}

fn element_levels(
    chunk: &[f64],
    format: &BlockFormat,
    strategy: ExponentStrategy,
    bias: i32,
) -> Result<Vec<i32>, FormatError> {
    match format {
        BlockFormat::Bfp(c) => {
            let block = crate::format::encode_block_bfp(chunk, c)?;
            Ok(vec![i32::from(block.shared_exponent) - bias; chunk.len()])
        }
        BlockFormat::Bbfp(c) => {
            let block = crate::format::encode_block_with(chunk, c, strategy)?;
            let base = i32::from(block.shared_exponent) - bias;
            Ok(block.elements[..chunk.len()]
                .iter()
                .map(|e| base + if e.flag { c.shift_span() as i32 } else { 0 })
                .collect())
        }
    }
}

/// One CSV row of a shared-exponent / format sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub format: String,
    pub strategy: String,
    pub m: u8,
    pub o: Option<u8>,
    pub mse: f64,
    pub var: f64,
    pub mean: f64,
    pub n_blocks: usize,
    pub seed: u64,
}

/// Runs [`empirical_error`] for every format; BBFP formats are evaluated at
/// each offset in `offsets`, BFP formats once at max alignment.
pub fn sweep(
    values: &[f64],
    formats: &[BlockFormat],
    offsets: &[u32],
    seed: u64,
) -> Result<Vec<SweepRow>, AnalysisError> {
    let mut rows = Vec::new();
    for format in formats {
        let strategies: Vec<ExponentStrategy> = match format {
            BlockFormat::Bfp(_) => vec![ExponentStrategy::Offset(0)],
            BlockFormat::Bbfp(_) => offsets.iter().map(|&k| ExponentStrategy::Offset(k)).collect(),
        };
        for strategy in strategies {
            let r = empirical_error(values, format, strategy)?;
            rows.push(SweepRow {
                format: format.to_string(),
                strategy: r.strategy,
                m: format.mantissa_bits(),
                o: format.overlap_bits(),
                mse: r.mse,
                var: r.variance,
                mean: r.mean,
                n_blocks: r.blocks,
                seed,
            });
        }
    }
    Ok(rows)
}

/// Default strategy offsets worth sweeping for `cfg`: `0 ..= m - o + 1`.
pub fn default_offsets(cfg: &BbfpConfig) -> Vec<u32> {
    (0..=(cfg.shift_span() + 1).min(u32::from(cfg.mantissa_bits))).collect()
}
