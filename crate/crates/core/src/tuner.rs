//! Overlap-width selection.
//!
//! For every candidate `o` in `0..m` a quality metric (lower is better) and a
//! hardware overhead are measured, each vector is divided by its maximum, and
//! the candidate minimizing `w * overhead + (1 - w) * quality` wins. Ties go
//! to the smaller `o`.
//!
//! `o = 0` is the degenerate configuration with an empty overlap window; it is
//! built with [`BbfpConfig::without_overlap`].

use crate::analysis::AnalysisError;
use crate::cost::{equivalent_bit_width, gate_estimate, FormatSpec, GateWeights};
use crate::format::{BbfpConfig, ExponentStrategy, FormatError, Rounding};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("weight {0} outside [0, 1]")]
    BadWeight(f64),
    #[error("mantissa width {0} must be at least 2")]
    BadMantissa(u8),
    #[error("{what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("{what}[{index}] = {value} must be finite and positive")]
    BadValue { what: &'static str, index: usize, value: f64 },
    #[error("evaluating o = {overlap}: {source}")]
    Evaluator {
        overlap: u8,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("quality table: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Produces the quality score of one candidate configuration (lower is better).
pub trait QualityEvaluator: Sync {
    fn quality(&self, cfg: &BbfpConfig) -> Result<f64, Box<dyn std::error::Error + Send + Sync>>;

    /// Overhead supplied by the evaluator itself, if any.
    fn overhead(&self, _cfg: &BbfpConfig) -> Option<f64> {
        None
    }
}

/// Hardware overhead measure.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverheadMetric {
    #[default]
    EquivalentBitWidth,
    /// Multiplier plus adder units from [`gate_estimate`].
    GateEstimate,
}

impl OverheadMetric {
    pub fn evaluate(&self, cfg: &BbfpConfig) -> f64 {
        let spec = FormatSpec::from_config(cfg);
        match self {
            OverheadMetric::EquivalentBitWidth => equivalent_bit_width(&spec),
            OverheadMetric::GateEstimate => {
                let g = gate_estimate(&spec, &GateWeights::default());
                g.multiplier + g.adder
            }
        }
    }
}

impl std::str::FromStr for OverheadMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bits" | "equivalent-bit-width" => Ok(OverheadMetric::EquivalentBitWidth),
            "gates" | "gate-estimate" => Ok(OverheadMetric::GateEstimate),
            other => Err(format!("unknown overhead metric {other:?} (bits, gates)")),
        }
    }
}

/// Per-candidate scores of one selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub overlap: u8,
    pub quality: Vec<f64>,
    pub overhead: Vec<f64>,
    pub scores: Vec<f64>,
}

fn check(what: &'static str, v: &[f64]) -> Result<f64, TunerError> {
    for (index, &value) in v.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(TunerError::BadValue { what, index, value });
        }
    }
    Ok(v.iter().copied().fold(f64::MIN, f64::max))
}

/// Scores precomputed tables; index `i` is overlap `o = i`.
///
/// Quality values must be positive (a zero maximum would make normalization
/// meaningless); a candidate with quality exactly zero is allowed as long as
/// some other candidate is positive.
pub fn select_from_tables(quality: &[f64], overhead: &[f64], w: f64) -> Result<Selection, TunerError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(TunerError::BadWeight(w));
    }
    if quality.is_empty() || quality.len() != overhead.len() {
        return Err(TunerError::Length {
            what: "overhead",
            got: overhead.len(),
            expected: quality.len(),
        });
    }
    for (index, &value) in quality.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(TunerError::BadValue { what: "quality", index, value });
        }
    }
    let qmax = quality.iter().copied().fold(0.0, f64::max);
    if qmax == 0.0 {
        return Err(TunerError::BadValue { what: "quality", index: 0, value: 0.0 });
    }
    let hmax = check("overhead", overhead)?;
    let scores: Vec<f64> = quality
        .iter()
        .zip(overhead)
        .map(|(q, h)| w * (h / hmax) + (1.0 - w) * (q / qmax))
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(Selection {
        overlap: best as u8,
        quality: quality.to_vec(),
        overhead: overhead.to_vec(),
        scores,
    })
}

/// Candidate configuration for overlap `o` at mantissa width `m`.
pub fn candidate(m: u8, o: u8, base: &BbfpConfig) -> Result<BbfpConfig, FormatError> {
    let cfg = if o == 0 {
        BbfpConfig::without_overlap(m)?
    } else {
        BbfpConfig::new(m, o)?
    };
    Ok(cfg
        .with_exponent_bits(base.exponent_bits)
        .with_block_size(base.block_size)
        .with_rounding(base.rounding))
}

/// Evaluates every `o` in `0..m` and selects one. Candidates are evaluated in
/// parallel; the result does not depend on evaluation order.
pub fn select_overlap(
    evaluator: &dyn QualityEvaluator,
    metric: OverheadMetric,
    w: f64,
    m: u8,
    base: &BbfpConfig,
) -> Result<Selection, TunerError> {
    if m < 2 {
        return Err(TunerError::BadMantissa(m));
    }
    let evaluated = (0..m)
        .into_par_iter()
        .map(|o| {
            let cfg = candidate(m, o, base).map_err(|e| TunerError::Evaluator {
                overlap: o,
                source: Box::new(e),
            })?;
            let q = evaluator
                .quality(&cfg)
                .map_err(|source| TunerError::Evaluator { overlap: o, source })?;
            let h = evaluator.overhead(&cfg).unwrap_or_else(|| metric.evaluate(&cfg));
            Ok((q, h))
        })
        .collect::<Result<Vec<_>, TunerError>>()?;
    let (quality, overhead): (Vec<f64>, Vec<f64>) = evaluated.into_iter().unzip();
    select_from_tables(&quality, &overhead, w)
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Relative L1 quantization error `sum |q(x) - x| / sum |x|` under `cfg`
/// with bidirectional shared exponents. A corpus concatenated with itself
/// scores the same.
pub fn proxy_quality(corpus: &[f64], cfg: &BbfpConfig) -> Result<f64, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let format = crate::format::BlockFormat::Bbfp(*cfg);
    let per_block = corpus
        .par_chunks(cfg.block_size)
        .map(|chunk| {
            let (decoded, _) = format.round_trip_block(chunk, ExponentStrategy::Bidirectional)?;
            let err: f64 = decoded.iter().zip(chunk).map(|(d, x)| (d - x).abs()).sum();
            let mag: f64 = chunk.iter().map(|x| x.abs()).sum();
            Ok((err, mag))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let (err, mag): (Vec<f64>, Vec<f64>) = per_block.into_iter().unzip();
    let mag = pairwise_sum(&mag);
    if mag == 0.0 {
        return Ok(0.0);
    }
    Ok(pairwise_sum(&err) / mag)
}

/// [`proxy_quality`] over a fixed corpus.
pub struct ProxyEvaluator<'a> {
    pub corpus: &'a [f64],
}

impl QualityEvaluator for ProxyEvaluator<'_> {
    fn quality(&self, cfg: &BbfpConfig) -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
        Ok(proxy_quality(self.corpus, &cfg.with_rounding(Rounding::RoundNearestEven))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityEntry {
    pub o: u8,
    pub quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead: Option<f64>,
}

/// Externally measured quality per overlap, e.g. perplexities.
///
/// ```json
/// {"m": 4, "entries": [{"o": 0, "quality": 10.0}, {"o": 1, "quality": 8.0}]}
/// ```
///
/// An entry may also carry an `overhead`, which then replaces the computed
/// overhead metric for that candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityTable {
    pub m: u8,
    pub entries: Vec<QualityEntry>,
}

impl QualityTable {
    pub fn from_json(text: &str) -> Result<Self, TunerError> {
        let table: QualityTable = serde_json::from_str(text).map_err(|e| TunerError::Table(e.to_string()))?;
        table.check()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TunerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), TunerError> {
        let mut seen = vec![false; usize::from(self.m)];
        for e in &self.entries {
            match seen.get_mut(usize::from(e.o)) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(TunerError::Table(format!("duplicate entry for o = {}", e.o))),
                None => return Err(TunerError::Table(format!("o = {} outside 0..{}", e.o, self.m))),
            }
        }
        if let Some(o) = seen.iter().position(|s| !s) {
            return Err(TunerError::Table(format!("missing entry for o = {o}")));
        }
        Ok(())
    }

    fn entry(&self, o: u8) -> &QualityEntry {
        self.entries.iter().find(|e| e.o == o).expect("checked on load")
    }

    /// Selects directly from the table; entries without an overhead use `metric`.
    pub fn select(&self, metric: OverheadMetric, w: f64, base: &BbfpConfig) -> Result<Selection, TunerError> {
        if self.m < 2 {
            return Err(TunerError::BadMantissa(self.m));
        }
        select_overlap(self, metric, w, self.m, base)
    }
}

impl QualityEvaluator for QualityTable {
    fn quality(&self, cfg: &BbfpConfig) -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
        Ok(self.entry(cfg.overlap_bits).quality)
    }

    fn overhead(&self, cfg: &BbfpConfig) -> Option<f64> {
        self.entry(cfg.overlap_bits).overhead
    }
}
