//! Nonlinear unit: LUT banks plus the softmax, sigmoid, SiLU and GELU flows.
//!
//! Softmax runs as
//!
//! ```text
//! encode -> max -> subtract max -> re-encode -> Exp LUT
//!        -> fixed-point adder tree -> divide -> re-encode
//! ```
//!
//! Sigmoid divides one by the `1 + e^(-x)` entry, SiLU multiplies the decoded
//! input by that quotient, and GELU reads its own bank. Every result leaves
//! the unit re-encoded in the configured BBFP format.
//!
//! [`NonlinearUnit`] runs each flow as a vector-wide composition;
//! [`SoftmaxPipeline`] streams the same operations block by block with stage
//! counters, and produces identical bits.

pub mod fixed;
pub mod lut;

pub use fixed::{adder_tree, divide, Dyadic};
pub use lut::{LutBank, LutFunction, Saturation};

use crate::format::{decode_block, encode_block, BbfpBlock, BbfpConfig, FormatError, Rounding};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NonlinearError {
    #[error("empty input")]
    Empty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sub-table exponent {exponent} not representable")]
    CoverageOutOfRange { exponent: i32 },
    #[error("unknown function code {0}")]
    UnknownFunction(u8),
    #[error("truncated bank: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bank does not match the block format")]
    BankMismatch,
    #[error("fixed-point range exceeded")]
    FixedPointRange,
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Data format and datapath widths of the nonlinear unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonlinearConfig {
    pub format: BbfpConfig,
    pub address_bits: u8,
    /// Fraction bits of the divider result.
    pub divider_bits: u32,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            format: BbfpConfig::new(10, 5)
                .expect("valid")
                .with_rounding(Rounding::RoundNearestEven),
            address_bits: 7,
            divider_bits: 16,
        }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<(), NonlinearError> {
        self.format.validate()?;
        if self.address_bits == 0 || self.address_bits > self.format.mantissa_bits {
            return Err(NonlinearError::InvalidConfig(format!(
                "address width {} must be in 1..={}",
                self.address_bits, self.format.mantissa_bits
            )));
        }
        // keeps every decoded value an exact i128 fixed-point number
        if self.format.exponent_bits > 6 {
            return Err(NonlinearError::InvalidConfig("exponent width above 6 bits".into()));
        }
        if self.divider_bits == 0 || self.divider_bits > 40 {
            return Err(NonlinearError::InvalidConfig(format!("divider width {}", self.divider_bits)));
        }
        Ok(())
    }

    /// Fraction bits that hold any decoded value of the format exactly.
    pub fn value_frac_bits(&self) -> u32 {
        u32::from(self.format.mantissa_bits) - 1 + self.format.bias() as u32
    }
}

/// Encodes a vector in blocks of `N`; the last block is zero-padded.
pub fn quantize(values: &[f64], cfg: &BbfpConfig) -> Result<Vec<BbfpBlock>, FormatError> {
    values.chunks(cfg.block_size).map(|c| encode_block(c, cfg)).collect()
}

/// Decodes blocks and drops the padding beyond `len`.
pub fn dequantize(blocks: &[BbfpBlock], cfg: &BbfpConfig, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = blocks.iter().flat_map(|b| decode_block(b, cfg)).collect();
    out.truncate(len);
    out
}

fn reencode(values: &[f64], cfg: &BbfpConfig) -> Result<Vec<f64>, FormatError> {
    Ok(dequantize(&quantize(values, cfg)?, cfg, values.len()))
}

/// Per-element LUT lookup; the result is re-encoded into one block.
pub fn lut_lookup(block: &BbfpBlock, cfg: &BbfpConfig, bank: &LutBank) -> Result<BbfpBlock, NonlinearError> {
    if !bank.accepts(cfg) {
        return Err(NonlinearError::BankMismatch);
    }
    block.validate(cfg)?;
    let values: Vec<f64> = block
        .elements
        .iter()
        .map(|&e| bank.lookup(e, block.shared_exponent))
        .collect();
    Ok(encode_block(&values, cfg)?)
}

fn lookup_values(blocks: &[BbfpBlock], bank: &LutBank, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = blocks
        .iter()
        .flat_map(|b| b.elements.iter().map(move |&e| bank.lookup(e, b.shared_exponent)))
        .collect();
    out.truncate(len);
    out
}

/// Owns the banks for one configuration. Immutable once built.
#[derive(Debug, Clone)]
pub struct NonlinearUnit {
    config: NonlinearConfig,
    exp: LutBank,
    one_plus_exp_neg: LutBank,
    gelu: LutBank,
}

impl NonlinearUnit {
    pub fn new(config: NonlinearConfig) -> Result<Self, NonlinearError> {
        config.validate()?;
        let bank = |f| LutBank::build(f, &config.format, config.address_bits);
        Ok(Self {
            config,
            exp: bank(LutFunction::Exp)?,
            one_plus_exp_neg: bank(LutFunction::OnePlusExpNeg)?,
            gelu: bank(LutFunction::Gelu)?,
        })
    }

    pub fn config(&self) -> &NonlinearConfig {
        &self.config
    }

    pub fn bank(&self, function: LutFunction) -> Option<&LutBank> {
        match function {
            LutFunction::Exp => Some(&self.exp),
            LutFunction::OnePlusExpNeg => Some(&self.one_plus_exp_neg),
            LutFunction::Gelu => Some(&self.gelu),
            LutFunction::Silu => None,
        }
    }

    fn to_fixed(&self, v: f64) -> Result<Dyadic, NonlinearError> {
        Dyadic::from_f64_exact(v, self.config.value_frac_bits()).ok_or(NonlinearError::FixedPointRange)
    }

    fn div(&self, num: Dyadic, den: Dyadic) -> Result<f64, NonlinearError> {
        divide(num, den, self.config.divider_bits)
            .map(Dyadic::to_f64)
            .ok_or(NonlinearError::FixedPointRange)
    }

    pub fn softmax(&self, x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
        if x.is_empty() {
            return Err(NonlinearError::Empty);
        }
        let cfg = &self.config.format;
        let xq = dequantize(&quantize(x, cfg)?, cfg, x.len());
        let max = xq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = xq.iter().map(|v| v - max).collect();
        let exps = lookup_values(&quantize(&shifted, cfg)?, &self.exp, x.len());
        let fixed = exps.iter().map(|&e| self.to_fixed(e)).collect::<Result<Vec<_>, _>>()?;
        let sum = adder_tree(&fixed, self.config.value_frac_bits()).ok_or(NonlinearError::FixedPointRange)?;
        let probs = fixed.iter().map(|&e| self.div(e, sum)).collect::<Result<Vec<_>, _>>()?;
        Ok(reencode(&probs, cfg)?)
    }

    fn sigmoid_fixed(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NonlinearError> {
        let cfg = &self.config.format;
        let blocks = quantize(x, cfg)?;
        let xq = dequantize(&blocks, cfg, x.len());
        let one = Dyadic::new(1, 0);
        let sig = lookup_values(&blocks, &self.one_plus_exp_neg, x.len())
            .into_iter()
            .map(|d| self.div(one, self.to_fixed(d)?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((xq, sig))
    }

    pub fn sigmoid(&self, x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
        if x.is_empty() {
            return Err(NonlinearError::Empty);
        }
        let (_, sig) = self.sigmoid_fixed(x)?;
        Ok(reencode(&sig, &self.config.format)?)
    }

    /// The multiplier takes the divider output before re-encoding; the
    /// product of a BBFP value and a fixed-point quotient is exact in `f64`.
    pub fn silu(&self, x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
        if x.is_empty() {
            return Err(NonlinearError::Empty);
        }
        let (xq, sig) = self.sigmoid_fixed(x)?;
        let prod: Vec<f64> = xq.iter().zip(&sig).map(|(a, b)| a * b).collect();
        Ok(reencode(&prod, &self.config.format)?)
    }

    pub fn gelu(&self, x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
        if x.is_empty() {
            return Err(NonlinearError::Empty);
        }
        let cfg = &self.config.format;
        let out = quantize(x, cfg)?
            .iter()
            .map(|b| lut_lookup(b, cfg, &self.gelu))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(dequantize(&out, cfg, x.len()))
    }

    pub fn apply(&self, op: Op, x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
        match op {
            Op::Softmax => self.softmax(x),
            Op::Sigmoid => self.sigmoid(x),
            Op::Silu => self.silu(x),
            Op::Gelu => self.gelu(x),
        }
    }
}

/// Vector operations of the unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Softmax,
    Sigmoid,
    Silu,
    Gelu,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Softmax, Op::Sigmoid, Op::Silu, Op::Gelu];

    /// 64-bit reference.
    pub fn reference(self, x: &[f64]) -> Vec<f64> {
        match self {
            Op::Softmax => {
                let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|v| libm::exp(v - max)).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
            Op::Sigmoid => x.iter().map(|&v| 1.0 / LutFunction::OnePlusExpNeg.eval(v)).collect(),
            Op::Silu => x.iter().map(|&v| LutFunction::Silu.eval(v)).collect(),
            Op::Gelu => x.iter().map(|&v| LutFunction::Gelu.eval(v)).collect(),
        }
    }
}

impl std::str::FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(Op::Softmax),
            "sigmoid" => Ok(Op::Sigmoid),
            "silu" => Ok(Op::Silu),
            "gelu" => Ok(Op::Gelu),
            other => Err(format!("unknown function {other:?} (softmax, sigmoid, silu, gelu)")),
        }
    }
}

/// Work counters of a pipelined softmax run. They count operations, not
/// cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounters {
    pub input_blocks: usize,
    pub max_compares: usize,
    pub aligned_blocks: usize,
    pub lut_reads: usize,
    pub tree_adds: usize,
    pub divisions: usize,
    pub output_blocks: usize,
}

/// Streams a softmax through explicit stages, one block per step.
#[derive(Debug)]
pub struct SoftmaxPipeline<'a> {
    unit: &'a NonlinearUnit,
    pub counters: StageCounters,
}

impl<'a> SoftmaxPipeline<'a> {
    pub fn new(unit: &'a NonlinearUnit) -> Self {
        Self {
            unit,
            counters: StageCounters::default(),
        }
    }

    pub fn run(&mut self, x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
        if x.is_empty() {
            return Err(NonlinearError::Empty);
        }
        let unit = self.unit;
        let cfg = &unit.config.format;
        let n = cfg.block_size;
        let frac = unit.config.value_frac_bits();

        // stage 1: encode and track the running maximum
        let mut buffer: Vec<Vec<f64>> = Vec::new();
        let mut max = f64::NEG_INFINITY;
        for chunk in x.chunks(n) {
            let block = encode_block(chunk, cfg)?;
            self.counters.input_blocks += 1;
            let mut decoded = decode_block(&block, cfg);
            decoded.truncate(chunk.len());
            for &v in &decoded {
                self.counters.max_compares += 1;
                max = max.max(v);
            }
            buffer.push(decoded);
        }

        // stage 2: subtract, align, look up; partial sums per block
        let mut exps: Vec<Vec<Dyadic>> = Vec::with_capacity(buffer.len());
        let mut partial = Vec::with_capacity(buffer.len());
        for decoded in &buffer {
            let shifted: Vec<f64> = decoded.iter().map(|v| v - max).collect();
            let block = encode_block(&shifted, cfg)?;
            self.counters.aligned_blocks += 1;
            let fixed = block.elements[..shifted.len()]
                .iter()
                .map(|&e| {
                    self.counters.lut_reads += 1;
                    unit.to_fixed(unit.exp.lookup(e, block.shared_exponent))
                })
                .collect::<Result<Vec<_>, _>>()?;
            self.counters.tree_adds += fixed.len().saturating_sub(1);
            partial.push(adder_tree(&fixed, frac).ok_or(NonlinearError::FixedPointRange)?);
            exps.push(fixed);
        }
        self.counters.tree_adds += partial.len() - 1;
        let sum = partial
            .iter()
            .try_fold(Dyadic::new(0, frac), |a, &b| a.checked_add(b))
            .ok_or(NonlinearError::FixedPointRange)?;

        // stage 3: divide and re-encode
        let mut out = Vec::with_capacity(x.len());
        for block_exps in &exps {
            let probs = block_exps
                .iter()
                .map(|&e| {
                    self.counters.divisions += 1;
                    unit.div(e, sum)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let block = encode_block(&probs, cfg)?;
            self.counters.output_blocks += 1;
            let mut decoded = decode_block(&block, cfg);
            decoded.truncate(probs.len());
            out.extend(decoded);
        }
        Ok(out)
    }
}

/// Max relative error of `got` against `reference`, with `|reference|`
/// floored at `floor` in the denominator so outputs near zero are judged by
/// absolute error.
pub fn max_relative_error(got: &[f64], reference: &[f64], floor: f64) -> f64 {
    got.iter()
        .zip(reference)
        .map(|(g, r)| (g - r).abs() / r.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn unit() -> &'static NonlinearUnit {
        static UNIT: OnceLock<NonlinearUnit> = OnceLock::new();
        UNIT.get_or_init(|| NonlinearUnit::new(NonlinearConfig::default()).unwrap())
    }

    #[test]
    fn sigmoid_and_silu_at_zero() {
        assert_eq!(unit().sigmoid(&[0.0]).unwrap(), vec![0.5]);
        assert_eq!(unit().silu(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(unit().gelu(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn softmax_symmetric_and_dominant() {
        for n in [1, 7, 32, 100] {
            let out = unit().softmax(&vec![0.37; n]).unwrap();
            for p in out {
                assert!((p - 1.0 / n as f64).abs() <= 2f64.powi(-7), "n={n} p={p}");
            }
        }
        let mut x = vec![0.0; 64];
        x[17] = 20.0;
        let out = unit().softmax(&x).unwrap();
        assert!(out[17] >= 1.0 - 2f64.powi(-6));
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x: Vec<f64> = (0..128).map(|_| rng.random_range(-8.0..8.0)).collect();
            let out = unit().softmax(&x).unwrap();
            assert!(out.iter().all(|&p| p >= 0.0));
            let s: f64 = out.iter().sum();
            assert!((s - 1.0).abs() <= 2f64.powi(-6), "sum {s}");
        }
    }

    #[test]
    fn pipeline_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for len in [1, 31, 32, 33, 128, 200] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-12.0..12.0)).collect();
            let mut p = SoftmaxPipeline::new(unit());
            let staged = p.run(&x).unwrap();
            let direct = unit().softmax(&x).unwrap();
            assert_eq!(
                staged.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                direct.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(p.counters.lut_reads, len);
            assert_eq!(p.counters.divisions, len);
            assert_eq!(p.counters.input_blocks, len.div_ceil(32));
        }
    }

    #[test]
    fn sigmoid_symmetry_and_monotonicity() {
        let xs: Vec<f64> = (0..4000).map(|i| -20.0 + f64::from(i) * 0.01).collect();
        let mut last = 0.0;
        for &x in &xs {
            let s = unit().sigmoid(&[x]).unwrap()[0];
            assert!(s >= last, "x={x}: {s} < {last}");
            last = s;
            let t = unit().sigmoid(&[-x]).unwrap()[0];
            assert!((s + t - 1.0).abs() <= 2.0 * 2f64.powi(-7), "x={x}: {s} + {t}");
        }
    }

    #[test]
    fn silu_reference_point() {
        let y = unit().silu(&[3.0]).unwrap()[0];
        let r = LutFunction::Silu.eval(3.0);
        assert!((r - 2.857722).abs() < 1e-6);
        assert!((y - r).abs() / r < 2f64.powi(-6), "{y} vs {r}");
    }

    #[test]
    fn lut_lookup_checks_bank() {
        let cfg = BbfpConfig::new(8, 4).unwrap();
        let block = encode_block(&[1.0], &cfg).unwrap();
        assert!(matches!(
            lut_lookup(&block, &cfg, &unit().exp),
            Err(NonlinearError::BankMismatch)
        ));
        let cfg = unit().config.format;
        let block = encode_block(&[-1.0, 0.0], &cfg).unwrap();
        let out = decode_block(&lut_lookup(&block, &cfg, &unit().exp).unwrap(), &cfg);
        assert!((out[0] - libm::exp(-1.0)).abs() < 2f64.powi(-7));
        assert_eq!(out[1], 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(NonlinearConfig::default().validate().is_ok());
        let c = NonlinearConfig {
            address_bits: 11,
            ..Default::default()
        };
        assert!(NonlinearUnit::new(c).is_err());
        let mut c = NonlinearConfig::default();
        c.format = c.format.with_exponent_bits(7);
        assert!(c.validate().is_err());
        assert!(unit().softmax(&[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn softmax_is_a_distribution(x in prop::collection::vec(-30.0f64..30.0, 1..160)) {
            let out = unit().softmax(&x).unwrap();
            prop_assert!(out.iter().all(|&p| p >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 2f64.powi(-6));
        }
    }
}
