//! Storage and relative hardware cost of MAC data types.
//!
//! Storage costs are exact: bits per element including the amortized shared
//! exponent. Gate estimates are relative unit counts under [`GateWeights`];
//! they rank designs, they are not calibrated areas.

use crate::format::{BbfpConfig, DEFAULT_BLOCK_SIZE, DEFAULT_EXPONENT_BITS};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FormatKind {
    Fp16,
    Int,
    Bfp,
    Bbfp,
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatKind::Fp16 => "FP16",
            FormatKind::Int => "INT",
            FormatKind::Bfp => "BFP",
            FormatKind::Bbfp => "BBFP",
        })
    }
}

/// A data type as stored in memory and fed to the MAC array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub kind: FormatKind,
    /// Mantissa bits for BFP/BBFP, total bits for INT, 10 for FP16.
    pub mantissa_bits: u8,
    pub overlap_bits: Option<u8>,
    pub exponent_bits: u8,
    pub block_size: usize,
}

impl FormatSpec {
    pub fn fp16() -> Self {
        Self {
            kind: FormatKind::Fp16,
            mantissa_bits: 10,
            overlap_bits: None,
            exponent_bits: 5,
            block_size: 1,
        }
    }

    pub fn int(bits: u8) -> Self {
        Self {
            kind: FormatKind::Int,
            mantissa_bits: bits,
            overlap_bits: None,
            exponent_bits: 0,
            block_size: 1,
        }
    }

    pub fn bfp(m: u8) -> Self {
        Self {
            kind: FormatKind::Bfp,
            mantissa_bits: m,
            overlap_bits: None,
            exponent_bits: DEFAULT_EXPONENT_BITS,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }

    pub fn bbfp(m: u8, o: u8) -> Self {
        Self {
            kind: FormatKind::Bbfp,
            mantissa_bits: m,
            overlap_bits: Some(o),
            exponent_bits: DEFAULT_EXPONENT_BITS,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn from_config(cfg: &BbfpConfig) -> Self {
        Self {
            kind: FormatKind::Bbfp,
            mantissa_bits: cfg.mantissa_bits,
            overlap_bits: Some(cfg.overlap_bits),
            exponent_bits: cfg.exponent_bits,
            block_size: cfg.block_size,
        }
    }

    /// Short name: `FP16`, `INT8`, `BFP6`, `BBFP(6,3)`.
    pub fn label(&self) -> String {
        match self.kind {
            FormatKind::Fp16 => "FP16".into(),
            FormatKind::Int => format!("INT{}", self.mantissa_bits),
            FormatKind::Bfp => format!("BFP{}", self.mantissa_bits),
            FormatKind::Bbfp => format!("BBFP({},{})", self.mantissa_bits, self.overlap_bits.unwrap_or(0)),
        }
    }
}

/// Average stored bits per element.
///
/// BFP stores sign and mantissa per element, BBFP adds the flag bit; both
/// share one `e`-bit exponent per block of `N`.
pub fn equivalent_bit_width(spec: &FormatSpec) -> f64 {
    let shared = f64::from(spec.exponent_bits) / spec.block_size as f64;
    let m = f64::from(spec.mantissa_bits);
    match spec.kind {
        FormatKind::Fp16 => 16.0,
        FormatKind::Int => m,
        FormatKind::Bfp => 1.0 + m + shared,
        FormatKind::Bbfp => 2.0 + m + shared,
    }
}

/// Storage saving relative to FP16.
pub fn memory_efficiency(spec: &FormatSpec) -> f64 {
    16.0 / equivalent_bit_width(spec)
}

/// Rounds half away from zero to two decimals, as printed in tables.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Relative gate costs. A full-adder cell is built from two XOR and three
/// AND-equivalent gates; the carry-chain cell drops one AND and two XOR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub and: f64,
    pub xor: f64,
}

impl Default for GateWeights {
    fn default() -> Self {
        Self { and: 1.0, xor: 2.0 }
    }
}

impl GateWeights {
    pub fn full_adder(&self) -> f64 {
        2.0 * self.xor + 3.0 * self.and
    }

    pub fn chain_cell(&self) -> f64 {
        self.full_adder() - self.and - 2.0 * self.xor
    }

    /// `full` full-adder cells followed by `chain` carry-chain cells.
    pub fn adder(&self, full: u32, chain: u32) -> f64 {
        f64::from(full) * self.full_adder() + f64::from(chain) * self.chain_cell()
    }
}

/// Relative multiplier and adder cost of one lane of a MAC unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEstimate {
    pub multiplier: f64,
    pub adder: f64,
}

/// Multiplier cost scales as `m^2` AND cells; the product adder spans `2m`
/// bits, and BBFP appends `2(m - o)` carry-chain cells for the flag shift.
/// INT and FP16 are costed as their integer mantissa datapath.
pub fn gate_estimate(spec: &FormatSpec, weights: &GateWeights) -> GateEstimate {
    let m = u32::from(spec.mantissa_bits);
    let m_eff = match spec.kind {
        FormatKind::Fp16 => m + 1,
        _ => m,
    };
    let chain = match (spec.kind, spec.overlap_bits) {
        (FormatKind::Bbfp, Some(o)) => 2 * (m - u32::from(o).min(m)),
        _ => 0,
    };
    GateEstimate {
        multiplier: f64::from(m_eff * m_eff) * weights.and,
        adder: weights.adder(2 * m_eff, chain),
    }
}

/// One row of the storage/cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub kind: String,
    pub m: u8,
    pub o: Option<u8>,
    pub e: u8,
    #[serde(rename = "N")]
    pub n: usize,
    pub equiv_bits: f64,
    pub mem_eff: f64,
    pub rel_mult_cost: f64,
    pub rel_add_cost: f64,
}

/// Costs are relative to `reference` (BFP8 in [`reference_rows`]).
pub fn cost_row(spec: &FormatSpec, reference: &FormatSpec, weights: &GateWeights) -> CostRow {
    let g = gate_estimate(spec, weights);
    let r = gate_estimate(reference, weights);
    CostRow {
        kind: spec.label(),
        m: spec.mantissa_bits,
        o: spec.overlap_bits,
        e: spec.exponent_bits,
        n: spec.block_size,
        equiv_bits: round2(equivalent_bit_width(spec)),
        mem_eff: round2(memory_efficiency(spec)),
        rel_mult_cost: round2(g.multiplier / r.multiplier),
        rel_add_cost: round2(g.adder / r.adder),
    }
}

/// The six reference data types, in table order.
pub fn reference_specs() -> Vec<FormatSpec> {
    vec![
        FormatSpec::fp16(),
        FormatSpec::int(8),
        FormatSpec::bfp(8),
        FormatSpec::bfp(6),
        FormatSpec::bbfp(8, 4),
        FormatSpec::bbfp(6, 3),
    ]
}

pub fn reference_rows(weights: &GateWeights) -> Vec<CostRow> {
    let reference = FormatSpec::bfp(8);
    reference_specs().iter().map(|s| cost_row(s, &reference, weights)).collect()
}
