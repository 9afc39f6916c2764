//! Exponent-segmented lookup tables.
//!
//! A BBFP element with shared exponent `e_s` has effective exponent
//! `E = e_s + flag * (m - o)` and magnitude `m' * 2^(1-m) * 2^(E - bias)`. The
//! mantissa need not be normalized, so the lookup first locates its leading
//! one: the element's own exponent `t` selects a sub-table covering
//! `[2^t, 2^(t+1))`, and the `address_bits` mantissa bits after the leading
//! one (zero-filled when fewer remain) address the entry. Each entry holds the
//! function sampled at the middle of its cell, and the entries of one
//! sub-table are stored as one BBFP block.

use super::NonlinearError;
use crate::format::packed::{pack_elements, packed_elements_len, unpack_elements};
use crate::format::{
    encode_block, pow2, BbfpBlock, BbfpConfig, BbfpElement, Rounding, SourceFloat, DEFAULT_EXPONENT_BITS,
};
use std::collections::BTreeMap;
use std::ops::RangeInclusive;

/// Functions with a table bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LutFunction {
    /// `e^x` for `x <= 0`.
    Exp,
    /// `1 + e^(-x)`, the sigmoid denominator.
    OnePlusExpNeg,
    /// `x / (1 + e^(-x))`.
    Silu,
    /// `x * Phi(x)`.
    Gelu,
}

/// Value returned when the input is above a sub-table range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    Const(f64),
    /// The decoded input itself.
    Identity,
}

impl LutFunction {
    pub const ALL: [LutFunction; 4] = [
        LutFunction::Exp,
        LutFunction::OnePlusExpNeg,
        LutFunction::Silu,
        LutFunction::Gelu,
    ];

    pub fn code(self) -> u8 {
        match self {
            LutFunction::Exp => 0,
            LutFunction::OnePlusExpNeg => 1,
            LutFunction::Silu => 2,
            LutFunction::Gelu => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, NonlinearError> {
        LutFunction::ALL
            .into_iter()
            .find(|f| f.code() == code)
            .ok_or(NonlinearError::UnknownFunction(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            LutFunction::Exp => "exp",
            LutFunction::OnePlusExpNeg => "one-plus-exp-neg",
            LutFunction::Silu => "silu",
            LutFunction::Gelu => "gelu",
        }
    }

    /// 64-bit reference.
    pub fn eval(self, x: f64) -> f64 {
        match self {
            LutFunction::Exp => libm::exp(x),
            LutFunction::OnePlusExpNeg => 1.0 + libm::exp(-x),
            LutFunction::Silu => x / (1.0 + libm::exp(-x)),
            LutFunction::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
        }
    }

    /// Unbiased exponents with a sub-table, per sign (`true` = negative).
    ///
    /// Exp only sees max-subtracted inputs and covers `(-16, 0]` with 18
    /// tables; the others cover `|x| < 32` with 12 tables per sign.
    pub fn coverage(self, negative: bool) -> Option<RangeInclusive<i32>> {
        match (self, negative) {
            (LutFunction::Exp, true) => Some(-14..=3),
            (LutFunction::Exp, false) => None,
            _ => Some(-7..=4),
        }
    }

    /// Output for inputs whose magnitude exceeds the covered range.
    pub fn saturation(self, negative: bool, exponent_bits: u8) -> Saturation {
        match (self, negative) {
            (LutFunction::Exp, _) => Saturation::Const(0.0),
            (LutFunction::OnePlusExpNeg, false) => Saturation::Const(1.0),
            // largest encodable value; the divider turns it into zero
            (LutFunction::OnePlusExpNeg, true) => Saturation::Const(max_source_magnitude(exponent_bits)),
            (LutFunction::Silu | LutFunction::Gelu, false) => Saturation::Identity,
            (LutFunction::Silu | LutFunction::Gelu, true) => Saturation::Const(0.0),
        }
    }
}

impl std::str::FromStr for LutFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LutFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown function {s:?}"))
    }
}

fn max_source_magnitude(exponent_bits: u8) -> f64 {
    SourceFloat::from_f64(f64::MAX, exponent_bits)
        .expect("finite")
        .to_f64(exponent_bits)
}

/// Immutable bank of sub-tables for one function.
#[derive(Debug, Clone, PartialEq)]
pub struct LutBank {
    function: LutFunction,
    mantissa_bits: u8,
    overlap_bits: u8,
    exponent_bits: u8,
    address_bits: u8,
    /// Keyed by `(negative, biased effective exponent)`.
    tables: BTreeMap<(bool, u8), BbfpBlock>,
}

impl LutBank {
    /// Samples `function` for inputs in `format`. Entries are encoded with
    /// round-to-nearest-even.
    pub fn build(function: LutFunction, format: &BbfpConfig, address_bits: u8) -> Result<Self, NonlinearError> {
        format.validate()?;
        if address_bits == 0 || address_bits > format.mantissa_bits {
            return Err(NonlinearError::InvalidConfig(format!(
                "address width {address_bits} must be in 1..={}",
                format.mantissa_bits
            )));
        }
        let mut bank = Self {
            function,
            mantissa_bits: format.mantissa_bits,
            overlap_bits: format.overlap_bits,
            exponent_bits: format.exponent_bits,
            address_bits,
            tables: BTreeMap::new(),
        };
        let entry_cfg = bank.entry_config();
        let bias = format.bias();
        let max_effective = format.max_exponent() as i32 + format.shift_span() as i32;
        let a = i32::from(address_bits);
        for negative in [false, true] {
            let Some(range) = function.coverage(negative) else { continue };
            for t in range {
                let biased = t + bias;
                if biased < 0 || biased > max_effective {
                    return Err(NonlinearError::CoverageOutOfRange { exponent: t });
                }
                let cell = pow2(t - a);
                let samples: Vec<f64> = (0..1u32 << a)
                    .map(|addr| {
                        let mag = (f64::from((1u32 << a) + addr) + 0.5) * cell;
                        function.eval(if negative { -mag } else { mag })
                    })
                    .collect();
                bank.tables.insert((negative, biased as u8), encode_block(&samples, &entry_cfg)?);
            }
        }
        Ok(bank)
    }

    pub fn function(&self) -> LutFunction {
        self.function
    }

    pub fn address_bits(&self) -> u8 {
        self.address_bits
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn tables(&self) -> impl Iterator<Item = (&(bool, u8), &BbfpBlock)> {
        self.tables.iter()
    }

    /// Configuration of the stored entries: one block per sub-table.
    pub fn entry_config(&self) -> BbfpConfig {
        BbfpConfig {
            mantissa_bits: self.mantissa_bits,
            overlap_bits: self.overlap_bits,
            exponent_bits: self.exponent_bits,
            block_size: 1 << self.address_bits,
            rounding: Rounding::RoundNearestEven,
        }
    }

    /// Whether blocks in `cfg` can be looked up in this bank.
    pub fn accepts(&self, cfg: &BbfpConfig) -> bool {
        (cfg.mantissa_bits, cfg.overlap_bits, cfg.exponent_bits)
            == (self.mantissa_bits, self.overlap_bits, self.exponent_bits)
    }

    /// Looks up one input element of a block with `shared_exponent`.
    ///
    /// Zero, magnitudes below the covered range and signs without sub-tables
    /// map to `f(0)`; magnitudes above the range saturate.
    pub fn lookup(&self, element: BbfpElement, shared_exponent: u8) -> f64 {
        let f0 = self.function.eval(0.0);
        if element.mantissa == 0 {
            return f0;
        }
        let Some(range) = self.function.coverage(element.sign) else {
            return f0;
        };
        let cfg = self.entry_config();
        let m = i32::from(self.mantissa_bits);
        let a = u32::from(self.address_bits);
        let span = if element.flag { cfg.shift_span() as i32 } else { 0 };
        let mantissa = u32::from(element.mantissa);
        let lead = 31 - mantissa.leading_zeros();
        let t = i32::from(shared_exponent) + span - cfg.bias() + 1 - m + lead as i32;
        if t < *range.start() {
            return f0;
        }
        if t > *range.end() {
            return match self.function.saturation(element.sign, self.exponent_bits) {
                Saturation::Const(v) => v,
                Saturation::Identity => element.decode(shared_exponent, &cfg),
            };
        }
        let rest = mantissa - (1 << lead);
        let address = if lead >= a { rest >> (lead - a) } else { rest << (a - lead) } as usize;
        let table = &self.tables[&(element.sign, (t + cfg.bias()) as u8)];
        table.elements[address].decode(table.shared_exponent, &cfg)
    }

    /// Serialized layout (little-endian):
    ///
    /// ```text
    /// function u8 | m u8 | o u8 | address_bits u8 | n_subtables u16
    /// n_subtables x { sign u8 | exponent u8 | entry e_s u8 | packed entries }
    /// ```
    ///
    /// Entries are packed as in a packed block. The exponent width is not
    /// stored and must be the default.
    pub fn to_bytes(&self) -> Result<Vec<u8>, NonlinearError> {
        if self.exponent_bits != DEFAULT_EXPONENT_BITS {
            return Err(NonlinearError::InvalidConfig(format!(
                "bank files assume {DEFAULT_EXPONENT_BITS}-bit exponents, bank uses {}",
                self.exponent_bits
            )));
        }
        let mut out = vec![
            self.function.code(),
            self.mantissa_bits,
            self.overlap_bits,
            self.address_bits,
        ];
        out.extend_from_slice(&(self.tables.len() as u16).to_le_bytes());
        for (&(negative, exponent), block) in &self.tables {
            out.extend_from_slice(&[u8::from(negative), exponent, block.shared_exponent]);
            out = pack_elements(out, &block.elements, self.mantissa_bits);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NonlinearError> {
        let truncated = |needed: usize| NonlinearError::Truncated {
            needed,
            available: bytes.len(),
        };
        if bytes.len() < 6 {
            return Err(truncated(6));
        }
        let function = LutFunction::from_code(bytes[0])?;
        let (m, o, a) = (bytes[1], bytes[2], bytes[3]);
        let count = usize::from(u16::from_le_bytes([bytes[4], bytes[5]]));
        let format = BbfpConfig::new(m, o)?;
        if a == 0 || a > m {
            return Err(NonlinearError::InvalidConfig(format!("address width {a} for m = {m}")));
        }
        let mut bank = Self {
            function,
            mantissa_bits: m,
            overlap_bits: o,
            exponent_bits: format.exponent_bits,
            address_bits: a,
            tables: BTreeMap::new(),
        };
        let cfg = bank.entry_config();
        let max_tables = 2 << cfg.exponent_bits;
        if count > max_tables {
            return Err(NonlinearError::InvalidConfig(format!("{count} sub-tables exceed {max_tables}")));
        }
        let body = packed_elements_len(cfg.block_size, m);
        let mut pos = 6;
        for _ in 0..count {
            let end = pos + 3 + body;
            if bytes.len() < end {
                return Err(truncated(end));
            }
            let negative = match bytes[pos] {
                0 => false,
                1 => true,
                s => return Err(NonlinearError::InvalidConfig(format!("sign byte {s}"))),
            };
            let block = BbfpBlock {
                shared_exponent: bytes[pos + 2],
                elements: unpack_elements(&bytes[pos + 3..end], cfg.block_size, m),
            };
            block.validate(&cfg)?;
            if bank.tables.insert((negative, bytes[pos + 1]), block).is_some() {
                return Err(NonlinearError::InvalidConfig("duplicate sub-table".into()));
            }
            pos = end;
        }
        if pos != bytes.len() {
            return Err(NonlinearError::InvalidConfig(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(bank)
    }
}
