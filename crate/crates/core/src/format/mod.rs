//! Bidirectional block floating point (BBFP) and classic block floating point
//! (BFP) data model.
//!
//! Scalars are first ingested into a [`SourceFloat`]: a sign, an `e`-bit biased
//! exponent and an 11-bit mantissa whose top bit is the implicit leading one.
//! A block of sources is then aligned to one shared exponent. In BFP every
//! mantissa is right-shifted towards the block maximum. In BBFP the shared
//! exponent sits `m - o` below the maximum, and elements above it are
//! left-shifted into a high window flagged with `flag = 1`:
//!
//! ```text
//!   mantissa bits (1-based):  11+(m-o) ...... 12  11 ......... 12-o ... 12-m
//!   flag = 1 window (W1):     [------------ m bits ------------]
//!   flag = 0 window (W0):                         [------------ m bits ------]
//!                                                 ^ implicit one
//! ```
//!
//! The two windows overlap in `o` bit positions, and a flagged element carries
//! an extra factor of `2^(m-o)`.

pub(crate) mod packed;

pub use packed::{read_packed_block, write_packed_block, PACKED_HEADER_LEN};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Mantissa width of an ingested source value, implicit one included.
pub const SOURCE_MANTISSA_BITS: u32 = 11;

/// Largest supported per-element mantissa width.
pub const MAX_MANTISSA_BITS: u8 = 11;

/// Largest supported shared-exponent width (the exponent is stored in one byte).
pub const MAX_EXPONENT_BITS: u8 = 8;

pub const DEFAULT_EXPONENT_BITS: u8 = 5;
pub const DEFAULT_BLOCK_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("block is empty")]
    EmptyBlock,
    #[error("non-finite input at index {index}")]
    NonFiniteInput { index: usize },
    #[error("block holds {len} values but the block size is {block_size}")]
    BlockTooLarge { len: usize, block_size: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("exponent {exponent} does not fit in {bits} bits")]
    ExponentOutOfRange { exponent: u32, bits: u8 },
    #[error("mantissa {mantissa} does not fit in {bits} bits")]
    MantissaOutOfRange { mantissa: u16, bits: u8 },
    #[error("packed data truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown rounding code {0}")]
    UnknownRounding(u8),
}

/// Rounding applied at the least significant bit of the extraction window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Drop the bits below the window.
    #[default]
    Truncate,
    /// Round to nearest, ties to even.
    RoundNearestEven,
}

impl Rounding {
    pub fn code(self) -> u8 {
        match self {
            Rounding::Truncate => 0,
            Rounding::RoundNearestEven => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            0 => Ok(Rounding::Truncate),
            1 => Ok(Rounding::RoundNearestEven),
            other => Err(FormatError::UnknownRounding(other)),
        }
    }
}

/// Parameters of one BBFP variant, written `BBFP(m, o)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BbfpConfig {
    pub mantissa_bits: u8,
    pub overlap_bits: u8,
    pub exponent_bits: u8,
    pub block_size: usize,
    pub rounding: Rounding,
}

impl BbfpConfig {
    /// `BBFP(m, o)` with a 5-bit shared exponent, 32-element blocks and truncation.
    pub fn new(mantissa_bits: u8, overlap_bits: u8) -> Result<Self, FormatError> {
        let cfg = Self {
            mantissa_bits,
            overlap_bits,
            exponent_bits: DEFAULT_EXPONENT_BITS,
            block_size: DEFAULT_BLOCK_SIZE,
            rounding: Rounding::Truncate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The degenerate `BBFP(m, 0)` variant: the high window lies entirely above
    /// the implicit one, so flagged elements keep only their leading bits.
    /// It exists so overlap sweeps can include `o = 0`.
    pub fn without_overlap(mantissa_bits: u8) -> Result<Self, FormatError> {
        let cfg = Self {
            mantissa_bits,
            overlap_bits: 0,
            exponent_bits: DEFAULT_EXPONENT_BITS,
            block_size: DEFAULT_BLOCK_SIZE,
            rounding: Rounding::Truncate,
        };
        cfg.validate_layout()?;
        Ok(cfg)
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn with_exponent_bits(mut self, exponent_bits: u8) -> Self {
        self.exponent_bits = exponent_bits;
        self
    }

    /// Checks `1 <= o < m <= 11`, `1 <= e <= 8` and `1 <= N <= 65535`.
    pub fn validate(&self) -> Result<(), FormatError> {
        if self.overlap_bits == 0 {
            return Err(FormatError::InvalidConfig(
                "overlap_bits must be at least 1".into(),
            ));
        }
        self.validate_layout()
    }

    /// Same as [`validate`](Self::validate) but admits `o = 0`.
    pub fn validate_layout(&self) -> Result<(), FormatError> {
        if self.overlap_bits >= self.mantissa_bits {
            return Err(FormatError::InvalidConfig(format!(
                "overlap_bits ({}) must be below mantissa_bits ({})",
                self.overlap_bits, self.mantissa_bits
            )));
        }
        check_common(self.mantissa_bits, self.exponent_bits, self.block_size)
    }

    /// `m - o`: how far the shared exponent sits below the block maximum, and
    /// the extra left shift carried by flagged elements.
    pub fn shift_span(&self) -> u32 {
        u32::from(self.mantissa_bits - self.overlap_bits)
    }

    pub fn bias(&self) -> i32 {
        exponent_bias(self.exponent_bits)
    }

    pub fn max_exponent(&self) -> u32 {
        max_biased_exponent(self.exponent_bits)
    }

    /// The BFP format with the same mantissa width, exponent width, block size
    /// and rounding.
    pub fn bfp(&self) -> BfpConfig {
        BfpConfig {
            mantissa_bits: self.mantissa_bits,
            exponent_bits: self.exponent_bits,
            block_size: self.block_size,
            rounding: self.rounding,
        }
    }
}

impl fmt::Display for BbfpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BBFP({},{})", self.mantissa_bits, self.overlap_bits)
    }
}

/// Parameters of a max-aligned BFP format, written `BFPm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BfpConfig {
    pub mantissa_bits: u8,
    pub exponent_bits: u8,
    pub block_size: usize,
    pub rounding: Rounding,
}

impl BfpConfig {
    pub fn new(mantissa_bits: u8) -> Result<Self, FormatError> {
        let cfg = Self {
            mantissa_bits,
            exponent_bits: DEFAULT_EXPONENT_BITS,
            block_size: DEFAULT_BLOCK_SIZE,
            rounding: Rounding::Truncate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        check_common(self.mantissa_bits, self.exponent_bits, self.block_size)
    }

    pub fn bias(&self) -> i32 {
        exponent_bias(self.exponent_bits)
    }
}

impl fmt::Display for BfpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BFP{}", self.mantissa_bits)
    }
}

fn check_common(m: u8, e: u8, n: usize) -> Result<(), FormatError> {
    if m == 0 || m > MAX_MANTISSA_BITS {
        return Err(FormatError::InvalidConfig(format!(
            "mantissa_bits must be in 1..={MAX_MANTISSA_BITS}, got {m}"
        )));
    }
    if e == 0 || e > MAX_EXPONENT_BITS {
        return Err(FormatError::InvalidConfig(format!(
            "exponent_bits must be in 1..={MAX_EXPONENT_BITS}, got {e}"
        )));
    }
    if n == 0 || n > usize::from(u16::MAX) {
        return Err(FormatError::InvalidConfig(format!(
            "block_size must be in 1..=65535, got {n}"
        )));
    }
    Ok(())
}

/// IEEE-style bias `2^(e-1) - 1`.
pub fn exponent_bias(exponent_bits: u8) -> i32 {
    (1i32 << (exponent_bits - 1)) - 1
}

pub fn max_biased_exponent(exponent_bits: u8) -> u32 {
    (1u32 << exponent_bits) - 1
}

/// Exact `2^k` as an `f64` for the range the formats can produce.
pub(crate) fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// A scalar after ingestion: sign, `e`-bit biased exponent and an 11-bit
/// mantissa with the implicit one at the top.
///
/// Biased exponent 0 is reserved for zero. Values below the smallest normal are
/// flushed to a signed zero and values above the largest representable
/// magnitude saturate to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceFloat {
    pub sign: bool,
    pub exponent: u32,
    pub mantissa: u32,
}

impl SourceFloat {
    pub const ZERO: SourceFloat = SourceFloat {
        sign: false,
        exponent: 0,
        mantissa: 0,
    };

    /// Rounds `value` to an 11-bit significand (ties to even) and places it in
    /// the `exponent_bits` exponent range.
    pub fn from_f64(value: f64, exponent_bits: u8) -> Option<SourceFloat> {
        if !value.is_finite() {
            return None;
        }
        let bits = value.to_bits();
        let sign = bits >> 63 == 1;
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        if raw_exp == 0 {
            // zero or an f64 subnormal, far below any supported range
            return Some(SourceFloat { sign, ..Self::ZERO });
        }
        let significand = (1u64 << 52) | (bits & ((1u64 << 52) - 1));
        let drop = 52 - (SOURCE_MANTISSA_BITS - 1);
        let mut mantissa = significand >> drop;
        let rem = significand & ((1u64 << drop) - 1);
        let half = 1u64 << (drop - 1);
        if rem > half || (rem == half && mantissa & 1 == 1) {
            mantissa += 1;
        }
        let mut unbiased = raw_exp - 1023;
        if mantissa == 1 << SOURCE_MANTISSA_BITS {
            mantissa >>= 1;
            unbiased += 1;
        }
        let biased = unbiased + exponent_bias(exponent_bits);
        let max = max_biased_exponent(exponent_bits) as i32;
        if biased < 1 {
            return Some(SourceFloat { sign, ..Self::ZERO });
        }
        if biased > max {
            return Some(SourceFloat {
                sign,
                exponent: max as u32,
                mantissa: (1 << SOURCE_MANTISSA_BITS) - 1,
            });
        }
        Some(SourceFloat {
            sign,
            exponent: biased as u32,
            mantissa: mantissa as u32,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    pub fn to_f64(&self, exponent_bits: u8) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let scale = self.exponent as i32 - exponent_bias(exponent_bits) - (SOURCE_MANTISSA_BITS as i32 - 1);
        let v = f64::from(self.mantissa) * pow2(scale);
        if self.sign {
            -v
        } else {
            v
        }
    }
}

/// Ingests a block of scalars. Fails on NaN or infinity, reporting the index.
pub fn ingest(values: &[f64], exponent_bits: u8) -> Result<Vec<SourceFloat>, FormatError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            SourceFloat::from_f64(v, exponent_bits).ok_or(FormatError::NonFiniteInput { index })
        })
        .collect()
}

/// How the shared exponent of a block is derived from its maximum exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentStrategy {
    /// `max - (m - o)`.
    #[default]
    Bidirectional,
    /// `max - k` for an explicit `k`; `Offset(0)` is plain max alignment.
    Offset(u32),
}

impl ExponentStrategy {
    pub fn offset(self, cfg: &BbfpConfig) -> u32 {
        match self {
            ExponentStrategy::Bidirectional => cfg.shift_span(),
            ExponentStrategy::Offset(k) => k,
        }
    }
}

/// One BBFP element. Its value is
/// `(-1)^sign * mantissa * 2^(1-m) * f * 2^(e_s - bias)` with `f = 2^(m-o)` when
/// `flag` is set and `f = 1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BbfpElement {
    pub sign: bool,
    pub flag: bool,
    pub mantissa: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BbfpBlock {
    pub shared_exponent: u8,
    pub elements: Vec<BbfpElement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BfpElement {
    pub sign: bool,
    pub mantissa: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BfpBlock {
    pub shared_exponent: u8,
    pub elements: Vec<BfpElement>,
}

/// `clamp(max(exponents) - (m - o), 0, 2^e - 1)`.
pub fn select_shared_exponent(exponents: &[u32], cfg: &BbfpConfig) -> Result<u32, FormatError> {
    shared_exponent_with_offset(exponents, cfg.shift_span(), cfg.exponent_bits)
}

/// `clamp(max(exponents) - offset, 0, 2^e - 1)`.
pub fn shared_exponent_with_offset(
    exponents: &[u32],
    offset: u32,
    exponent_bits: u8,
) -> Result<u32, FormatError> {
    let max = exponents.iter().copied().max().ok_or(FormatError::EmptyBlock)?;
    let limit = max_biased_exponent(exponent_bits);
    if let Some(&bad) = exponents.iter().find(|&&e| e > limit) {
        return Err(FormatError::ExponentOutOfRange {
            exponent: bad,
            bits: exponent_bits,
        });
    }
    Ok(max.saturating_sub(offset).min(limit))
}

/// Takes `round(mantissa * 2^shift)` and saturates it to `width` bits.
///
/// A positive `shift` keeps every source bit; a negative one discards
/// `-shift` low bits, rounding per `rounding`.
fn extract_window(mantissa: u32, shift: i32, width: u32, rounding: Rounding) -> u16 {
    let max = (1u64 << width) - 1;
    let m = u64::from(mantissa);
    let q = if shift >= 0 {
        if shift as u32 >= 64 - SOURCE_MANTISSA_BITS {
            u64::MAX
        } else {
            m << shift
        }
    } else {
        let r = shift.unsigned_abs();
        if r > SOURCE_MANTISSA_BITS + 1 {
            0
        } else {
            let q = m >> r;
            match rounding {
                Rounding::Truncate => q,
                Rounding::RoundNearestEven => {
                    let rem = m & ((1u64 << r) - 1);
                    let half = 1u64 << (r - 1);
                    if rem > half || (rem == half && q & 1 == 1) {
                        q + 1
                    } else {
                        q
                    }
                }
            }
        }
    };
    q.min(max) as u16
}

/// Aligns one source value against `shared_exponent`.
pub(crate) fn encode_element(src: SourceFloat, shared_exponent: u32, cfg: &BbfpConfig) -> BbfpElement {
    if src.is_zero() {
        return BbfpElement {
            sign: src.sign,
            flag: false,
            mantissa: 0,
        };
    }
    let m = u32::from(cfg.mantissa_bits);
    let o = u32::from(cfg.overlap_bits);
    let top = SOURCE_MANTISSA_BITS as i32;
    let (flag, shift) = if src.exponent > shared_exponent {
        // W1: bits [11+(m-o) .. 12-o] of (M << delta)
        let delta = (src.exponent - shared_exponent) as i32;
        (true, delta - (top - o as i32))
    } else {
        // W0: bits [11 .. 12-m] of (M >> delta)
        let delta = (shared_exponent - src.exponent) as i32;
        (false, -delta - (top - m as i32))
    };
    BbfpElement {
        sign: src.sign,
        flag,
        mantissa: extract_window(src.mantissa, shift, m, cfg.rounding),
    }
}

fn pad_block(values: &[f64], block_size: usize) -> Result<(), FormatError> {
    if values.is_empty() {
        return Err(FormatError::EmptyBlock);
    }
    if values.len() > block_size {
        return Err(FormatError::BlockTooLarge {
            len: values.len(),
            block_size,
        });
    }
    Ok(())
}

/// Encodes up to `N` values into a BBFP block with the shared exponent
/// `max - (m - o)`. Short inputs are padded with zeros to `N` elements.
pub fn encode_block(values: &[f64], cfg: &BbfpConfig) -> Result<BbfpBlock, FormatError> {
    encode_block_with(values, cfg, ExponentStrategy::Bidirectional)
}

/// Like [`encode_block`] but with an explicit shared-exponent strategy.
pub fn encode_block_with(
    values: &[f64],
    cfg: &BbfpConfig,
    strategy: ExponentStrategy,
) -> Result<BbfpBlock, FormatError> {
    cfg.validate_layout()?;
    pad_block(values, cfg.block_size)?;
    let sources = ingest(values, cfg.exponent_bits)?;
    let exponents: Vec<u32> = sources.iter().map(|s| s.exponent).collect();
    let shared = shared_exponent_with_offset(&exponents, strategy.offset(cfg), cfg.exponent_bits)?;
    Ok(encode_sources(&sources, shared, cfg))
}

/// Aligns already-ingested sources to a given shared exponent.
pub fn encode_sources(sources: &[SourceFloat], shared_exponent: u32, cfg: &BbfpConfig) -> BbfpBlock {
    let mut elements: Vec<BbfpElement> = sources
        .iter()
        .map(|&s| encode_element(s, shared_exponent, cfg))
        .collect();
    elements.resize(cfg.block_size.max(sources.len()), BbfpElement::default());
    BbfpBlock {
        shared_exponent: shared_exponent as u8,
        elements,
    }
}

impl BbfpElement {
    /// Power of two applied to the integer mantissa, shared exponent excluded.
    pub fn scale_exponent(&self, cfg: &BbfpConfig) -> i32 {
        let f = if self.flag { cfg.shift_span() as i32 } else { 0 };
        1 - i32::from(cfg.mantissa_bits) + f
    }

    pub fn decode(&self, shared_exponent: u8, cfg: &BbfpConfig) -> f64 {
        if self.mantissa == 0 {
            return 0.0;
        }
        let k = self.scale_exponent(cfg) + i32::from(shared_exponent) - cfg.bias();
        let v = f64::from(self.mantissa) * pow2(k);
        if self.sign {
            -v
        } else {
            v
        }
    }
}

impl BbfpBlock {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Checks the block against `cfg`: element count, mantissa width and
    /// exponent range.
    pub fn validate(&self, cfg: &BbfpConfig) -> Result<(), FormatError> {
        if self.elements.len() != cfg.block_size {
            return Err(FormatError::InvalidConfig(format!(
                "block has {} elements, expected {}",
                self.elements.len(),
                cfg.block_size
            )));
        }
        if u32::from(self.shared_exponent) > cfg.max_exponent() {
            return Err(FormatError::ExponentOutOfRange {
                exponent: u32::from(self.shared_exponent),
                bits: cfg.exponent_bits,
            });
        }
        if let Some(e) = self
            .elements
            .iter()
            .find(|e| u32::from(e.mantissa) >> cfg.mantissa_bits != 0)
        {
            return Err(FormatError::MantissaOutOfRange {
                mantissa: e.mantissa,
                bits: cfg.mantissa_bits,
            });
        }
        Ok(())
    }
}

/// `v_i = (-1)^s * m' * 2^(1-m) * f * 2^(e_s - bias)`; exact in `f64`.
pub fn decode_block(block: &BbfpBlock, cfg: &BbfpConfig) -> Vec<f64> {
    block
        .elements
        .iter()
        .map(|e| e.decode(block.shared_exponent, cfg))
        .collect()
}

/// Classic BFP: every mantissa is right-aligned to the block's maximum exponent.
pub fn encode_block_bfp(values: &[f64], cfg: &BfpConfig) -> Result<BfpBlock, FormatError> {
    cfg.validate()?;
    pad_block(values, cfg.block_size)?;
    let sources = ingest(values, cfg.exponent_bits)?;
    let shared = sources.iter().map(|s| s.exponent).max().unwrap_or(0);
    let m = u32::from(cfg.mantissa_bits);
    let top = SOURCE_MANTISSA_BITS as i32;
    let mut elements: Vec<BfpElement> = sources
        .iter()
        .map(|s| {
            let mantissa = if s.is_zero() {
                0
            } else {
                let delta = (shared - s.exponent) as i32;
                extract_window(s.mantissa, -delta - (top - m as i32), m, cfg.rounding)
            };
            BfpElement {
                sign: s.sign,
                mantissa,
            }
        })
        .collect();
    elements.resize(cfg.block_size, BfpElement::default());
    Ok(BfpBlock {
        shared_exponent: shared as u8,
        elements,
    })
}

pub fn decode_block_bfp(block: &BfpBlock, cfg: &BfpConfig) -> Vec<f64> {
    let k0 = 1 - i32::from(cfg.mantissa_bits) + i32::from(block.shared_exponent) - cfg.bias();
    block
        .elements
        .iter()
        .map(|e| {
            if e.mantissa == 0 {
                return 0.0;
            }
            let v = f64::from(e.mantissa) * pow2(k0);
            if e.sign {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// Either block format, for code that sweeps over both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockFormat {
    Bfp(BfpConfig),
    Bbfp(BbfpConfig),
}

impl BlockFormat {
    pub fn mantissa_bits(&self) -> u8 {
        match self {
            BlockFormat::Bfp(c) => c.mantissa_bits,
            BlockFormat::Bbfp(c) => c.mantissa_bits,
        }
    }

    pub fn overlap_bits(&self) -> Option<u8> {
        match self {
            BlockFormat::Bfp(_) => None,
            BlockFormat::Bbfp(c) => Some(c.overlap_bits),
        }
    }

    pub fn block_size(&self) -> usize {
        match self {
            BlockFormat::Bfp(c) => c.block_size,
            BlockFormat::Bbfp(c) => c.block_size,
        }
    }

    pub fn exponent_bits(&self) -> u8 {
        match self {
            BlockFormat::Bfp(c) => c.exponent_bits,
            BlockFormat::Bbfp(c) => c.exponent_bits,
        }
    }

    pub fn rounding(&self) -> Rounding {
        match self {
            BlockFormat::Bfp(c) => c.rounding,
            BlockFormat::Bbfp(c) => c.rounding,
        }
    }

    pub fn with_rounding(self, rounding: Rounding) -> Self {
        match self {
            BlockFormat::Bfp(c) => BlockFormat::Bfp(c.with_rounding(rounding)),
            BlockFormat::Bbfp(c) => BlockFormat::Bbfp(c.with_rounding(rounding)),
        }
    }

    pub fn with_block_size(self, block_size: usize) -> Self {
        match self {
            BlockFormat::Bfp(c) => BlockFormat::Bfp(c.with_block_size(block_size)),
            BlockFormat::Bbfp(c) => BlockFormat::Bbfp(c.with_block_size(block_size)),
        }
    }

    /// Quantizes and dequantizes one block (at most `N` values), returning the
    /// decoded values for the input positions and the realized shared exponent.
    pub fn round_trip_block(
        &self,
        values: &[f64],
        strategy: ExponentStrategy,
    ) -> Result<(Vec<f64>, u8), FormatError> {
        match self {
            BlockFormat::Bfp(c) => {
                let block = encode_block_bfp(values, c)?;
                let mut out = decode_block_bfp(&block, c);
                out.truncate(values.len());
                Ok((out, block.shared_exponent))
            }
            BlockFormat::Bbfp(c) => {
                let block = encode_block_with(values, c, strategy)?;
                let mut out = decode_block(&block, c);
                out.truncate(values.len());
                Ok((out, block.shared_exponent))
            }
        }
    }
}

impl fmt::Display for BlockFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockFormat::Bfp(c) => c.fmt(f),
            BlockFormat::Bbfp(c) => c.fmt(f),
        }
    }
}

impl std::str::FromStr for BlockFormat {
    type Err = FormatError;

    /// Parses `BFP4`, `BBFP(4,2)` or `bbfp4,2`-style names with default
    /// exponent width, block size and rounding.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
        let bad = || FormatError::InvalidConfig(format!("cannot parse format `{s}`"));
        if let Some(rest) = t.strip_prefix("BBFP") {
            let inner = rest.trim_start_matches('(').trim_end_matches(')');
            let (m, o) = inner.split_once(',').ok_or_else(bad)?;
            let m: u8 = m.parse().map_err(|_| bad())?;
            let o: u8 = o.parse().map_err(|_| bad())?;
            let cfg = if o == 0 {
                BbfpConfig::without_overlap(m)?
            } else {
                BbfpConfig::new(m, o)?
            };
            Ok(BlockFormat::Bbfp(cfg))
        } else if let Some(rest) = t.strip_prefix("BFP") {
            let m: u8 = rest.parse().map_err(|_| bad())?;
            Ok(BlockFormat::Bfp(BfpConfig::new(m)?))
        } else {
            Err(bad())
        }
    }
}
