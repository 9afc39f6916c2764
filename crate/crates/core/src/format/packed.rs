//! Packed block serialization.
//!
//! Layout, all multi-byte integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     1  m
//!      1     1  o
//!      2     1  e
//!      3     2  N
//!      5     1  rounding (0 = truncate, 1 = round-nearest-even)
//!      6     1  shared exponent
//!      7     *  N codes of m+2 bits, LSB-first, zero-padded to a byte
//! ```
//!
//! Each code is `mantissa | flag << m | sign << (m + 1)`.

use super::{BbfpBlock, BbfpConfig, BbfpElement, FormatError, Rounding};

pub const PACKED_HEADER_LEN: usize = 7;

pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
}

impl BitWriter {
    pub(crate) fn new(bytes: Vec<u8>) -> Self {
        Self {
            bytes,
            acc: 0,
            filled: 0,
        }
    }

    pub(crate) fn push(&mut self, value: u32, width: u32) {
        self.acc |= u64::from(value) << self.filled;
        self.filled += width;
        while self.filled >= 8 {
            self.bytes.push(self.acc as u8);
            self.acc >>= 8;
            self.filled -= 8;
        }
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.acc as u8);
        }
        self.bytes
    }
}

pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: u32,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            acc: 0,
            filled: 0,
        }
    }

    /// Caller guarantees enough bytes remain.
    pub(crate) fn pull(&mut self, width: u32) -> u32 {
        while self.filled < width {
            self.acc |= u64::from(self.bytes[self.pos]) << self.filled;
            self.pos += 1;
            self.filled += 8;
        }
        let v = (self.acc & ((1u64 << width) - 1)) as u32;
        self.acc >>= width;
        self.filled -= width;
        v
    }
}

pub(crate) fn packed_elements_len(count: usize, mantissa_bits: u8) -> usize {
    (count * (usize::from(mantissa_bits) + 2)).div_ceil(8)
}

pub(crate) fn pack_elements(out: Vec<u8>, elements: &[BbfpElement], mantissa_bits: u8) -> Vec<u8> {
    let m = u32::from(mantissa_bits);
    let mut w = BitWriter::new(out);
    for e in elements {
        let code = u32::from(e.mantissa) | u32::from(e.flag) << m | u32::from(e.sign) << (m + 1);
        w.push(code, m + 2);
    }
    w.finish()
}

pub(crate) fn unpack_elements(bytes: &[u8], count: usize, mantissa_bits: u8) -> Vec<BbfpElement> {
    let m = u32::from(mantissa_bits);
    let mut r = BitReader::new(bytes);
    (0..count)
        .map(|_| {
            let code = r.pull(m + 2);
            BbfpElement {
                mantissa: (code & ((1 << m) - 1)) as u16,
                flag: (code >> m) & 1 == 1,
                sign: (code >> (m + 1)) & 1 == 1,
            }
        })
        .collect()
}

/// Serializes `block` with its configuration header.
pub fn write_packed_block(block: &BbfpBlock, cfg: &BbfpConfig) -> Result<Vec<u8>, FormatError> {
    cfg.validate_layout()?;
    block.validate(cfg)?;
    let mut out = Vec::with_capacity(PACKED_HEADER_LEN + packed_elements_len(block.len(), cfg.mantissa_bits));
    out.push(cfg.mantissa_bits);
    out.push(cfg.overlap_bits);
    out.push(cfg.exponent_bits);
    out.extend_from_slice(&(cfg.block_size as u16).to_le_bytes());
    out.push(cfg.rounding.code());
    out.push(block.shared_exponent);
    Ok(pack_elements(out, &block.elements, cfg.mantissa_bits))
}

/// Parses one packed block from the front of `bytes`, returning the
/// configuration, the block and the number of bytes consumed.
pub fn read_packed_block(bytes: &[u8]) -> Result<(BbfpConfig, BbfpBlock, usize), FormatError> {
    if bytes.len() < PACKED_HEADER_LEN {
        return Err(FormatError::Truncated {
            needed: PACKED_HEADER_LEN,
            available: bytes.len(),
        });
    }
    let cfg = BbfpConfig {
        mantissa_bits: bytes[0],
        overlap_bits: bytes[1],
        exponent_bits: bytes[2],
        block_size: usize::from(u16::from_le_bytes([bytes[3], bytes[4]])),
        rounding: Rounding::from_code(bytes[5])?,
    };
    cfg.validate_layout()?;
    let body = packed_elements_len(cfg.block_size, cfg.mantissa_bits);
    let needed = PACKED_HEADER_LEN + body;
    if bytes.len() < needed {
        return Err(FormatError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let block = BbfpBlock {
        shared_exponent: bytes[6],
        elements: unpack_elements(&bytes[PACKED_HEADER_LEN..needed], cfg.block_size, cfg.mantissa_bits),
    };
    block.validate(&cfg)?;
    Ok((cfg, block, needed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::encode_block;
    use proptest::prelude::*;

    #[test]
    fn known_layout() {
        let cfg = BbfpConfig::new(4, 2).unwrap().with_block_size(2);
        let block = BbfpBlock {
            shared_exponent: 14,
            elements: vec![
                BbfpElement { sign: false, flag: true, mantissa: 6 },
                BbfpElement { sign: true, flag: true, mantissa: 12 },
            ],
        };
        let bytes = write_packed_block(&block, &cfg).unwrap();
        // codes 0b010110 and 0b111100, six bits each
        assert_eq!(bytes, vec![4, 2, 5, 2, 0, 0, 14, 0b0001_0110, 0b1111]);
        let (c, b, used) = read_packed_block(&bytes).unwrap();
        assert_eq!((c, b, used), (cfg, block, bytes.len()));
    }

    #[test]
    fn truncated_input() {
        let cfg = BbfpConfig::new(4, 2).unwrap();
        let block = encode_block(&[1.0, 2.0], &cfg).unwrap();
        let bytes = write_packed_block(&block, &cfg).unwrap();
        assert!(matches!(
            read_packed_block(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(read_packed_block(&bytes[..3]), Err(FormatError::Truncated { .. })));
    }

    proptest! {
        #[test]
        fn packed_round_trip(
            (m, o) in (2u8..=11).prop_flat_map(|m| (Just(m), 0u8..m)),
            n in 1usize..70,
            values in proptest::collection::vec(-1e4f64..1e4, 70),
            rne in any::<bool>(),
        ) {
            let rounding = if rne { Rounding::RoundNearestEven } else { Rounding::Truncate };
            let cfg = BbfpConfig { mantissa_bits: m, overlap_bits: o, exponent_bits: 5, block_size: n, rounding };
            let block = encode_block(&values[..n], &cfg).unwrap();
            let bytes = write_packed_block(&block, &cfg).unwrap();
            prop_assert_eq!(bytes.len(), PACKED_HEADER_LEN + (n * (m as usize + 2)).div_ceil(8));
            let (c, b, used) = read_packed_block(&bytes).unwrap();
            prop_assert_eq!(c, cfg);
            prop_assert_eq!(b, block);
            prop_assert_eq!(used, bytes.len());
        }
    }
}
