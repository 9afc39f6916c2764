//! Bit-exact emulation of the BBFP multiply-accumulate datapath.
//!
//! A block dot product multiplies mantissas element-wise with an `m`-bit
//! multiplier, tags each product with a 2-bit flag giving its left shift
//! (`0`, `m-o` or `2(m-o)`), and folds the products into a fixed-point
//! accumulator through [`SparseAdder`]s. The block exponent sum scales the
//! final integer.

mod adder;
mod gemm;

pub use adder::{carry_chain_cell, full_adder, ones_chain_cell, Accumulator, AdderOutput, SparseAdder};
pub use gemm::{gemm, Accumulation, GemmOptions, Matrix};

use crate::format::{pow2, BbfpBlock, BbfpConfig, BbfpElement, BfpBlock, BfpConfig, FormatError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("accumulator overflow in a {width}-bit adder")]
    AccOverflow { width: u32 },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// 2-bit product flag: `00` no shift, `01`/`10` one span, `11` two spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProductFlag(u8);

impl ProductFlag {
    pub const NONE: ProductFlag = ProductFlag(0b00);
    pub const ONE: ProductFlag = ProductFlag(0b01);
    pub const BOTH: ProductFlag = ProductFlag(0b11);

    pub fn from_flags(a: bool, b: bool) -> Self {
        match (a, b) {
            (false, false) => Self::NONE,
            (true, true) => Self::BOTH,
            _ => Self::ONE,
        }
    }

    pub fn from_bits(bits: u8) -> Self {
        ProductFlag(bits & 0b11)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Number of `m - o` spans the product is shifted left by.
    pub fn spans(self) -> u32 {
        match self.0 {
            0b00 => 0,
            0b11 => 2,
            _ => 1,
        }
    }
}

/// Intra-block product: `mantissa << spans * (m - o)` is its expanded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProductElement {
    pub flag: ProductFlag,
    pub sign: bool,
    pub mantissa: u32,
}

impl ProductElement {
    pub fn shift(&self, cfg: &BbfpConfig) -> u32 {
        self.flag.spans() * cfg.shift_span()
    }

    pub fn expanded(&self, cfg: &BbfpConfig) -> u64 {
        u64::from(self.mantissa) << self.shift(cfg)
    }
}

/// Result of multiplying two blocks element-wise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductBlock {
    /// `e_s1 + e_s2 - 2 * bias`.
    pub exponent_sum: i32,
    pub elements: Vec<ProductElement>,
}

pub fn multiply_elements(a: BbfpElement, b: BbfpElement) -> ProductElement {
    ProductElement {
        flag: ProductFlag::from_flags(a.flag, b.flag),
        sign: a.sign ^ b.sign,
        mantissa: u32::from(a.mantissa) * u32::from(b.mantissa),
    }
}

fn check_block(block: &BbfpBlock, cfg: &BbfpConfig, which: &str) -> Result<(), ArithError> {
    block
        .validate(cfg)
        .map_err(|e| ArithError::ConfigMismatch(format!("{which} operand: {e}")))
}

pub fn multiply_blocks(x: &BbfpBlock, y: &BbfpBlock, cfg: &BbfpConfig) -> Result<ProductBlock, ArithError> {
    check_block(x, cfg, "left")?;
    check_block(y, cfg, "right")?;
    Ok(ProductBlock {
        exponent_sum: i32::from(x.shared_exponent) + i32::from(y.shared_exponent) - 2 * cfg.bias(),
        elements: x
            .elements
            .iter()
            .zip(&y.elements)
            .map(|(&a, &b)| multiply_elements(a, b))
            .collect(),
    })
}

fn ceil_log2(n: usize) -> u32 {
    usize::BITS - (n.max(1) - 1).leading_zeros()
}

/// `2m + 2(m-o) + ceil(log2 N) + 1` bits: enough for `N` products of the
/// largest magnitude plus a sign bit.
pub fn accumulator_width(cfg: &BbfpConfig) -> u32 {
    let m = u32::from(cfg.mantissa_bits);
    2 * m + 2 * cfg.shift_span() + ceil_log2(cfg.block_size) + 1
}

/// A zeroed accumulator whose binary point matches products of `cfg`.
pub fn accumulator_for(cfg: &BbfpConfig) -> Accumulator {
    Accumulator::zero(accumulator_width(cfg), 2 * (1 - i32::from(cfg.mantissa_bits)))
}

/// Adds one signed expanded product into `acc` with the gate-level sparse adder.
pub fn sparse_add(acc: Accumulator, p: ProductElement, cfg: &BbfpConfig) -> Result<Accumulator, ArithError> {
    let expected = accumulator_for(cfg);
    if acc.width() != expected.width() || acc.lsb_exponent() != expected.lsb_exponent() {
        return Err(ArithError::ConfigMismatch(format!(
            "accumulator is {} bits at 2^{}, {cfg} needs {} bits at 2^{}",
            acc.width(),
            acc.lsb_exponent(),
            expected.width(),
            expected.lsb_exponent()
        )));
    }
    acc.add_sparse(
        u64::from(p.mantissa),
        p.sign,
        p.shift(cfg),
        2 * u32::from(cfg.mantissa_bits),
    )
}

/// `2^(e_s1 + e_s2 - 2 bias) * 2^(2(1-m)) * sum_i (-1)^(s1 ^ s2) m1 f1 m2 f2`.
///
/// The result equals the dequantize-then-multiply dot product in `f64`
/// exactly as long as the integer sum stays below `2^53`, which holds for
/// every format with `N * 2^(4m - 2o) < 2^53`.
pub fn dot_product(x: &BbfpBlock, y: &BbfpBlock, cfg: &BbfpConfig) -> Result<f64, ArithError> {
    let products = multiply_blocks(x, y, cfg)?;
    let mut acc = accumulator_for(cfg);
    for &p in &products.elements {
        acc = sparse_add(acc, p, cfg)?;
    }
    Ok(scale(acc, products.exponent_sum))
}

fn scale(acc: Accumulator, exponent_sum: i32) -> f64 {
    let v = acc.value();
    if v == 0 {
        return 0.0;
    }
    v as f64 * pow2(exponent_sum + acc.lsb_exponent())
}

/// BFP dot product: the same datapath with every flag clear, so no shifts
/// and `2m + ceil(log2 N) + 1` accumulator bits.
pub fn dot_product_bfp(x: &BfpBlock, y: &BfpBlock, cfg: &BfpConfig) -> Result<f64, ArithError> {
    cfg.validate()?;
    if x.elements.len() != cfg.block_size || y.elements.len() != cfg.block_size {
        return Err(ArithError::ConfigMismatch(format!(
            "blocks of {} and {} elements for block size {}",
            x.elements.len(),
            y.elements.len(),
            cfg.block_size
        )));
    }
    let m = u32::from(cfg.mantissa_bits);
    let mut acc = Accumulator::zero(2 * m + ceil_log2(cfg.block_size) + 1, 2 * (1 - m as i32));
    for (a, b) in x.elements.iter().zip(&y.elements) {
        let mantissa = u64::from(a.mantissa) * u64::from(b.mantissa);
        acc = acc.add_sparse(mantissa, a.sign ^ b.sign, 0, 2 * m)?;
    }
    let exponent_sum = i32::from(x.shared_exponent) + i32::from(y.shared_exponent) - 2 * cfg.bias();
    Ok(scale(acc, exponent_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{decode_block, decode_block_bfp, encode_block, encode_block_bfp};
    use proptest::prelude::*;

    fn el(flag: bool, mantissa: u16) -> BbfpElement {
        BbfpElement {
            sign: false,
            flag,
            mantissa,
        }
    }

    #[test]
    fn product_examples() {
        let cfg = BbfpConfig::new(4, 2).unwrap();
        let p = multiply_elements(el(true, 6), el(true, 12));
        assert_eq!((p.flag, p.mantissa), (ProductFlag::BOTH, 72));
        assert_eq!(p.expanded(&cfg), 1152);
        let p = multiply_elements(el(false, 3), el(true, 5));
        assert_eq!((p.flag, p.mantissa), (ProductFlag::ONE, 15));
        assert_eq!(p.expanded(&cfg), 60);
        let p = multiply_elements(el(true, 9), el(false, 0));
        assert_eq!(p.mantissa, 0);
    }

    #[test]
    fn flag_table_matches_shift_cases() {
        let cfg = BbfpConfig::new(4, 2).unwrap();
        for (a, b, shift) in [(false, false, 0), (false, true, 2), (true, false, 2), (true, true, 4)] {
            let p = multiply_elements(el(a, 1), el(b, 1));
            assert_eq!(p.shift(&cfg), shift);
            // decode-multiply oracle
            let da = el(a, 1).decode(15, &cfg);
            let db = el(b, 1).decode(15, &cfg);
            assert_eq!(da * db, p.expanded(&cfg) as f64 * 2f64.powi(-6));
        }
        assert_eq!(ProductFlag::from_bits(0b10).spans(), 1);
    }

    #[test]
    fn dot_product_examples() {
        let cfg = BbfpConfig::new(4, 2).unwrap().with_block_size(4);
        let x = encode_block(&[1.5, 0.25, -3.0, 0.0], &cfg).unwrap();
        assert_eq!(dot_product(&x, &x, &cfg).unwrap(), 11.3125);
        let z = encode_block(&[0.0; 4], &cfg).unwrap();
        assert_eq!(dot_product(&x, &z, &cfg).unwrap(), 0.0);
        let one = cfg.with_block_size(1);
        let a = encode_block(&[2.0], &one).unwrap();
        let b = encode_block(&[0.5], &one).unwrap();
        assert_eq!(dot_product(&a, &b, &one).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_blocks_rejected() {
        let cfg = BbfpConfig::new(4, 2).unwrap();
        let x = encode_block(&[1.0], &cfg).unwrap();
        let y = encode_block(&[1.0], &cfg.with_block_size(8)).unwrap();
        assert!(matches!(dot_product(&x, &y, &cfg), Err(ArithError::ConfigMismatch(_))));
        let acc = accumulator_for(&BbfpConfig::new(6, 3).unwrap());
        let p = multiply_elements(el(true, 1), el(true, 1));
        assert!(matches!(sparse_add(acc, p, &cfg), Err(ArithError::ConfigMismatch(_))));
    }

    #[test]
    fn accumulator_never_overflows_at_extremes() {
        for (m, o) in [(3u8, 1u8), (4, 2), (6, 3), (11, 1), (10, 5)] {
            let cfg = BbfpConfig::new(m, o).unwrap();
            let max = (1u16 << m) - 1;
            for sign in [false, true] {
                let x = BbfpBlock {
                    shared_exponent: 15,
                    elements: vec![BbfpElement { sign, flag: true, mantissa: max }; cfg.block_size],
                };
                let y = BbfpBlock {
                    shared_exponent: 15,
                    elements: vec![el(true, max); cfg.block_size],
                };
                let got = dot_product(&x, &y, &cfg).unwrap();
                let want: f64 = decode_block(&x, &cfg)
                    .iter()
                    .zip(decode_block(&y, &cfg))
                    .map(|(a, b)| a * b)
                    .sum();
                assert_eq!(got, want);
            }
        }
    }

    fn oracle(x: &BbfpBlock, y: &BbfpBlock, cfg: &BbfpConfig) -> f64 {
        let dx = decode_block(x, cfg);
        let dy = decode_block(y, cfg);
        let mut s = 0.0;
        for (a, b) in dx.iter().zip(&dy) {
            s += a * b;
        }
        s
    }

    proptest! {
        #[test]
        fn dot_matches_dequantized_oracle(
            (m, o) in (2u8..=8).prop_flat_map(|m| (Just(m), 1u8..m)),
            xs in proptest::collection::vec(-100f64..100.0, 32),
            ys in proptest::collection::vec(-1f64..1.0, 32),
        ) {
            let cfg = BbfpConfig::new(m, o).unwrap();
            let x = encode_block(&xs, &cfg).unwrap();
            let y = encode_block(&ys, &cfg).unwrap();
            prop_assert_eq!(dot_product(&x, &y, &cfg).unwrap(), oracle(&x, &y, &cfg));
            prop_assert_eq!(dot_product(&x, &y, &cfg).unwrap(), dot_product(&y, &x, &cfg).unwrap());
        }

        #[test]
        fn bfp_dot_matches_dequantized_oracle(
            m in 2u8..=11,
            xs in proptest::collection::vec(-10f64..10.0, 32),
            ys in proptest::collection::vec(-10f64..10.0, 32),
        ) {
            let cfg = BfpConfig::new(m).unwrap();
            let x = encode_block_bfp(&xs, &cfg).unwrap();
            let y = encode_block_bfp(&ys, &cfg).unwrap();
            let want: f64 = decode_block_bfp(&x, &cfg).iter().zip(decode_block_bfp(&y, &cfg)).fold(0.0, |s, (a, b)| s + a * b);
            prop_assert_eq!(dot_product_bfp(&x, &y, &cfg).unwrap(), want);
        }
    }
}
