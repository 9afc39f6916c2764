//! Gate-level partial-sum adder.
//!
//! The expanded product of two BBFP mantissas only occupies a `2m`-bit window
//! of the accumulator; below the window its bits are structurally zero, above
//! it they are the sign extension. Full-adder cells sit under the window, and
//! the remaining positions use the reduced carry-chain cell
//! `S = C ^ a`, `C' = C & a` (or its complement when the addend bits are all
//! ones, i.e. for a negative addend above the window).

use super::ArithError;

/// `S = C ^ a ^ b`, `C' = ab + C(a ^ b)`.
#[inline]
pub fn full_adder(a: bool, b: bool, carry: bool) -> (bool, bool) {
    let p = a ^ b;
    (carry ^ p, (a & b) | (carry & p))
}

/// Adder cell for a position where the addend bit is constant zero.
#[inline]
pub fn carry_chain_cell(a: bool, carry: bool) -> (bool, bool) {
    (carry ^ a, carry & a)
}

/// Adder cell for a position where the addend bit is constant one.
#[inline]
pub fn ones_chain_cell(a: bool, carry: bool) -> (bool, bool) {
    (!(carry ^ a), carry | a)
}

/// A ripple adder of `width` bits with full-adder cells only over
/// `[payload_lo, payload_lo + payload_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseAdder {
    pub width: u32,
    pub payload_lo: u32,
    pub payload_width: u32,
}

/// Result of one ripple pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdderOutput {
    pub sum: u64,
    pub carry_out: bool,
    /// Carry into the most significant cell, for two's complement overflow.
    pub carry_into_msb: bool,
}

impl SparseAdder {
    pub fn new(width: u32, payload_lo: u32, payload_width: u32) -> Self {
        assert!(width <= 64 && payload_lo + payload_width <= width);
        Self {
            width,
            payload_lo,
            payload_width,
        }
    }

    pub fn full_adder_cells(&self) -> u32 {
        self.payload_width
    }

    pub fn chain_cells(&self) -> u32 {
        self.width - self.payload_width
    }

    /// Whether `addend` fits the sparsity pattern: zero below the payload, and
    /// a constant fill above it.
    pub fn accepts(&self, addend: u64, high_fill: bool) -> bool {
        let hi = self.payload_lo + self.payload_width;
        let above = mask(self.width) & !mask(hi);
        let want = if high_fill { above } else { 0 };
        addend & mask(self.payload_lo) == 0 && addend & above == want && addend & !mask(self.width) == 0
    }

    /// Ripples `a + addend + carry_in` through the cell array. `high_fill` is
    /// the constant value of the addend above the payload window.
    pub fn add(&self, a: u64, addend: u64, high_fill: bool, carry_in: bool) -> AdderOutput {
        debug_assert!(self.accepts(addend, high_fill), "addend {addend:#x} breaks the sparsity pattern");
        let hi = self.payload_lo + self.payload_width;
        let mut carry = carry_in;
        let mut sum = 0u64;
        let mut carry_into_msb = false;
        for i in 0..self.width {
            if i + 1 == self.width {
                carry_into_msb = carry;
            }
            let ai = (a >> i) & 1 == 1;
            let (s, c) = if i < self.payload_lo {
                carry_chain_cell(ai, carry)
            } else if i < hi {
                full_adder(ai, (addend >> i) & 1 == 1, carry)
            } else if high_fill {
                ones_chain_cell(ai, carry)
            } else {
                carry_chain_cell(ai, carry)
            };
            sum |= u64::from(s) << i;
            carry = c;
        }
        AdderOutput {
            sum,
            carry_out: carry,
            carry_into_msb,
        }
    }
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Two's complement fixed-point partial sum.
///
/// The integer held in `width` bits is scaled by `2^lsb_exponent`; the block
/// exponent sum is applied outside the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accumulator {
    bits: u64,
    width: u32,
    lsb_exponent: i32,
}

impl Accumulator {
    pub fn zero(width: u32, lsb_exponent: i32) -> Self {
        assert!((2..=64).contains(&width));
        Self {
            bits: 0,
            width,
            lsb_exponent,
        }
    }

    /// Starts from a signed value; fails if it does not fit in `width` bits.
    pub fn from_value(value: i64, width: u32, lsb_exponent: i32) -> Result<Self, ArithError> {
        let acc = Self::zero(width, lsb_exponent);
        let lo = -(1i128 << (width - 1));
        let hi = (1i128 << (width - 1)) - 1;
        if !(lo..=hi).contains(&i128::from(value)) {
            return Err(ArithError::AccOverflow { width });
        }
        Ok(Self {
            bits: (value as u64) & mask(width),
            ..acc
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn lsb_exponent(&self) -> i32 {
        self.lsb_exponent
    }

    pub fn raw_bits(&self) -> u64 {
        self.bits
    }

    /// The held integer, sign-extended.
    pub fn value(&self) -> i64 {
        let shift = 64 - self.width;
        ((self.bits << shift) as i64) >> shift
    }

    /// Adds a signed addend `(-1)^negative * magnitude * 2^payload_lo` through
    /// a sparse adder whose full-adder cells cover `payload_width` bits.
    pub(crate) fn add_sparse(
        self,
        magnitude: u64,
        negative: bool,
        payload_lo: u32,
        payload_width: u32,
    ) -> Result<Self, ArithError> {
        let adder = SparseAdder::new(self.width, payload_lo, payload_width);
        let shifted = magnitude << payload_lo;
        let negative = negative && magnitude != 0;
        let addend = if negative {
            shifted.wrapping_neg() & mask(self.width)
        } else {
            shifted
        };
        let out = adder.add(self.bits, addend, negative, false);
        if out.carry_into_msb != out.carry_out {
            return Err(ArithError::AccOverflow { width: self.width });
        }
        Ok(Self {
            bits: out.sum,
            ..self
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_cell_truth_table() {
        assert_eq!(carry_chain_cell(true, true), (false, true));
        assert_eq!(carry_chain_cell(false, false), (false, false));
        assert_eq!(carry_chain_cell(true, false), (true, false));
        assert_eq!(carry_chain_cell(false, true), (true, false));
        for a in [false, true] {
            for c in [false, true] {
                assert_eq!(carry_chain_cell(a, c), full_adder(a, false, c));
                assert_eq!(ones_chain_cell(a, c), full_adder(a, true, c));
            }
        }
    }

    #[test]
    fn worked_sparse_addition() {
        // 12-bit adder, 8 full-adder cells at bits 4..12, addend low nibble zero
        let adder = SparseAdder::new(12, 4, 8);
        let out = adder.add(0x0F0, 0x300, false, false);
        assert_eq!(out.sum, 0x3F0);
        assert!(!out.carry_out);
        let out = adder.add(0xFFF, 0x010, false, false);
        assert_eq!((out.sum, out.carry_out), (0x00F, true));
    }

    #[test]
    fn small_width_exhaustive_against_wide_add() {
        for width in 3..=7u32 {
            for lo in 0..width {
                for pw in 0..=(width - lo) {
                    let adder = SparseAdder::new(width, lo, pw);
                    for a in 0..(1u64 << width) {
                        for payload in 0..(1u64 << pw) {
                            for fill in [false, true] {
                                let high = if fill { mask(width - lo - pw) << (lo + pw) } else { 0 };
                                let b = (payload << lo) | high;
                                for cin in [false, true] {
                                    let out = adder.add(a, b, fill, cin);
                                    let wide = a + b + u64::from(cin);
                                    assert_eq!(out.sum, wide & mask(width));
                                    assert_eq!(out.carry_out, wide >> width == 1);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn accumulator_signed_round_trip() {
        let acc = Accumulator::from_value(-5, 8, 0).unwrap();
        assert_eq!(acc.value(), -5);
        let acc = acc.add_sparse(3, false, 1, 2).unwrap();
        assert_eq!(acc.value(), 1);
        let acc = acc.add_sparse(3, true, 2, 2).unwrap();
        assert_eq!(acc.value(), -11);
        assert!(Accumulator::from_value(128, 8, 0).is_err());
        let full = Accumulator::from_value(127, 8, 0).unwrap();
        assert_eq!(full.add_sparse(1, false, 0, 2), Err(ArithError::AccOverflow { width: 8 }));
        let low = Accumulator::from_value(-128, 8, 0).unwrap();
        assert_eq!(low.add_sparse(1, true, 0, 2), Err(ArithError::AccOverflow { width: 8 }));
    }
}
