//! Fixed-point values for the adder tree and the divider.

use crate::format::pow2;

/// `mantissa * 2^(-frac_bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dyadic {
    pub mantissa: i128,
    pub frac_bits: u32,
}

impl Dyadic {
    pub const fn new(mantissa: i128, frac_bits: u32) -> Self {
        Self { mantissa, frac_bits }
    }

    /// Converts `v` if `v * 2^frac_bits` is an integer that fits.
    pub fn from_f64_exact(v: f64, frac_bits: u32) -> Option<Self> {
        let scaled = v * pow2(frac_bits as i32);
        if !scaled.is_finite() || scaled.fract() != 0.0 || scaled.abs() >= 2f64.powi(126) {
            return None;
        }
        Some(Self::new(scaled as i128, frac_bits))
    }

    /// Exact while `|mantissa| < 2^53`.
    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 * pow2(-(self.frac_bits as i32))
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        debug_assert_eq!(self.frac_bits, other.frac_bits);
        Some(Self::new(self.mantissa.checked_add(other.mantissa)?, self.frac_bits))
    }
}

/// Sums with a balanced binary tree; exact because the operands share a scale.
pub fn adder_tree(values: &[Dyadic], frac_bits: u32) -> Option<Dyadic> {
    match values.len() {
        0 => Some(Dyadic::new(0, frac_bits)),
        1 => Some(values[0]),
        n => {
            let (a, b) = values.split_at(n.div_ceil(2));
            adder_tree(a, frac_bits)?.checked_add(adder_tree(b, frac_bits)?)
        }
    }
}

/// Integer divider: `|num| / |den|` truncated to `frac_bits` fraction bits,
/// with the sign of the true quotient. `None` on a zero divisor.
pub fn divide(num: Dyadic, den: Dyadic, frac_bits: u32) -> Option<Dyadic> {
    if den.mantissa == 0 {
        return None;
    }
    let negative = (num.mantissa < 0) != (den.mantissa < 0);
    let mut a = num.mantissa.unsigned_abs();
    let mut b = den.mantissa.unsigned_abs();
    // quotient = a * 2^shift / b
    let shift = i64::from(den.frac_bits) + i64::from(frac_bits) - i64::from(num.frac_bits);
    if shift >= 0 {
        let shift = shift as u32;
        let room = a.leading_zeros().saturating_sub(1);
        if shift <= room {
            a <<= shift;
        } else {
            // dropping low divisor bits keeps the result within one step
            a <<= room;
            b >>= shift - room;
            if b == 0 {
                return None;
            }
        }
    } else {
        b = b.checked_shl((-shift) as u32).filter(|v| v >> ((-shift) as u32) == b)?;
    }
    let q = (a / b) as i128;
    Some(Dyadic::new(if negative { -q } else { q }, frac_bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_conversion() {
        assert_eq!(Dyadic::from_f64_exact(0.75, 2), Some(Dyadic::new(3, 2)));
        assert_eq!(Dyadic::from_f64_exact(0.75, 1), None);
        assert_eq!(Dyadic::from_f64_exact(-1.0, 24).unwrap().to_f64(), -1.0);
    }

    #[test]
    fn divider_examples() {
        let one = Dyadic::new(1, 0);
        assert_eq!(divide(one, Dyadic::new(2, 0), 16), Some(Dyadic::new(1 << 15, 16)));
        assert_eq!(divide(one, Dyadic::new(3, 0), 16).unwrap().mantissa, 21845);
        assert_eq!(divide(Dyadic::new(-3, 1), Dyadic::new(1, 0), 4).unwrap().to_f64(), -1.5);
        assert_eq!(divide(one, Dyadic::new(0, 3), 16), None);
    }

    #[test]
    fn tree_matches_serial_sum() {
        let v: Vec<Dyadic> = (0..37).map(|i| Dyadic::new(i * i - 50, 5)).collect();
        let s: i128 = v.iter().map(|d| d.mantissa).sum();
        assert_eq!(adder_tree(&v, 5), Some(Dyadic::new(s, 5)));
    }

    proptest! {
        #[test]
        fn quotient_within_one_lsb(a in 0i128..1 << 40, b in 1i128..1 << 40, fa in 0u32..30, fb in 0u32..30) {
            let num = Dyadic::new(a, fa);
            let den = Dyadic::new(b, fb);
            let q = divide(num, den, 16).unwrap();
            // 0 <= a/b - q < 2^-16, checked in integers: scale everything by 2^(fa + fb + 16)
            let lhs = a << (fb + 16);
            let qb = (q.mantissa * b) << fa;
            prop_assert!(qb <= lhs);
            prop_assert!(lhs - qb < b << fa);
        }
    }
}
