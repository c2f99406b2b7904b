//! Exact similarity values.
//!
//! Jaccard and Dice values are rationals. Cosine values are square roots of
//! rationals, so they are stored as the rational under the root. Both forms
//! order exactly by cross-multiplication, which keeps tie handling and
//! oracle comparisons free of rounding.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;

#[derive(Debug, Clone, Copy)]
pub struct Score {
    num: u64,
    den: u64,
    root: bool,
}

impl Score {
    pub const ZERO: Score = Score { num: 0, den: 1, root: false };
    pub const ONE: Score = Score { num: 1, den: 1, root: false };

    /// The rational `num / den`.
    pub fn ratio(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Self { num, den, root: false }
    }

    /// The value `sqrt(num / den)`.
    pub fn sqrt_ratio(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Self { num, den, root: true }
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    /// True when the value is `sqrt(numer / denom)` rather than the ratio itself.
    pub fn is_root(&self) -> bool {
        self.root
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn to_f64(&self) -> f64 {
        let v = self.num as f64 / self.den as f64;
        if self.root {
            v.sqrt()
        } else {
            v
        }
    }

    /// Exact comparison against a binary floating-point threshold.
    pub fn cmp_f64(&self, threshold: f64) -> Ordering {
        assert!(threshold.is_finite(), "non-finite threshold");
        if threshold < 0.0 {
            return Ordering::Greater;
        }
        if threshold == 0.0 {
            return if self.num == 0 { Ordering::Equal } else { Ordering::Greater };
        }
        let approx = self.to_f64();
        let gap = approx - threshold;
        if gap.abs() > 1e-9 * threshold {
            return if gap > 0.0 { Ordering::Greater } else { Ordering::Less };
        }
        // Near tie: decide on the exact binary value of the threshold.
        let (mantissa, exp) = decompose(threshold);
        let (mut m, mut e) = (BigUint::from(mantissa), exp);
        if self.root {
            m = &m * &m;
            e *= 2;
        }
        // Compare num / den against m * 2^e.
        let mut lhs = BigUint::from(self.num);
        let mut rhs = m * BigUint::from(self.den);
        if e < 0 {
            lhs <<= (-e) as usize;
        } else {
            rhs <<= e as usize;
        }
        lhs.cmp(&rhs)
    }

    /// `self >= threshold`, exactly.
    pub fn meets(&self, threshold: f64) -> bool {
        self.cmp_f64(threshold) != Ordering::Less
    }
}

/// Splits a positive finite float into `mantissa * 2^exp`.
fn decompose(x: f64) -> (u64, i64) {
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.root == other.root {
            let l = self.num as u128 * other.den as u128;
            let r = other.num as u128 * self.den as u128;
            return l.cmp(&r);
        }
        // Mixed forms: compare squares.
        let square = |s: &Score| -> (BigUint, BigUint) {
            let (n, d) = (BigUint::from(s.num), BigUint::from(s.den));
            if s.root {
                (n, d)
            } else {
                (&n * &n, &d * &d)
            }
        };
        let (n1, d1) = square(self);
        let (n2, d2) = square(other);
        (n1 * d2).cmp(&(n2 * d1))
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.root {
            write!(f, "sqrt({}/{})", self.num, self.den)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}
