//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s with
//! `|lo| <= ulp(hi) / 2`, giving roughly 32 significant decimal digits.
//!
//! Only the operations the crate's numerical code needs are provided. The
//! error-free transformations follow Dekker and Knuth; `exp` uses argument
//! reduction by `ln 2` and `2^-10` followed by a short Taylor series, `ln`
//! uses Newton iteration on `exp`.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{FromPrimitive, One, ToPrimitive, Zero};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    if !p.is_finite() {
        return (p, 0.0);
    }
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let err = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, err)
}

impl DoubleDouble {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn normalized(hi: f64, lo: f64) -> Self {
        let (h, l) = quick_two_sum(hi, lo);
        Self { hi: h, lo: l }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, mut e) = two_prod(self.hi, b);
        e += self.lo * b;
        Self::normalized(p, e)
    }

    /// Exact multiplication by `2^k`.
    fn ldexp(self, k: i32) -> Self {
        // split the scale so neither factor over/underflows on its own
        let half = k / 2;
        let f1 = 2f64.powi(half);
        let f2 = 2f64.powi(k - half);
        Self {
            hi: self.hi * f1 * f2,
            lo: self.lo * f1 * f2,
        }
    }

    fn trunc(self) -> Self {
        let hi = self.hi.trunc();
        if hi == self.hi {
            Self::normalized(hi, self.lo.trunc())
        } else {
            Self { hi, lo: 0.0 }
        }
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == 0.0 {
            write!(f, "{}", self.hi)
        } else {
            write!(f, "{} {:+e}", self.hi, self.lo)
        }
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        Self::normalized(s1, s2 + t2)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let (p, mut e) = two_prod(self.hi, b.hi);
        e += self.hi * b.lo + self.lo * b.hi;
        Self::normalized(p, e)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() {
            return Self::from(q1);
        }
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self { hi: q1, lo: q2 } + Self::from(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, b: Self) -> Self {
        self - (self / b).trunc() * b
    }
}

macro_rules! assign_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr for DoubleDouble {
            fn $f(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl Sum for DoubleDouble {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self { hi: 0.0, lo: 0.0 }
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self { hi: 1.0, lo: 0.0 }
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        let hi = n as f64;
        // remainder is exact for |n| < 2^106
        let lo = (n - hi as i64) as f64;
        Some(Self::normalized(hi, lo))
    }
    fn from_u64(n: u64) -> Option<Self> {
        let hi = n as f64;
        let lo = (n as i128 - hi as i128) as f64;
        Some(Self::normalized(hi, lo))
    }
    fn from_f64(v: f64) -> Option<Self> {
        Some(Self::from(v))
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        let t = self.trunc();
        Some(t.hi as i64 + t.lo as i64)
    }
    fn to_u64(&self) -> Option<u64> {
        if self.hi < 0.0 {
            return None;
        }
        let t = self.trunc();
        Some((t.hi as i128 + t.lo as i128) as u64)
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl Scalar for DoubleDouble {
    fn exp(self) -> Self {
        const K: i32 = 10;
        if self.hi > 709.78 {
            return Self::from(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Self::zero();
        }
        if self.hi == 0.0 {
            return Self::one();
        }
        let m = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(m)).ldexp(-K);

        // expm1(r) by Taylor series; |r| < 3.4e-4 so ten terms reach 1e-35
        let mut term = r;
        let mut s = r;
        let mut n = 1.0;
        loop {
            n += 1.0;
            term = term * r / Self::from(n);
            s += term;
            if term.hi.abs() < 1e-36 * s.hi.abs().max(1e-300) || n > 30.0 {
                break;
            }
        }
        // expm1(2x) = 2 expm1(x) + expm1(x)^2
        for _ in 0..K {
            s = s.mul_f64(2.0) + s * s;
        }
        (s + Self::one()).ldexp(m as i32)
    }

    fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Self::from(if self.hi == 0.0 { f64::NEG_INFINITY } else { f64::NAN });
        }
        if self.hi == 1.0 && self.lo == 0.0 {
            return Self::zero();
        }
        if !self.hi.is_finite() {
            return self;
        }
        let mut y = Self::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Self::one();
        }
        y
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::from(self.hi.sqrt());
        }
        let y = Self::from(self.hi.sqrt());
        (y + self / y).mul_f64(0.5)
    }

    fn cbrt(self) -> Self {
        if self.hi == 0.0 || !self.hi.is_finite() {
            return Self::from(self.hi.cbrt());
        }
        if self.hi < 0.0 {
            return -(-self).cbrt();
        }
        let mut y = Self::from(self.hi.cbrt());
        for _ in 0..2 {
            let y2 = y * y;
            y = y - (y2 * y - self) / y2.mul_f64(3.0);
        }
        y
    }

    fn tanh(self) -> Self {
        let ax = self.abs();
        if ax.hi < 1e-5 {
            // x - x^3/3 + 2x^5/15 - 17x^7/315; next term is below 1e-45
            let x2 = self * self;
            let poly = Self::one() - x2 / Self::from(3.0) + x2 * x2.mul_f64(2.0) / Self::from(15.0)
                - x2 * x2 * x2.mul_f64(17.0) / Self::from(315.0);
            return self * poly;
        }
        let t = (-ax.mul_f64(2.0)).exp();
        let v = (Self::one() - t) / (Self::one() + t);
        if self.hi < 0.0 {
            -v
        } else {
            v
        }
    }

    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn powi(self, n: i32) -> Self {
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        if n < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }

    fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(s: &str) -> DoubleDouble {
        // parse "hi lo" pairs produced by the reference generator
        let mut it = s.split_whitespace().map(|t| t.parse::<f64>().unwrap());
        DoubleDouble::new(it.next().unwrap(), it.next().unwrap())
    }

    fn rel(a: DoubleDouble, b: DoubleDouble) -> f64 {
        ((a - b).to_f64_lossy() / b.to_f64_lossy()).abs()
    }

    // Reference values: mpmath at 50 digits, rounded to the nearest
    // double-double (hi = nearest f64, lo = nearest f64 to the remainder).
    #[test]
    fn exp_and_ln_match_high_precision_reference() {
        let cases = [
            (0.5, "1.6487212707001282 -4.731568479435833e-17"),
            (-2.7, "0.06720551273974976 -3.2905029845427732e-18"),
            (3.1, "22.197951281441636 -6.080905740259536e-16"),
            (1e-5, "1.00001000005 9.70188425858504e-17"),
        ];
        for (x, expected) in cases {
            let got = DoubleDouble::from(x).exp();
            assert!(rel(got, dd(expected)) < 1e-30, "exp({x}) = {got}");
        }
        let ln2 = DoubleDouble::from(2.0).ln();
        assert!(rel(ln2, LN2) < 1e-31);
        let ln10 = DoubleDouble::from(10.0).ln();
        assert!(rel(ln10, dd("2.302585092994046 -2.1707562233822494e-16")) < 1e-31);
    }

    #[test]
    fn ln_inverts_exp() {
        for x in [-30.0, -3.0, -0.25, 1e-7, 0.7, 4.0, 60.0] {
            let v = DoubleDouble::from(x);
            let back = v.exp().ln();
            assert!((back - v).abs().to_f64_lossy() < 1e-29 * x.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn roots_and_division() {
        let two = DoubleDouble::from(2.0);
        let r = two.sqrt();
        assert!(((r * r) - two).abs().to_f64_lossy() < 1e-31);
        let c = DoubleDouble::from(85.0).cbrt();
        assert!(((c * c * c) - DoubleDouble::from(85.0)).abs().to_f64_lossy() < 1e-29);
        let third = DoubleDouble::one() / DoubleDouble::from(3.0);
        assert!(((third * DoubleDouble::from(3.0)) - DoubleDouble::one()).abs().to_f64_lossy() < 1e-32);
    }

    #[test]
    fn tanh_branches_agree_at_switch() {
        let a = DoubleDouble::from(0.999_999e-5).tanh();
        let b = DoubleDouble::from(1.000_001e-5).tanh();
        assert!(a < b);
        let t = DoubleDouble::from(0.3).tanh();
        assert!((t.to_f64_lossy() - 0.3f64.tanh()).abs() < 1e-16);
        assert_eq!(DoubleDouble::from(-50.0).tanh().to_f64_lossy(), -1.0);
    }

    #[test]
    fn ordering_uses_low_word() {
        let a = DoubleDouble::new(1.0, 1e-20);
        let b = DoubleDouble::new(1.0, -1e-20);
        assert!(b < a);
        assert_eq!(Scalar::max(a, b), a);
    }
}
