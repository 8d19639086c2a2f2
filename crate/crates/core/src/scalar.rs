//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! Metrics, gradients and the toy predictor are written once against
//! [`Scalar`] and instantiated at `f32`, `f64` or [`DoubleDouble`]. The
//! double-double instantiation backs the finite-difference oracles: a
//! central difference with step `1e-5` loses roughly eleven digits to
//! cancellation, which `f64` cannot afford when the analytic gradient is
//! checked to `1e-6` relative.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{FromPrimitive, NumAssignOps, NumOps, One, ToPrimitive, Zero};

pub use crate::dd::DoubleDouble;

pub trait Scalar:
    Copy
    + Debug
    + Display
    + PartialOrd
    + Zero
    + One
    + NumOps
    + NumAssignOps
    + std::ops::Neg<Output = Self>
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Send
    + Sync
    + 'static
{
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn cbrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_finite(self) -> bool;

    /// Convert from `f64`. Panics only for types that cannot hold an `f64`,
    /// which none of the provided instantiations are.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar type cannot represent an f64")
    }

    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }

    /// Nearest `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Logistic function `1 / (1 + e^{-x})`, evaluated without overflow.
    fn logistic(self) -> Self {
        let one = Self::one();
        if self >= Self::zero() {
            one / (one + (-self).exp())
        } else {
            let e = self.exp();
            e / (one + e)
        }
    }
}

macro_rules! impl_scalar_for_float {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn exp(self) -> Self {
                num_traits::Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                num_traits::Float::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                num_traits::Float::sqrt(self)
            }
            #[inline]
            fn cbrt(self) -> Self {
                num_traits::Float::cbrt(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                num_traits::Float::tanh(self)
            }
            #[inline]
            fn abs(self) -> Self {
                num_traits::Float::abs(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                num_traits::Float::powi(self, n)
            }
            #[inline]
            fn is_finite(self) -> bool {
                num_traits::Float::is_finite(self)
            }
        }
    };
}

impl_scalar_for_float!(f32);
impl_scalar_for_float!(f64);

/// Numerically stable `log Σ exp(x_b + log_w_b)`; `log_w` may be empty for
/// unit weights.
pub fn log_sum_exp<S: Scalar>(x: &[S], log_w: Option<&[S]>) -> S {
    let shifted = |b: usize| match log_w {
        Some(w) => x[b] + w[b],
        None => x[b],
    };
    let mut m = shifted(0);
    for b in 1..x.len() {
        m = m.max(shifted(b));
    }
    let mut acc = S::zero();
    for b in 0..x.len() {
        acc += (shifted(b) - m).exp();
    }
    m + acc.ln()
}

/// Max-shifted softmax written into `out`.
pub fn softmax_into<S: Scalar>(x: &[S], out: &mut [S]) {
    let mut m = x[0];
    for &v in &x[1..] {
        m = m.max(v);
    }
    let mut total = S::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}
