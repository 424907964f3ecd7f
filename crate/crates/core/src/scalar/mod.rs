//! The numeric tower every dynamics routine is written against.
//!
//! Three families implement [`Scalar`]:
//!
//! - plain floats (`f32`, `f64`),
//! - [`Dual`] numbers for forward-mode derivatives (one tangent direction per sweep),
//! - [`Var`] handles onto a thread-local reverse-mode tape.
//!
//! Control flow that must not depend on derivative information (step-size
//! selection, singularity checks) goes through [`Scalar::value`].

mod dual;
mod tape;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

pub use dual::Dual;
pub use tape::{Gradients, Tape, TapeSession, Var};

/// Arithmetic and elementary functions needed by the dynamics stack.
pub trait Scalar:
    Copy
    + Debug
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Lift a constant. Derivative parts are zero.
    fn from_f64(v: f64) -> Self;
    /// Primal value.
    fn value(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn powi(self, n: i32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n.unsigned_abs() {
            acc *= self;
        }
        if n < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }

    /// Scale by a plain constant.
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }
}

macro_rules! impl_float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn value(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn sin(self) -> Self {
                num_traits::Float::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                num_traits::Float::cos(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                num_traits::Float::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                num_traits::Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                num_traits::Float::ln(self)
            }
            #[inline]
            fn atan2(self, x: Self) -> Self {
                num_traits::Float::atan2(self, x)
            }
            #[inline]
            fn abs(self) -> Self {
                num_traits::Float::abs(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                num_traits::Float::powi(self, n)
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

/// Lift a slice of plain values into another scalar type.
pub fn lift<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&v| S::from_f64(v)).collect()
}

/// Primal values of a slice.
pub fn values<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(Scalar::value).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<S: Scalar>(x: S) -> S {
        // x^3 sin x + exp(x) / x
        x.powi(3) * x.sin() + x.exp() / x
    }

    fn poly_derivative(x: f64) -> f64 {
        3.0 * x * x * x.sin() + x.powi(3) * x.cos() + x.exp() / x - x.exp() / (x * x)
    }

    #[test]
    fn f32_and_f64_agree() {
        let a = poly(0.7f64);
        let b = poly(0.7f32);
        assert!((a - b as f64).abs() < 1e-5);
    }

    #[test]
    fn dual_and_tape_agree_with_hand_derivative() {
        let x = 0.7;
        let d = poly(Dual::variable(x));
        assert!((d.re - poly(x)).abs() < 1e-15);
        assert!((d.eps - poly_derivative(x)).abs() < 1e-13);

        let session = Tape::session(usize::MAX).unwrap();
        let v = Var::input(x);
        let y = poly(v);
        let g = session.gradient(y);
        assert!((g.wrt(v) - poly_derivative(x)).abs() < 1e-13);
    }

    #[test]
    fn negative_powi() {
        assert!((2.0f64.powi(-2) - 0.25).abs() < 1e-15);
        let d = Dual::variable(2.0).powi(-2);
        assert!((d.eps + 0.25).abs() < 1e-15);
    }
}
