//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All grids, operators and solvers are generic over [`Real`], which is
//! implemented for `f32` and `f64`. Tolerances are always supplied by the
//! caller, so the same code path serves both precisions.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the solvers.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Infinity norm of a grid function.
pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn max_value<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
}

pub fn min_value<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::infinity(), |m, &x| m.min(x))
}

pub fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Γ(k/2) for a positive integer `k`, built by the recurrence Γ(x+1) = xΓ(x)
/// from Γ(1) = 1 or Γ(1/2) = √π.
pub fn gamma_half<T: Real>(k: usize) -> T {
    assert!(k > 0, "gamma_half requires a positive argument");
    let half = T::lit(0.5);
    let (mut x, mut value) = if k.is_multiple_of(2) {
        (T::one(), T::one())
    } else {
        (half, T::PI().sqrt())
    };
    let target = T::from_count(k) * half;
    while x < target {
        value = value * x;
        x = x + T::one();
    }
    value
}

/// Surface area 2π^{N/2}/Γ(N/2) of the unit sphere in ℝᴺ.
pub fn sphere_area<T: Real>(dim: usize) -> T {
    let pi = T::PI();
    let mut pow = T::one();
    for _ in 0..dim / 2 {
        pow = pow * pi;
    }
    if dim % 2 == 1 {
        pow = pow * pi.sqrt();
    }
    T::lit(2.0) * pow / gamma_half::<T>(dim)
}
