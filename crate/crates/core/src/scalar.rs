use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardUniform};

/// Floating-point scalar the whole library is generic over.
///
/// Sampling hooks live here so that simulation code stays generic without
/// dragging `rand_distr` bounds through every signature.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Gamma variate with the given shape and rate.
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, rate: Self) -> Self;

    /// Uniform variate on [0, 1).
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard exponential variate.
    fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, rate: Self) -> Self {
                Gamma::new(shape, 1.0 / rate)
                    .expect("gamma parameters validated upstream")
                    .sample(rng)
            }

            fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardUniform.sample(rng)
            }

            fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
