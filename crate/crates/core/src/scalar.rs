//! Floating-point abstraction shared by the physical models and the learner.

use std::fmt::Debug;

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar usable throughout the crate (`f32` or `f64`).
pub trait Scalar:
    NdFloat + FromPrimitive + Default + Debug + Serialize + DeserializeOwned + 'static
{
    /// Short name used in checkpoints.
    const NAME: &'static str;

    /// Lossy conversion from a literal. Every constant in the crate goes
    /// through here so generic code stays readable.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from `Gamma(shape, scale)`; `None` if the parameters are invalid.
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Option<Self>;

    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty, $name:expr) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn sample_gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Option<Self> {
                Gamma::new(shape, scale).ok().map(|g| g.sample(rng))
            }

            fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }
        }
    };
}

impl_scalar!(f32, "f32");
impl_scalar!(f64, "f64");
