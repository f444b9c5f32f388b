//! Desk-scale simulator of decentralized training in which one shared model
//! hops between nodes holding non-IID data shards, while a DQN policy picks
//! the next node to train on. Includes the reference baselines (centralized,
//! random selection, standalone with early stopping), communication-cost
//! accounting, and weight-space embeddings of node models.
//!
//! Weight-space math (layers, optimizer, PCA projections, Q-values) is
//! generic over the scalar type via [`Scalar`]; control-plane quantities
//! (accuracies, losses as logged, rewards, distances, epsilon) are always
//! `f64`, so logged metrics do not depend on the chosen weight precision.
//!
//! Every random decision derives from a master seed through named streams
//! ([`rng`]), making runs bit-reproducible for a given build.

pub mod data;
pub mod error;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod state;
pub mod tensor;
pub mod topology;

pub use error::{Error, Result};
pub use tensor::Tensor;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point scalar usable for weight-space math.
///
/// Implemented for `f32` and `f64`. The simulator entry points instantiate
/// [`Real`]; tolerance-critical tests instantiate `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Casts a control-plane `f64` into the weight scalar type.
    #[inline]
    fn from64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to any Scalar")
    }

    /// Casts a weight scalar into the control-plane `f64`.
    #[inline]
    fn into64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Weight precision used by the simulator entry points and the CLI.
pub type Real = f32;

/// Tensor of [`Real`] values.
pub type RealTensor = Tensor<Real>;
