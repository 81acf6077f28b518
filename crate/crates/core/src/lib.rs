//! Permutation-augmented dynamic sparse training.
//!
//! Structured sparse layers ([`patterns`]) are composed with learned soft
//! permutations ([`permutation`]) into small ReLU networks ([`netcore`]) that
//! are trained with structure-preserving prune/grow updates ([`dst`]). Once a
//! permutation is hardened, inference replaces the permutation multiply with an
//! index map. [`expressivity`] evaluates linear-region lower bounds exactly and
//! counts regions of tiny networks as an oracle.
//!
//! Layer, permutation and training code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below name the common instantiations.

pub mod bench;
pub mod data;
pub mod dst;
pub mod error;
pub mod experiment;
pub mod expressivity;
pub mod matrix;
pub mod netcore;
pub mod patterns;
pub mod permutation;
mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type SparseLayerF32 = patterns::SparseLayer<f32>;
pub type SparseLayerF64 = patterns::SparseLayer<f64>;
pub type SoftPermutationF32 = permutation::SoftPermutation<f32>;
pub type SoftPermutationF64 = permutation::SoftPermutation<f64>;
pub type PALayerF32 = netcore::PALayer<f32>;
pub type PALayerF64 = netcore::PALayer<f64>;
pub type SmallNetF32 = netcore::SmallNet<f32>;
pub type SmallNetF64 = netcore::SmallNet<f64>;
