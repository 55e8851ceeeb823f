//! HyperTab: hypernetwork-generated ensembles of small neural networks for
//! tabular classification.
//!
//! A single hypernetwork maps a binary feature-subset mask to the full weight
//! vector of a small target network. Training optimizes only the hypernetwork
//! weights over minibatches of (mask, sample) pairs; inference averages the
//! logits of the target networks generated for a fixed pool of masks.
//!
//! The numeric core ([`tensor`], [`mlp`]) is generic over the scalar type via
//! `num-traits`; the rest of the crate works with the `f64` aliases exported
//! at the crate root ([`Matrix`], [`FlatParams`]). Everything is deterministic
//! given explicit seeds: fixed accumulation order, no global RNG state.

pub mod augment;
pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod hypernet;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

/// Dense row-major `f64` matrix, the concrete carrier used outside the
/// generic core.
pub type Matrix = tensor::MatrixBase<f64>;

/// `f64` flat parameter vector for an [`mlp::MlpSpec`].
pub type FlatParams = mlp::FlatParamsBase<f64>;

pub use augment::{AugmentationMask, MaskPool};
pub use data::Dataset;
pub use hypernet::HyperNetwork;
pub use mlp::MlpSpec;
pub use model::HyperTabModel;
pub use trainer::TrainConfig;
