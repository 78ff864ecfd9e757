//! Rank-one decomposition and reconstruction networks for image restoration.
//!
//! The crate is organized around a small dense-tensor engine with
//! reverse-mode differentiation ([`tape`]), an exact rank-one oracle
//! ([`rankone`]), the projection/decomposition/reconstruction networks
//! ([`ropnet`], [`rodec`], [`rorec`]), and the degradation and measurement
//! protocols ([`degrade`], [`metrics`]) needed to train and evaluate them.

pub mod degrade;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rankone;
pub mod rodec;
pub mod ropnet;
pub mod rorec;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{BoundParams, InitScheme, Initializer, ModelWeights};
pub use rankone::{
    best_rank_one, rank_one_defect, svd_decompose_mat, Decomposition, Mat, SvdTriplet,
};
pub use scalar::Scalar;
pub use tape::{LossAlpha, NodeId, Tape};
pub use tensor::Tensor;
