//! Reference oracles for the test suites.
//!
//! Everything in this crate is written independently of the production code
//! paths it is used to check: the SVD here is a one-sided Jacobi sweep (the
//! production code uses deflated power iteration), the convolution is a plain
//! quadruple loop, and gradients come from central finite differences.
//! Deliberately slow and simple.

pub mod conv_ref;
pub mod fd;
pub mod jacobi;
pub mod rng;

pub use conv_ref::conv2d_reference;
pub use fd::{central_diff, max_relative_error, relative_error};
pub use jacobi::{jacobi_svd, singular_values};
pub use rng::SplitMix64;
