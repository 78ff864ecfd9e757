//! Raw array kernels behind the tape operations.

pub mod bn;
pub mod conv;
pub mod gemm;
pub mod pool;
pub mod shuffle;
