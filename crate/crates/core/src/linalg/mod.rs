//! Minimal sparse/banded/dense kernels used by the assembly and the
//! matrix-function layer.

mod banded;
mod dense;
mod sparse;

pub use banded::BandedCholesky;
pub use dense::{DenseMatrix, LuFactors};
pub use sparse::{CsrMatrix, TripletBuilder};
