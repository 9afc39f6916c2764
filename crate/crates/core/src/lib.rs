//! Bidirectional block floating point (BBFP).
//!
//! BBFP stores a block of values as one shared exponent plus, per element, a
//! sign, a flag and an `m`-bit mantissa. The shared exponent sits `m - o`
//! below the block maximum; flagged elements are read from a window shifted
//! `m - o` bits higher, so large values keep their leading bits while small
//! values are not crushed by max alignment.
//!
//! Modules:
//!
//! - [`format`]: configuration, bit-exact encode/decode, packed blocks.
//! - [`arith`]: multiply-accumulate datapath emulation, dot product, GEMM.
//! - [`analysis`]: empirical error sweeps and the block-exponent variance model.
//! - [`tuner`]: overlap-width selection.
//! - [`nonlinear`]: exponent-segmented lookup tables and the softmax /
//!   sigmoid / SiLU / GELU dataflows.
//! - [`cost`]: equivalent bit-width, memory efficiency, relative gate counts.
//! - [`io`]: tensor files and synthetic data.

pub mod analysis;
pub mod arith;
pub mod cost;
pub mod format;
pub mod io;
pub mod nonlinear;
pub mod tuner;

pub use arith::{dot_product, gemm, ArithError, Matrix};
pub use io::Tensor;
pub use format::{
    decode_block, encode_block, BbfpBlock, BbfpConfig, BbfpElement, BfpBlock, BfpConfig, BlockFormat,
    ExponentStrategy, FormatError, Rounding,
};

