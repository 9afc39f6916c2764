//! Shared inputs for the criterion benchmarks in `benches/`.
//!
//! Run with `cargo bench -p bbfp-bench`.

use bbfp_core::io::{synth_values, Distribution};
use bbfp_core::{encode_block, BbfpBlock, BbfpConfig, Matrix};

/// Formats the benchmarks sweep over.
pub fn configs() -> Vec<BbfpConfig> {
    [(4, 2), (6, 3), (8, 4)]
        .iter()
        .map(|&(m, o)| BbfpConfig::new(m, o).expect("valid"))
        .collect()
}

/// Gaussian values, seeded so runs compare like with like.
pub fn corpus(len: usize, seed: u64) -> Vec<f64> {
    synth_values(Distribution::Gaussian, len, seed)
}

/// `count` encoded blocks of Gaussian data.
pub fn blocks(cfg: &BbfpConfig, count: usize, seed: u64) -> Vec<BbfpBlock> {
    corpus(count * cfg.block_size, seed)
        .chunks(cfg.block_size)
        .map(|c| encode_block(c, cfg).expect("finite input"))
        .collect()
}

pub fn matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::new(rows, cols, corpus(rows * cols, seed)).expect("shape matches")
}
