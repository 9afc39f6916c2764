//! Blocked GEMM over the BBFP datapath.
//!
//! The reduction dimension is cut into blocks of `N` (zero-padded at the end),
//! rows of `A` and columns of `B` are quantized per block, each block pair goes
//! through [`dot_product`], and block results are summed in floating point in
//! ascending block order.

use super::{dot_product, ArithError};
use crate::format::{encode_block, BbfpBlock, BbfpConfig};
use rayon::prelude::*;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ArithError> {
        if data.len() != rows * cols {
            return Err(ArithError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// Precision of the cross-block floating-point adder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accumulation {
    #[default]
    F64,
    /// Each block result is rounded to `f32` and summed in `f32`.
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GemmOptions {
    pub accumulation: Accumulation,
    /// Overrides the block size along the reduction dimension; `Some(16)`
    /// mirrors the 4x4 tiles fed to the PE array.
    pub block_size: Option<usize>,
}

impl GemmOptions {
    pub fn pe_tile() -> Self {
        Self {
            block_size: Some(16),
            ..Self::default()
        }
    }
}

fn quantize_vector(v: &[f64], cfg: &BbfpConfig) -> Result<Vec<BbfpBlock>, ArithError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.chunks(cfg.block_size)
        .map(|chunk| encode_block(chunk, cfg).map_err(ArithError::from))
        .collect()
}

/// `C = A * B` on quantized operands.
pub fn gemm(a: &Matrix, b: &Matrix, cfg: &BbfpConfig, opts: GemmOptions) -> Result<Matrix, ArithError> {
    if a.cols != b.rows {
        return Err(ArithError::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let cfg = match opts.block_size {
        Some(n) => cfg.with_block_size(n),
        None => *cfg,
    };
    cfg.validate_layout()?;
    let a_blocks = (0..a.rows)
        .into_par_iter()
        .map(|r| quantize_vector(a.row(r), &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let b_blocks = (0..b.cols)
        .into_par_iter()
        .map(|c| quantize_vector(&b.column(c), &cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let data = a_blocks
        .par_iter()
        .map(|row| {
            b_blocks
                .iter()
                .map(|col| accumulate(row, col, &cfg, opts.accumulation))
                .collect::<Result<Vec<f64>, ArithError>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Matrix::new(a.rows, b.cols, data)
}

fn accumulate(
    row: &[BbfpBlock],
    col: &[BbfpBlock],
    cfg: &BbfpConfig,
    accumulation: Accumulation,
) -> Result<f64, ArithError> {
    match accumulation {
        Accumulation::F64 => {
            let mut sum = 0.0f64;
            for (x, y) in row.iter().zip(col) {
                sum += dot_product(x, y, cfg)?;
            }
            Ok(sum)
        }
        Accumulation::F32 => {
            let mut sum = 0.0f32;
            for (x, y) in row.iter().zip(col) {
                sum += dot_product(x, y, cfg)? as f32;
            }
            Ok(f64::from(sum))
        }
    }
}
