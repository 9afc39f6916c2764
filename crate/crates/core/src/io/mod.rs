//! Tensor files, quantized-tensor containers and synthetic data.
//!
//! Tensor file layout (all integers little-endian):
//!
//! ```text
//! "BBT1" | dtype u8 (0 = f32, 1 = f16) | ndim u8 | dims: ndim x u64 | payload
//! ```
//!
//! Quantized container layout:
//!
//! ```text
//! "BBQ1" | ndim u8 | dims: ndim x u64 | block count u64 | packed blocks
//! ```
//!
//! where each packed block is a self-describing record from
//! [`write_packed_block`].

pub mod synth;

pub use synth::{synth_tensor, synth_values, Distribution};

use crate::format::{read_packed_block, write_packed_block, BbfpBlock, BbfpConfig, FormatError};
use half::f16;
use std::path::Path;
use thiserror::Error;

pub const TENSOR_MAGIC: &[u8; 4] = b"BBT1";
pub const QUANTIZED_MAGIC: &[u8; 4] = b"BBQ1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("non-finite value at index {index}")]
    NonFiniteInput { index: usize },
    #[error("value at index {index} does not fit the target dtype")]
    OutOfRange { index: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("shape {dims:?} does not match {len} values")]
    ShapeMismatch { dims: Vec<usize>, len: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F16,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F16 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, IoError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F16),
            c => Err(IoError::UnknownDtype(c)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, IoError> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(IoError::ShapeMismatch { dims, len: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}

/// What happened while loading a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub dtype: Dtype,
    /// f16 subnormals replaced by signed zero.
    pub flushed_subnormals: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IoError::TruncatedPayload { needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), IoError> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if &found != expected {
            return Err(IoError::BadMagic {
                found,
                expected: *expected,
            });
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<Vec<usize>, IoError> {
        let ndim = self.u8()?;
        (0..ndim).map(|_| self.u64().map(|d| d as usize)).collect()
    }

    fn finish(&self) -> Result<(), IoError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(IoError::TrailingBytes(n)),
        }
    }
}

fn push_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

pub fn encode_tensor(tensor: &Tensor, dtype: Dtype) -> Result<Vec<u8>, IoError> {
    if tensor.dims.len() > usize::from(u8::MAX) {
        return Err(IoError::ShapeMismatch {
            dims: tensor.dims.clone(),
            len: tensor.len(),
        });
    }
    if let Some(index) = tensor.data.iter().position(|v| !v.is_finite()) {
        return Err(IoError::NonFiniteInput { index });
    }
    let mut out = Vec::with_capacity(6 + 8 * tensor.dims.len() + dtype.size() * tensor.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(dtype.code());
    push_dims(&mut out, &tensor.dims);
    match dtype {
        Dtype::F32 => tensor.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F16 => {
            for (index, &v) in tensor.data.iter().enumerate() {
                let h = f16::from_f32(v);
                if !h.is_finite() {
                    return Err(IoError::OutOfRange { index });
                }
                out.extend_from_slice(&h.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, LoadReport), IoError> {
    let mut cur = Cursor { bytes, pos: 0 };
    cur.magic(TENSOR_MAGIC)?;
    let dtype = Dtype::from_code(cur.u8()?)?;
    let dims = cur.dims()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(IoError::TruncatedPayload {
            needed: usize::MAX,
            available: bytes.len(),
        })?;
    let payload = cur.take(count.saturating_mul(dtype.size()))?;
    cur.finish()?;
    let mut report = LoadReport { dtype, ..LoadReport::default() };
    let data: Vec<f32> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F16 => payload
            .chunks_exact(2)
            .map(|c| {
                let h = f16::from_le_bytes(c.try_into().unwrap());
                if h.classify() == std::num::FpCategory::Subnormal {
                    report.flushed_subnormals += 1;
                    if h.is_sign_negative() {
                        -0.0
                    } else {
                        0.0
                    }
                } else {
                    h.to_f32()
                }
            })
            .collect(),
    };
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(IoError::NonFiniteInput { index });
    }
    Ok((Tensor { dims, data }, report))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor, dtype: Dtype) -> Result<(), IoError> {
    std::fs::write(path, encode_tensor(tensor, dtype)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Tensor, LoadReport), IoError> {
    decode_tensor(&std::fs::read(path)?)
}

/// A tensor quantized block by block in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub dims: Vec<usize>,
    pub config: BbfpConfig,
    pub blocks: Vec<BbfpBlock>,
}

impl QuantizedTensor {
    pub fn encode(&self) -> Result<Vec<u8>, IoError> {
        let mut out = Vec::new();
        out.extend_from_slice(QUANTIZED_MAGIC);
        push_dims(&mut out, &self.dims);
        out.extend_from_slice(&(self.blocks.len() as u64).to_le_bytes());
        for block in &self.blocks {
            out.extend(write_packed_block(block, &self.config)?);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IoError> {
        let mut cur = Cursor { bytes, pos: 0 };
        cur.magic(QUANTIZED_MAGIC)?;
        let dims = cur.dims()?;
        let count = cur.u64()? as usize;
        let mut config = None;
        let mut blocks = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let (cfg, block, used) = read_packed_block(&bytes[cur.pos..])?;
            if *config.get_or_insert(cfg) != cfg {
                return Err(FormatError::InvalidConfig("blocks use different configurations".into()).into());
            }
            cur.pos += used;
            blocks.push(block);
        }
        cur.finish()?;
        let config = config.ok_or_else(|| FormatError::InvalidConfig("container holds no blocks".into()))?;
        Ok(Self { dims, config, blocks })
    }
}
