//! IDX container (the MNIST family format): two zero bytes, a type code, a
//! dimension count, big-endian `u32` sizes, then the payload.
//!
//! Only unsigned-byte payloads are loaded. Pixel bytes are scaled to
//! `[0, 1]` by dividing by 255.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::error::Result;
use crate::model::{DataSet, DataSource};

const TYPE_U8: u8 = 0x08;

#[derive(Debug, Error, PartialEq)]
pub enum IdxError {
    #[error("bad IDX magic bytes {0:#04x} {1:#04x}")]
    BadMagic(u8, u8),
    #[error("unsupported IDX type code {0:#04x}")]
    UnsupportedType(u8),
    #[error("IDX header declares no dimensions")]
    NoDimensions,
    #[error("IDX file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX file has {0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("value {0} cannot be stored as a pixel byte")]
    OutOfRange(f64),
}

/// Parses an in-memory IDX file into an `N × D` data set, `D` being the
/// product of all dimensions after the first.
pub fn parse_idx(bytes: &[u8], origin: &str) -> Result<DataSet> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            expected: 4,
            found: bytes.len(),
        }
        .into());
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::BadMagic(bytes[0], bytes[1]).into());
    }
    if bytes[2] != TYPE_U8 {
        return Err(IdxError::UnsupportedType(bytes[2]).into());
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(IdxError::NoDimensions.into());
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(IdxError::Truncated {
            expected: header_len,
            found: bytes.len(),
        }
        .into());
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims[0];
    let item_shape: Vec<usize> = if dims.len() > 1 { dims[1..].to_vec() } else { vec![1] };
    let dim: usize = item_shape.iter().product();
    let expected = header_len + count * dim;
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => {
            return Err(IdxError::Truncated {
                expected,
                found: bytes.len(),
            }
            .into())
        }
        std::cmp::Ordering::Greater => {
            return Err(IdxError::TrailingBytes(bytes.len() - expected).into())
        }
        std::cmp::Ordering::Equal => {}
    }
    let payload = &bytes[header_len..];
    let samples = Array2::from_shape_fn((count, dim), |(n, i)| payload[n * dim + i] as f64 / 255.0);
    DataSet::new(
        samples,
        DataSource {
            origin: origin.to_string(),
            normalization: "u8/255".into(),
            item_shape,
        },
    )
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<DataSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    parse_idx(&bytes, &path.display().to_string())
}

/// Encodes a data set as an unsigned-byte IDX file, mapping `[0, 1]` back
/// to `0..=255` with rounding. Values outside `[0, 1]` are rejected.
pub fn encode_idx(data: &DataSet) -> Result<Vec<u8>> {
    let shape = &data.source().item_shape;
    let item_shape: Vec<usize> = if shape.iter().product::<usize>() == data.dim() {
        shape.clone()
    } else {
        vec![data.dim()]
    };
    // 1-D files (labels) load with item shape [1] and are written back as 1-D.
    let dims: Vec<usize> = if item_shape == [1] {
        vec![data.len()]
    } else {
        std::iter::once(data.len()).chain(item_shape).collect()
    };
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len() * data.dim());
    out.extend_from_slice(&[0, 0, TYPE_U8, dims.len() as u8]);
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    for v in data.samples().iter() {
        if !(0.0..=1.0).contains(v) {
            return Err(IdxError::OutOfRange(*v).into());
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn write_idx(path: impl AsRef<Path>, data: &DataSet) -> Result<()> {
    std::fs::write(path, encode_idx(data)?)?;
    Ok(())
}
