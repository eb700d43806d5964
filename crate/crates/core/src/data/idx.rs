//! Reader for big-endian IDX files holding unsigned-byte labels or images.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format { offset, reason: reason.into() }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_err(bytes.len(), format!("truncated header, need 4 bytes at offset {offset}")))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0)?;
    let ndims = match magic {
        IDX_LABELS_MAGIC => 1,
        IDX_IMAGES_MAGIC => 3,
        other => {
            return Err(format_err(
                0,
                format!("bad magic {other:#010x}, expected {IDX_LABELS_MAGIC:#010x} or {IDX_IMAGES_MAGIC:#010x}"),
            ))
        }
    };
    let dims = (0..ndims).map(|d| read_u32(bytes, 4 + 4 * d).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(4, "dimension product overflows"))?;
    let end = header + len;
    if bytes.len() < end {
        return Err(format_err(bytes.len(), format!("truncated data, expected {len} bytes after offset {header}")));
    }
    if bytes.len() > end {
        return Err(format_err(end, "trailing bytes after data"));
    }
    Ok(IdxArray { dims, data: bytes[header..end].to_vec() })
}

fn read(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Format { offset, reason } => Error::Format { offset, reason: format!("{}: {reason}", path.display()) },
        other => other,
    })
}

/// Loads an image file and its label file; pixels are scaled to `[0, 1]`
/// and each image becomes one flattened row.
pub fn load_idx<T: Scalar>(images: &Path, labels: &Path) -> Result<Dataset<T>> {
    let img = read(images)?;
    let lab = read(labels)?;
    if img.dims.len() != 3 {
        return Err(format_err(0, format!("{} is not an image file", images.display())));
    }
    if lab.dims.len() != 1 {
        return Err(format_err(0, format!("{} is not a label file", labels.display())));
    }
    let (n, h, w) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(Error::Data(format!("{n} images but {} labels", lab.dims[0])));
    }
    let y: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let num_classes = y.iter().max().map_or(0, |m| m + 1);
    let x = img.data.iter().map(|&p| T::lit(p as f64 / 255.0)).collect();
    Dataset::new(Matrix::from_vec(n, h * w, x)?, y, num_classes)
}
