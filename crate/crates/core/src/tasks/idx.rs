//! IDX image/label files (big-endian, magic 2051 for images and 2049 for labels).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netcore::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn idx_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| idx_err(path, "truncated header"))
}

/// Images flattened row-major, pixels scaled to `[0, 1]`. Returns `(images, rows, cols)`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<(Matrix, usize, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(idx_err(path, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let body = &bytes[16..];
    let need = n * rows * cols;
    if body.len() < need {
        return Err(idx_err(path, format!("{} pixel bytes, header promises {need}", body.len())));
    }
    let data = body[..need].iter().map(|&p| p as f64 / 255.0).collect();
    Ok((Matrix::from_vec(n, rows * cols, data)?, rows, cols))
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(idx_err(path, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(idx_err(path, format!("{} label bytes, header promises {n}", body.len())));
    }
    Ok(body[..n].to_vec())
}

/// Loads a matching image/label pair.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<(Matrix, Vec<u8>)> {
    let (img, _, _) = load_idx_images(images.as_ref())?;
    let lab = load_idx_labels(labels.as_ref())?;
    if img.rows() != lab.len() {
        return Err(idx_err(
            labels.as_ref(),
            format!("{} labels for {} images", lab.len(), img.rows()),
        ));
    }
    Ok((img, lab))
}

/// Inverse of [`load_idx_images`]; pixels are rounded back to bytes.
pub fn write_idx_images(path: impl AsRef<Path>, images: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if images.cols() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels per image, {rows}x{cols} requested",
            images.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.data().len());
    for v in [IMAGE_MAGIC, images.rows() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}
