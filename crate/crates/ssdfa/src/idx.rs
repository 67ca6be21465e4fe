//! IDX files as used by MNIST: a big-endian header followed by unsigned
//! bytes.

use std::path::{Path, PathBuf};

use ssdfa_core::{Dataset, Matrix, Split};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Standard MNIST file names in a directory.
pub fn mnist_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Loads the MNIST split from `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, split);
    load_idx(&images, &labels, split)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, rows, cols, pixels) = parse_images(&images, images_path)?;
    let labels = parse_labels(&labels, labels_path)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images_path: images_path.to_path_buf(),
            labels_path: labels_path.to_path_buf(),
            images: n,
            labels: labels.len(),
        });
    }
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    let features = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let features = Matrix::new(n, rows * cols, features)?;
    Ok(Dataset::new(features, labels, classes, split)?)
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let head = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(Error::Truncated { path: path.to_path_buf(), expected: head as u64, actual: bytes.len() as u64 });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: magic, found });
    }
    if bytes.len() < head {
        return Err(Error::Truncated { path: path.to_path_buf(), expected: head as u64, actual: bytes.len() as u64 });
    }
    let dims: Vec<usize> = (0..dims).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect();
    let expected = head as u64 + dims.iter().map(|&d| d as u64).product::<u64>();
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated { path: path.to_path_buf(), expected, actual: bytes.len() as u64 });
    }
    Ok(dims)
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_images<'a>(bytes: &'a [u8], path: &Path) -> Result<(usize, usize, usize, &'a [u8])> {
    let d = header(bytes, path, IMAGES_MAGIC, 3)?;
    Ok((d[0], d[1], d[2], &bytes[16..16 + d[0] * d[1] * d[2]]))
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let d = header(bytes, path, LABELS_MAGIC, 1)?;
    Ok(bytes[8..8 + d[0]].iter().map(|&b| b as usize).collect())
}

/// Encodes images (`count x rows*cols` bytes) as an IDX3 file.
pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
