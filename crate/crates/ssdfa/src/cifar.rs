//! CIFAR-10 and CIFAR-100 binary versions.
//!
//! Each record is the label byte(s) followed by 3072 pixel bytes: 1024 red,
//! 1024 green, 1024 blue, each row-major 32x32. CIFAR-100 records carry a
//! coarse and a fine label byte; the fine label is used.

use std::path::{Path, PathBuf};

use ssdfa_core::{Dataset, Matrix, Split};

use crate::error::{Error, Result};

pub const PIXELS: usize = 3072;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cifar {
    Ten,
    Hundred,
}

impl Cifar {
    pub fn classes(self) -> usize {
        match self {
            Cifar::Ten => 10,
            Cifar::Hundred => 100,
        }
    }

    fn label_bytes(self) -> usize {
        match self {
            Cifar::Ten => 1,
            Cifar::Hundred => 2,
        }
    }

    fn subdir(self) -> &'static str {
        match self {
            Cifar::Ten => "cifar-10-batches-bin",
            Cifar::Hundred => "cifar-100-binary",
        }
    }

    fn files(self, split: Split) -> Vec<String> {
        match (self, split) {
            (Cifar::Ten, Split::Train) => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            (Cifar::Ten, Split::Test) => vec!["test_batch.bin".into()],
            (Cifar::Hundred, Split::Train) => vec!["train.bin".into()],
            (Cifar::Hundred, Split::Test) => vec!["test.bin".into()],
        }
    }
}

/// Batch files for `split`, looked up in `dir` or in the archive's usual
/// subdirectory below it.
pub fn cifar_paths(dir: &Path, kind: Cifar, split: Split) -> Vec<PathBuf> {
    let files = kind.files(split);
    let nested = dir.join(kind.subdir());
    let base = if !dir.join(&files[0]).exists() && nested.join(&files[0]).exists() { nested } else { dir.to_path_buf() };
    files.iter().map(|f| base.join(f)).collect()
}

pub fn load_cifar(dir: &Path, kind: Cifar, split: Split) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in cifar_paths(dir, kind, split) {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parse_records(&bytes, kind, &path, &mut pixels, &mut labels)?;
    }
    let n = labels.len();
    Ok(Dataset::new(Matrix::new(n, PIXELS, pixels)?, labels, kind.classes(), split)?)
}

/// Appends the records in `bytes` to `pixels` (scaled to `[0, 1]`) and
/// `labels`.
pub fn parse_records(bytes: &[u8], kind: Cifar, path: &Path, pixels: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()> {
    let record = kind.label_bytes() + PIXELS;
    if !bytes.len().is_multiple_of(record) {
        let whole = bytes.len() / record + 1;
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: (whole * record) as u64,
            actual: bytes.len() as u64,
        });
    }
    for (i, rec) in bytes.chunks_exact(record).enumerate() {
        let label = rec[kind.label_bytes() - 1] as usize;
        if label >= kind.classes() {
            return Err(Error::parse(path, i + 1, format!("label {label} out of range")));
        }
        labels.push(label);
        pixels.extend(rec[kind.label_bytes()..].iter().map(|&p| p as f32 / 255.0));
    }
    Ok(())
}
