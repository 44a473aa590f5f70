//! CIFAR-10/100 binary row format: label byte(s) followed by 3072 CHW pixel bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, DataError, ImageSet};
use crate::nn::Shape;

const PIXELS: usize = 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    /// One label byte per row.
    Cifar10,
    /// Coarse then fine label byte; the fine label is used.
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }
}

pub fn parse_cifar(bytes: &[u8], variant: CifarVariant, path: &str) -> Result<ImageSet, DataError> {
    let row = variant.label_bytes() + PIXELS;
    let whole = bytes.len() / row * row;
    if whole != bytes.len() {
        return Err(DataError::Truncated {
            path: path.to_string(),
            offset: whole,
            needed: row,
            available: bytes.len() - whole,
        });
    }
    let n = bytes.len() / row;
    let mut pixels = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, chunk) in bytes.chunks_exact(row).enumerate() {
        let label = usize::from(chunk[variant.label_bytes() - 1]);
        if label >= variant.classes() {
            return Err(DataError::LabelOutOfRange {
                index: i,
                label,
                classes: variant.classes(),
            });
        }
        labels.push(label);
        pixels.extend(chunk[variant.label_bytes()..].iter().map(|&p| f64::from(p) / 255.0));
    }
    Ok(ImageSet {
        shape: Shape::new(3, 32, 32),
        pixels,
        labels,
    })
}

/// Loads one CIFAR binary batch file.
pub fn load_cifar_bin(path: &Path, variant: CifarVariant) -> Result<ImageSet, DataError> {
    parse_cifar(&read_file(path)?, variant, &path.display().to_string())
}
