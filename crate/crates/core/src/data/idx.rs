//! IDX (MNIST) file format: big-endian magic, big-endian u32 dimensions, raw bytes.

use std::path::Path;

use super::{read_file, DataError, ImageSet};
use crate::nn::Shape;

/// Unsigned-byte payload with three dimensions.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Unsigned-byte payload with one dimension.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(DataError::Truncated {
                path: self.path.to_string(),
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DataError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::BadMagic {
                path: self.path.to_string(),
                expected,
                found,
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), DataError> {
        let trailing = self.bytes.len() - self.offset;
        if trailing > 0 {
            return Err(DataError::TrailingBytes {
                path: self.path.to_string(),
                offset: self.offset,
                trailing,
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<IdxImages, DataError> {
    let mut cur = Cursor { bytes, offset: 0, path };
    cur.magic(IDX_IMAGES_MAGIC)?;
    let count = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let pixels = cur.take(count * rows * cols)?.to_vec();
    cur.finish()?;
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<IdxLabels, DataError> {
    let mut cur = Cursor { bytes, offset: 0, path };
    cur.magic(IDX_LABELS_MAGIC)?;
    let count = cur.u32()? as usize;
    let labels = cur.take(count)?.to_vec();
    cur.finish()?;
    Ok(IdxLabels { labels })
}

impl IdxImages {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IDX_IMAGES_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Recovers the byte form from `x / 255` reals.
    pub fn from_reals(count: usize, rows: usize, cols: usize, reals: &[f64]) -> Self {
        let pixels = reals.iter().map(|x| (x * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        IdxImages { count, rows, cols, pixels }
    }
}

impl IdxLabels {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

/// Loads an image/label IDX pair, mapping pixel bytes to `x / 255`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageSet, DataError> {
    let images = parse_idx_images(&read_file(images_path)?, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&read_file(labels_path)?, &labels_path.display().to_string())?;
    if images.count != labels.labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.labels.len(),
        });
    }
    Ok(ImageSet {
        shape: Shape::new(1, images.rows, images.cols),
        pixels: images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        labels: labels.labels.iter().map(|&l| usize::from(l)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture_images() -> Vec<u8> {
        // Two 2x2 images.
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 1, 255, 128, 7, 0, 255, 1]);
        b
    }

    #[test]
    fn parses_fixture_exactly() {
        let img = parse_idx_images(&fixture_images(), "fx").unwrap();
        assert_eq!((img.count, img.rows, img.cols), (2, 2, 2));
        assert_eq!(img.pixels[..3], [0, 1, 255]);
        assert_eq!(img.to_bytes(), fixture_images());
    }

    #[test]
    fn zero_length_is_truncated_at_offset_zero() {
        let err = parse_idx_images(&[], "empty").unwrap_err();
        assert!(matches!(err, DataError::Truncated { offset: 0, .. }));
        let err = parse_idx_labels(&[], "empty").unwrap_err();
        assert!(matches!(err, DataError::Truncated { offset: 0, .. }));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut b = fixture_images();
        b.truncate(20);
        let err = parse_idx_images(&b, "short").unwrap_err();
        assert_eq!(
            err,
            DataError::Truncated {
                path: "short".into(),
                offset: 16,
                needed: 8,
                available: 4
            }
        );
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut b = fixture_images();
        b[3] = 0x01;
        assert!(matches!(
            parse_idx_images(&b, "x"),
            Err(DataError::BadMagic { found: 0x801, .. })
        ));
        let mut b = fixture_images();
        b.push(9);
        assert!(matches!(parse_idx_images(&b, "x"), Err(DataError::TrailingBytes { offset: 24, .. })));
    }

    #[test]
    fn labels_round_trip() {
        let l = IdxLabels { labels: vec![3, 1, 4] };
        let bytes = l.to_bytes();
        assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
        assert_eq!(parse_idx_labels(&bytes, "l").unwrap(), l);
    }
}
