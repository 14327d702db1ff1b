//! IDX image/label files (the MNIST family format).
//!
//! Big-endian throughout. Images: magic `0x00000803`, count, rows, cols, then
//! `count*rows*cols` raw bytes. Labels: magic `0x00000801`, count, then
//! `count` raw bytes.

use std::path::Path;

use thiserror::Error;

use super::Dataset;
use crate::error::Result;
use crate::model::Batch;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
}

/// Raw decoded image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        if self.rows * self.cols == 0 {
            0
        } else {
            self.pixels.len() / (self.rows * self.cols)
        }
    }
}

fn header(bytes: &[u8], words: usize) -> Result<Vec<u32>, IdxError> {
    let needed = 4 * words;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[..needed]
        .chunks_exact(4)
        .map(|w| u32::from_be_bytes([w[0], w[1], w[2], w[3]]))
        .collect())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], IdxError> {
    let needed = offset + len;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(&bytes[offset..needed])
}

pub fn decode_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let magic = header(bytes, 1)?[0];
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let h = header(bytes, 4)?;
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let pixels = payload(bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages { rows, cols, pixels })
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let magic = header(bytes, 1)?[0];
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = header(bytes, 2)?[1] as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [
        IMAGES_MAGIC,
        images.count() as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a dataset with pixels scaled to `[0, 1]`; the class count is
/// `max(label) + 1`.
pub fn to_dataset(images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        }
        .into());
    }
    let features = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(
        Batch::new(features, labels, images.rows * images.cols)?,
        num_classes,
    )
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = decode_images(&read(images_path)?)?;
    let labels = decode_labels(&read(labels_path)?)?;
    to_dataset(&images, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// Two 2x2 images, written out byte by byte.
    const IMAGES: [u8; 24] = [
        0x00, 0x00, 0x08, 0x03, // magic
        0x00, 0x00, 0x00, 0x02, // count
        0x00, 0x00, 0x00, 0x02, // rows
        0x00, 0x00, 0x00, 0x02, // cols
        0, 51, 102, 255, // image 0
        255, 204, 0, 17, // image 1
    ];
    const LABELS: [u8; 10] = [0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 1, 0];

    #[test]
    fn fixture_decodes_to_scaled_pixels() {
        let images = decode_images(&IMAGES).unwrap();
        let labels = decode_labels(&LABELS).unwrap();
        let ds = to_dataset(&images, &labels).unwrap();
        assert_eq!(ds.input_dim(), 4);
        assert_eq!(ds.samples().row(0), &[0.0, 0.2, 0.4, 1.0]);
        assert_eq!(ds.samples().row(1), &[1.0, 0.8, 0.0, 17.0 / 255.0]);
        assert_eq!(ds.samples().labels(), &[1, 0]);
    }

    #[test]
    fn fixture_reencodes_byte_identical() {
        let images = decode_images(&IMAGES).unwrap();
        assert_eq!(encode_images(&images), IMAGES.to_vec());
        assert_eq!(encode_labels(&decode_labels(&LABELS).unwrap()), LABELS.to_vec());
    }

    #[test]
    fn bad_magic_is_distinct() {
        let mut bytes = IMAGES;
        bytes[3] = 0x01;
        assert!(matches!(
            decode_images(&bytes),
            Err(IdxError::BadMagic { found: 0x0801, .. })
        ));
        assert!(matches!(
            decode_labels(&IMAGES),
            Err(IdxError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_is_distinct() {
        assert!(matches!(
            decode_images(&IMAGES[..20]),
            Err(IdxError::Truncated { needed: 24, available: 20 })
        ));
        assert!(matches!(decode_labels(&LABELS[..6]), Err(IdxError::Truncated { .. })));
    }

    #[test]
    fn count_mismatch_is_distinct() {
        let images = decode_images(&IMAGES).unwrap();
        let err = to_dataset(&images, &[0, 1, 1]).unwrap_err();
        assert!(matches!(
            err,
            Error::Idx(IdxError::CountMismatch { images: 2, labels: 3 })
        ));
    }
}
