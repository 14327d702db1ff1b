//! Parameter checkpoints.
//!
//! Layout: 8-byte magic `FLGACKPT`, `u32` little-endian dimension, then
//! `dim` little-endian IEEE-754 doubles.

use std::path::Path;

use thiserror::Error;

use crate::model::ParamVector;

pub const MAGIC: &[u8; 8] = b"FLGACKPT";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("truncated checkpoint: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint has {found} trailing bytes")]
    TrailingBytes { found: usize },
    #[error("checkpoint dimension {found} does not match expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("vector of dimension {0} does not fit the format")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(params: &ParamVector) -> Result<Vec<u8>, CheckpointError> {
    let dim = u32::try_from(params.dim()).map_err(|_| CheckpointError::TooLarge(params.dim()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim.to_le_bytes());
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a checkpoint, optionally requiring a specific dimension.
pub fn decode(bytes: &[u8], expected_dim: Option<usize>) -> Result<ParamVector, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4-byte slice")) as usize;
    let expected_len = HEADER_LEN + 8 * dim;
    if bytes.len() < expected_len {
        return Err(CheckpointError::Truncated {
            expected: expected_len,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected_len {
        return Err(CheckpointError::TrailingBytes {
            found: bytes.len() - expected_len,
        });
    }
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(CheckpointError::DimMismatch { expected, found: dim });
        }
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(ParamVector::from_vec(values))
}

pub fn write_checkpoint(params: &ParamVector, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(params)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path, expected_dim: Option<usize>) -> Result<ParamVector, CheckpointError> {
    decode(&std::fs::read(path)?, expected_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_vector_is_twelve_bytes() {
        let bytes = encode(&ParamVector::zeros(0)).unwrap();
        assert_eq!(bytes, b"FLGACKPT\0\0\0\0");
        assert_eq!(decode(&bytes, Some(0)).unwrap().dim(), 0);
    }

    #[test]
    fn exact_layout() {
        let bytes = encode(&ParamVector::from_vec(vec![1.0, -2.5])).unwrap();
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[20..28], &(-2.5f64).to_le_bytes());
    }

    #[test]
    fn corrupt_inputs() {
        let good = encode(&ParamVector::from_vec(vec![0.5, 0.25, 8.0])).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, None), Err(CheckpointError::BadMagic)));
        assert!(matches!(
            decode(&good[..good.len() - 1], None),
            Err(CheckpointError::Truncated { .. })
        ));
        assert!(matches!(decode(&good[..10], None), Err(CheckpointError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode(&long, None), Err(CheckpointError::TrailingBytes { found: 1 })));
        assert!(matches!(
            decode(&good, Some(4)),
            Err(CheckpointError::DimMismatch { expected: 4, found: 3 })
        ));
    }
}
