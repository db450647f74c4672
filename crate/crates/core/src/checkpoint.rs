//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `CMLW`, format version `u32`, parameter
//! count `u32`, then per parameter: name length `u16`, UTF-8 name, rank
//! `u8`, each dimension as `u32`, and the `f64` values in row-major order.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::io_util::write_atomic;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CMLW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parameter count mismatch: expected {expected}, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("parameter {index}: expected name {expected}, found {found}")]
    NameMismatch {
        index: usize,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

pub fn encode(params: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.tensor.shape().len() as u8);
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_exact<const N: usize>(r: &mut impl Read, what: &'static str) -> Result<[u8; N], CheckpointError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::Truncated(what),
        _ => CheckpointError::Io(e),
    })?;
    Ok(buf)
}

pub fn decode(mut r: impl Read) -> Result<Vec<NamedTensor>, CheckpointError> {
    let magic = read_exact::<4>(&mut r, "magic")?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_exact(&mut r, "version")?);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(read_exact(&mut r, "parameter count")?) as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_exact(&mut r, "name length")?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| CheckpointError::Truncated("parameter name"))?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Corrupt("parameter name is not UTF-8".into()))?;
        let rank = read_exact::<1>(&mut r, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_exact(&mut r, "dimension")?) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| CheckpointError::Corrupt(format!("implausible shape {shape:?}")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(read_exact(&mut r, "values")?));
        }
        let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        params.push(NamedTensor { name, tensor });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes after last parameter".into()));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &[NamedTensor]) -> Result<(), CheckpointError> {
    write_atomic(path, &encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<NamedTensor>, CheckpointError> {
    let file = std::fs::File::open(path)?;
    decode(io::BufReader::new(file))
}

/// Write through any sink; used by tests and tools that stream.
pub fn write_to(mut w: impl Write, params: &[NamedTensor]) -> io::Result<()> {
    w.write_all(&encode(params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor {
                name: "a".into(),
                tensor: Tensor::new(vec![2, 3], (0..6).map(|i| i as f64 * 0.5 - 1.0).collect()).unwrap(),
            },
            NamedTensor {
                name: "bias".into(),
                tensor: Tensor::vector(vec![f64::MIN_POSITIVE, -0.0, 1e300]),
            },
        ]
    }

    #[test]
    fn round_trip_is_bitwise() {
        let params = sample();
        let back = decode(&encode(&params)[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in params.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.tensor.shape(), b.tensor.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.tensor), bits(&b.tensor));
        }
    }

    #[test]
    fn header_layout_is_little_endian() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..4], b"CMLW");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..12], 2u32.to_le_bytes());
        assert_eq!(bytes[12..14], 1u16.to_le_bytes());
        assert_eq!(bytes[14], b'a');
        assert_eq!(bytes[15], 2);
    }

    #[test]
    fn every_truncation_is_reported_as_truncation() {
        let bytes = encode(&sample());
        for cut in 0..bytes.len() {
            match decode(&bytes[..cut]) {
                Err(CheckpointError::Truncated(_)) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let mut bytes = encode(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes[..]), Err(CheckpointError::BadMagic(_))));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode(&sample());
        bytes[4] = 9;
        assert!(matches!(decode(&bytes[..]), Err(CheckpointError::UnsupportedVersion(9))));
    }
}
