//! `PTMF` dense matrix files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PTMF"
//!      4     4  version (u32, currently 1)
//!      8     8  rows n (u64)
//!     16     8  cols D (u64)
//!     24     4  element tag (u32): 1 = f64, 2 = f32
//!     28     …  row-major payload
//! ```
//!
//! Everything is little-endian. `f32` payloads are widened on read.

use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::evidence::FeatureMatrix;

pub const MAGIC: &[u8; 4] = b"PTMF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ElementType {
    F64 = 1,
    F32 = 2,
}

impl ElementType {
    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            1 => Some(ElementType::F64),
            2 => Some(ElementType::F32),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            ElementType::F64 => 8,
            ElementType::F32 => 4,
        }
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Appends `m` as a PTMF block with `f64` elements.
pub fn encode_matrix(m: MatRef<'_, f64>, out: &mut Vec<u8>) {
    let (n, d) = m.shape();
    out.reserve(HEADER_LEN + n * d * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(ElementType::F64 as u32).to_le_bytes());
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

/// Same layout with `f32` elements; lossy, for interop with single-precision producers.
pub fn encode_matrix_f32(m: MatRef<'_, f64>, out: &mut Vec<u8>) {
    let (n, d) = m.shape();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(ElementType::F32 as u32).to_le_bytes());
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
}

/// Parses one PTMF block starting at `start`. Returns the matrix and the
/// offset just past its payload; bytes beyond that are left to the caller.
pub fn decode_matrix_at(bytes: &[u8], start: usize) -> Result<(Mat<f64>, usize)> {
    let off = |k: usize| (start + k) as u64;
    if bytes.len() < start + HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated header: need {HEADER_LEN} bytes, have {}",
                bytes.len().saturating_sub(start)
            ),
        ));
    }
    if &bytes[start..start + 4] != MAGIC {
        return Err(Error::format(off(0), "bad magic, expected \"PTMF\""));
    }
    let version = u32_at(bytes, start + 4);
    if version != VERSION {
        return Err(Error::format(
            off(4),
            format!("unsupported version {version}"),
        ));
    }
    let n = u64_at(bytes, start + 8);
    let d = u64_at(bytes, start + 16);
    if n == 0 {
        return Err(Error::format(off(8), "invalid dimensions: zero rows"));
    }
    if d == 0 {
        return Err(Error::format(off(16), "invalid dimensions: zero columns"));
    }
    let tag = u32_at(bytes, start + 24);
    let elem = ElementType::from_tag(tag)
        .ok_or_else(|| Error::format(off(24), format!("unknown element tag {tag}")))?;
    let payload = usize::try_from(n)
        .ok()
        .zip(usize::try_from(d).ok())
        .and_then(|(n, d)| n.checked_mul(d))
        .and_then(|count| count.checked_mul(elem.size()))
        .ok_or_else(|| Error::format(off(8), format!("dimension overflow: {n} × {d}")))?;
    let data_start = start + HEADER_LEN;
    let end = data_start
        .checked_add(payload)
        .ok_or_else(|| Error::format(off(8), format!("dimension overflow: {n} × {d}")))?;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {payload} bytes after offset {data_start}"),
        ));
    }
    let (n, d) = (n as usize, d as usize);
    let data = &bytes[data_start..end];
    let m = match elem {
        ElementType::F64 => Mat::from_fn(n, d, |i, j| {
            let at = (i * d + j) * 8;
            f64::from_le_bytes(data[at..at + 8].try_into().expect("8-byte slice"))
        }),
        ElementType::F32 => Mat::from_fn(n, d, |i, j| {
            let at = (i * d + j) * 4;
            f32::from_le_bytes(data[at..at + 4].try_into().expect("4-byte slice")) as f64
        }),
    };
    Ok((m, end))
}

/// Parses a buffer holding exactly one PTMF block.
pub fn decode_matrix(bytes: &[u8]) -> Result<Mat<f64>> {
    let (m, end) = decode_matrix_at(bytes, 0)?;
    if end != bytes.len() {
        return Err(Error::format(
            end as u64,
            format!("{} trailing bytes after payload", bytes.len() - end),
        ));
    }
    Ok(m)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partial file.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let path = path.as_ref();
    decode_matrix(&read_bytes(path)?)
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: MatRef<'_, f64>) -> Result<()> {
    let mut buf = Vec::new();
    encode_matrix(m, &mut buf);
    write_bytes(path.as_ref(), &buf)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    FeatureMatrix::new(read_matrix_file(path)?)
}

pub fn write_feature_file(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    write_matrix_file(path, features.as_mat())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat<f64> {
        Mat::from_fn(3, 2, |i, j| {
            (i as f64 + 0.1) * if j == 0 { 1.0 } else { -1e-300 }
        })
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let mut buf = Vec::new();
        encode_matrix(m.as_ref(), &mut buf);
        assert_eq!(buf.len(), HEADER_LEN + 6 * 8);
        let back = decode_matrix(&buf).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(m[(i, j)].to_bits(), back[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        encode_matrix(sample().as_ref(), &mut buf);
        assert_eq!(&buf[0..4], b"PTMF");
        assert_eq!(u32_at(&buf, 4), 1);
        assert_eq!(u64_at(&buf, 8), 3);
        assert_eq!(u64_at(&buf, 16), 2);
        assert_eq!(u32_at(&buf, 24), 1);
        assert_eq!(&buf[28..36], &0.1f64.to_le_bytes());
    }

    #[test]
    fn f32_payload_is_widened() {
        let m = Mat::from_fn(2, 2, |i, j| (i * 2 + j) as f64 * 0.5);
        let mut buf = Vec::new();
        encode_matrix_f32(m.as_ref(), &mut buf);
        assert_eq!(buf.len(), HEADER_LEN + 16);
        assert_eq!(decode_matrix(&buf).unwrap(), m);
    }

    fn offset_of(e: Error) -> u64 {
        match e {
            Error::Format { offset, .. } => offset,
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let mut good = Vec::new();
        encode_matrix(sample().as_ref(), &mut good);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(offset_of(decode_matrix(&bad).unwrap_err()), 0);

        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(offset_of(decode_matrix(&bad).unwrap_err()), 4);

        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&0u64.to_le_bytes());
        assert_eq!(offset_of(decode_matrix(&bad).unwrap_err()), 8);

        let mut bad = good.clone();
        bad[16..24].copy_from_slice(&0u64.to_le_bytes());
        assert_eq!(offset_of(decode_matrix(&bad).unwrap_err()), 16);

        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert_eq!(offset_of(decode_matrix(&bad).unwrap_err()), 8);

        let mut bad = good.clone();
        bad[24] = 7;
        assert_eq!(offset_of(decode_matrix(&bad).unwrap_err()), 24);

        let truncated = &good[..good.len() - 3];
        assert_eq!(
            offset_of(decode_matrix(truncated).unwrap_err()),
            truncated.len() as u64
        );

        assert_eq!(offset_of(decode_matrix(&good[..10]).unwrap_err()), 10);

        let mut trailing = good.clone();
        trailing.push(0);
        assert_eq!(
            offset_of(decode_matrix(&trailing).unwrap_err()),
            good.len() as u64
        );
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ptmf");
        let f = FeatureMatrix::new(sample()).unwrap();
        write_feature_file(&path, &f).unwrap();
        assert_eq!(read_feature_file(&path).unwrap(), f);
        assert!(matches!(
            read_feature_file(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
