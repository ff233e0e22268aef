//! `PTMH` predictive-head dumps.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PTMH"
//!      4     4  version (u32, currently 1)
//!      8     8  header length L (u64)
//!     16     L  UTF-8 JSON header
//!   16+L     …  PTMF block: right singular vectors, D' × r
//!           …  PTMF block: singular values, r × 1
//!           …  PTMF block: class weights, K × D'
//! ```
//!
//! `D'` is the feature dimension plus one when the head carries a bias column.

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::FeatureMatrix;
use crate::predictive::{ClassHead, PredictiveHead};

use super::ptmf::{decode_matrix_at, encode_matrix, read_bytes, write_bytes};

pub const MAGIC: &[u8; 4] = b"PTMH";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model_id: String,
    feature_dim: usize,
    feature_hash: String,
    append_bias: bool,
    num_dimensions: usize,
    rank: usize,
    classes: Vec<ClassHead>,
}

pub fn encode_head(head: &PredictiveHead) -> Result<Vec<u8>> {
    head.validate()?;
    let header = Header {
        model_id: head.model_id.clone(),
        feature_dim: head.feature_dim,
        feature_hash: head.feature_hash.clone(),
        append_bias: head.append_bias,
        num_dimensions: head.num_dimensions,
        rank: head.rank(),
        classes: head.classes.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    encode_matrix(head.right_vectors.as_ref(), &mut out);
    let sigma = Mat::from_fn(head.rank(), 1, |i, _| head.singular_values[i]);
    encode_matrix(sigma.as_ref(), &mut out);
    let dim = head.internal_dim();
    let weights = Mat::from_fn(head.classes.len(), dim, |k, j| head.classes[k].weights[j]);
    encode_matrix(weights.as_ref(), &mut out);
    Ok(out)
}

fn expect_shape(m: &Mat<f64>, rows: usize, cols: usize, offset: usize, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::format(
            offset as u64,
            format!(
                "{what} block is {}×{}, expected {rows}×{cols}",
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    Ok(())
}

pub fn decode_head(bytes: &[u8]) -> Result<PredictiveHead> {
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len() as u64, "truncated head preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"PTMH\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice"));
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let json_end = usize::try_from(json_len)
        .ok()
        .and_then(|l| l.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::format(8, format!("header length {json_len} exceeds file size")))?;
    let header: Header = serde_json::from_slice(&bytes[16..json_end])
        .map_err(|e| Error::format(16, format!("bad JSON header: {e}")))?;

    let dim = header.feature_dim + usize::from(header.append_bias);
    let (v, at) = decode_matrix_at(bytes, json_end)?;
    expect_shape(&v, dim, header.rank, json_end, "right vector")?;
    let (sigma, at2) = decode_matrix_at(bytes, at)?;
    expect_shape(&sigma, header.rank, 1, at, "singular value")?;
    let (w, end) = decode_matrix_at(bytes, at2)?;
    expect_shape(&w, header.classes.len(), dim, at2, "weight")?;
    if end != bytes.len() {
        return Err(Error::format(
            end as u64,
            format!("{} trailing bytes after head", bytes.len() - end),
        ));
    }

    let classes = header
        .classes
        .into_iter()
        .enumerate()
        .map(|(k, c)| ClassHead {
            weights: (0..dim).map(|j| w[(k, j)]).collect(),
            ..c
        })
        .collect();
    let head = PredictiveHead {
        model_id: header.model_id,
        feature_dim: header.feature_dim,
        feature_hash: header.feature_hash,
        append_bias: header.append_bias,
        num_dimensions: header.num_dimensions,
        right_vectors: v,
        singular_values: (0..header.rank).map(|i| sigma[(i, 0)]).collect(),
        classes,
    };
    head.validate()?;
    Ok(head)
}

pub fn write_head(path: impl AsRef<Path>, head: &PredictiveHead) -> Result<()> {
    write_bytes(path.as_ref(), &encode_head(head)?)
}

pub fn read_head(path: impl AsRef<Path>) -> Result<PredictiveHead> {
    decode_head(&read_bytes(path.as_ref())?)
}

/// Confirms that `features` are the ones the head was fit on.
pub fn check_head_features(head: &PredictiveHead, features: &FeatureMatrix) -> Result<()> {
    let actual = features.content_hash();
    if actual != head.feature_hash {
        return Err(Error::HashMismatch {
            expected: head.feature_hash.clone(),
            actual,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logme::{compute_logme, LogMeOptions, TaskLabels};

    fn head(bias: bool) -> (FeatureMatrix, PredictiveHead) {
        let f = FeatureMatrix::from_fn(12, 3, |i, j| {
            ((i * 5 + j * 7) % 9) as f64 - 4.0 + 0.1 * j as f64
        })
        .unwrap();
        let labels = TaskLabels::classification((0..12).map(|i| i % 3).collect(), 4).unwrap();
        let opts = LogMeOptions {
            append_bias: bias,
            ..LogMeOptions::default()
        };
        let report = compute_logme(&f, &labels, &opts).unwrap();
        let h = PredictiveHead::from_report(&report, "m", f.content_hash(), 4).unwrap();
        (f, h)
    }

    #[test]
    fn round_trip_preserves_predictions_exactly() {
        for bias in [false, true] {
            let (f, h) = head(bias);
            let back = decode_head(&encode_head(&h).unwrap()).unwrap();
            assert_eq!(back, h);
            let q = f.row(3);
            for c in h.class_dimensions() {
                assert_eq!(
                    h.predictive_distribution(c, &q).unwrap(),
                    back.predictive_distribution(c, &q).unwrap()
                );
            }
        }
    }

    #[test]
    fn hash_pairing() {
        let (f, h) = head(false);
        check_head_features(&h, &f).unwrap();
        let other = FeatureMatrix::from_fn(12, 3, |i, j| (i + j) as f64).unwrap();
        assert!(matches!(
            check_head_features(&h, &other),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_heads_are_rejected() {
        let (_, h) = head(false);
        let good = encode_head(&h).unwrap();
        let mut bad = good.clone();
        bad[0] = b'Q';
        assert!(matches!(
            decode_head(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            decode_head(&bad),
            Err(Error::Format { offset: 8, .. })
        ));
        assert!(decode_head(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(1);
        assert!(decode_head(&trailing).is_err());
    }
}
