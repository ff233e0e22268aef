use faer::{Mat, MatRef};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Features extracted by one pre-trained model: `n` samples by `D` dimensions.
///
/// Always holds at least two samples and one dimension, every entry finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Mat<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        let (n, d) = data.shape();
        if n < 2 {
            return Err(Error::invalid(format!(
                "feature matrix needs at least 2 samples, got {n}"
            )));
        }
        if d < 1 {
            return Err(Error::invalid("feature matrix needs at least 1 dimension"));
        }
        for j in 0..d {
            for i in 0..n {
                if !data[(i, j)].is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite feature at row {i}, column {j}"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a matrix from row-major storage.
    pub fn from_rows(n: usize, d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n.saturating_mul(d) {
            return Err(Error::DimensionMismatch {
                what: "row-major feature buffer",
                expected: n.saturating_mul(d),
                got: values.len(),
            });
        }
        Self::new(Mat::from_fn(n, d, |i, j| values[i * d + j]))
    }

    pub fn from_fn(n: usize, d: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(Mat::from_fn(n, d, f))
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.data[(i, j)]).collect()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let (n, d) = self.data.shape();
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    /// Horizontal concatenation `[A, B, ...]`; all parts must share `n`.
    pub fn concat_columns(parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let n = first.n();
        for p in parts {
            if p.n() != n {
                return Err(Error::DimensionMismatch {
                    what: "concatenated feature rows",
                    expected: n,
                    got: p.n(),
                });
            }
        }
        let total: usize = parts.iter().map(|p| p.dim()).sum();
        let mut out = Mat::zeros(n, total);
        let mut offset = 0;
        for p in parts {
            out.as_mut()
                .submatrix_mut(0, offset, n, p.dim())
                .copy_from(p.as_mat());
            offset += p.dim();
        }
        Ok(Self { data: out })
    }

    /// Appends a constant column of ones, turning the linear head into an affine one.
    pub fn with_bias_column(&self) -> Self {
        let (n, d) = self.data.shape();
        let data = Mat::from_fn(n, d + 1, |i, j| if j < d { self.data[(i, j)] } else { 1.0 });
        Self { data }
    }

    /// SHA-256 over `n`, `D` (u64 LE) and the row-major f64 LE payload.
    pub fn content_hash(&self) -> String {
        let (n, d) = self.data.shape();
        let mut hasher = Sha256::new();
        hasher.update((n as u64).to_le_bytes());
        hasher.update((d as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..d {
                hasher.update(self.data[(i, j)].to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One scalar regression target per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
}

impl LabelVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite label at index {i}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// True when every entry equals the first one.
    pub fn is_constant(&self) -> bool {
        match self.values.first() {
            Some(&first) => self.values.iter().all(|&v| v == first),
            None => true,
        }
    }
}
