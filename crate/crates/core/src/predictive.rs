//! Posterior predictive heads built from converged evidence solutions, the
//! teacher-ensemble targets they induce, and the two tuning regularizers.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::FeatureMatrix;
use crate::logme::LogMeReport;

/// Per-class posterior: mean weights and the hyper-parameters that shape the
/// covariance `A⁻¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassHead {
    pub dimension: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

/// Predictive model of one pre-trained model on one task.
///
/// The covariance is kept factored: `A = αI + β V diag(σ²) Vᵀ`, so
/// `A⁻¹ = V diag(1/(α+βσ²)) Vᵀ + (I − VVᵀ)/α` with `V` the right singular
/// vectors of the training features.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveHead {
    pub model_id: String,
    /// Dimension of raw query features (before any bias column).
    pub feature_dim: usize,
    /// Content hash of the training features the head was fit on.
    pub feature_hash: String,
    pub append_bias: bool,
    /// Label dimensionality of the task, including skipped dimensions.
    pub num_dimensions: usize,
    pub right_vectors: Mat<f64>,
    pub singular_values: Vec<f64>,
    pub classes: Vec<ClassHead>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PredictiveHead {
    /// Builds a head from a report that still carries its SVD factors.
    pub fn from_report(
        report: &LogMeReport,
        model_id: impl Into<String>,
        feature_hash: impl Into<String>,
        num_dimensions: usize,
    ) -> Result<Self> {
        let svd = report
            .factors
            .as_ref()
            .ok_or_else(|| Error::invalid("report carries no SVD factors"))?;
        let classes = report
            .per_dimension
            .iter()
            .map(|d| ClassHead {
                dimension: d.dimension,
                alpha: d.solution.alpha,
                beta: d.solution.beta,
                weights: d.solution.m.clone(),
            })
            .collect();
        let head = Self {
            model_id: model_id.into(),
            feature_dim: report.feature_dim - usize::from(report.append_bias),
            feature_hash: feature_hash.into(),
            append_bias: report.append_bias,
            num_dimensions,
            right_vectors: svd.right_vectors().to_owned(),
            singular_values: svd.singular_values().to_vec(),
            classes,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.internal_dim();
        if self.right_vectors.nrows() != dim {
            return Err(Error::DimensionMismatch {
                what: "right singular vector rows",
                expected: dim,
                got: self.right_vectors.nrows(),
            });
        }
        if self.right_vectors.ncols() != self.singular_values.len() {
            return Err(Error::DimensionMismatch {
                what: "right singular vector columns",
                expected: self.singular_values.len(),
                got: self.right_vectors.ncols(),
            });
        }
        if self
            .singular_values
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::invalid(
                "singular values must be positive and finite",
            ));
        }
        if self.classes.is_empty() {
            return Err(Error::invalid("head has no classes"));
        }
        for c in &self.classes {
            if c.weights.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "class weight length",
                    expected: dim,
                    got: c.weights.len(),
                });
            }
            if c.dimension >= self.num_dimensions {
                return Err(Error::invalid(format!(
                    "class {} out of range for {} dimensions",
                    c.dimension, self.num_dimensions
                )));
            }
            crate::evidence::check_hyper(c.alpha, c.beta)?;
        }
        Ok(())
    }

    /// Length of the weight vectors, counting the bias column if present.
    pub fn internal_dim(&self) -> usize {
        self.feature_dim + usize::from(self.append_bias)
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Dimensions with a fitted posterior, in storage order.
    pub fn class_dimensions(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.dimension).collect()
    }

    pub fn class(&self, dimension: usize) -> Result<&ClassHead> {
        self.classes
            .iter()
            .find(|c| c.dimension == dimension)
            .ok_or_else(|| Error::invalid(format!("no fitted posterior for dimension {dimension}")))
    }

    fn query(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "query feature length",
                expected: self.feature_dim,
                got: f.len(),
            });
        }
        let mut q = f.to_vec();
        if self.append_bias {
            q.push(1.0);
        }
        Ok(q)
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let vr = self.right_vectors.as_ref();
        (0..self.rank())
            .map(|k| (0..vr.nrows()).map(|j| vr[(j, k)] * v[j]).sum())
            .collect()
    }

    fn expand(&self, coef: &[f64]) -> Vec<f64> {
        let vr = self.right_vectors.as_ref();
        (0..vr.nrows())
            .map(|j| coef.iter().enumerate().map(|(k, c)| vr[(j, k)] * c).sum())
            .collect()
    }

    /// `A v` in the internal (possibly bias-extended) space.
    pub fn apply_precision(&self, dimension: usize, v: &[f64]) -> Result<Vec<f64>> {
        let c = self.class(dimension)?;
        self.check_internal(v)?;
        let p = self.project(v);
        let coef: Vec<f64> = p
            .iter()
            .zip(&self.singular_values)
            .map(|(pk, s)| c.beta * s * s * pk)
            .collect();
        let low = self.expand(&coef);
        Ok(v.iter()
            .zip(low)
            .map(|(vi, li)| c.alpha * vi + li)
            .collect())
    }

    /// `A⁻¹ v` in the internal space, without forming `A⁻¹`.
    pub fn apply_covariance(&self, dimension: usize, v: &[f64]) -> Result<Vec<f64>> {
        let c = self.class(dimension)?;
        self.check_internal(v)?;
        let p = self.project(v);
        let coef: Vec<f64> = p
            .iter()
            .zip(&self.singular_values)
            .map(|(pk, s)| pk / (c.alpha + c.beta * s * s) - pk / c.alpha)
            .collect();
        let low = self.expand(&coef);
        Ok(v.iter()
            .zip(low)
            .map(|(vi, li)| vi / c.alpha + li)
            .collect())
    }

    fn check_internal(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.internal_dim() {
            return Err(Error::DimensionMismatch {
                what: "vector length",
                expected: self.internal_dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Mean `fᵀm` and variance `fᵀA⁻¹f + 1/β` of the prediction for `f`.
    pub fn predictive_distribution(&self, dimension: usize, f: &[f64]) -> Result<(f64, f64)> {
        let q = self.query(f)?;
        let c = self.class(dimension)?;
        let mean = dot(&q, &c.weights);
        // fᵀA⁻¹f = Σ p_k²/(α+βσ_k²) + (‖f‖² − ‖p‖²)/α, with p = Vᵀf
        let p = self.project(&q);
        let head: f64 = p
            .iter()
            .zip(&self.singular_values)
            .map(|(pk, s)| pk * pk / (c.alpha + c.beta * s * s))
            .sum();
        let tail = (dot(&q, &q) - dot(&p, &p)).max(0.0) / c.alpha;
        Ok((mean, head + tail + 1.0 / c.beta))
    }

    /// Predictive means for every row of `features` and every fitted class,
    /// columns in [`class_dimensions`](Self::class_dimensions) order.
    pub fn predict_means(&self, features: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if features.ncols() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: self.feature_dim,
                got: features.ncols(),
            });
        }
        let d = self.feature_dim;
        Ok(Mat::from_fn(
            features.nrows(),
            self.classes.len(),
            |i, k| {
                let w = &self.classes[k].weights;
                let mut acc: f64 = (0..d).map(|j| features[(i, j)] * w[j]).sum();
                if self.append_bias {
                    acc += w[d];
                }
                acc
            },
        ))
    }
}

/// Averaged teacher predictions, fixed before tuning starts.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleTarget {
    pub teachers: usize,
    /// Label dimensions covered, one per target column.
    pub dimensions: Vec<usize>,
    /// `n×C`, entry `(i, c) = (1/K) Σ_k f_{k,i}ᵀ m_{k,c}`.
    pub targets: Mat<f64>,
}

/// Averages the predictive means of `K` teacher heads over their own features.
/// Every head must cover the same label dimensions.
pub fn ensemble_target(
    heads: &[PredictiveHead],
    features: &[&FeatureMatrix],
) -> Result<EnsembleTarget> {
    if heads.is_empty() {
        return Err(Error::invalid("ensemble needs at least one teacher"));
    }
    if heads.len() != features.len() {
        return Err(Error::DimensionMismatch {
            what: "teacher feature matrices",
            expected: heads.len(),
            got: features.len(),
        });
    }
    let n = features[0].n();
    let dimensions = heads[0].class_dimensions();
    let mut sum = Mat::<f64>::zeros(n, dimensions.len());
    for (head, f) in heads.iter().zip(features) {
        if f.n() != n {
            return Err(Error::DimensionMismatch {
                what: "teacher sample count",
                expected: n,
                got: f.n(),
            });
        }
        if head.class_dimensions() != dimensions {
            return Err(Error::invalid(format!(
                "teacher '{}' covers different label dimensions",
                head.model_id
            )));
        }
        sum += head.predict_means(f.as_mat())?;
    }
    let k = heads.len() as f64;
    Ok(EnsembleTarget {
        teachers: heads.len(),
        dimensions,
        targets: Mat::from_fn(n, sum.ncols(), |i, c| sum[(i, c)] / k),
    })
}

/// `(1/n) Σ_i (1/C) Σ_c (target_{i,c} − f_{t,i}ᵀ m_{t,c})²`.
pub fn b_tuning_loss(
    target: &EnsembleTarget,
    student_features: MatRef<'_, f64>,
    student_head: &PredictiveHead,
) -> Result<f64> {
    if student_head.class_dimensions() != target.dimensions {
        return Err(Error::invalid(
            "student head and ensemble cover different label dimensions",
        ));
    }
    if student_features.nrows() != target.targets.nrows() {
        return Err(Error::DimensionMismatch {
            what: "student sample count",
            expected: target.targets.nrows(),
            got: student_features.nrows(),
        });
    }
    let pred = student_head.predict_means(student_features)?;
    let (n, c) = pred.shape();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..c {
            let e = target.targets[(i, k)] - pred[(i, k)];
            acc += e * e;
        }
    }
    Ok(acc / (n * c) as f64)
}

/// `(1/n) Σ_i (1/K) Σ_k ‖φ_k(x_i) − W_k φ_t(x_i)‖₂` with the unsquared norm.
/// `transforms[k]` has shape `D_k × D_t`.
pub fn kd_loss(
    teacher_features: &[MatRef<'_, f64>],
    student_features: MatRef<'_, f64>,
    transforms: &[MatRef<'_, f64>],
) -> Result<f64> {
    if teacher_features.is_empty() {
        return Err(Error::invalid("KD needs at least one teacher"));
    }
    if teacher_features.len() != transforms.len() {
        return Err(Error::DimensionMismatch {
            what: "transform count",
            expected: teacher_features.len(),
            got: transforms.len(),
        });
    }
    let n = student_features.nrows();
    let dt = student_features.ncols();
    let mut acc = 0.0;
    for (phi, w) in teacher_features.iter().zip(transforms) {
        if phi.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "teacher sample count",
                expected: n,
                got: phi.nrows(),
            });
        }
        if w.shape() != (phi.ncols(), dt) {
            return Err(Error::invalid(format!(
                "transform is {}×{}, expected {}×{}",
                w.nrows(),
                w.ncols(),
                phi.ncols(),
                dt
            )));
        }
        let mapped = student_features * w.transpose();
        for i in 0..n {
            let sq: f64 = (0..phi.ncols())
                .map(|j| (phi[(i, j)] - mapped[(i, j)]).powi(2))
                .sum();
            acc += sq.sqrt();
        }
    }
    Ok(acc / (n * teacher_features.len()) as f64)
}
