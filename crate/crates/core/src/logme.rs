//! LogME of a whole task: one SVD of the features, one evidence
//! maximization per label dimension, averaged.

use std::sync::Arc;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{
    decompose, maximize_evidence, maximize_projected, project_label_columns, Backend,
    EvidenceSolution, FeatureMatrix, LabelVector, SolverOptions, SvdFactors,
};

/// Task labels, either class indices (one-hot encoded internally) or real targets.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskLabels {
    Classification {
        indices: Vec<usize>,
        num_classes: usize,
    },
    /// n×C targets.
    Regression { targets: Mat<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" | "cls" => Ok(TaskKind::Classification),
            "regression" | "reg" => Ok(TaskKind::Regression),
            other => Err(Error::invalid(format!("unknown task kind '{other}'"))),
        }
    }
}

impl TaskLabels {
    pub fn classification(indices: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((i, &c)) = indices.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(Error::invalid(format!(
                "class index {c} at position {i} is out of range for {num_classes} classes"
            )));
        }
        let mut seen = vec![false; num_classes];
        for &c in &indices {
            seen[c] = true;
        }
        if seen.iter().filter(|s| **s).count() < 2 {
            return Err(Error::invalid(
                "classification needs at least 2 distinct classes",
            ));
        }
        Ok(TaskLabels::Classification {
            indices,
            num_classes,
        })
    }

    pub fn regression(targets: Mat<f64>) -> Result<Self> {
        for j in 0..targets.ncols() {
            for i in 0..targets.nrows() {
                if !targets[(i, j)].is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite regression target at row {i}, column {j}"
                    )));
                }
            }
        }
        if targets.ncols() == 0 {
            return Err(Error::invalid(
                "regression needs at least one target column",
            ));
        }
        Ok(TaskLabels::Regression { targets })
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskLabels::Classification { .. } => TaskKind::Classification,
            TaskLabels::Regression { .. } => TaskKind::Regression,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            TaskLabels::Classification { indices, .. } => indices.len(),
            TaskLabels::Regression { targets } => targets.nrows(),
        }
    }

    /// Label dimensionality `C`.
    pub fn dims(&self) -> usize {
        match self {
            TaskLabels::Classification { num_classes, .. } => *num_classes,
            TaskLabels::Regression { targets } => targets.ncols(),
        }
    }

    /// n×C regression targets; one-hot `{0, 1}` columns for classification.
    pub fn target_matrix(&self) -> Mat<f64> {
        match self {
            TaskLabels::Classification {
                indices,
                num_classes,
            } => Mat::from_fn(indices.len(), *num_classes, |i, c| {
                if indices[i] == c {
                    1.0
                } else {
                    0.0
                }
            }),
            TaskLabels::Regression { targets } => targets.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMeOptions {
    pub backend: Backend,
    pub solver: SolverOptions,
    /// Append a constant feature so the linear head gets an intercept.
    pub append_bias: bool,
}

impl Default for LogMeOptions {
    fn default() -> Self {
        Self {
            backend: Backend::FixedPoint,
            solver: SolverOptions::default(),
            append_bias: false,
        }
    }
}

impl LogMeOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionResult {
    pub dimension: usize,
    pub solution: EvidenceSolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedDimension {
    pub dimension: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogMeReport {
    pub logme: f64,
    pub backend: Backend,
    pub n: usize,
    /// Dimension of the features the evidence was computed on (after any bias column).
    pub feature_dim: usize,
    pub rank: usize,
    pub append_bias: bool,
    pub per_dimension: Vec<DimensionResult>,
    pub skipped_dimensions: Vec<SkippedDimension>,
    #[serde(skip)]
    pub factors: Option<Arc<SvdFactors>>,
}

impl LogMeReport {
    pub fn dimension(&self, c: usize) -> Option<&EvidenceSolution> {
        self.per_dimension
            .iter()
            .find(|d| d.dimension == c)
            .map(|d| &d.solution)
    }
}

fn column(targets: MatRef<'_, f64>, c: usize) -> Vec<f64> {
    (0..targets.nrows()).map(|i| targets[(i, c)]).collect()
}

/// LogME of `features` for `labels`: mean normalized log maximum evidence over
/// every usable label dimension.
///
/// Absent classes and constant regression columns are skipped and listed in
/// the report. Dimensions run in parallel on a shared SVD.
pub fn compute_logme(
    features: &FeatureMatrix,
    labels: &TaskLabels,
    options: &LogMeOptions,
) -> Result<LogMeReport> {
    if labels.n() != features.n() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: features.n(),
            got: labels.n(),
        });
    }
    let biased;
    let features = if options.append_bias {
        biased = features.with_bias_column();
        &biased
    } else {
        features
    };
    let svd = decompose(features)?;
    if svd.rank() == 0 {
        return Err(Error::NoSignal);
    }
    let targets = labels.target_matrix();

    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..targets.ncols() {
        let col = column(targets.as_ref(), c);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            let reason = match labels.kind() {
                TaskKind::Classification => "class absent from the sample".to_string(),
                TaskKind::Regression => "constant target column".to_string(),
            };
            log::warn!("skipping label dimension {c}: {reason}");
            skipped.push(SkippedDimension {
                dimension: c,
                reason,
            });
        } else {
            usable.push(c);
        }
    }
    if usable.is_empty() {
        return Err(Error::NoUsableDimension);
    }

    let solver = options.solver;
    let per_dimension: Vec<DimensionResult> = match options.backend {
        Backend::FixedPoint => {
            let projected = project_label_columns(&svd, targets.as_ref())?;
            usable
                .par_iter()
                .map(|&c| {
                    maximize_projected(&svd, &projected[c], &solver).map(|solution| {
                        DimensionResult {
                            dimension: c,
                            solution,
                        }
                    })
                })
                .collect::<Result<_>>()?
        }
        backend => usable
            .par_iter()
            .map(|&c| {
                let y = LabelVector::new(column(targets.as_ref(), c))?;
                maximize_evidence(features, &svd, &y, backend, &solver).map(|solution| {
                    DimensionResult {
                        dimension: c,
                        solution,
                    }
                })
            })
            .collect::<Result<_>>()?,
    };

    let logme = per_dimension
        .iter()
        .map(|d| d.solution.normalized_evidence)
        .sum::<f64>()
        / per_dimension.len() as f64;

    Ok(LogMeReport {
        logme,
        backend: options.backend,
        n: features.n(),
        feature_dim: features.dim(),
        rank: svd.rank(),
        append_bias: options.append_bias,
        per_dimension,
        skipped_dimensions: skipped,
        factors: Some(Arc::new(svd)),
    })
}

/// Single-target regression: exactly the evidence-module result.
pub fn compute_logme_regression_1d(
    features: &FeatureMatrix,
    y: &LabelVector,
    options: &LogMeOptions,
) -> Result<EvidenceSolution> {
    let biased;
    let features = if options.append_bias {
        biased = features.with_bias_column();
        &biased
    } else {
        features
    };
    let svd = decompose(features)?;
    maximize_evidence(features, &svd, y, options.backend, &options.solver)
}
