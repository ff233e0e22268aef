use serde::{Deserialize, Serialize};

use super::fixed_point::ConvergenceReport;
use crate::error::{Error, Result};

/// Evidence-maximization backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// MacKay updates with a dense `A = αI + βFᵀF` solve each iteration.
    Naive,
    /// MacKay updates with `m = β V Λ⁻¹ Vᵀ Fᵀ y`.
    SvdOptimized,
    /// Scalar iteration `t ← f(t)` over the singular spectrum.
    #[default]
    FixedPoint,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Naive, Backend::SvdOptimized, Backend::FixedPoint];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Naive => "naive",
            Backend::SvdOptimized => "svd-optimized",
            Backend::FixedPoint => "fixed-point",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Backend::Naive),
            "svd-optimized" | "mackay" | "optimized" => Ok(Backend::SvdOptimized),
            "fixed-point" | "fixed_point" | "fp" => Ok(Backend::FixedPoint),
            other => Err(Error::invalid(format!("unknown backend '{other}'"))),
        }
    }
}

/// Stopping rule and starting point shared by every backend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once `|t' − t| ≤ tolerance · t`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_alpha: f64,
    pub initial_beta: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 200,
            initial_alpha: 1.0,
            initial_beta: 1.0,
        }
    }
}

impl SolverOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Domain {
                name: "tolerance",
                value: self.tolerance,
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        super::evaluate::check_hyper(self.initial_alpha, self.initial_beta)
    }
}

/// Converged hyper-parameters and posterior for one `(F, y)` pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvidenceSolution {
    pub alpha: f64,
    pub beta: f64,
    /// `α/β`
    pub t: f64,
    /// Posterior mean weights, length `D`.
    #[serde(skip)]
    pub m: Vec<f64>,
    /// Effective number of well-determined directions.
    pub gamma: f64,
    pub log_evidence: f64,
    /// `log_evidence / n`.
    pub normalized_evidence: f64,
    pub iterations: usize,
    pub converged: bool,
    pub backend: Backend,
    pub convergence: ConvergenceReport,
}
