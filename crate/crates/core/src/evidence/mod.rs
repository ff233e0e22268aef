//! Evidence of the Bayesian linear model `y ~ N(Fw, β⁻¹I)`, `w ~ N(0, α⁻¹I)`,
//! and the three routes to its maximum over `(α, β)`.
//!
//! Everything hangs off one thin SVD of the feature matrix. With
//! `z = U_rᵀ y` and `Δ = ‖y‖² − ‖z‖²` the evidence, its gradient-free
//! maximizer and the convergence condition all become O(r) sums.

mod evaluate;
mod fixed_point;
mod iterate;
mod mackay;
mod matrix;
mod oracle;
mod solution;
mod svd;

pub use evaluate::evaluate_evidence;
pub use fixed_point::{
    check_convergence, fixed_point_map, maximize_evidence_fixed_point, maximize_projected,
    ConvergenceReport,
};
pub use mackay::{maximize_evidence_mackay, MackayVariant};
pub use matrix::{FeatureMatrix, LabelVector};
pub use oracle::{oracle_maximize, GridSpec, OracleMaximum};
pub use solution::{Backend, EvidenceSolution, SolverOptions};
pub use svd::{
    decompose, project_label_columns, project_labels, ProjectedLabels, SvdFactors, RANK_CUTOFF,
};

pub(crate) use evaluate::check_hyper;

/// Runs the requested backend on one label vector.
pub fn maximize_evidence(
    features: &FeatureMatrix,
    svd: &SvdFactors,
    y: &LabelVector,
    backend: Backend,
    options: &SolverOptions,
) -> crate::Result<EvidenceSolution> {
    match backend {
        Backend::Naive => maximize_evidence_mackay(features, svd, y, MackayVariant::Naive, options),
        Backend::SvdOptimized => {
            maximize_evidence_mackay(features, svd, y, MackayVariant::SvdOptimized, options)
        }
        Backend::FixedPoint => maximize_evidence_fixed_point(svd, y, options),
    }
}
