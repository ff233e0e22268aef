use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::{Col, ColRef, Mat, MatRef, Side};

use super::evaluate::Spectrum;
use super::fixed_point::{check_convergence, require_signal};
use super::iterate::{self, Step};
use super::matrix::{FeatureMatrix, LabelVector};
use super::solution::{Backend, EvidenceSolution, SolverOptions};
use super::svd::{project_labels, SvdFactors};
use crate::error::{Error, Result};

/// How MacKay's algorithm forms the posterior mean each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MackayVariant {
    /// Dense `A = αI + βFᵀF` and a Cholesky solve: O(D³ + nD²) per call.
    Naive,
    /// `m = β V Λ⁻¹ Vᵀ Fᵀ y` reusing the SVD: O(D·r + nD) per iteration.
    SvdOptimized,
}

fn effective_dof(sigma: &[f64], alpha: f64, beta: f64) -> f64 {
    sigma
        .iter()
        .map(|s| {
            let b = beta * s * s;
            b / (alpha + b)
        })
        .sum()
}

fn residual_energy(f: MatRef<'_, f64>, m: ColRef<'_, f64>, y: ColRef<'_, f64>) -> f64 {
    let fitted = f * m;
    (0..y.nrows()).map(|i| (fitted[i] - y[i]).powi(2)).sum()
}

fn dot(a: ColRef<'_, f64>, b: ColRef<'_, f64>) -> f64 {
    (0..a.nrows()).map(|i| a[i] * b[i]).sum()
}

/// Posterior mean at `(α, β)`, plus `log det A` when the solve yields it.
type Solver<'a> = dyn Fn(f64, f64) -> Result<(Col<f64>, Option<f64>)> + 'a;

/// MacKay's alternating updates `α ← γ/mᵀm`, `β ← (n − γ)/‖Fm − y‖²`.
pub fn maximize_evidence_mackay(
    features: &FeatureMatrix,
    svd: &SvdFactors,
    y: &LabelVector,
    variant: MackayVariant,
    options: &SolverOptions,
) -> Result<EvidenceSolution> {
    options.validate()?;
    if features.n() != svd.n() || features.dim() != svd.dim() {
        return Err(Error::invalid(
            "SVD factors do not belong to this feature matrix",
        ));
    }
    require_signal(svd, y)?;
    let projected = project_labels(svd, y)?;
    let spectrum = Spectrum::new(svd, &projected);

    let f = features.as_mat();
    let (n, d) = f.shape();
    let ys = y.as_slice();
    let y_col = Col::from_fn(n, |i| ys[i]);
    let fty = f.transpose() * &y_col;
    let sigma = svd.singular_values();

    let solver: Box<Solver<'_>> = match variant {
        MackayVariant::Naive => {
            let gram = f.transpose() * f;
            Box::new(move |alpha, beta| {
                let a = Mat::from_fn(d, d, |i, j| {
                    beta * gram[(i, j)] + if i == j { alpha } else { 0.0 }
                });
                let llt = a
                    .llt(Side::Lower)
                    .map_err(|e| Error::Numerical(format!("Cholesky of A failed: {e:?}")))?;
                let mut m = llt.solve(&fty);
                m *= faer::Scale(beta);
                let l = llt.L();
                let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
                Ok((m, Some(log_det)))
            })
        }
        MackayVariant::SvdOptimized => {
            let v = svd.right_vectors();
            let vt_fty = v.transpose() * &fty;
            Box::new(move |alpha, beta| {
                let scaled = Col::from_fn(sigma.len(), |k| {
                    beta * vt_fty[k] / (alpha + beta * sigma[k] * sigma[k])
                });
                Ok((v * &scaled, None))
            })
        }
    };

    let nf = n as f64;
    let outcome = iterate::run(options, &spectrum, |alpha, beta| {
        let (m, _) = solver(alpha, beta)?;
        let weight_norm = dot(m.as_ref(), m.as_ref());
        if weight_norm <= 0.0 {
            return Err(Error::DegenerateLabels(
                "labels are orthogonal to the feature column space".into(),
            ));
        }
        let gamma = effective_dof(sigma, alpha, beta);
        let residual = residual_energy(f, m.as_ref(), y_col.as_ref());
        Ok(Step {
            alpha: gamma / weight_norm,
            beta: (nf - gamma) / residual,
        })
    })?;

    let (alpha, beta) = (outcome.alpha, outcome.beta);
    let (m, dense_log_det) = solver(alpha, beta)?;
    let weight_norm = dot(m.as_ref(), m.as_ref());
    let residual = residual_energy(f, m.as_ref(), y_col.as_ref());
    let r = sigma.len();
    let log_det = dense_log_det.unwrap_or_else(|| {
        sigma
            .iter()
            .map(|s| (alpha + beta * s * s).ln())
            .sum::<f64>()
            + (d - r) as f64 * alpha.ln()
    });
    let log_evidence = 0.5 * nf * beta.ln() + 0.5 * d as f64 * alpha.ln()
        - 0.5 * nf * (2.0 * PI).ln()
        - 0.5 * beta * residual
        - 0.5 * alpha * weight_norm
        - 0.5 * log_det;

    Ok(EvidenceSolution {
        alpha,
        beta,
        t: alpha / beta,
        m: (0..d).map(|j| m[j]).collect(),
        gamma: effective_dof(sigma, alpha, beta),
        log_evidence,
        normalized_evidence: log_evidence / nf,
        iterations: outcome.iterations,
        converged: outcome.converged,
        backend: match variant {
            MackayVariant::Naive => Backend::Naive,
            MackayVariant::SvdOptimized => Backend::SvdOptimized,
        },
        convergence: check_convergence(svd, &projected, n),
    })
}
