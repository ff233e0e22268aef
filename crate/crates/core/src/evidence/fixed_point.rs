//! The scalar view of MacKay's updates.
//!
//! One MacKay step maps `(α, β)` to `(γ/mᵀm, (n−γ)/‖Fm−y‖²)`. The map is
//! homogeneous of degree one, so it only moves the ratio `t = α/β`:
//!
//! ```text
//! f(t) = (n / (n − Σ σ²/(t+σ²)) − 1) · t² · (Σ z²/(t+σ²)² + Δ/t²) / Σ σ²z²/(t+σ²)²
//! ```
//!
//! with sums over the `r` non-zero singular values and `Δ = ‖y‖² − Σ z²`.
//! Every evaluation costs O(r) once the SVD and `z = U_rᵀ y` are known.

use serde::{Deserialize, Serialize};

use super::evaluate::{posterior_mean, Spectrum};
use super::iterate::{self, Step};
use super::matrix::LabelVector;
use super::solution::{Backend, EvidenceSolution, SolverOptions};
use super::svd::{project_labels, ProjectedLabels, SvdFactors};
use crate::error::{Error, Result};

/// Sufficient condition for a positive fixed point of `f`.
///
/// `f(0⁺)` is positive whenever `r < n`, and `f(t)/t` tends to `slope_at_infinity`;
/// a slope below one forces a crossing of the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `r < n`
    pub rank_condition: bool,
    /// `Σ_{i,j} (z_i² − z_j²)(σ_i² − σ_j²) = 2n Σσ²z² − 2 (Σσ²)(Σz²)`
    pub ordering_statistic: f64,
    /// `lim f(t)/t` as `t → ∞`.
    pub slope_at_infinity: f64,
    /// `lim f(t)` as `t → 0`, equal to `r/(n−r) · Δ / Σ z_i²/σ_i²`; only defined when `r < n`.
    pub limit_at_zero: Option<f64>,
    pub guaranteed: bool,
    /// Whether `ordering_statistic > 0` and `slope_at_infinity < 1` agree.
    pub consistent: bool,
}

pub fn check_convergence(
    svd: &SvdFactors,
    projected: &ProjectedLabels,
    n: usize,
) -> ConvergenceReport {
    let r = svd.rank();
    let mut sum_s2 = 0.0;
    let mut sum_z2 = projected.residual_energy;
    let mut sum_s2z2 = 0.0;
    let mut head_weighted = 0.0;
    for (&s, &z) in svd.singular_values().iter().zip(&projected.z_head) {
        let (s2, z2) = (s * s, z * z);
        sum_s2 += s2;
        sum_z2 += z2;
        head_weighted += z2 / s2;
        sum_s2z2 += s2 * z2;
    }
    let nf = n as f64;
    let ordering_statistic = 2.0 * nf * sum_s2z2 - 2.0 * sum_s2 * sum_z2;
    let slope_at_infinity = if sum_s2z2 > 0.0 {
        (sum_s2 / nf) * (sum_z2 / sum_s2z2)
    } else {
        f64::INFINITY
    };
    let rank_condition = r < n;
    let limit_at_zero = rank_condition.then(|| {
        let ratio = r as f64 / (nf - r as f64);
        if head_weighted > 0.0 {
            ratio * projected.residual_energy / head_weighted
        } else {
            f64::INFINITY
        }
    });
    let guaranteed = rank_condition && ordering_statistic > 0.0;
    let consistent = (ordering_statistic > 0.0) == (slope_at_infinity < 1.0);
    ConvergenceReport {
        rank_condition,
        ordering_statistic,
        slope_at_infinity,
        limit_at_zero,
        guaranteed,
        consistent,
    }
}

/// `f(t)`; pure.
pub fn fixed_point_map(
    svd: &SvdFactors,
    projected: &ProjectedLabels,
    n: usize,
    t: f64,
) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain {
            name: "t",
            value: t,
        });
    }
    if projected.z_head.len() != svd.rank() {
        return Err(Error::DimensionMismatch {
            what: "projected label length",
            expected: svd.rank(),
            got: projected.z_head.len(),
        });
    }
    let mut gamma = 0.0;
    let mut numer = 0.0;
    let mut denom = 0.0;
    for (&s, &z) in svd.singular_values().iter().zip(&projected.z_head) {
        let s2 = s * s;
        let q = t + s2;
        gamma += s2 / q;
        numer += z * z / (q * q);
        denom += s2 * z * z / (q * q);
    }
    if denom <= 0.0 {
        return Err(Error::DegenerateLabels(
            "labels are orthogonal to the feature column space".into(),
        ));
    }
    let nf = n as f64;
    numer += projected.residual_energy / (t * t);
    Ok((nf / (nf - gamma) - 1.0) * t * t * numer / denom)
}

pub(crate) fn require_signal(svd: &SvdFactors, y: &LabelVector) -> Result<()> {
    if y.len() != svd.n() {
        return Err(Error::DimensionMismatch {
            what: "label vector length",
            expected: svd.n(),
            got: y.len(),
        });
    }
    if y.is_constant() {
        return Err(Error::DegenerateLabels("constant labels".into()));
    }
    if svd.rank() == 0 {
        return Err(Error::NoSignal);
    }
    Ok(())
}

/// Evidence maximization by iterating `t ← f(t)` over the singular spectrum.
pub fn maximize_evidence_fixed_point(
    svd: &SvdFactors,
    y: &LabelVector,
    options: &SolverOptions,
) -> Result<EvidenceSolution> {
    require_signal(svd, y)?;
    let projected = project_labels(svd, y)?;
    maximize_projected(svd, &projected, options)
}

/// Same as [`maximize_evidence_fixed_point`] for labels already projected
/// onto `U_r`. Constant-label detection is the caller's job on this path.
pub fn maximize_projected(
    svd: &SvdFactors,
    projected: &ProjectedLabels,
    options: &SolverOptions,
) -> Result<EvidenceSolution> {
    options.validate()?;
    if svd.rank() == 0 {
        return Err(Error::NoSignal);
    }
    let spectrum = Spectrum::new(svd, projected);
    let n = spectrum.n as f64;
    let outcome = iterate::run(options, &spectrum, |alpha, beta| {
        let stats = spectrum.at_ratio(alpha / beta);
        if stats.weight_norm <= 0.0 {
            return Err(Error::DegenerateLabels(
                "labels are orthogonal to the feature column space".into(),
            ));
        }
        Ok(Step {
            alpha: stats.gamma / stats.weight_norm,
            beta: (n - stats.gamma) / stats.residual,
        })
    })?;

    let t = outcome.alpha / outcome.beta;
    let gamma = spectrum.at_ratio(t).gamma;
    let log_evidence = spectrum.log_evidence(outcome.alpha, outcome.beta);
    Ok(EvidenceSolution {
        alpha: outcome.alpha,
        beta: outcome.beta,
        t,
        m: posterior_mean(svd, &projected.z_head, t),
        gamma,
        log_evidence,
        normalized_evidence: log_evidence / n,
        iterations: outcome.iterations,
        converged: outcome.converged,
        backend: Backend::FixedPoint,
        convergence: check_convergence(svd, projected, svd.n()),
    })
}
