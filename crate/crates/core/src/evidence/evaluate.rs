use std::f64::consts::PI;

use super::matrix::LabelVector;
use super::svd::{project_labels, ProjectedLabels, SvdFactors};
use crate::error::{Error, Result};

/// Everything the evidence depends on once `F` and `y` are reduced to the
/// singular basis: `σ²`, `z_head`, `Δ`, `n` and `D`.
#[derive(Clone, Debug)]
pub(crate) struct Spectrum<'a> {
    pub n: usize,
    pub sigma: &'a [f64],
    pub z: &'a [f64],
    pub delta: f64,
}

/// Sufficient statistics of the posterior at a given `t = α/β`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RatioStats {
    pub gamma: f64,
    /// `mᵀm`
    pub weight_norm: f64,
    /// `‖Fm − y‖²`
    pub residual: f64,
}

impl<'a> Spectrum<'a> {
    pub fn new(svd: &'a SvdFactors, projected: &'a ProjectedLabels) -> Self {
        debug_assert_eq!(projected.z_head.len(), svd.rank());
        Self {
            n: svd.n(),
            sigma: svd.singular_values(),
            z: &projected.z_head,
            delta: projected.residual_energy,
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// O(r) evaluation of `γ`, `mᵀm` and `‖Fm − y‖²`; all three only depend on `t`.
    pub fn at_ratio(&self, t: f64) -> RatioStats {
        let mut gamma = 0.0;
        let mut weight_norm = 0.0;
        let mut residual = self.delta;
        for (&s, &z) in self.sigma.iter().zip(self.z) {
            let s2 = s * s;
            let q = t + s2;
            gamma += s2 / q;
            weight_norm += s2 * z * z / (q * q);
            let shrink = t / q;
            residual += z * z * shrink * shrink;
        }
        RatioStats {
            gamma,
            weight_norm,
            residual,
        }
    }

    /// Log evidence at `(α, β)`, every term expressed through the singular basis.
    pub fn log_evidence(&self, alpha: f64, beta: f64) -> f64 {
        let n = self.n as f64;
        let mut residual = self.delta;
        let mut weight_norm = 0.0;
        let mut log_det_signal = 0.0;
        for (&s, &z) in self.sigma.iter().zip(self.z) {
            let s2 = s * s;
            let q = alpha + beta * s2;
            residual += alpha * alpha * z * z / (q * q);
            weight_norm += beta * beta * s2 * z * z / (q * q);
            log_det_signal += q.ln();
        }
        // D/2 log α − ½ (D − r) log α collapses to r/2 log α: the D-dependence
        // cancels exactly, so evaluate without forming the two large terms.
        let r = self.rank() as f64;
        0.5 * n * beta.ln() + 0.5 * r * alpha.ln()
            - 0.5 * n * (2.0 * PI).ln()
            - 0.5 * beta * residual
            - 0.5 * alpha * weight_norm
            - 0.5 * log_det_signal
    }
}

/// `m = V_r diag(βσ_i/(α+βσ_i²)) z_head`, written in terms of `t = α/β`.
pub(crate) fn posterior_mean(svd: &SvdFactors, z: &[f64], t: f64) -> Vec<f64> {
    let v = svd.right_vectors();
    let coef: Vec<f64> = svd
        .singular_values()
        .iter()
        .zip(z)
        .map(|(&s, &zi)| s * zi / (t + s * s))
        .collect();
    (0..svd.dim())
        .map(|j| coef.iter().enumerate().map(|(k, c)| v[(j, k)] * c).sum())
        .collect()
}

pub(crate) fn check_hyper(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain {
            name: "alpha",
            value: alpha,
        });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain {
            name: "beta",
            value: beta,
        });
    }
    Ok(())
}

/// Log evidence `log p(y | F, α, β)` and the posterior mean `m`.
pub fn evaluate_evidence(
    svd: &SvdFactors,
    y: &LabelVector,
    alpha: f64,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    check_hyper(alpha, beta)?;
    let projected = project_labels(svd, y)?;
    Ok(evaluate_projected(svd, &projected, alpha, beta))
}

pub(crate) fn evaluate_projected(
    svd: &SvdFactors,
    projected: &ProjectedLabels,
    alpha: f64,
    beta: f64,
) -> (f64, Vec<f64>) {
    let spectrum = Spectrum::new(svd, projected);
    let log_evidence = spectrum.log_evidence(alpha, beta);
    (
        log_evidence,
        posterior_mean(svd, &projected.z_head, alpha / beta),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{decompose, FeatureMatrix};
    use faer::Mat;

    #[test]
    fn zero_features_collapse_to_noise_model() {
        let f = FeatureMatrix::from_fn(4, 2, |_, _| 0.0).unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0; 4]).unwrap();
        let (l, m) = evaluate_evidence(&svd, &y, 1.0, 1.0).unwrap();
        let want = -2.0 * (2.0 * PI).ln() - 2.0;
        assert!((l - want).abs() < 1e-12, "{l} vs {want}");
        assert!((want - -5.67576).abs() < 1e-5);
        assert_eq!(m, vec![0.0, 0.0]);
    }

    #[test]
    fn one_by_one_hand_evaluation() {
        // A = 2, m = 1/2, ‖Fm − y‖² = 1/4, mᵀm = 1/4
        let svd = SvdFactors::from_parts(
            1,
            1,
            Mat::from_fn(1, 1, |_, _| 1.0),
            vec![1.0],
            Mat::from_fn(1, 1, |_, _| 1.0),
        )
        .unwrap();
        let y = LabelVector::new(vec![1.0]).unwrap();
        let (l, m) = evaluate_evidence(&svd, &y, 1.0, 1.0).unwrap();
        let want = -0.5 * (2.0 * PI).ln() - 0.125 - 0.125 - 0.5 * 2f64.ln();
        assert!((l - want).abs() < 1e-12);
        assert!((l - -1.51551).abs() < 1e-5);
        assert!((m[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_hyperparameters() {
        let f = FeatureMatrix::from_fn(3, 1, |i, _| i as f64).unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            evaluate_evidence(&svd, &y, 0.0, 1.0),
            Err(Error::Domain { name: "alpha", .. })
        ));
        assert!(matches!(
            evaluate_evidence(&svd, &y, 1.0, -1.0),
            Err(Error::Domain { name: "beta", .. })
        ));
    }

    #[test]
    fn ratio_stats_match_direct_evaluation() {
        let f = FeatureMatrix::from_fn(6, 2, |i, j| {
            ((i + 1) * (j + 2)) as f64 % 5.0 + 0.5 * j as f64
        })
        .unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0, -1.0, 2.0, 0.5, 0.0, 3.0]).unwrap();
        let p = project_labels(&svd, &y).unwrap();
        let s = Spectrum::new(&svd, &p);
        let (alpha, beta) = (0.3, 1.7);
        let stats = s.at_ratio(alpha / beta);
        let (_, m) = evaluate_projected(&svd, &p, alpha, beta);
        let mm: f64 = m.iter().map(|x| x * x).sum();
        assert!((mm - stats.weight_norm).abs() < 1e-12 * mm.max(1.0));
        let fm: Vec<f64> = (0..6)
            .map(|i| (0..2).map(|j| f.get(i, j) * m[j]).sum::<f64>())
            .collect();
        let res: f64 = fm
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((res - stats.residual).abs() < 1e-10);
    }
}
