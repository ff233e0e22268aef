use serde::{Deserialize, Serialize};

use super::evaluate::Spectrum;
use super::matrix::LabelVector;
use super::svd::{project_labels, SvdFactors};
use crate::error::{Error, Result};

/// Log-spaced `(α, β)` grid for the exhaustive evidence oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub alpha_points: usize,
    pub beta_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alpha_min: 1e-6,
            alpha_max: 1e6,
            beta_min: 1e-6,
            beta_max: 1e6,
            alpha_points: 200,
            beta_points: 200,
        }
    }
}

impl GridSpec {
    fn axis(min: f64, max: f64, points: usize) -> Vec<f64> {
        let (lo, hi) = (min.ln(), max.ln());
        (0..points)
            .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
            .collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        Self::axis(self.alpha_min, self.alpha_max, self.alpha_points)
    }

    pub fn betas(&self) -> Vec<f64> {
        Self::axis(self.beta_min, self.beta_max, self.beta_points)
    }

    /// Natural-log spacing between neighbouring α values.
    pub fn log_step_alpha(&self) -> f64 {
        (self.alpha_max / self.alpha_min).ln() / (self.alpha_points - 1) as f64
    }

    pub fn log_step_beta(&self) -> f64 {
        (self.beta_max / self.beta_min).ln() / (self.beta_points - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        let bounds = [self.alpha_min, self.alpha_max, self.beta_min, self.beta_max];
        if bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::invalid("grid bounds must be positive and finite"));
        }
        if self.alpha_min >= self.alpha_max || self.beta_min >= self.beta_max {
            return Err(Error::invalid("grid bounds must be increasing"));
        }
        if self.alpha_points < 50 || self.beta_points < 50 {
            return Err(Error::invalid("grid needs at least 50 points per axis"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMaximum {
    pub alpha: f64,
    pub beta: f64,
    pub log_evidence: f64,
}

/// Exhaustive grid search of the log evidence. Slow by design; used to
/// cross-check the iterative solvers.
pub fn oracle_maximize(
    svd: &SvdFactors,
    y: &LabelVector,
    grid: &GridSpec,
) -> Result<OracleMaximum> {
    grid.validate()?;
    let projected = project_labels(svd, y)?;
    let spectrum = Spectrum::new(svd, &projected);
    let betas = grid.betas();
    let mut best = OracleMaximum {
        alpha: f64::NAN,
        beta: f64::NAN,
        log_evidence: f64::NEG_INFINITY,
    };
    for alpha in grid.alphas() {
        for &beta in &betas {
            let l = spectrum.log_evidence(alpha, beta);
            if l > best.log_evidence {
                best = OracleMaximum {
                    alpha,
                    beta,
                    log_evidence: l,
                };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{decompose, FeatureMatrix};

    #[test]
    fn zero_features_peak_at_closed_form_beta() {
        // F = 0: L(β) = n/2 log β − β/2 ‖y‖² − n/2 log 2π, maximal at β = n/‖y‖² = 1.
        let f = FeatureMatrix::from_fn(4, 2, |_, _| 0.0).unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0; 4]).unwrap();
        let grid = GridSpec {
            alpha_points: 50,
            beta_points: 201,
            ..GridSpec::default()
        };
        let best = oracle_maximize(&svd, &y, &grid).unwrap();
        assert!((best.beta - 1.0).abs() < 1e-9, "{}", best.beta);
        let per_sample = best.log_evidence / 4.0;
        let want = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5;
        assert!((per_sample - want).abs() < 1e-12);
        assert!((want - -1.41894).abs() < 1e-5);
    }

    #[test]
    fn rejects_coarse_or_bad_grids() {
        let f = FeatureMatrix::from_fn(4, 1, |i, _| i as f64).unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let coarse = GridSpec {
            alpha_points: 10,
            ..GridSpec::default()
        };
        assert!(oracle_maximize(&svd, &y, &coarse).is_err());
        let negative = GridSpec {
            beta_min: -1.0,
            ..GridSpec::default()
        };
        assert!(oracle_maximize(&svd, &y, &negative).is_err());
    }

    #[test]
    fn axes_are_log_spaced() {
        let g = GridSpec::default();
        let a = g.alphas();
        assert_eq!(a.len(), 200);
        assert!((a[0] - 1e-6).abs() < 1e-18);
        assert!((a[199] - 1e6).abs() < 1e-6);
        assert!(((a[1] / a[0]).ln() - g.log_step_alpha()).abs() < 1e-12);
    }
}
