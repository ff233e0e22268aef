//! Wall-clock comparison of the evidence backends on synthetic clustered data.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{Backend, FeatureMatrix};
use crate::logme::{compute_logme, LogMeOptions, TaskLabels};

/// Largest LogME disagreement between backends tolerated before timing.
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub backends: Vec<Backend>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 256,
            c: 10,
            backends: Backend::ALL.to_vec(),
            repeats: 3,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d == 0 {
            return Err(Error::invalid("bench needs n ≥ 2 and d ≥ 1"));
        }
        if self.c < 2 {
            return Err(Error::invalid("bench needs at least 2 classes"));
        }
        if self.backends.is_empty() {
            return Err(Error::invalid("no backend selected"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        Ok(())
    }
}

/// Gaussian class clusters in `d` dimensions with balanced labels.
pub fn synthetic_classification(
    n: usize,
    d: usize,
    c: usize,
    seed: u64,
) -> Result<(FeatureMatrix, TaskLabels)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..c * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        })
        .collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| if i < c { i } else { rng.random_range(0..c) })
        .collect();
    let mut data = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            data[i * d + j] = centers[labels[i] * d + j] + 2.0 * z;
        }
    }
    Ok((
        FeatureMatrix::from_rows(n, d, &data)?,
        TaskLabels::classification(labels, c)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendTiming {
    pub backend: Backend,
    pub logme: f64,
    pub seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Largest pairwise LogME difference found by the pre-check.
    pub max_disagreement: f64,
    pub timings: Vec<BackendTiming>,
}

impl BenchReport {
    pub fn timing(&self, backend: Backend) -> Option<&BackendTiming> {
        self.timings.iter().find(|t| t.backend == backend)
    }
}

/// Runs the agreement pre-check, then times `repeats` full LogME runs per
/// backend. Fails if any two backends differ by more than
/// [`AGREEMENT_TOLERANCE`].
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let (features, labels) = synthetic_classification(config.n, config.d, config.c, config.seed)?;

    let mut scores = Vec::with_capacity(config.backends.len());
    for &b in &config.backends {
        scores.push(compute_logme(&features, &labels, &LogMeOptions::with_backend(b))?.logme);
    }
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max_disagreement = hi - lo;
    if max_disagreement.is_nan() || max_disagreement > AGREEMENT_TOLERANCE {
        return Err(Error::Numerical(format!(
            "backends disagree on LogME by {max_disagreement:e} (limit {AGREEMENT_TOLERANCE:e})"
        )));
    }

    let mut timings = Vec::with_capacity(config.backends.len());
    for (&backend, &logme) in config.backends.iter().zip(&scores) {
        let opts = LogMeOptions::with_backend(backend);
        let mut seconds = Vec::with_capacity(config.repeats);
        for _ in 0..config.repeats {
            let start = Instant::now();
            compute_logme(&features, &labels, &opts)?;
            seconds.push(start.elapsed().as_secs_f64());
        }
        log::info!("{backend}: {seconds:?}");
        timings.push(BackendTiming {
            backend,
            logme,
            mean_seconds: seconds.iter().sum::<f64>() / seconds.len() as f64,
            min_seconds: seconds.iter().copied().fold(f64::INFINITY, f64::min),
            max_seconds: seconds.iter().copied().fold(0.0, f64::max),
            seconds,
        });
    }
    Ok(BenchReport {
        config: config.clone(),
        max_disagreement,
        timings,
    })
}
