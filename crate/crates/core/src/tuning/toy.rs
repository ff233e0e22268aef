//! Seeded synthetic tasks: the two feature-quality illustrations and the
//! noisy-student / clean-teacher tuning task.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{FeatureMatrix, LabelVector};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Centers of the three 2-D clusters.
pub const CLUSTER_CENTERS: [[f64; 2]; 3] = [[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]];
/// Within-cluster standard deviation before any added feature noise.
pub const CLUSTER_SPREAD: f64 = 0.5;

/// Three well-separated clusters in the plane with `noise`-std Gaussian noise
/// added to the coordinates. Labels cycle through the clusters.
///
/// The clean points depend only on `seed`, so runs with different `noise`
/// share the same underlying sample.
pub fn cluster_task(
    n_per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<usize>)> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::invalid(format!(
            "feature noise must be ≥ 0, got {noise}"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("need at least one point per cluster"));
    }
    let n = 3 * n_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut clean = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut data = vec![0.0; n * 2];
    for i in 0..n {
        for j in 0..2 {
            let x = CLUSTER_CENTERS[labels[i]][j] + CLUSTER_SPREAD * normal(&mut clean);
            data[i * 2 + j] = x + noise * normal(&mut extra);
        }
    }
    Ok((FeatureMatrix::from_rows(n, 2, &data)?, labels))
}

/// `x ~ U[0, 1]`, `y = 2x + ε` with `ε ~ N(0, 0.1²)`; the returned feature
/// is `x + N(0, noise²)`. Clean `x` and `y` depend only on `seed`.
pub fn linear_regression_task(
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<(FeatureMatrix, LabelVector)> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::invalid(format!(
            "feature noise must be ≥ 0, got {noise}"
        )));
    }
    let mut clean = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = clean.random();
        y.push(2.0 * xi + 0.1 * normal(&mut clean));
        x.push(xi + noise * normal(&mut extra));
    }
    Ok((FeatureMatrix::from_rows(n, 1, &x)?, LabelVector::new(y)?))
}

/// A frozen teacher: a random linear view of the latent plus noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub dim: usize,
    pub noise: f64,
}

/// Latent Gaussian clusters seen through two channels: a high-dimensional,
/// heavily corrupted student input and cleaner teacher feature maps.
/// Training labels are corrupted by random reassignment; test labels are clean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTaskSpec {
    pub classes: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Scale of the random class centers.
    pub separation: f64,
    /// Within-class latent standard deviation.
    pub spread: f64,
    pub input_noise: f64,
    /// Probability that a training label is redrawn uniformly at random.
    pub label_noise: f64,
    pub teachers: Vec<TeacherSpec>,
    pub seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            latent_dim: 6,
            input_dim: 60,
            train_size: 200,
            test_size: 1000,
            separation: 2.0,
            spread: 1.0,
            input_noise: 3.0,
            label_noise: 0.4,
            teachers: vec![TeacherSpec {
                dim: 12,
                noise: 0.1,
            }],
            seed: 0,
        }
    }
}

impl ToyTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("toy task needs at least 2 classes"));
        }
        if self.latent_dim == 0 || self.input_dim == 0 {
            return Err(Error::invalid("toy task dimensions must be positive"));
        }
        if self.train_size < 2 || self.test_size == 0 {
            return Err(Error::invalid(
                "toy task needs ≥ 2 training and ≥ 1 test samples",
            ));
        }
        for (name, v) in [
            ("separation", self.separation),
            ("spread", self.spread),
            ("input_noise", self.input_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::invalid(format!(
                "label_noise must lie in [0, 1], got {}",
                self.label_noise
            )));
        }
        for t in &self.teachers {
            if t.dim == 0 || !(t.noise.is_finite() && t.noise >= 0.0) {
                return Err(Error::invalid(
                    "teacher dims must be positive and noise ≥ 0",
                ));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTask {
    pub classes: usize,
    pub train_inputs: Mat<f64>,
    /// Possibly corrupted; the only labels training sees.
    pub train_labels: Vec<usize>,
    pub clean_train_labels: Vec<usize>,
    pub test_inputs: Mat<f64>,
    pub test_labels: Vec<usize>,
    /// One `n_train × dim` matrix per teacher, on the training samples.
    pub teacher_features: Vec<FeatureMatrix>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = scale * normal(rng);
        }
    }
    m
}

pub fn generate_toy_task(spec: &ToyTaskSpec) -> Result<ToyTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (c, l) = (spec.classes, spec.latent_dim);
    let centers = gaussian_matrix(&mut rng, c, l, spec.separation);
    let proj_scale = 1.0 / (l as f64).sqrt();
    let student_map = gaussian_matrix(&mut rng, l, spec.input_dim, proj_scale);
    let teacher_maps: Vec<Mat<f64>> = spec
        .teachers
        .iter()
        .map(|t| gaussian_matrix(&mut rng, l, t.dim, proj_scale))
        .collect();

    let sample = |m: usize, rng: &mut ChaCha8Rng| {
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
        let mut latent = Mat::zeros(m, l);
        for i in 0..m {
            for j in 0..l {
                latent[(i, j)] = centers[(labels[i], j)] + spec.spread * normal(rng);
            }
        }
        let mut inputs = &latent * &student_map;
        for i in 0..m {
            for j in 0..spec.input_dim {
                inputs[(i, j)] += spec.input_noise * normal(rng);
            }
        }
        (latent, inputs, labels)
    };
    let (train_latent, train_inputs, clean_train_labels) = sample(spec.train_size, &mut rng);
    let (_, test_inputs, test_labels) = sample(spec.test_size, &mut rng);

    let mut teacher_features = Vec::with_capacity(spec.teachers.len());
    for (t, map) in spec.teachers.iter().zip(&teacher_maps) {
        let mut f = &train_latent * map;
        for i in 0..spec.train_size {
            for j in 0..t.dim {
                f[(i, j)] += t.noise * normal(&mut rng);
            }
        }
        teacher_features.push(FeatureMatrix::new(f)?);
    }

    let train_labels = clean_train_labels
        .iter()
        .map(|&y| {
            if rng.random::<f64>() < spec.label_noise {
                rng.random_range(0..c)
            } else {
                y
            }
        })
        .collect();

    Ok(ToyTask {
        classes: c,
        train_inputs,
        train_labels,
        clean_train_labels,
        test_inputs,
        test_labels,
        teacher_features,
    })
}
