//! Full-batch gradient descent for a linear two-layer student with an
//! optional teacher-guided regularizer. Gradients are written out by hand.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::FeatureMatrix;
use crate::logme::{compute_logme, LogMeOptions, TaskKind, TaskLabels};
use crate::predictive::{ensemble_target, PredictiveHead};

use super::toy::{generate_toy_task, ToyTask, ToyTaskSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    #[default]
    Bayesian,
    Kd,
    None,
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayesian" | "b-tuning" => Ok(Regularizer::Bayesian),
            "kd" => Ok(Regularizer::Kd),
            "none" => Ok(Regularizer::None),
            other => Err(Error::invalid(format!("unknown regularizer '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Seeds the student initialization.
    pub seed: u64,
    pub regularizer: Regularizer,
    /// Number of teachers used, taken in order; `None` uses all of them.
    pub teachers: Option<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 0.1,
            steps: 500,
            seed: 0,
            regularizer: Regularizer::Bayesian,
            teachers: None,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be ≥ 0, got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Domain {
                name: "learning_rate",
                value: self.learning_rate,
            });
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.teachers == Some(0) {
            return Err(Error::invalid("teacher count must be at least 1"));
        }
        Ok(())
    }

    fn regularized(&self) -> bool {
        self.lambda > 0.0 && self.regularizer != Regularizer::None
    }
}

/// Shape and initial scale of the student.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentSpec {
    pub feature_dim: usize,
    /// Feature-map entries start as `N(0, init_scale² / D_in)`.
    pub init_scale: f64,
}

impl Default for StudentSpec {
    fn default() -> Self {
        Self {
            feature_dim: 4,
            init_scale: 0.2,
        }
    }
}

/// `φ_t(s) = sᵀ W_f`, logits `φ_tᵀ W_c + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyStudent {
    /// `D_in × D_t`
    pub feature_map: Mat<f64>,
    /// `D_t × C`
    pub classifier: Mat<f64>,
    pub bias: Vec<f64>,
}

impl ToyStudent {
    pub fn init(input_dim: usize, spec: &StudentSpec, outputs: usize, seed: u64) -> Result<Self> {
        if spec.feature_dim == 0 || input_dim == 0 || outputs == 0 {
            return Err(Error::invalid("student dimensions must be positive"));
        }
        if !(spec.init_scale.is_finite() && spec.init_scale > 0.0) {
            return Err(Error::Domain {
                name: "init_scale",
                value: spec.init_scale,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = spec.init_scale / (input_dim as f64).sqrt();
        let feature_map = Mat::from_fn(input_dim, spec.feature_dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        });
        Ok(Self {
            feature_map,
            classifier: Mat::zeros(spec.feature_dim, outputs),
            bias: vec![0.0; outputs],
        })
    }

    pub fn features(&self, inputs: &Mat<f64>) -> Mat<f64> {
        inputs * &self.feature_map
    }

    pub fn logits(&self, inputs: &Mat<f64>) -> Mat<f64> {
        let mut z = self.features(inputs) * &self.classifier;
        for i in 0..z.nrows() {
            for (c, b) in self.bias.iter().enumerate() {
                z[(i, c)] += b;
            }
        }
        z
    }

    pub fn predict(&self, inputs: &Mat<f64>) -> Vec<usize> {
        let z = self.logits(inputs);
        (0..z.nrows())
            .map(|i| {
                (0..z.ncols())
                    .max_by(|&a, &b| z[(i, a)].total_cmp(&z[(i, b)]))
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        let finite =
            |m: &Mat<f64>| (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()));
        finite(&self.feature_map)
            && finite(&self.classifier)
            && self.bias.iter().all(|b| b.is_finite())
    }
}

/// Every trainable parameter, including the KD transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub student: ToyStudent,
    /// `W_k`, `D_k × D_t`; empty unless the KD regularizer is active.
    pub transforms: Vec<Mat<f64>>,
}

impl Parameters {
    /// Flattened view in a fixed order, for finite-difference checks.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        let mut push = |m: &Mat<f64>| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    v.push(m[(i, j)]);
                }
            }
        };
        push(&self.student.feature_map);
        push(&self.student.classifier);
        for w in &self.transforms {
            push(w);
        }
        v.extend_from_slice(&self.student.bias);
        v
    }

    pub fn from_vec(&self, v: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        let mut at = 0;
        let mut fill = |m: &mut Mat<f64>| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    m[(i, j)] = v[at];
                    at += 1;
                }
            }
        };
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.len(),
                got: v.len(),
            });
        }
        fill(&mut out.student.feature_map);
        fill(&mut out.student.classifier);
        for w in &mut out.transforms {
            fill(w);
        }
        let nb = out.student.bias.len();
        out.student.bias.copy_from_slice(&v[at..at + nb]);
        Ok(out)
    }

    pub fn len(&self) -> usize {
        let size = |m: &Mat<f64>| m.nrows() * m.ncols();
        size(&self.student.feature_map)
            + size(&self.student.classifier)
            + self.transforms.iter().map(size).sum::<usize>()
            + self.student.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axpy(&mut self, step: f64, g: &Parameters) {
        let upd = |m: &mut Mat<f64>, d: &Mat<f64>| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    m[(i, j)] -= step * d[(i, j)];
                }
            }
        };
        upd(&mut self.student.feature_map, &g.student.feature_map);
        upd(&mut self.student.classifier, &g.student.classifier);
        for (w, d) in self.transforms.iter_mut().zip(&g.transforms) {
            upd(w, d);
        }
        for (b, d) in self.student.bias.iter_mut().zip(&g.student.bias) {
            *b -= step * d;
        }
    }
}

/// Everything the objective needs besides the parameters. Teacher-derived
/// values are computed once and never touched by training.
#[derive(Clone, Debug)]
pub struct Objective {
    pub inputs: Mat<f64>,
    pub kind: TaskKind,
    /// One-hot (classification) or real targets, `n × C`.
    pub targets: Mat<f64>,
    pub labels: Option<Vec<usize>>,
    pub lambda: f64,
    pub regularizer: Regularizer,
    /// Ensemble means, `n × C`.
    pub ensemble: Option<Mat<f64>>,
    /// Frozen student head `m_{t,c}`, `D_t × C`.
    pub student_head: Option<Mat<f64>>,
    pub teacher_features: Vec<Mat<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub task: f64,
    pub regularizer: f64,
    pub total: f64,
}

impl Objective {
    fn active(&self) -> bool {
        self.lambda > 0.0 && self.regularizer != Regularizer::None
    }

    /// Loss value and, when `grad` is set, its gradient.
    pub fn evaluate(&self, p: &Parameters, want_grad: bool) -> (LossParts, Option<Parameters>) {
        let s = &p.student;
        let n = self.inputs.nrows();
        let c = self.targets.ncols();
        let nf = n as f64;
        let feats = &self.inputs * &s.feature_map;
        let mut z = &feats * &s.classifier;
        for i in 0..n {
            for k in 0..c {
                z[(i, k)] += s.bias[k];
            }
        }

        // dL/dZ
        let mut dz = Mat::zeros(n, c);
        let task = match self.kind {
            TaskKind::Classification => {
                let labels = self
                    .labels
                    .as_ref()
                    .expect("classification objective has labels");
                let mut acc = 0.0;
                for i in 0..n {
                    let max = (0..c).map(|k| z[(i, k)]).fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = (0..c).map(|k| (z[(i, k)] - max).exp()).sum();
                    let lse = max + sum.ln();
                    acc += lse - z[(i, labels[i])];
                    for k in 0..c {
                        let prob = (z[(i, k)] - lse).exp();
                        dz[(i, k)] = (prob - self.targets[(i, k)]) / nf;
                    }
                }
                acc / nf
            }
            TaskKind::Regression => {
                let scale = 1.0 / (nf * c as f64);
                let mut acc = 0.0;
                for i in 0..n {
                    for k in 0..c {
                        let e = z[(i, k)] - self.targets[(i, k)];
                        acc += e * e;
                        dz[(i, k)] = 2.0 * scale * e;
                    }
                }
                acc * scale
            }
        };

        let mut dfeats = if want_grad {
            Some(&dz * s.classifier.transpose())
        } else {
            None
        };
        let mut dtransforms: Vec<Mat<f64>> = p
            .transforms
            .iter()
            .map(|w| Mat::zeros(w.nrows(), w.ncols()))
            .collect();

        let reg = if !self.active() {
            0.0
        } else {
            match self.regularizer {
                Regularizer::Bayesian => {
                    let head = self.student_head.as_ref().expect("student head present");
                    let target = self.ensemble.as_ref().expect("ensemble present");
                    let pred = &feats * head;
                    let scale = 1.0 / (nf * c as f64);
                    let mut r = Mat::zeros(n, c);
                    let mut acc = 0.0;
                    for i in 0..n {
                        for k in 0..c {
                            let e = pred[(i, k)] - target[(i, k)];
                            acc += e * e;
                            r[(i, k)] = e;
                        }
                    }
                    if let Some(df) = dfeats.as_mut() {
                        *df += (2.0 * self.lambda * scale) * (&r * head.transpose());
                    }
                    acc * scale
                }
                Regularizer::Kd => {
                    let kf = self.teacher_features.len() as f64;
                    let scale = 1.0 / (nf * kf);
                    let mut acc = 0.0;
                    for (k, (phi, w)) in self.teacher_features.iter().zip(&p.transforms).enumerate()
                    {
                        let mapped = &feats * w.transpose();
                        let mut u = Mat::zeros(n, phi.ncols());
                        for i in 0..n {
                            let mut sq = 0.0;
                            for j in 0..phi.ncols() {
                                let e = phi[(i, j)] - mapped[(i, j)];
                                sq += e * e;
                                u[(i, j)] = e;
                            }
                            let norm = sq.sqrt();
                            acc += norm;
                            let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
                            for j in 0..phi.ncols() {
                                u[(i, j)] *= inv;
                            }
                        }
                        if let Some(df) = dfeats.as_mut() {
                            *df -= (self.lambda * scale) * (&u * w);
                            dtransforms[k] = -(self.lambda * scale) * (u.transpose() * &feats);
                        }
                    }
                    acc * scale
                }
                Regularizer::None => 0.0,
            }
        };

        let parts = LossParts {
            task,
            regularizer: reg,
            total: task + self.lambda * reg,
        };
        let grad = dfeats.map(|df| {
            let bias = (0..c).map(|k| (0..n).map(|i| dz[(i, k)]).sum()).collect();
            Parameters {
                student: ToyStudent {
                    feature_map: self.inputs.transpose() * &df,
                    classifier: feats.transpose() * &dz,
                    bias,
                },
                transforms: dtransforms,
            }
        });
        (parts, grad)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TuneConfig,
    pub seed: u64,
    pub steps_run: usize,
    /// Loss before each step and after the last one.
    pub task_loss: Vec<f64>,
    pub regularizer_loss: Vec<f64>,
    pub total_loss: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_mse: Option<f64>,
}

/// Training data for [`train_student`].
#[derive(Clone, Debug)]
pub struct TrainData<'a> {
    pub inputs: &'a Mat<f64>,
    pub labels: &'a TaskLabels,
    pub test_inputs: Option<&'a Mat<f64>>,
    pub test_labels: Option<&'a TaskLabels>,
}

/// Frozen teacher-derived quantities.
#[derive(Clone, Debug)]
pub struct TeacherContext {
    pub heads: Vec<PredictiveHead>,
    pub features: Vec<FeatureMatrix>,
    /// `n × C` ensemble means over the training samples.
    pub ensemble: Mat<f64>,
}

/// Fits LogME heads for each teacher on the training labels and averages
/// their predictive means.
pub fn prepare_teachers(features: &[FeatureMatrix], labels: &TaskLabels) -> Result<TeacherContext> {
    let mut heads = Vec::with_capacity(features.len());
    for (k, f) in features.iter().enumerate() {
        let report = compute_logme(f, labels, &LogMeOptions::default())?;
        heads.push(PredictiveHead::from_report(
            &report,
            format!("teacher-{k}"),
            f.content_hash(),
            labels.dims(),
        )?);
    }
    let refs: Vec<&FeatureMatrix> = features.iter().collect();
    let target = ensemble_target(&heads, &refs)?;
    if target.dimensions.len() != labels.dims() {
        return Err(Error::invalid(
            "every label dimension must be present in the training set",
        ));
    }
    Ok(TeacherContext {
        heads,
        features: features.to_vec(),
        ensemble: target.targets,
    })
}

/// Builds the objective for `student` as initialized: its own LogME head on
/// the initial features is computed here and frozen.
pub fn build_objective(
    student: &ToyStudent,
    data: &TrainData<'_>,
    teachers: Option<&TeacherContext>,
    config: &TuneConfig,
) -> Result<(Objective, Parameters)> {
    config.validate()?;
    let labels = data.labels;
    if labels.n() != data.inputs.nrows() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: data.inputs.nrows(),
            got: labels.n(),
        });
    }
    if data.inputs.ncols() != student.feature_map.nrows() {
        return Err(Error::DimensionMismatch {
            what: "student input dimension",
            expected: student.feature_map.nrows(),
            got: data.inputs.ncols(),
        });
    }
    let targets = labels.target_matrix();
    if targets.ncols() != student.classifier.ncols() {
        return Err(Error::DimensionMismatch {
            what: "student output dimension",
            expected: targets.ncols(),
            got: student.classifier.ncols(),
        });
    }
    let class_labels = match labels {
        TaskLabels::Classification { indices, .. } => Some(indices.clone()),
        TaskLabels::Regression { .. } => None,
    };

    let mut objective = Objective {
        inputs: data.inputs.clone(),
        kind: labels.kind(),
        targets,
        labels: class_labels,
        lambda: config.lambda,
        regularizer: config.regularizer,
        ensemble: None,
        student_head: None,
        teacher_features: Vec::new(),
    };
    let mut transforms = Vec::new();

    if config.regularized() {
        let ctx = teachers.ok_or_else(|| Error::invalid("regularized training needs teachers"))?;
        let k = config
            .teachers
            .unwrap_or(ctx.heads.len())
            .min(ctx.heads.len());
        if k == 0 {
            return Err(Error::invalid("no teachers available"));
        }
        let initial = FeatureMatrix::new(student.features(data.inputs))?;
        match config.regularizer {
            Regularizer::Bayesian => {
                let ensemble = if k == ctx.heads.len() {
                    ctx.ensemble.clone()
                } else {
                    let refs: Vec<&FeatureMatrix> = ctx.features[..k].iter().collect();
                    ensemble_target(&ctx.heads[..k], &refs)?.targets
                };
                let report = compute_logme(&initial, labels, &LogMeOptions::default())?;
                let head = PredictiveHead::from_report(
                    &report,
                    "student",
                    initial.content_hash(),
                    labels.dims(),
                )?;
                if head.class_dimensions().len() != labels.dims() {
                    return Err(Error::invalid(
                        "every label dimension must be present in the training set",
                    ));
                }
                let dt = student.feature_map.ncols();
                objective.student_head = Some(Mat::from_fn(dt, labels.dims(), |j, c| {
                    head.classes[c].weights[j]
                }));
                objective.ensemble = Some(ensemble);
            }
            Regularizer::Kd => {
                for phi in &ctx.features[..k] {
                    transforms.push(least_squares_transform(&initial, phi)?);
                    objective.teacher_features.push(phi.as_mat().to_owned());
                }
            }
            Regularizer::None => {}
        }
    }
    Ok((
        objective,
        Parameters {
            student: student.clone(),
            transforms,
        },
    ))
}

/// `W` (`D_k × D_t`) minimizing `‖Φ_k − Φ_t Wᵀ‖_F`, with a tiny ridge for
/// rank-deficient student features.
fn least_squares_transform(student: &FeatureMatrix, teacher: &FeatureMatrix) -> Result<Mat<f64>> {
    use faer::linalg::solvers::Solve;
    let f = student.as_mat();
    let mut gram = f.transpose() * f;
    let trace: f64 = (0..gram.nrows()).map(|i| gram[(i, i)]).sum();
    let ridge = 1e-10 * trace.max(f64::MIN_POSITIVE);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = f.transpose() * teacher.as_mat();
    let llt = gram
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Numerical("student Gram matrix is not positive definite".into()))?;
    Ok(llt.solve(&rhs).transpose().to_owned())
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / truth.len() as f64
}

/// Full-batch gradient descent on `L_task + λ · L_reg`.
///
/// With `λ = 0` the regularizer is never evaluated, so the trajectory is the
/// plain one bit for bit.
pub fn train_student(
    student: &ToyStudent,
    data: &TrainData<'_>,
    teachers: Option<&TeacherContext>,
    config: &TuneConfig,
) -> Result<(Parameters, TrainReport)> {
    let (objective, mut params) = build_objective(student, data, teachers, config)?;
    let mut task_loss = Vec::with_capacity(config.steps + 1);
    let mut reg_loss = Vec::with_capacity(config.steps + 1);
    let mut total_loss = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let last = step == config.steps;
        let (parts, grad) = objective.evaluate(&params, !last);
        if !parts.total.is_finite() {
            return Err(Error::Diverged {
                step,
                message: format!("loss became {}", parts.total),
            });
        }
        task_loss.push(parts.task);
        reg_loss.push(parts.regularizer);
        total_loss.push(parts.total);
        if let Some(g) = grad {
            params.axpy(config.learning_rate, &g);
            if !params.student.is_finite() {
                return Err(Error::Diverged {
                    step,
                    message: "non-finite parameters".into(),
                });
            }
        }
    }

    let (train_accuracy, test_accuracy, test_mse) = match data.labels {
        TaskLabels::Classification { indices, .. } => {
            let train = accuracy(&params.student.predict(data.inputs), indices);
            let test = match (data.test_inputs, data.test_labels) {
                (Some(x), Some(TaskLabels::Classification { indices, .. })) => {
                    Some(accuracy(&params.student.predict(x), indices))
                }
                _ => None,
            };
            (Some(train), test, None)
        }
        TaskLabels::Regression { .. } => {
            let mse = match (data.test_inputs, data.test_labels) {
                (Some(x), Some(TaskLabels::Regression { targets })) => {
                    let z = params.student.logits(x);
                    let (n, c) = z.shape();
                    let mut acc = 0.0;
                    for i in 0..n {
                        for k in 0..c {
                            acc += (z[(i, k)] - targets[(i, k)]).powi(2);
                        }
                    }
                    Some(acc / (n * c) as f64)
                }
                _ => None,
            };
            (None, None, mse)
        }
    };

    let report = TrainReport {
        config: config.clone(),
        seed: config.seed,
        steps_run: config.steps,
        task_loss,
        regularizer_loss: reg_loss,
        total_loss,
        train_accuracy,
        test_accuracy,
        test_mse,
    };
    Ok((params, report))
}

/// A complete toy run: task, student shape and training configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyExperiment {
    pub task: ToyTaskSpec,
    pub student: StudentSpec,
    pub tune: TuneConfig,
}

impl ToyExperiment {
    /// Very noisy student inputs, one clean teacher, 40% of training labels
    /// redrawn; a small initialization and a slower, longer run than the
    /// generic defaults.
    pub fn noisy_student() -> Self {
        Self {
            student: StudentSpec {
                init_scale: 0.1,
                ..StudentSpec::default()
            },
            tune: TuneConfig {
                learning_rate: 0.02,
                steps: 3000,
                ..TuneConfig::default()
            },
            ..Self::default()
        }
    }

    /// Same task and initialization under a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            task: self.task.with_seed(seed),
            student: self.student,
            tune: TuneConfig {
                seed,
                ..self.tune.clone()
            },
        }
    }

    pub fn run(&self) -> Result<TrainReport> {
        let task = generate_toy_task(&self.task)?;
        run_on_task(&task, &self.student, &self.tune)
    }
}

pub fn run_on_task(
    task: &ToyTask,
    student: &StudentSpec,
    tune: &TuneConfig,
) -> Result<TrainReport> {
    let labels = TaskLabels::classification(task.train_labels.clone(), task.classes)?;
    let test_labels = TaskLabels::Classification {
        indices: task.test_labels.clone(),
        num_classes: task.classes,
    };
    let init = ToyStudent::init(task.train_inputs.ncols(), student, task.classes, tune.seed)?;
    let teachers = if tune.regularized() {
        Some(prepare_teachers(&task.teacher_features, &labels)?)
    } else {
        None
    };
    let data = TrainData {
        inputs: &task.train_inputs,
        labels: &labels,
        test_inputs: Some(&task.test_inputs),
        test_labels: Some(&test_labels),
    };
    train_student(&init, &data, teachers.as_ref(), tune).map(|(_, r)| r)
}
