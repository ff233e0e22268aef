//! The `hubrank` command line.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bench::{run_bench, BenchConfig};
use crate::error::{Error, Result};
use crate::evidence::{
    check_convergence, decompose, fixed_point_map, maximize_projected, project_labels, Backend,
    FeatureMatrix, LabelVector, SolverOptions,
};
use crate::hub::rank_manifest;
use crate::io::{
    check_head_features, read_feature_file, read_head, read_labels, read_manifest, write_head,
};
use crate::logme::{compute_logme, LogMeOptions, TaskKind, TaskLabels};
use crate::predictive::PredictiveHead;
use crate::tuning::ToyExperiment;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "HUBRANK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hubrank",
    version,
    about = "Rank pre-trained models by log maximum evidence"
)]
pub struct Cli {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Significant digits for printed numbers.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=17))]
    pub precision: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// LogME of one feature matrix for one label set.
    Logme(LogmeArgs),
    /// Score and rank every model in a hub manifest.
    Rank(RankArgs),
    /// Sample the fixed-point map t ↦ f(t) as CSV.
    Curve(CurveArgs),
    /// Report the convergence condition per label dimension.
    Verify(VerifyArgs),
    /// Time the evidence backends on synthetic data.
    Bench(BenchArgs),
    /// Train the toy student with teacher guidance.
    BtuneToy(BtuneArgs),
    /// Predictive means and variances from a dumped head.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct TaskInputs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "classification")]
    pub task: TaskKind,
    /// Number of classes; defaults to the largest label plus one.
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Append a constant feature column (intercept).
    #[arg(long)]
    pub append_bias: bool,
}

impl TaskInputs {
    fn load(&self) -> Result<(FeatureMatrix, TaskLabels)> {
        let features = read_feature_file(&self.features)?;
        let labels = read_labels(&self.labels, self.task, self.num_classes)?;
        if labels.n() != features.n() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: features.n(),
                got: labels.n(),
            });
        }
        let features = if self.append_bias {
            features.with_bias_column()
        } else {
            features
        };
        Ok((features, labels))
    }
}

#[derive(Debug, Args)]
pub struct LogmeArgs {
    #[command(flatten)]
    pub inputs: TaskInputs,
    #[arg(long, default_value = "fixed-point")]
    pub backend: Backend,
    /// Write the posterior predictive head to this file.
    #[arg(long)]
    pub dump_head: Option<PathBuf>,
    /// Model id stored in the head dump.
    #[arg(long, default_value = "model")]
    pub model_id: String,
    /// Also print per-dimension values.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value = "fixed-point")]
    pub backend: Backend,
    #[arg(long)]
    pub append_bias: bool,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub inputs: TaskInputs,
    /// Label dimension (class index or target column).
    #[arg(long, default_value_t = 0)]
    pub class: usize,
    /// `lo,hi`; defaults to `[t*/10, 10·t*]` around the converged value.
    #[arg(long)]
    pub t_range: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub inputs: TaskInputs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 256)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub c: usize,
    /// Comma-separated backends.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "naive,svd-optimized,fixed-point"
    )]
    pub algos: Vec<Backend>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BtuneArgs {
    /// JSON experiment file; missing fields take the noisy-student defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the task and initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub head: PathBuf,
    /// Query features, one row per sample.
    #[arg(long)]
    pub features: PathBuf,
    /// Features the head was fit on; checked against the stored hash.
    #[arg(long)]
    pub fit_features: Option<PathBuf>,
}

/// Formats `v` with `digits` significant digits, `%g` style.
pub fn format_sig(v: f64, digits: u8) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let p = i32::from(digits.max(1));
    let sci = format!("{:.*e}", (p - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= p {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let decimals = (p - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Exit status for an error; 0 is reserved for success and 2 for usage errors.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Domain { .. } => 3,
        Error::Io { .. } => 4,
        Error::Format { .. } | Error::Schema { .. } | Error::Json(_) => 5,
        Error::HashMismatch { .. } => 6,
        Error::NoSignal | Error::DegenerateLabels(_) | Error::NoUsableDimension => 7,
        Error::Numerical(_) | Error::Diverged { .. } => 8,
    }
}

/// Sizes the global rayon pool from [`THREADS_ENV`], if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Error::invalid(format!(
            "{THREADS_ENV} must be a positive integer, got '{raw}'"
        ))
    })?;
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        log::debug!("thread pool already configured: {e}");
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    match configure_threads().and_then(|()| run(&cli, out)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| Error::io("<stdout>", e))?
    };
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let p = cli.precision;
    let f = |v: f64| format_sig(v, p);
    match &cli.command {
        Command::Logme(a) => {
            let raw = read_feature_file(&a.inputs.features)?;
            let labels = read_labels(&a.inputs.labels, a.inputs.task, a.inputs.num_classes)?;
            let opts = LogMeOptions {
                backend: a.backend,
                append_bias: a.inputs.append_bias,
                ..LogMeOptions::default()
            };
            let report = compute_logme(&raw, &labels, &opts)?;
            if let Some(path) = &a.dump_head {
                let head = PredictiveHead::from_report(
                    &report,
                    &a.model_id,
                    raw.content_hash(),
                    labels.dims(),
                )?;
                write_head(path, &head)?;
            }
            if cli.json {
                emit_json(out, &report)?;
            } else {
                say!(out, "{}", f(report.logme));
                if a.verbose {
                    for d in &report.per_dimension {
                        say!(
                            out,
                            "dimension {}: {}",
                            d.dimension,
                            f(d.solution.normalized_evidence)
                        );
                    }
                    for s in &report.skipped_dimensions {
                        say!(out, "dimension {}: skipped ({})", s.dimension, s.reason);
                    }
                }
            }
        }
        Command::Rank(a) => {
            let manifest = read_manifest(&a.manifest)?;
            let opts = LogMeOptions {
                backend: a.backend,
                append_bias: a.append_bias,
                ..LogMeOptions::default()
            };
            let ranking = rank_manifest(&manifest, &opts, a.k)?;
            if cli.json {
                emit_json(out, &ranking)?;
            } else {
                say!(out, "rank\tmodel\tlogme");
                for m in &ranking.report.ordering {
                    say!(out, "{}\t{}\t{}", m.rank, m.id, f(m.score));
                }
                if let Some(c) = &ranking.report.correlation {
                    say!(out, "tau\t{}", f(c.tau));
                    match c.tau_w {
                        Some(t) => say!(out, "tau_w\t{}", f(t)),
                        None => say!(out, "tau_w\tundefined"),
                    }
                }
                for w in &ranking.report.warnings {
                    say!(out, "warning\t{w}");
                }
                say!(out, "top-{}\t{}", a.k, ranking.top_k.join(","));
            }
        }
        Command::Curve(a) => {
            let (features, labels) = a.inputs.load()?;
            let targets = labels.target_matrix();
            if a.class >= targets.ncols() {
                return Err(Error::invalid(format!(
                    "dimension {} out of range (labels have {})",
                    a.class,
                    targets.ncols()
                )));
            }
            if a.points < 2 {
                return Err(Error::invalid("need at least 2 points"));
            }
            let y = LabelVector::new(
                (0..targets.nrows())
                    .map(|i| targets[(i, a.class)])
                    .collect(),
            )?;
            let svd = decompose(&features)?;
            let projected = project_labels(&svd, &y)?;
            let (lo, hi) = match &a.t_range {
                Some(r) => parse_range(r)?,
                None => {
                    let t = maximize_projected(&svd, &projected, &SolverOptions::default())?.t;
                    (t / 10.0, t * 10.0)
                }
            };
            let step = (hi - lo) / (a.points - 1) as f64;
            let mut rows = Vec::with_capacity(a.points);
            for k in 0..a.points {
                let t = if k + 1 == a.points {
                    hi
                } else {
                    lo + step * k as f64
                };
                rows.push((t, fixed_point_map(&svd, &projected, features.n(), t)?));
            }
            if cli.json {
                let samples: Vec<_> = rows
                    .iter()
                    .map(|(t, ft)| json!({"t": t, "f": ft}))
                    .collect();
                emit_json(out, &json!({"dimension": a.class, "samples": samples}))?;
            } else {
                say!(out, "t,f(t)");
                for (t, ft) in rows {
                    say!(out, "{},{}", f(t), f(ft));
                }
            }
        }
        Command::Verify(a) => {
            let (features, labels) = a.inputs.load()?;
            let targets = labels.target_matrix();
            let svd = decompose(&features)?;
            let mut entries = Vec::new();
            for c in 0..targets.ncols() {
                let col: Vec<f64> = (0..targets.nrows()).map(|i| targets[(i, c)]).collect();
                if col.iter().all(|&v| v == col[0]) {
                    continue;
                }
                let projected = project_labels(&svd, &LabelVector::new(col)?)?;
                let report = check_convergence(&svd, &projected, features.n());
                let solved = maximize_projected(&svd, &projected, &SolverOptions::default());
                let (iterations, converged) = match &solved {
                    Ok(s) => (Some(s.iterations), s.converged),
                    Err(_) => (None, false),
                };
                entries.push((c, report, iterations, converged));
            }
            if entries.is_empty() {
                return Err(Error::NoUsableDimension);
            }
            if cli.json {
                let v: Vec<_> = entries
                    .iter()
                    .map(|(c, r, it, conv)| json!({"dimension": c, "report": r, "iterations": it, "converged": conv}))
                    .collect();
                emit_json(out, &v)?;
            } else {
                say!(out, "dimension\trank_condition\tordering_statistic\tslope_at_infinity\tlimit_at_zero\tguaranteed\tconsistent\titerations\tconverged");
                for (c, r, it, conv) in &entries {
                    say!(
                        out,
                        "{c}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{conv}",
                        r.rank_condition,
                        f(r.ordering_statistic),
                        f(r.slope_at_infinity),
                        r.limit_at_zero.map_or("undefined".into(), f),
                        r.guaranteed,
                        r.consistent,
                        it.map_or("-".into(), |i| i.to_string()),
                    );
                }
            }
        }
        Command::Bench(a) => {
            let report = run_bench(&BenchConfig {
                n: a.n,
                d: a.d,
                c: a.c,
                backends: a.algos.clone(),
                repeats: a.repeats,
                seed: a.seed,
            })?;
            if cli.json {
                emit_json(out, &report)?;
            } else {
                say!(out, "agreement\t{}", f(report.max_disagreement));
                say!(out, "backend\tlogme\tmean_s\tmin_s\tmax_s");
                for t in &report.timings {
                    say!(
                        out,
                        "{}\t{}\t{}\t{}\t{}",
                        t.backend,
                        f(t.logme),
                        f(t.mean_seconds),
                        f(t.min_seconds),
                        f(t.max_seconds)
                    );
                }
            }
        }
        Command::BtuneToy(a) => {
            let mut exp = match &a.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    serde_json::from_str::<ToyExperiment>(&text).map_err(|e| Error::Schema {
                        path: path.clone(),
                        message: e.to_string(),
                    })?
                }
                None => ToyExperiment::noisy_student(),
            };
            if let Some(seed) = a.seed {
                exp = exp.with_seed(seed);
            }
            let report = exp.run()?;
            if cli.json {
                emit_json(out, &report)?;
            } else {
                say!(out, "steps\t{}", report.steps_run);
                let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
                say!(out, "final_task_loss\t{}", f(last(&report.task_loss)));
                say!(
                    out,
                    "final_regularizer\t{}",
                    f(last(&report.regularizer_loss))
                );
                if let Some(acc) = report.train_accuracy {
                    say!(out, "train_accuracy\t{}", f(acc));
                }
                if let Some(acc) = report.test_accuracy {
                    say!(out, "test_accuracy\t{}", f(acc));
                }
                if let Some(mse) = report.test_mse {
                    say!(out, "test_mse\t{}", f(mse));
                }
            }
        }
        Command::Predict(a) => {
            let head = read_head(&a.head)?;
            if let Some(path) = &a.fit_features {
                check_head_features(&head, &read_feature_file(path)?)?;
            }
            let query = read_feature_file(&a.features)?;
            if query.dim() != head.feature_dim {
                return Err(Error::DimensionMismatch {
                    what: "query feature dimension",
                    expected: head.feature_dim,
                    got: query.dim(),
                });
            }
            let dims = head.class_dimensions();
            let mut rows = Vec::with_capacity(query.n());
            for i in 0..query.n() {
                let row = query.row(i);
                let dist = dims
                    .iter()
                    .map(|&d| head.predictive_distribution(d, &row))
                    .collect::<Result<Vec<_>>>()?;
                rows.push(dist);
            }
            if cli.json {
                let v: Vec<_> = rows
                    .iter()
                    .map(|r| {
                        json!({
                            "means": r.iter().map(|x| x.0).collect::<Vec<_>>(),
                            "variances": r.iter().map(|x| x.1).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                emit_json(
                    out,
                    &json!({"model_id": head.model_id, "dimensions": dims, "samples": v}),
                )?;
            } else {
                say!(out, "sample,dimension,mean,variance");
                for (i, r) in rows.iter().enumerate() {
                    for (&d, (m, v)) in dims.iter().zip(r) {
                        say!(out, "{i},{d},{},{}", f(*m), f(*v));
                    }
                }
            }
        }
    }
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || {
        Error::invalid(format!(
            "t-range must be 'lo,hi' with 0 < lo < hi, got '{s}'"
        ))
    };
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad());
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(5.0 / 3.0, 6), "1.66667");
        assert_eq!(format_sig(0.947, 6), "0.947");
        assert_eq!(format_sig(-0.000123456789, 3), "-0.000123");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(1e-7, 6), "1e-07");
        assert_eq!(format_sig(100.0, 6), "100");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(999999.7, 6), "1e+06");
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0.5, 2").unwrap(), (0.5, 2.0));
        assert!(parse_range("2,1").is_err());
        assert!(parse_range("0,1").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(main_with_args(["hubrank", "logme"], &mut o, &mut e), 2);
        assert_eq!(main_with_args(["hubrank", "--version"], &mut o, &mut e), 0);
    }

    #[test]
    fn exit_codes_are_nonzero() {
        assert_eq!(exit_code(&Error::NoSignal), 7);
        assert_ne!(exit_code(&Error::invalid("x")), 0);
    }
}
