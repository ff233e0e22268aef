//! C ABI over `hubrank`.
//!
//! Objects cross the boundary as opaque pointers created by `*_new`/`*_read`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`HubrankStatus`]; on failure the message is available from
//! [`hubrank_last_error_message`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hubrank::evidence::Backend;
use hubrank::io::{read_feature_file, read_head, write_head};
use hubrank::{
    compute_logme, kendall_tau, weighted_tau, Error, FeatureMatrix, LogMeOptions, LogMeReport,
    PredictiveHead, ScorePair, TaskLabels, TruthDirection,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HubrankStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Format = 3,
    Io = 4,
    Degenerate = 5,
    NoSignal = 6,
    Numerical = 7,
    HashMismatch = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HubrankBackend {
    Naive = 0,
    SvdOptimized = 1,
    FixedPoint = 2,
}

impl From<HubrankBackend> for Backend {
    fn from(b: HubrankBackend) -> Self {
        match b {
            HubrankBackend::Naive => Backend::Naive,
            HubrankBackend::SvdOptimized => Backend::SvdOptimized,
            HubrankBackend::FixedPoint => Backend::FixedPoint,
        }
    }
}

/// An `n × d` feature matrix.
pub struct HubrankFeatures(FeatureMatrix);

/// A LogME result together with the factors needed to build a head.
pub struct HubrankReport(LogMeReport);

/// A posterior predictive head.
pub struct HubrankHead(PredictiveHead);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> HubrankStatus {
    match err {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Domain { .. } => {
            HubrankStatus::InvalidInput
        }
        Error::Format { .. } | Error::Schema { .. } | Error::Json(_) => HubrankStatus::Format,
        Error::Io { .. } => HubrankStatus::Io,
        Error::DegenerateLabels(_) | Error::NoUsableDimension => HubrankStatus::Degenerate,
        Error::NoSignal => HubrankStatus::NoSignal,
        Error::Numerical(_) | Error::Diverged { .. } => HubrankStatus::Numerical,
        Error::HashMismatch { .. } => HubrankStatus::HashMismatch,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HubrankStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HubrankStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            HubrankStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            HubrankStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    // SAFETY: the caller passes a nul-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Error::InvalidInput("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: `out` is non-null and points to writable storage for a `T`.
    unsafe { out.write(value) };
    Ok(())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn hubrank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// always nul-terminated when `len > 0`). Returns the full message length
/// excluding the terminator, or 0 if there is none.
#[no_mangle]
pub unsafe extern "C" fn hubrank_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                // SAFETY: buf has at least one writable byte.
                unsafe { *buf = 0 };
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: buf has `len` writable bytes and n < len.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Builds an `n × d` matrix from row-major `data`.
#[no_mangle]
pub unsafe extern "C" fn hubrank_features_new(
    data: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut HubrankFeatures,
) -> HubrankStatus {
    guard(|| {
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Error::InvalidInput("n · d overflows".into()))?;
        let values = unsafe { slice(data, len, "data") }?;
        let f = FeatureMatrix::from_rows(n, d, values)?;
        unsafe { write_out(out, Box::into_raw(Box::new(HubrankFeatures(f))), "out") }
    })
}

/// Reads a PTMF feature file.
#[no_mangle]
pub unsafe extern "C" fn hubrank_features_read(
    file: *const c_char,
    out: *mut *mut HubrankFeatures,
) -> HubrankStatus {
    guard(|| {
        let f = read_feature_file(unsafe { path(file) }?)?;
        unsafe { write_out(out, Box::into_raw(Box::new(HubrankFeatures(f))), "out") }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_features_shape(
    features: *const HubrankFeatures,
    n: *mut usize,
    d: *mut usize,
) -> HubrankStatus {
    guard(|| {
        let f = &unsafe { deref(features, "features") }?.0;
        unsafe { write_out(n, f.n(), "n") }?;
        unsafe { write_out(d, f.dim(), "d") }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_features_free(features: *mut HubrankFeatures) {
    if !features.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(features) });
    }
}

fn logme(
    features: &FeatureMatrix,
    labels: &TaskLabels,
    backend: HubrankBackend,
    append_bias: bool,
) -> Result<*mut HubrankReport, Failure> {
    let opts = LogMeOptions {
        backend: backend.into(),
        append_bias,
        ..LogMeOptions::default()
    };
    let report = compute_logme(features, labels, &opts)?;
    Ok(Box::into_raw(Box::new(HubrankReport(report))))
}

/// LogME for class indices `labels[0..n]` in `0..num_classes`.
#[no_mangle]
pub unsafe extern "C" fn hubrank_logme_classification(
    features: *const HubrankFeatures,
    labels: *const usize,
    n: usize,
    num_classes: usize,
    backend: HubrankBackend,
    append_bias: bool,
    out: *mut *mut HubrankReport,
) -> HubrankStatus {
    guard(|| {
        let f = &unsafe { deref(features, "features") }?.0;
        let y = unsafe { slice(labels, n, "labels") }?;
        let labels = TaskLabels::classification(y.to_vec(), num_classes)?;
        let r = logme(f, &labels, backend, append_bias)?;
        unsafe { write_out(out, r, "out") }
    })
}

/// LogME for real targets given row-major as `n × k`.
#[no_mangle]
pub unsafe extern "C" fn hubrank_logme_regression(
    features: *const HubrankFeatures,
    targets: *const f64,
    n: usize,
    k: usize,
    backend: HubrankBackend,
    append_bias: bool,
    out: *mut *mut HubrankReport,
) -> HubrankStatus {
    guard(|| {
        let f = &unsafe { deref(features, "features") }?.0;
        let len = n
            .checked_mul(k)
            .ok_or_else(|| Error::InvalidInput("n · k overflows".into()))?;
        let t = unsafe { slice(targets, len, "targets") }?;
        let m = FeatureMatrix::from_rows(n, k, t)?.into_mat();
        let labels = TaskLabels::regression(m)?;
        let r = logme(f, &labels, backend, append_bias)?;
        unsafe { write_out(out, r, "out") }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_report_logme(
    report: *const HubrankReport,
    value: *mut f64,
) -> HubrankStatus {
    guard(|| {
        let r = &unsafe { deref(report, "report") }?.0;
        unsafe { write_out(value, r.logme, "value") }
    })
}

/// Number of label dimensions that were scored.
#[no_mangle]
pub unsafe extern "C" fn hubrank_report_dimension_count(
    report: *const HubrankReport,
    count: *mut usize,
) -> HubrankStatus {
    guard(|| {
        let r = &unsafe { deref(report, "report") }?.0;
        unsafe { write_out(count, r.per_dimension.len(), "count") }
    })
}

/// Details of the `index`-th scored dimension.
#[no_mangle]
pub unsafe extern "C" fn hubrank_report_dimension(
    report: *const HubrankReport,
    index: usize,
    dimension: *mut usize,
    alpha: *mut f64,
    beta: *mut f64,
    normalized_evidence: *mut f64,
) -> HubrankStatus {
    guard(|| {
        let r = &unsafe { deref(report, "report") }?.0;
        let d = r.per_dimension.get(index).ok_or_else(|| {
            Error::InvalidInput(format!(
                "dimension index {index} out of range ({} scored)",
                r.per_dimension.len()
            ))
        })?;
        unsafe {
            write_out(dimension, d.dimension, "dimension")?;
            write_out(alpha, d.solution.alpha, "alpha")?;
            write_out(beta, d.solution.beta, "beta")?;
            write_out(
                normalized_evidence,
                d.solution.normalized_evidence,
                "normalized_evidence",
            )
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_report_free(report: *mut HubrankReport) {
    if !report.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(report) });
    }
}

unsafe fn score_pair(
    scores: *const f64,
    truths: *const f64,
    m: usize,
    lower_better: bool,
) -> Result<ScorePair, Failure> {
    let s = unsafe { slice(scores, m, "scores") }?;
    let t = unsafe { slice(truths, m, "truths") }?;
    let dir = if lower_better {
        TruthDirection::LowerBetter
    } else {
        TruthDirection::HigherBetter
    };
    Ok(ScorePair::new(s.to_vec(), t.to_vec(), dir)?)
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_kendall_tau(
    scores: *const f64,
    truths: *const f64,
    m: usize,
    lower_better: bool,
    tau: *mut f64,
) -> HubrankStatus {
    guard(|| {
        let pair = unsafe { score_pair(scores, truths, m, lower_better) }?;
        unsafe { write_out(tau, kendall_tau(&pair), "tau") }
    })
}

/// Hyperbolically weighted τ.
#[no_mangle]
pub unsafe extern "C" fn hubrank_weighted_tau(
    scores: *const f64,
    truths: *const f64,
    m: usize,
    lower_better: bool,
    tau: *mut f64,
) -> HubrankStatus {
    guard(|| {
        let pair = unsafe { score_pair(scores, truths, m, lower_better) }?;
        unsafe { write_out(tau, weighted_tau(&pair)?, "tau") }
    })
}

/// Builds a predictive head from `report`; `features` are the matrix the
/// report was computed on and only supply the stored content hash.
#[no_mangle]
pub unsafe extern "C" fn hubrank_head_from_report(
    report: *const HubrankReport,
    features: *const HubrankFeatures,
    model_id: *const c_char,
    num_dimensions: usize,
    out: *mut *mut HubrankHead,
) -> HubrankStatus {
    guard(|| {
        let r = &unsafe { deref(report, "report") }?.0;
        let f = &unsafe { deref(features, "features") }?.0;
        if model_id.is_null() {
            return Err(Failure::Null("model_id"));
        }
        // SAFETY: non-null nul-terminated string.
        let id = unsafe { CStr::from_ptr(model_id) }
            .to_string_lossy()
            .into_owned();
        let head = PredictiveHead::from_report(r, id, f.content_hash(), num_dimensions)?;
        unsafe { write_out(out, Box::into_raw(Box::new(HubrankHead(head))), "out") }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_head_read(
    file: *const c_char,
    out: *mut *mut HubrankHead,
) -> HubrankStatus {
    guard(|| {
        let head = read_head(unsafe { path(file) }?)?;
        unsafe { write_out(out, Box::into_raw(Box::new(HubrankHead(head))), "out") }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_head_write(
    head: *const HubrankHead,
    file: *const c_char,
) -> HubrankStatus {
    guard(|| {
        let h = &unsafe { deref(head, "head") }?.0;
        write_head(unsafe { path(file) }?, h)?;
        Ok(())
    })
}

/// Predictive mean and variance for label dimension `dimension` at the raw
/// feature vector `f[0..len]`.
#[no_mangle]
pub unsafe extern "C" fn hubrank_head_predict(
    head: *const HubrankHead,
    dimension: usize,
    f: *const f64,
    len: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> HubrankStatus {
    guard(|| {
        let h = &unsafe { deref(head, "head") }?.0;
        let q = unsafe { slice(f, len, "f") }?;
        let (m, v) = h.predictive_distribution(dimension, q)?;
        unsafe {
            write_out(mean, m, "mean")?;
            write_out(variance, v, "variance")
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hubrank_head_free(head: *mut HubrankHead) {
    if !head.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(head) });
    }
}
