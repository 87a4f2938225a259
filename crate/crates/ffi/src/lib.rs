//! C ABI over the theftnet toolkit.
//!
//! Every fallible function returns a [`TnStatus`]; on failure the message is
//! available from [`tn_last_error`] on the same thread. Series are passed as
//! row-major `double` arrays of 365 readings per user with `NaN` marking a
//! missing day. Handles are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use theftnet::baselines::BaselineModel;
use theftnet::data::{impute_missing, preprocess, to_tensor, zscore, ConsumptionRecord};
use theftnet::features::{extract_features, FEATURE_COUNT};
use theftnet::model::{load_checkpoint, Network};
use theftnet::{metrics, Error, SERIES_LEN};

const PREDICT_CHUNK: usize = 256;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Parse = 4,
    Io = 5,
    ModelFormat = 6,
    Imputation = 7,
    Standardization = 8,
    AucUndefined = 9,
    Panic = 10,
}

/// A trained neural network restored from a checkpoint.
pub struct TnNetwork {
    net: Network<f32>,
}

/// A random forest or gradient-boosting model restored from its text file.
pub struct TnBaseline {
    model: BaselineModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> TnStatus {
    match err {
        Error::Config(_) | Error::Stratification { .. } | Error::Diverged { .. } => TnStatus::InvalidArgument,
        Error::Shape(_) | Error::DegenerateBatch(_) | Error::EmptyPool { .. } => TnStatus::Shape,
        Error::Parse { .. } => TnStatus::Parse,
        Error::Io { .. } => TnStatus::Io,
        Error::Checkpoint(_) | Error::ModelFormat(_) => TnStatus::ModelFormat,
        Error::Imputation { .. } => TnStatus::Imputation,
        Error::Standardization(_) => TnStatus::Standardization,
        Error::AucUndefined => TnStatus::AucUndefined,
    }
}

struct Failure(TnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(TnStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TnStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TnStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn record(row: &[f64]) -> Result<ConsumptionRecord, Failure> {
    let values: Vec<Option<f64>> = row.iter().map(|&v| if v.is_nan() { None } else { Some(v) }).collect();
    Ok(ConsumptionRecord::from_options("ffi", 0, &values)?)
}

fn records(series: &[f64]) -> Result<Vec<ConsumptionRecord>, Failure> {
    series.chunks(SERIES_LEN).map(record).collect()
}

/// Length of every series, in days.
#[no_mangle]
pub extern "C" fn tn_series_len() -> usize {
    SERIES_LEN
}

/// Length of the handcrafted feature vector.
#[no_mangle]
pub extern "C" fn tn_feature_count() -> usize {
    FEATURE_COUNT
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn tn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Fills missing days of one series by local barycentric interpolation.
///
/// # Safety
/// `series` and `out` must each point to 365 doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_impute(series: *const f64, out: *mut f64) -> TnStatus {
    guard(|| {
        let r = record(input(series, SERIES_LEN, "series")?)?;
        let filled = impute_missing(&r)?;
        output(out, SERIES_LEN, "out")?.copy_from_slice(&filled.readings);
        Ok(())
    })
}

/// Imputes then standardizes one series to zero mean and unit variance.
///
/// # Safety
/// `series` and `out` must each point to 365 doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_preprocess(series: *const f64, out: *mut f64) -> TnStatus {
    guard(|| {
        let r = record(input(series, SERIES_LEN, "series")?)?;
        let z = preprocess(&r)?;
        output(out, SERIES_LEN, "out")?.copy_from_slice(&z.readings);
        Ok(())
    })
}

/// Standardizes one complete series; fails on `NaN` entries.
///
/// # Safety
/// `series` and `out` must each point to 365 doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_zscore(series: *const f64, out: *mut f64) -> TnStatus {
    guard(|| {
        let r = record(input(series, SERIES_LEN, "series")?)?;
        let z = zscore(&r)?;
        output(out, SERIES_LEN, "out")?.copy_from_slice(&z.readings);
        Ok(())
    })
}

/// Handcrafted features of one series after imputation.
///
/// # Safety
/// `series` must point to 365 doubles and `out` to `tn_feature_count()` doubles.
/// `divergence_undefined` may be null.
#[no_mangle]
pub unsafe extern "C" fn tn_extract_features(series: *const f64, out: *mut f64, divergence_undefined: *mut bool) -> TnStatus {
    guard(|| {
        let r = impute_missing(&record(input(series, SERIES_LEN, "series")?)?)?;
        let f = extract_features(&r)?;
        output(out, FEATURE_COUNT, "out")?.copy_from_slice(&f.values);
        if !divergence_undefined.is_null() {
            *divergence_undefined = f.divergence_undefined;
        }
        Ok(())
    })
}

/// ROC AUC of `scores` against 0/1 `labels`.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn tn_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> TnStatus {
    guard(|| {
        let v = metrics::auc(input(scores, n, "scores")?, input(labels, n, "labels")?)?;
        *output(out, 1, "out")?.first_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Mean clipped binary cross entropy of probabilities `p` against `labels`.
///
/// # Safety
/// `p` and `labels` must point to `n` elements; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn tn_logloss(p: *const f64, labels: *const u8, n: usize, out: *mut f64) -> TnStatus {
    guard(|| {
        let v = metrics::logloss(input(p, n, "p")?, input(labels, n, "labels")?)?;
        *output(out, 1, "out")?.first_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Loads a network checkpoint written by `theftnet train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tn_network_load(path: *const c_char, out: *mut *mut TnNetwork) -> TnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let net = load_checkpoint::<f32>(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(TnNetwork { net }));
        Ok(())
    })
}

/// Theft probabilities for `rows` raw series (imputed and standardized here).
///
/// # Safety
/// `net` must come from [`tn_network_load`]; `series` must point to
/// `rows * 365` doubles and `out` to `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_network_predict(net: *const TnNetwork, series: *const f64, rows: usize, out: *mut f64) -> TnStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let recs = records(input(series, rows * SERIES_LEN, "series")?)?;
        let prepared = recs.iter().map(preprocess).collect::<theftnet::Result<Vec<_>>>()?;
        predict_network(net, &prepared, output(out, rows, "out")?)
    })
}

/// Theft probabilities for `rows` series that are already standardized.
///
/// # Safety
/// As for [`tn_network_predict`]; the input must not contain `NaN`.
#[no_mangle]
pub unsafe extern "C" fn tn_network_predict_standardized(
    net: *const TnNetwork,
    series: *const f64,
    rows: usize,
    out: *mut f64,
) -> TnStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let recs = records(input(series, rows * SERIES_LEN, "series")?)?;
        if recs.iter().any(|r| !r.is_complete()) {
            return Err(Failure(TnStatus::InvalidArgument, "standardized input contains NaN".into()));
        }
        predict_network(net, &recs, output(out, rows, "out")?)
    })
}

fn predict_network(net: &TnNetwork, recs: &[ConsumptionRecord], out: &mut [f64]) -> Result<(), Failure> {
    if recs.is_empty() {
        return Ok(());
    }
    let refs: Vec<&ConsumptionRecord> = recs.iter().collect();
    let x = to_tensor::<f32>(&refs)?;
    let p = net.net.predict_proba_chunked(&x, PREDICT_CHUNK)?;
    out.copy_from_slice(&p);
    Ok(())
}

/// Releases a network handle; null is ignored.
///
/// # Safety
/// `net` must come from [`tn_network_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tn_network_free(net: *mut TnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Loads a forest or boosting model file written by `theftnet train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tn_baseline_load(path: *const c_char, out: *mut *mut TnBaseline) -> TnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = BaselineModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(TnBaseline { model }));
        Ok(())
    })
}

/// Theft probabilities for `rows` raw series (imputed and featurized here).
///
/// # Safety
/// `model` must come from [`tn_baseline_load`]; `series` must point to
/// `rows * 365` doubles and `out` to `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_baseline_predict(model: *const TnBaseline, series: *const f64, rows: usize, out: *mut f64) -> TnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let mut x = Vec::with_capacity(rows);
        for r in records(input(series, rows * SERIES_LEN, "series")?)? {
            x.push(extract_features(&impute_missing(&r)?)?.values);
        }
        let p = model.model.predict_proba(&x)?;
        output(out, rows, "out")?.copy_from_slice(&p);
        Ok(())
    })
}

/// Theft probabilities for `rows` precomputed feature vectors.
///
/// # Safety
/// `features` must point to `rows * tn_feature_count()` doubles and `out` to
/// `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_baseline_predict_features(
    model: *const TnBaseline,
    features: *const f64,
    rows: usize,
    out: *mut f64,
) -> TnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let n = model.model.n_features();
        let x: Vec<Vec<f64>> = input(features, rows * n, "features")?.chunks(n).map(<[f64]>::to_vec).collect();
        let p = model.model.predict_proba(&x)?;
        output(out, rows, "out")?.copy_from_slice(&p);
        Ok(())
    })
}

/// Releases a baseline handle; null is ignored.
///
/// # Safety
/// `model` must come from [`tn_baseline_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tn_baseline_free(model: *mut TnBaseline) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
