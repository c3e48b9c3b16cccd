//! C interface to the tachyarrhythmia predictor.
//!
//! All functions return a [`VtaStatus`]; on failure a message describing the
//! most recent error on the calling thread is available from
//! [`vta_last_error_message`]. Models are opaque handles created by
//! [`vta_model_load`] and released with [`vta_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use vtapred::dataset::{round_to_decade, Label, RRRecord};
use vtapred::eval::metrics::auc_scores;
use vtapred::features::{band_power, extract, Band, FeatureConfig, FeatureSet};
use vtapred::model::Model;
use vtapred::Error;

/// Pass as `birth_year` when the birth year is unknown.
pub const VTA_BIRTH_YEAR_UNKNOWN: i32 = i32::MIN;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Dimension = 5,
    TooShort = 6,
    NonFinite = 7,
    Checkpoint = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtaFeatureSet {
    /// Eleven standard HRV metrics.
    Baseline11 = 0,
    /// Mean, LF, HF, min and max RR over the most recent filtered beats.
    Core = 1,
}

/// Opaque trained model.
pub struct VtaModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VtaStatus {
    match e {
        Error::Io { .. } => VtaStatus::Io,
        Error::Parse { .. } => VtaStatus::Parse,
        Error::Dimension { .. } => VtaStatus::Dimension,
        Error::TooShort { .. } => VtaStatus::TooShort,
        Error::NonFinite(_) | Error::Diverged { .. } => VtaStatus::NonFinite,
        Error::Checkpoint(_) => VtaStatus::Checkpoint,
        Error::Fold { source, .. } | Error::Run { source, .. } => status_of(source),
        _ => VtaStatus::InvalidArgument,
    }
}

struct Failure(VtaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VtaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VtaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VtaStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            VtaStatus::Internal
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

fn decade(birth_year: i32) -> Option<i32> {
    (birth_year != VTA_BIRTH_YEAR_UNKNOWN).then(|| round_to_decade(birth_year))
}

fn feature_config(set: VtaFeatureSet, include_windowed: bool) -> FeatureConfig {
    FeatureConfig {
        feature_set: match set {
            VtaFeatureSet::Baseline11 => FeatureSet::Baseline11,
            VtaFeatureSet::Core => FeatureSet::Core,
        },
        include_windowed,
        ..FeatureConfig::default()
    }
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vta_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of features produced by the given configuration.
#[no_mangle]
pub extern "C" fn vta_feature_count(set: VtaFeatureSet, include_windowed: bool) -> usize {
    feature_config(set, include_windowed).dim()
}

/// Extracts features from `n` RR intervals (ms) into `out`, which must hold
/// at least `out_len` values; the count written goes to `*written`.
///
/// # Safety
/// `rr` must point to `n` readable doubles and `out` to `out_len` writable
/// doubles; `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vta_extract_features(
    rr: *const f64,
    n: usize,
    set: VtaFeatureSet,
    include_windowed: bool,
    out: *mut f64,
    out_len: usize,
    written: *mut usize,
) -> VtaStatus {
    guard(|| {
        let rr = input(rr, n, "rr")?;
        let written = output(written, "written")?;
        let config = feature_config(set, include_windowed);
        let record = RRRecord {
            record_id: String::new(),
            intervals_ms: rr.to_vec(),
            label: Label::Control,
            patient_id: String::new(),
            boundary_ms: None,
        };
        let fv = extract(&record, &config)?;
        if out_len < fv.values.len() {
            return Err(Failure(
                VtaStatus::BufferTooSmall,
                format!("output holds {out_len} values, need {}", fv.values.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, fv.values.len()).copy_from_slice(&fv.values);
        *written = fv.values.len();
        Ok(())
    })
}

/// Lomb-Scargle power (ms²) of `n` RR intervals within the band `(lo, hi]` Hz.
///
/// # Safety
/// `rr` must point to `n` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vta_band_power(rr: *const f64, n: usize, lo: f64, hi: f64, out: *mut f64) -> VtaStatus {
    guard(|| {
        let rr = input(rr, n, "rr")?;
        let out = output(out, "out")?;
        *out = band_power(rr, Band::new(lo, hi)?)?;
        Ok(())
    })
}

/// Rank-based ROC AUC of `n` scores; `labels[i]` is nonzero for positives.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vta_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> VtaStatus {
    guard(|| {
        let scores = input(scores, n, "scores")?;
        let labels = input(labels, n, "labels")?;
        let out = output(out, "out")?;
        let pairs: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(&s, &l)| (s, l != 0)).collect();
        *out = auc_scores(&pairs)?;
        Ok(())
    })
}

/// Loads a checkpoint written by `vtapred train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vta_model_load(path: *const c_char, out: *mut *mut VtaModel) -> VtaStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let out = output(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(VtaStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = Model::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(VtaModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`vta_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vta_model_free(model: *mut VtaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of raw features the model expects.
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn vta_model_feature_count(model: *const VtaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.params.shape.features)
}

/// Probability of VTA for a tachogram of `n` intervals (ms) ending at the
/// prediction time. Use [`VTA_BIRTH_YEAR_UNKNOWN`] when the year is unknown.
///
/// # Safety
/// `model` must be a live handle, `rr` must point to `n` readable doubles
/// and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vta_model_predict(
    model: *const VtaModel,
    rr: *const f64,
    n: usize,
    birth_year: i32,
    out: *mut f64,
) -> VtaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let rr = input(rr, n, "rr")?;
        let out = output(out, "out")?;
        *out = model.inner.predict_intervals(rr, decade(birth_year))?;
        Ok(())
    })
}

/// Probability of VTA for an already extracted, unscaled feature vector.
///
/// # Safety
/// `model` must be a live handle, `features` must point to `n` readable
/// doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vta_model_predict_features(
    model: *const VtaModel,
    features: *const f64,
    n: usize,
    birth_year: i32,
    out: *mut f64,
) -> VtaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let features = input(features, n, "features")?;
        let out = output(out, "out")?;
        *out = model.inner.predict_features(&[features.to_vec()], &[decade(birth_year)])?[0];
        Ok(())
    })
}
