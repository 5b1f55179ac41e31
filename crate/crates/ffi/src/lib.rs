//! C ABI over `ssvep-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! and released by the matching `*_free`. Every fallible function returns an
//! [`SsvepStatus`]; the message of the last failure on the calling thread is
//! available from [`ssvep_last_error`]. Panics never unwind into C: they are
//! reported as [`SsvepStatus::Panic`].
//!
//! Signal buffers are channel-major `f64` arrays (`channels * samples`,
//! one channel after the other).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ssvep_core::baselines::{build_references, cca_classify_matrix, ReferenceBank};
use ssvep_core::eval::highpass_epoch;
use ssvep_core::model::Model;
use ssvep_core::signal::{Condition, Epoch, Montage};
use ssvep_core::{Error, Matrix};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsvepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed model file.
    Format = 3,
    Io = 4,
    /// Numerical or internal failure.
    Runtime = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Montage codes used by [`ssvep_model_montage`].
pub const SSVEP_MONTAGE_SCALP: i32 = 0;
pub const SSVEP_MONTAGE_EAR: i32 = 1;

/// A trained LDA or network model.
pub struct SsvepModel {
    inner: Model,
}

/// CCA reference bank for fixed frequencies, epoch length and rate.
pub struct SsvepCca {
    bank: ReferenceBank,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SsvepStatus {
    match e {
        Error::InvalidArgument(_) | Error::Shape { .. } => SsvepStatus::InvalidArgument,
        Error::Format { .. } | Error::Json(_) => SsvepStatus::Format,
        Error::Io { .. } => SsvepStatus::Io,
        Error::InvalidState(_) | Error::Numerical(_) | Error::Diverged { .. } => SsvepStatus::Runtime,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, converting errors and panics to a status and recording the
/// message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsvepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsvepStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SsvepStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SsvepStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(p)
    }
}

/// Copies a channel-major buffer into a matrix.
unsafe fn read_signal(data: *const f64, channels: usize, samples: usize) -> Result<Matrix, Fail> {
    non_null(data, "data")?;
    let len = channels
        .checked_mul(samples)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("bad signal shape {channels} x {samples}")))?;
    let values = std::slice::from_raw_parts(data, len).to_vec();
    Ok(Matrix::from_vec(channels, samples, values)?)
}

/// Message of the last failed call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ssvep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssvep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by `ssvep train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssvep_model_load(path: *const c_char, out: *mut *mut SsvepModel) -> SsvepStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
        let inner = Model::load(path)?;
        *out = Box::into_raw(Box::new(SsvepModel { inner }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`ssvep_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssvep_model_free(model: *mut SsvepModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Montage the model was trained on ([`SSVEP_MONTAGE_SCALP`] or
/// [`SSVEP_MONTAGE_EAR`]) and its channel count.
///
/// # Safety
/// `model` must be a live handle; `montage` and `channels` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ssvep_model_montage(
    model: *const SsvepModel,
    montage: *mut i32,
    channels: *mut usize,
) -> SsvepStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(montage, "montage")?;
        non_null(channels, "channels")?;
        let m = (*model).inner.montage();
        *montage = match m {
            Montage::Scalp32 => SSVEP_MONTAGE_SCALP,
            Montage::Ear18 => SSVEP_MONTAGE_EAR,
        };
        *channels = m.channel_count();
        Ok(())
    })
}

/// Classifies one raw epoch. The 3 Hz high-pass used in training is applied
/// here, so pass unfiltered data.
///
/// # Safety
/// `model` must be a live handle, `data` must hold `channels * samples`
/// values and `label` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssvep_model_predict(
    model: *const SsvepModel,
    data: *const f64,
    channels: usize,
    samples: usize,
    rate: f64,
    label: *mut usize,
) -> SsvepStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(label, "label")?;
        let model = &(*model).inner;
        let data = read_signal(data, channels, samples)?;
        let montage = model.montage();
        if channels != montage.channel_count() {
            return Err(Error::InvalidArgument(format!(
                "{montage} model needs {} channels, got {channels}",
                montage.channel_count()
            ))
            .into());
        }
        let epoch = highpass_epoch(Epoch {
            montage,
            rate,
            data,
            label: 0,
            condition: Condition::Standing,
            subject_id: 1,
        })?;
        *label = model.predict(&epoch)?;
        Ok(())
    })
}

/// Builds CCA references for `n_freqs` stimulus frequencies with
/// `harmonics` sine/cosine pairs each.
///
/// # Safety
/// `freqs` must hold `n_freqs` values and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssvep_cca_new(
    freqs: *const f64,
    n_freqs: usize,
    harmonics: usize,
    samples: usize,
    rate: f64,
    out: *mut *mut SsvepCca,
) -> SsvepStatus {
    guard(|| {
        non_null(freqs, "freqs")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        if n_freqs == 0 {
            return Err(Error::InvalidArgument("need at least one frequency".into()).into());
        }
        let freqs = std::slice::from_raw_parts(freqs, n_freqs);
        let bank = build_references(freqs, harmonics, samples, rate)?;
        *out = Box::into_raw(Box::new(SsvepCca { bank }));
        Ok(())
    })
}

/// Releases a CCA handle. NULL is ignored.
///
/// # Safety
/// `cca` must come from [`ssvep_cca_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssvep_cca_free(cca: *mut SsvepCca) {
    if !cca.is_null() {
        drop(Box::from_raw(cca));
    }
}

/// Picks the frequency with the largest canonical correlation. If
/// `correlations` is not NULL it receives one value per frequency.
///
/// # Safety
/// `cca` must be a live handle, `data` must hold `channels * samples`
/// values, `label` must be valid and `correlations` NULL or room for
/// `n_freqs` values.
#[no_mangle]
pub unsafe extern "C" fn ssvep_cca_classify(
    cca: *const SsvepCca,
    data: *const f64,
    channels: usize,
    samples: usize,
    label: *mut usize,
    correlations: *mut f64,
) -> SsvepStatus {
    guard(|| {
        non_null(cca, "cca")?;
        non_null(label, "label")?;
        let x = read_signal(data, channels, samples)?;
        let (best, rho) = cca_classify_matrix(&x, &(*cca).bank)?;
        *label = best;
        if !correlations.is_null() {
            ptr::copy_nonoverlapping(rho.as_ptr(), correlations, rho.len());
        }
        Ok(())
    })
}
