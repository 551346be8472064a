//! C ABI over the pulsekin pipeline.
//!
//! Every fallible function returns a `PkStatus` code (0 on success) and writes
//! its result through an out-pointer. The message of the most recent failure
//! on the calling thread is available from [`pk_last_error_message`].
//! Handles are opaque and must be released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pulsekin::evaluator::roc_auc;
use pulsekin::filter::PreprocSpec;
use pulsekin::net::{embedding_distance, signal_tensor, ModelParams};
use pulsekin::rppg::{extract_all, ChannelMode, Method, MethodSpec, RppgSignal};
use pulsekin::spectrum::estimate_hr;
use pulsekin::trace::{ingest_trace_with, RgbTrace};
use pulsekin::Error;

pub type PkStatus = i32;

// Mirrors `pulsekin::ErrorCode`; the values are pinned by a test below.
pub const PK_OK: PkStatus = 0;
pub const PK_ERR_FORMAT: PkStatus = 1;
pub const PK_ERR_DATA: PkStatus = 2;
pub const PK_ERR_DURATION: PkStatus = 3;
pub const PK_ERR_DEGENERATE: PkStatus = 4;
pub const PK_ERR_BAND: PkStatus = 5;
pub const PK_ERR_INDEX: PkStatus = 6;
pub const PK_ERR_WINDOW: PkStatus = 7;
pub const PK_ERR_EXTRACTION: PkStatus = 8;
pub const PK_ERR_SHAPE: PkStatus = 9;
pub const PK_ERR_CONFIG: PkStatus = 10;
pub const PK_ERR_GRAD: PkStatus = 11;
pub const PK_ERR_INSUFFICIENT: PkStatus = 12;
pub const PK_ERR_TRAINING: PkStatus = 13;
pub const PK_ERR_CLASS: PkStatus = 14;
pub const PK_ERR_IO: PkStatus = 15;
/// A null pointer or invalid UTF-8 argument.
pub const PK_ERR_ARGUMENT: PkStatus = 100;
/// A panic was caught at the boundary.
pub const PK_ERR_INTERNAL: PkStatus = 101;

pub const PK_METHOD_GREEN: i32 = 0;
pub const PK_METHOD_OMIT: i32 = 1;
pub const PK_METHOD_CHROM: i32 = 2;
pub const PK_METHOD_LGI: i32 = 3;
pub const PK_METHOD_POS: i32 = 4;

/// A validated RGB trace.
pub struct PkTrace(RgbTrace);

/// A preprocessed rPPG signal, channels × length, row-major.
pub struct PkSignal(RppgSignal);

/// A trained siamese network loaded from a checkpoint.
pub struct PkModel(ModelParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Core(Error),
    Argument(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PK_OK
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            e.code() as i32
        }
        Ok(Err(Fail::Argument(what))) => {
            set_error(format!("invalid argument: {what}"));
            PK_ERR_ARGUMENT
        }
        Err(_) => {
            set_error("internal panic".into());
            PK_ERR_INTERNAL
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Argument("null path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail::Argument("path is not UTF-8"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Argument("null output pointer"))
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Argument("null handle"))
}

fn method(code: i32) -> Result<Method, Fail> {
    Ok(match code {
        PK_METHOD_GREEN => Method::Green,
        PK_METHOD_OMIT => Method::Omit,
        PK_METHOD_CHROM => Method::Chrom,
        PK_METHOD_LGI => Method::Lgi,
        PK_METHOD_POS => Method::Pos,
        _ => return Err(Fail::Argument("unknown method code")),
    })
}

/// Message of the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads and validates a trace file. Traces shorter than `min_seconds` are
/// rejected with `PK_ERR_DURATION`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_trace_load(path: *const c_char, min_seconds: f64, out: *mut *mut PkTrace) -> PkStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let trace = ingest_trace_with(path_arg(path)?, min_seconds)?;
        *out = Box::into_raw(Box::new(PkTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from [`pk_trace_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pk_trace_free(trace: *mut PkTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` must be a live handle; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pk_trace_info(
    trace: *const PkTrace,
    frames: *mut usize,
    rois: *mut usize,
    fps: *mut f64,
) -> PkStatus {
    guard(|| {
        let t = &ref_arg(trace)?.0;
        *out_arg(frames)? = t.frames();
        *out_arg(rois)? = t.rois();
        *out_arg(fps)? = t.fps;
        Ok(())
    })
}

/// Extracts a preprocessed rPPG signal with default settings: one channel per
/// ROI, or a single channel from the ROI average when `single_channel` is
/// nonzero.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_extract(
    trace: *const PkTrace,
    method_code: i32,
    single_channel: i32,
    out: *mut *mut PkSignal,
) -> PkStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let t = &ref_arg(trace)?.0;
        let mode = if single_channel != 0 { ChannelMode::Single } else { ChannelMode::Multi };
        let sig = extract_all(t, &MethodSpec::new(method(method_code)?), &PreprocSpec::default(), mode)?;
        *out = Box::into_raw(Box::new(PkSignal(sig)));
        Ok(())
    })
}

/// Reads an rPPG signal file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_signal_load(path: *const c_char, out: *mut *mut PkSignal) -> PkStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let sig = RppgSignal::read(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(PkSignal(sig)));
        Ok(())
    })
}

/// # Safety
/// `signal` must be a live handle; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pk_signal_dims(signal: *const PkSignal, channels: *mut usize, length: *mut usize) -> PkStatus {
    guard(|| {
        let s = &ref_arg(signal)?.0;
        *out_arg(channels)? = s.channels();
        *out_arg(length)? = s.length();
        Ok(())
    })
}

/// Borrowed view of the samples, valid while the handle lives. Null for a
/// null handle.
///
/// # Safety
/// `signal` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pk_signal_data(signal: *const PkSignal) -> *const f64 {
    signal.as_ref().map_or(ptr::null(), |s| s.0.data().as_ptr())
}

/// # Safety
/// `signal` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pk_signal_free(signal: *mut PkSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// Heart rate in beats per minute from the Welch spectrum of `x`.
///
/// # Safety
/// `x` must point to `n` readable doubles and `bpm` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pk_estimate_hr(x: *const f64, n: usize, fps: f64, bpm: *mut f64) -> PkStatus {
    guard(|| {
        if x.is_null() {
            return Err(Fail::Argument("null samples"));
        }
        let est = estimate_hr(std::slice::from_raw_parts(x, n), fps)?;
        *out_arg(bpm)? = est.bpm;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_model_load(path: *const c_char, out: *mut *mut PkModel) -> PkStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let params = ModelParams::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(PkModel(params)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`pk_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pk_model_free(model: *mut PkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding distance between two signals; smaller means more likely kin.
///
/// # Safety
/// All handles must be live and `distance` valid.
#[no_mangle]
pub unsafe extern "C" fn pk_model_distance(
    model: *const PkModel,
    a: *const PkSignal,
    b: *const PkSignal,
    distance: *mut f64,
) -> PkStatus {
    guard(|| {
        let m = &ref_arg(model)?.0;
        let ea = m.embed(&signal_tensor(&ref_arg(a)?.0)?)?;
        let eb = m.embed(&signal_tensor(&ref_arg(b)?.0)?)?;
        *out_arg(distance)? = embedding_distance(&ea, &eb);
        Ok(())
    })
}

/// ROC AUC of distances against kin labels (nonzero = kin), with ties
/// counted as half.
///
/// # Safety
/// `distances` and `kin` must each point to `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn pk_auc(distances: *const f64, kin: *const u8, n: usize, auc: *mut f64) -> PkStatus {
    guard(|| {
        if distances.is_null() || kin.is_null() {
            return Err(Fail::Argument("null scores"));
        }
        let d = std::slice::from_raw_parts(distances, n);
        let k = std::slice::from_raw_parts(kin, n);
        let scores: Vec<(f64, bool)> = d.iter().zip(k).map(|(&d, &k)| (d, k != 0)).collect();
        *out_arg(auc)? = roc_auc(&scores)?.auc;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pulsekin::ErrorCode;

    #[test]
    fn status_codes_mirror_core() {
        let pairs = [
            (PK_OK, ErrorCode::Ok),
            (PK_ERR_FORMAT, ErrorCode::Format),
            (PK_ERR_DATA, ErrorCode::Data),
            (PK_ERR_DURATION, ErrorCode::Duration),
            (PK_ERR_DEGENERATE, ErrorCode::DegenerateSignal),
            (PK_ERR_BAND, ErrorCode::Band),
            (PK_ERR_INDEX, ErrorCode::Index),
            (PK_ERR_WINDOW, ErrorCode::Window),
            (PK_ERR_EXTRACTION, ErrorCode::Extraction),
            (PK_ERR_SHAPE, ErrorCode::Shape),
            (PK_ERR_CONFIG, ErrorCode::Config),
            (PK_ERR_GRAD, ErrorCode::Grad),
            (PK_ERR_INSUFFICIENT, ErrorCode::InsufficientData),
            (PK_ERR_TRAINING, ErrorCode::Training),
            (PK_ERR_CLASS, ErrorCode::Class),
            (PK_ERR_IO, ErrorCode::Io),
        ];
        for (ours, core) in pairs {
            assert_eq!(ours, core as i32, "{core:?}");
        }
    }
}
