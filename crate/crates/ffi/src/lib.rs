//! C ABI over the trajbench core.
//!
//! Objects cross the boundary as opaque handles created by `tb_*_read` /
//! `tb_*_from_jsonl` and released with the matching `tb_*_free`. Every
//! fallible call returns a [`TbStatus`]; on failure `tb_last_error()` holds a
//! message for the calling thread. Strings returned through `out` pointers
//! are owned by the caller and must be released with `tb_string_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use trajbench::detectors::{run_detector, DetectorParams, Method};
use trajbench::llm::LlmError;
use trajbench::model::{Dataset, GeoPoint, LabelSet};
use trajbench::scores::ScoreTable;
use trajbench::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Parse = 4,
    Io = 5,
    UndefinedMetric = 6,
    Config = 7,
    Llm = 8,
    NotFound = 9,
    Internal = 10,
    Panic = 11,
}

pub struct TbDataset(Dataset);
pub struct TbLabels(LabelSet);
pub struct TbScores(ScoreTable);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(TbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::Injection(_) | Error::TrainingDiverged { .. } => TbStatus::InvalidInput,
            Error::Config(_) => TbStatus::Config,
            Error::Io { .. } => TbStatus::Io,
            Error::CorruptInput { .. } | Error::Parse { .. } | Error::Json(_) => TbStatus::Parse,
            Error::UndefinedMetric(_) => TbStatus::UndefinedMetric,
            Error::Llm(_) => TbStatus::Llm,
            _ => TbStatus::Internal,
        };
        Fail(code, e.to_string())
    }
}

impl From<LlmError> for Fail {
    fn from(e: LlmError) -> Self {
        Fail(TbStatus::Llm, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TbStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside trajbench");
            TbStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(TbStatus::NullPointer, format!("{what} is null")))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(TbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(TbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(TbStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(TbStatus::Internal, "string contains NUL".into()))?;
    put(out, c.into_raw())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn tb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Great-circle distance in km.
#[no_mangle]
pub unsafe extern "C" fn tb_haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out: *mut f64) -> TbStatus {
    guard(|| {
        let d = trajbench::model::haversine_km(GeoPoint { lat: lat1, lon: lon1 }, GeoPoint { lat: lat2, lon: lon2 })?;
        put(out, d)
    })
}

// ---- datasets ----

#[no_mangle]
pub unsafe extern "C" fn tb_dataset_read(path: *const c_char, out: *mut *mut TbDataset) -> TbStatus {
    guard(|| {
        let ds = trajbench::io::read_dataset(Path::new(as_str(path, "path")?))?;
        put(out, Box::into_raw(Box::new(TbDataset(ds))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_dataset_from_jsonl(text: *const c_char, out: *mut *mut TbDataset) -> TbStatus {
    guard(|| {
        let ds = trajbench::io::decode_dataset(as_str(text, "text")?)?;
        put(out, Box::into_raw(Box::new(TbDataset(ds))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_dataset_len(ds: *const TbDataset, out: *mut usize) -> TbStatus {
    guard(|| put(out, as_ref(ds, "dataset")?.0.trajectories.len()))
}

#[no_mangle]
pub unsafe extern "C" fn tb_dataset_free(ds: *mut TbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Stay-point sequence of one agent as rendered into prompts. A negative
/// `deviate_index` renders without the deviate marker.
#[no_mangle]
pub unsafe extern "C" fn tb_render_stay_sequence(
    ds: *const TbDataset,
    agent_id: *const c_char,
    deviate_index: i64,
    out: *mut *mut c_char,
) -> TbStatus {
    guard(|| {
        let ds = &as_ref(ds, "dataset")?.0;
        let id = as_str(agent_id, "agent_id")?;
        let t = ds.get(id).ok_or_else(|| Fail(TbStatus::NotFound, format!("no agent {id}")))?;
        let idx = usize::try_from(deviate_index).ok();
        put_string(out, trajbench::llm::render_stay_sequence(t, idx)?)
    })
}

// ---- labels ----

#[no_mangle]
pub unsafe extern "C" fn tb_labels_read(path: *const c_char, out: *mut *mut TbLabels) -> TbStatus {
    guard(|| {
        let l = trajbench::io::read_labels(Path::new(as_str(path, "path")?))?;
        put(out, Box::into_raw(Box::new(TbLabels(l))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_labels_from_jsonl(text: *const c_char, out: *mut *mut TbLabels) -> TbStatus {
    guard(|| {
        let l = trajbench::io::decode_labels(as_str(text, "text")?)?;
        put(out, Box::into_raw(Box::new(TbLabels(l))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_labels_free(l: *mut TbLabels) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

// ---- score tables ----

#[no_mangle]
pub unsafe extern "C" fn tb_scores_read(path: *const c_char, out: *mut *mut TbScores) -> TbStatus {
    guard(|| {
        let t = ScoreTable::read(Path::new(as_str(path, "path")?))?;
        put(out, Box::into_raw(Box::new(TbScores(t))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_scores_from_jsonl(text: *const c_char, out: *mut *mut TbScores) -> TbStatus {
    guard(|| {
        let t = ScoreTable::from_jsonl(as_str(text, "text")?)?;
        put(out, Box::into_raw(Box::new(TbScores(t))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_scores_to_jsonl(t: *const TbScores, out: *mut *mut c_char) -> TbStatus {
    guard(|| put_string(out, as_ref(t, "scores")?.0.to_jsonl()))
}

/// Number of scored agents.
#[no_mangle]
pub unsafe extern "C" fn tb_scores_len(t: *const TbScores, out: *mut usize) -> TbStatus {
    guard(|| put(out, as_ref(t, "scores")?.0.len()))
}

#[no_mangle]
pub unsafe extern "C" fn tb_scores_get(t: *const TbScores, agent_id: *const c_char, out: *mut f64) -> TbStatus {
    guard(|| {
        let id = as_str(agent_id, "agent_id")?;
        let v = as_ref(t, "scores")?.0.get(id).ok_or_else(|| Fail(TbStatus::NotFound, format!("no score for {id}")))?;
        put(out, v)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_scores_free(t: *mut TbScores) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Runs a detector (`ompad|monav|traod|dae|dsvdd`). `params_toml` may be null
/// for defaults; `labels` may be null when none are known.
#[no_mangle]
pub unsafe extern "C" fn tb_detect(
    ds: *const TbDataset,
    labels: *const TbLabels,
    method: *const c_char,
    params_toml: *const c_char,
    out: *mut *mut TbScores,
) -> TbStatus {
    guard(|| {
        let ds = &as_ref(ds, "dataset")?.0;
        let empty = LabelSet::default();
        let labels = labels.as_ref().map(|l| &l.0).unwrap_or(&empty);
        let method: Method = as_str(method, "method")?.parse()?;
        let params = if params_toml.is_null() {
            DetectorParams::default()
        } else {
            DetectorParams::from_toml(as_str(params_toml, "params_toml")?)?
        };
        let t = run_detector(method, ds, labels, &params)?;
        put(out, Box::into_raw(Box::new(TbScores(t))))
    })
}

// ---- metrics and parsing ----

#[no_mangle]
pub unsafe extern "C" fn tb_roc_auc(t: *const TbScores, l: *const TbLabels, out: *mut f64) -> TbStatus {
    guard(|| put(out, trajbench::eval::roc_auc(&as_ref(t, "scores")?.0, &as_ref(l, "labels")?.0)?))
}

#[no_mangle]
pub unsafe extern "C" fn tb_average_precision(t: *const TbScores, l: *const TbLabels, out: *mut f64) -> TbStatus {
    guard(|| put(out, trajbench::eval::average_precision(&as_ref(t, "scores")?.0, &as_ref(l, "labels")?.0)?))
}

#[no_mangle]
pub unsafe extern "C" fn tb_top_k_hits(t: *const TbScores, l: *const TbLabels, k: usize, out: *mut usize) -> TbStatus {
    guard(|| put(out, trajbench::eval::top_k_hits(&as_ref(t, "scores")?.0, &as_ref(l, "labels")?.0, k)))
}

/// Score of a separate-mode answer: the last bracketed number in [0, 1].
#[no_mangle]
pub unsafe extern "C" fn tb_parse_separate_score(text: *const c_char, out: *mut f64) -> TbStatus {
    guard(|| put(out, trajbench::llm::parse_separate_score(as_str(text, "text")?)?))
}
