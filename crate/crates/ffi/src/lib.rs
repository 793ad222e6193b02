//! C ABI over the spatial-qa library.
//!
//! Every fallible call returns an [`SqStatus`]; on failure the message is
//! available from [`sq_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.
//! Strings returned through out-parameters are owned by the caller and are
//! released with [`sq_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spatial_qa::eval::{mra_item, normalize_radar, MRA_THRESHOLDS};
use spatial_qa::io::jsonl::{to_jsonl_string, QA_SCHEMA};
use spatial_qa::io::pipeline::run_on_scenes;
use spatial_qa::io::{ingest_scene, parse_scene, IoError, PipelineConfig};
use spatial_qa::qa::{QAItem, TemplateBank};
use spatial_qa::scene::Scene;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Invariant = 4,
    Io = 5,
    Config = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// A validated scene.
pub struct SqScene(Scene);

/// Emitted QA items from one generation run.
pub struct SqQaSet(Vec<QAItem>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SqStatus, msg: impl Into<String>) -> SqStatus {
    set_error(msg);
    status
}

fn io_status(e: &IoError) -> SqStatus {
    match e {
        IoError::Schema { .. } => SqStatus::Schema,
        IoError::Invariant { .. } => SqStatus::Invariant,
        IoError::Io { .. } => SqStatus::Io,
        IoError::Config(_) => SqStatus::Config,
    }
}

fn guard(f: impl FnOnce() -> SqStatus) -> SqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SqStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SqStatus> {
    if p.is_null() {
        return Err(fail(SqStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SqStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn give_string(s: String, out: *mut *mut c_char) -> SqStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            SqStatus::Ok
        }
        Err(_) => fail(SqStatus::InvalidArgument, "output contains a NUL byte"),
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a scene file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sq_scene_load(path: *const c_char, out: *mut *mut SqScene) -> SqStatus {
    guard(|| {
        if out.is_null() {
            return fail(SqStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ingest_scene(Path::new(path)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SqScene(s)));
                SqStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// Parses and validates a scene from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sq_scene_from_json(json: *const c_char, out: *mut *mut SqScene) -> SqStatus {
    guard(|| {
        if out.is_null() {
            return fail(SqStatus::NullPointer, "out is null");
        }
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_scene(text, "<memory>") {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SqScene(s)));
                SqStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scene` must come from a scene constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn sq_scene_free(scene: *mut SqScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sq_scene_frame_count(scene: *const SqScene) -> usize {
    scene.as_ref().map_or(0, |s| s.0.frames.len())
}

/// # Safety
/// `scene` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sq_scene_object_count(scene: *const SqScene) -> usize {
    scene.as_ref().map_or(0, |s| s.0.objects.len())
}

/// # Safety
/// `scene` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sq_scene_point_count(scene: *const SqScene) -> usize {
    scene.as_ref().and_then(|s| s.0.points.as_ref()).map_or(0, Vec::len)
}

/// Runs generation over `n` scenes. `config_toml` may be null for defaults.
/// Scenes are copied; the handles remain owned by the caller.
///
/// # Safety
/// `scenes` must point to `n` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_generate(
    scenes: *const *const SqScene,
    n: usize,
    config_toml: *const c_char,
    out: *mut *mut SqQaSet,
) -> SqStatus {
    guard(|| {
        if out.is_null() || (scenes.is_null() && n > 0) {
            return fail(SqStatus::NullPointer, "scenes or out is null");
        }
        let text = if config_toml.is_null() {
            ""
        } else {
            match str_arg(config_toml, "config_toml") {
                Ok(t) => t,
                Err(s) => return s,
            }
        };
        let cfg = match PipelineConfig::from_toml(text, &[]) {
            Ok(c) => c,
            Err(e) => return fail(io_status(&e), e.to_string()),
        };
        let mut owned = Vec::with_capacity(n);
        for i in 0..n {
            match (*scenes.add(i)).as_ref() {
                Some(s) => owned.push(s.0.clone()),
                None => return fail(SqStatus::NullPointer, format!("scenes[{i}] is null")),
            }
        }
        let bank = TemplateBank::default();
        match run_on_scenes(owned, vec![], &cfg, &bank) {
            Ok(o) => {
                *out = Box::into_raw(Box::new(SqQaSet(o.items)));
                SqStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `set` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sq_qa_set_len(set: *const SqQaSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// Serializes the set as schema-headed JSONL into a new string.
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sq_qa_set_to_jsonl(set: *const SqQaSet, out: *mut *mut c_char) -> SqStatus {
    guard(|| match (set.as_ref(), out.is_null()) {
        (Some(s), false) => give_string(to_jsonl_string(QA_SCHEMA, &s.0), out),
        _ => fail(SqStatus::NullPointer, "set or out is null"),
    })
}

/// # Safety
/// `set` must come from [`sq_generate`], or be null.
#[no_mangle]
pub unsafe extern "C" fn sq_qa_set_free(set: *mut SqQaSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn sq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mean relative accuracy of one numeric prediction over the default
/// thresholds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_mra(prediction: f64, truth: f64, out: *mut f64) -> SqStatus {
    guard(|| {
        if out.is_null() {
            return fail(SqStatus::NullPointer, "out is null");
        }
        match mra_item(prediction, truth, &MRA_THRESHOLDS) {
            Ok(v) => {
                *out = v;
                SqStatus::Ok
            }
            Err(e) => fail(SqStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Normalizes `n` model scores into [0.2, 1.0], writing `n` values to `out`.
///
/// # Safety
/// `values` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sq_normalize_radar(values: *const f64, n: usize, out: *mut f64) -> SqStatus {
    guard(|| {
        if n == 0 {
            return fail(SqStatus::InvalidArgument, "need at least one value");
        }
        if values.is_null() || out.is_null() {
            return fail(SqStatus::NullPointer, "values or out is null");
        }
        let input = std::slice::from_raw_parts(values, n);
        if input.iter().any(|v| !v.is_finite()) {
            return fail(SqStatus::InvalidArgument, "values must be finite");
        }
        let keyed = input.iter().enumerate().map(|(i, v)| (format!("{i:020}"), *v)).collect();
        let normalized = normalize_radar(&keyed);
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, v) in dst.iter_mut().zip(normalized.values()) {
            *d = *v;
        }
        SqStatus::Ok
    })
}
