//! C ABI over the mixloop core. Handles are opaque pointers owned by
//! Rust; every function returning a handle or string has a matching free
//! function. Fallible calls return an error code and stash a detail
//! message retrievable per thread via `mixloop_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use mixloop::config::ExperimentConfig;
use mixloop::control::{run, RunOutcome, RunResult};
use mixloop::export::export_run;
use mixloop::plant::PlantTopology;
use mixloop::prompt::render;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixloopErrorCode {
    MixloopOk = 0,
    MixloopNullPointer = 1,
    MixloopInvalidUtf8 = 2,
    MixloopConfigError = 3,
    MixloopRunError = 4,
    MixloopExportError = 5,
}

/// Terminal state of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixloopOutcome {
    MixloopTargetReached = 0,
    MixloopTimeout = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl ToString) {
    let message = CString::new(message.to_string().replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn to_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Opaque experiment configuration handle.
pub struct MixloopConfig {
    inner: ExperimentConfig,
}

/// Opaque handle for a completed run, including the plant layout the run
/// used (needed when exporting its logs).
pub struct MixloopRunResult {
    result: RunResult,
    topology: PlantTopology,
}

unsafe fn read_utf8<'a>(raw: *const c_char) -> Result<&'a str, MixloopErrorCode> {
    if raw.is_null() {
        set_last_error("null pointer argument");
        return Err(MixloopErrorCode::MixloopNullPointer);
    }
    CStr::from_ptr(raw).to_str().map_err(|e| {
        set_last_error(format!("argument is not valid UTF-8: {e}"));
        MixloopErrorCode::MixloopInvalidUtf8
    })
}

/// Detail message of the last error on this thread, or NULL when no
/// error occurred yet. Free with `mixloop_string_free`.
#[no_mangle]
pub extern "C" fn mixloop_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |m| m.clone().into_raw())
    })
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must have been returned by a mixloop function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn mixloop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New configuration with all defaults (oracle backend, fault-free
/// scenario, text representation). Free with `mixloop_config_free`.
#[no_mangle]
pub extern "C" fn mixloop_config_new() -> *mut MixloopConfig {
    Box::into_raw(Box::new(MixloopConfig {
        inner: ExperimentConfig::default(),
    }))
}

/// Parses a configuration from its JSON form. On success `*out` receives
/// a new handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid
/// pointer to a pointer slot.
#[no_mangle]
pub unsafe extern "C" fn mixloop_config_from_json(
    json: *const c_char,
    out: *mut *mut MixloopConfig,
) -> MixloopErrorCode {
    if out.is_null() {
        set_last_error("null pointer argument");
        return MixloopErrorCode::MixloopNullPointer;
    }
    let json = match read_utf8(json) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match serde_json::from_str::<ExperimentConfig>(json) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(MixloopConfig { inner }));
            MixloopErrorCode::MixloopOk
        }
        Err(e) => {
            set_last_error(e);
            MixloopErrorCode::MixloopConfigError
        }
    }
}

/// # Safety
/// `config` must be a handle from this library, not freed before. NULL
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mixloop_config_free(config: *mut MixloopConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Executes the configured closed-loop run. On success `*out` receives a
/// result handle to free with `mixloop_run_result_free`.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run(
    config: *const MixloopConfig,
    out: *mut *mut MixloopRunResult,
) -> MixloopErrorCode {
    if config.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return MixloopErrorCode::MixloopNullPointer;
    }
    let config = &(*config).inner;
    let setup = match config.build_setup() {
        Ok(s) => s,
        Err(e) => {
            set_last_error(e);
            return MixloopErrorCode::MixloopConfigError;
        }
    };
    let mut backend = match config.build_backend(&setup) {
        Ok(b) => b,
        Err(e) => {
            set_last_error(e);
            return MixloopErrorCode::MixloopConfigError;
        }
    };
    match run(&setup, backend.as_mut()) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(MixloopRunResult {
                result,
                topology: setup.kb.topology,
            }));
            MixloopErrorCode::MixloopOk
        }
        Err(e) => {
            set_last_error(e);
            MixloopErrorCode::MixloopRunError
        }
    }
}

/// # Safety
/// `result` must be a live handle from `mixloop_run`. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run_result_free(result: *mut MixloopRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live handle from `mixloop_run`.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run_result_outcome(
    result: *const MixloopRunResult,
) -> MixloopOutcome {
    match (*result).result.outcome {
        RunOutcome::TargetReached => MixloopOutcome::MixloopTargetReached,
        RunOutcome::Timeout => MixloopOutcome::MixloopTimeout,
    }
}

/// Final collection-tank level in m.
///
/// # Safety
/// `result` must be a live handle from `mixloop_run`.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run_result_final_level_b204(
    result: *const MixloopRunResult,
) -> f64 {
    (*result).result.final_state.level("B204")
}

/// Number of decision points in the run.
///
/// # Safety
/// `result` must be a live handle from `mixloop_run`.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run_result_decision_points(
    result: *const MixloopRunResult,
) -> usize {
    (*result).result.records.len()
}

/// Serializes the full run result to JSON. Free the string with
/// `mixloop_string_free`.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run_result_to_json(
    result: *const MixloopRunResult,
    out: *mut *mut c_char,
) -> MixloopErrorCode {
    if result.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return MixloopErrorCode::MixloopNullPointer;
    }
    match serde_json::to_string(&(*result).result) {
        Ok(json) => {
            *out = to_c_string(&json);
            MixloopErrorCode::MixloopOk
        }
        Err(e) => {
            set_last_error(e);
            MixloopErrorCode::MixloopRunError
        }
    }
}

/// Writes the three CSV operation logs of the run into `dir`.
///
/// # Safety
/// `result` must be a live handle and `dir` a valid NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn mixloop_run_result_export_csv(
    result: *const MixloopRunResult,
    dir: *const c_char,
) -> MixloopErrorCode {
    if result.is_null() {
        set_last_error("null pointer argument");
        return MixloopErrorCode::MixloopNullPointer;
    }
    let dir = match read_utf8(dir) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let handle = &*result;
    match export_run(Path::new(dir), &handle.result, &handle.topology) {
        Ok(_) => MixloopErrorCode::MixloopOk,
        Err(e) => {
            set_last_error(e);
            MixloopErrorCode::MixloopExportError
        }
    }
}

/// Renders the prompt a backend would receive for the configured initial
/// state. Free the string with `mixloop_string_free`.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn mixloop_render_prompt(
    config: *const MixloopConfig,
    out: *mut *mut c_char,
) -> MixloopErrorCode {
    if config.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return MixloopErrorCode::MixloopNullPointer;
    }
    let setup = match (*config).inner.build_setup() {
        Ok(s) => s,
        Err(e) => {
            set_last_error(e);
            return MixloopErrorCode::MixloopConfigError;
        }
    };
    let bundle = render(
        &setup.kb,
        &setup.initial_state,
        setup.representation,
        &setup.profile,
    );
    *out = to_c_string(&bundle.rendered_text);
    MixloopErrorCode::MixloopOk
}
