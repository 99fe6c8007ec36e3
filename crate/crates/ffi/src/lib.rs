//! C ABI over `nnkit`.
//!
//! Objects are opaque handles created by `*_new`/`*_load`-style functions and
//! released with the matching `*_free`. Every function returns an
//! [`NnkitStatus`]; on failure a message is available from
//! [`nnkit_last_error`] on the same thread. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nnkit::model_io;
use nnkit::network::SequentialNetwork;
use nnkit::verification::{
    self, emit_smtlib, parse_smtlib, robustness_property, BabConfig, Engine, InputBox, Property,
    Status, VerificationResult,
};

/// Opaque network handle.
pub struct NnkitNetwork(SequentialNetwork);

/// Opaque property handle.
pub struct NnkitProperty(Property);

/// Opaque verification result handle.
pub struct NnkitResult(VerificationResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Verification = 5,
    BufferTooSmall = 6,
    NotFound = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnkitVerdict {
    Verified = 0,
    Falsified = 1,
    Unknown = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnkitEngine {
    Ibp = 0,
    Bab = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type FfiResult = Result<(), (NnkitStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult) -> NnkitStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NnkitStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            NnkitStatus::Panic
        }
    }
}

fn fail<T>(status: NnkitStatus, msg: impl ToString) -> Result<T, (NnkitStatus, String)> {
    Err((status, msg.to_string()))
}

unsafe fn nonnull<'a, T>(p: *const T, what: &str) -> Result<&'a T, (NnkitStatus, String)> {
    p.as_ref().ok_or((NnkitStatus::NullPointer, format!("{what} is null")))
}

unsafe fn string_arg(p: *const c_char, what: &str) -> Result<String, (NnkitStatus, String)> {
    if p.is_null() {
        return fail(NnkitStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .or_else(|_| fail(NnkitStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (NnkitStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(NnkitStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return fail(NnkitStatus::NullPointer, "output pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn nnkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a model document from `path`.
#[no_mangle]
pub unsafe extern "C" fn nnkit_network_load(path: *const c_char, out: *mut *mut NnkitNetwork) -> NnkitStatus {
    guard(|| {
        let path = string_arg(path, "path")?;
        let net = model_io::load_model(&path).or_else(|e| {
            let status = match e {
                model_io::ModelIoError::Io { .. } => NnkitStatus::Io,
                _ => NnkitStatus::Parse,
            };
            fail(status, e)
        })?;
        write_out(out, NnkitNetwork(net))
    })
}

/// Parses a model document from a JSON string.
#[no_mangle]
pub unsafe extern "C" fn nnkit_network_from_json(json: *const c_char, out: *mut *mut NnkitNetwork) -> NnkitStatus {
    guard(|| {
        let text = string_arg(json, "json")?;
        let net = model_io::from_json(&text).or_else(|e| fail(NnkitStatus::Parse, e))?;
        write_out(out, NnkitNetwork(net))
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_network_save(net: *const NnkitNetwork, path: *const c_char) -> NnkitStatus {
    guard(|| {
        let net = nonnull(net, "network")?;
        let path = string_arg(path, "path")?;
        model_io::save_model(&net.0, &path).or_else(|e| fail(NnkitStatus::Io, e))
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_network_input_dim(net: *const NnkitNetwork, out: *mut usize) -> NnkitStatus {
    guard(|| {
        let net = nonnull(net, "network")?;
        if out.is_null() {
            return fail(NnkitStatus::NullPointer, "output pointer is null");
        }
        *out = net.0.input_dim;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_network_output_dim(net: *const NnkitNetwork, out: *mut usize) -> NnkitStatus {
    guard(|| {
        let net = nonnull(net, "network")?;
        if out.is_null() {
            return fail(NnkitStatus::NullPointer, "output pointer is null");
        }
        *out = net.0.output_dim();
        Ok(())
    })
}

/// Inference-mode forward pass; `y_len` must be at least the output dimension.
#[no_mangle]
pub unsafe extern "C" fn nnkit_network_forward(
    net: *const NnkitNetwork,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> NnkitStatus {
    guard(|| {
        let net = nonnull(net, "network")?;
        let x = slice_arg(x, x_len, "x")?;
        let out = net.0.forward(x).or_else(|e| fail(NnkitStatus::InvalidArgument, e))?;
        if y_len < out.len() {
            return fail(NnkitStatus::BufferTooSmall, format!("need {} outputs, buffer holds {y_len}", out.len()));
        }
        if y.is_null() {
            return fail(NnkitStatus::NullPointer, "y is null");
        }
        ptr::copy_nonoverlapping(out.as_ptr(), y, out.len());
        Ok(())
    })
}

/// Index of the largest output (lowest index on ties).
#[no_mangle]
pub unsafe extern "C" fn nnkit_network_classify(
    net: *const NnkitNetwork,
    x: *const f64,
    x_len: usize,
    out: *mut usize,
) -> NnkitStatus {
    guard(|| {
        let net = nonnull(net, "network")?;
        let x = slice_arg(x, x_len, "x")?;
        let k = net.0.classify(x).or_else(|e| fail(NnkitStatus::InvalidArgument, e))?;
        if out.is_null() {
            return fail(NnkitStatus::NullPointer, "output pointer is null");
        }
        *out = k;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_network_free(net: *mut NnkitNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Parses an SMT-LIB property.
#[no_mangle]
pub unsafe extern "C" fn nnkit_property_parse_smtlib(text: *const c_char, out: *mut *mut NnkitProperty) -> NnkitStatus {
    guard(|| {
        let text = string_arg(text, "text")?;
        let p = parse_smtlib(&text).or_else(|e| fail(NnkitStatus::Parse, e))?;
        write_out(out, NnkitProperty(p))
    })
}

/// L∞ robustness query of radius `epsilon` around `x0` in the unit cube.
#[no_mangle]
pub unsafe extern "C" fn nnkit_property_robustness(
    x0: *const f64,
    len: usize,
    label: usize,
    num_classes: usize,
    epsilon: f64,
    out: *mut *mut NnkitProperty,
) -> NnkitStatus {
    guard(|| {
        let x0 = slice_arg(x0, len, "x0")?;
        if x0.is_empty() {
            return fail(NnkitStatus::InvalidArgument, "x0 is empty");
        }
        let p = robustness_property(x0, label, num_classes, epsilon, &InputBox::unit(len))
            .or_else(|e| fail(NnkitStatus::InvalidArgument, e))?;
        write_out(out, NnkitProperty(p))
    })
}

/// Emits the property as SMT-LIB; release the string with [`nnkit_string_free`].
#[no_mangle]
pub unsafe extern "C" fn nnkit_property_to_smtlib(prop: *const NnkitProperty, out: *mut *mut c_char) -> NnkitStatus {
    guard(|| {
        let prop = nonnull(prop, "property")?;
        if out.is_null() {
            return fail(NnkitStatus::NullPointer, "output pointer is null");
        }
        let text = CString::new(emit_smtlib(&prop.0)).expect("emitted text has no NUL");
        *out = text.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_property_free(prop: *mut NnkitProperty) {
    if !prop.is_null() {
        drop(Box::from_raw(prop));
    }
}

/// Runs a verifier. `timeout_secs <= 0` means no time budget; `max_nodes == 0`
/// keeps the default node budget.
#[no_mangle]
pub unsafe extern "C" fn nnkit_verify(
    net: *const NnkitNetwork,
    prop: *const NnkitProperty,
    engine: NnkitEngine,
    timeout_secs: f64,
    max_nodes: usize,
    seed: u64,
    out: *mut *mut NnkitResult,
) -> NnkitStatus {
    guard(|| {
        let net = nonnull(net, "network")?;
        let prop = nonnull(prop, "property")?;
        let mut cfg = BabConfig { seed, ..Default::default() };
        if timeout_secs > 0.0 {
            cfg.time_budget = Some(timeout_secs);
        }
        if max_nodes > 0 {
            cfg.max_nodes = max_nodes;
        }
        let engine = match engine {
            NnkitEngine::Ibp => Engine::Ibp,
            NnkitEngine::Bab => Engine::Bab,
        };
        let r = verification::verify(&net.0, &prop.0, engine, &cfg)
            .or_else(|e| fail(NnkitStatus::Verification, e))?;
        write_out(out, NnkitResult(r))
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_result_verdict(res: *const NnkitResult, out: *mut NnkitVerdict) -> NnkitStatus {
    guard(|| {
        let res = nonnull(res, "result")?;
        if out.is_null() {
            return fail(NnkitStatus::NullPointer, "output pointer is null");
        }
        *out = match res.0.status {
            Status::Verified => NnkitVerdict::Verified,
            Status::Falsified => NnkitVerdict::Falsified,
            Status::Unknown => NnkitVerdict::Unknown,
        };
        Ok(())
    })
}

/// Nodes explored by the search.
#[no_mangle]
pub unsafe extern "C" fn nnkit_result_nodes(res: *const NnkitResult, out: *mut usize) -> NnkitStatus {
    guard(|| {
        let res = nonnull(res, "result")?;
        if out.is_null() {
            return fail(NnkitStatus::NullPointer, "output pointer is null");
        }
        *out = res.0.stats.nodes;
        Ok(())
    })
}

/// Copies the counterexample input and output. Returns `NotFound` when the
/// verdict is not Falsified; `disjunct` may be null.
#[no_mangle]
pub unsafe extern "C" fn nnkit_result_counterexample(
    res: *const NnkitResult,
    x: *mut f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
    disjunct: *mut usize,
) -> NnkitStatus {
    guard(|| {
        let res = nonnull(res, "result")?;
        let Some(c) = &res.0.counterexample else {
            return fail(NnkitStatus::NotFound, "result has no counterexample");
        };
        if x_len < c.input.len() || y_len < c.output.len() {
            return fail(
                NnkitStatus::BufferTooSmall,
                format!("need {} inputs and {} outputs", c.input.len(), c.output.len()),
            );
        }
        if x.is_null() || y.is_null() {
            return fail(NnkitStatus::NullPointer, "x or y is null");
        }
        ptr::copy_nonoverlapping(c.input.as_ptr(), x, c.input.len());
        ptr::copy_nonoverlapping(c.output.as_ptr(), y, c.output.len());
        if !disjunct.is_null() {
            *disjunct = c.disjunct;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nnkit_result_free(res: *mut NnkitResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
