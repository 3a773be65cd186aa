//! C ABI for the cone-attention kernels.
//!
//! The surface follows the usual pattern for Rust C APIs: an opaque config
//! handle created and freed by this library, plain status codes, and a
//! per-thread error message for the last failing call. Buffers are caller
//! allocated; matrix arguments are row-major `double` arrays.

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cone_attention::attention::{attend, multi_head, pairwise_logits, AttentionBatch};
use cone_attention::gradients::{kernel_grad, scalar_logit_euclidean};
use cone_attention::kernels::{KernelConfig, KernelKind};
use cone_attention::matrix::Matrix;
use cone_attention::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad argument, shape, or configuration; see `ca_last_error_message`.
    InvalidArgument = 2,
    /// Overflow or a non-finite intermediate; see `ca_last_error_message`.
    NumericRange = 3,
    /// The underlying implementation panicked (a bug, not user error).
    Panic = 4,
}

/// Opaque kernel configuration handle.
pub struct CaConfig {
    inner: KernelConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> CaStatus {
    match e {
        Error::NumericRange { .. } => CaStatus::NumericRange,
        _ => CaStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> CaStatus {
    set_last_error(&e.to_string());
    status_of(&e)
}

fn guarded(f: impl FnOnce() -> CaStatus + std::panic::UnwindSafe) -> CaStatus {
    match catch_unwind(f) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            CaStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn parse_kind(name: &str) -> Option<KernelKind> {
    KernelKind::ALL.into_iter().find(|k| k.name() == name)
}

/// Creates a config with paper-default parameters for the named kernel
/// (`penumbral`, `umbral`, `dist_halfspace`, `dist_hyperboloid`,
/// `laplacian`, `dot`). Returns null on error; free with
/// [`ca_config_free`].
///
/// # Safety
/// `kernel` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ca_config_new(kernel: *const c_char) -> *mut CaConfig {
    if kernel.is_null() {
        set_last_error("kernel name is null");
        return ptr::null_mut();
    }
    let name = unsafe { CStr::from_ptr(kernel) }.to_string_lossy();
    match parse_kind(&name) {
        Some(kind) => Box::into_raw(Box::new(CaConfig { inner: KernelConfig::new(kind) })),
        None => {
            set_last_error(&format!("unknown kernel {name:?}"));
            ptr::null_mut()
        }
    }
}

/// Creates a config from the same JSON document the CLI accepts, e.g.
/// `{"kernel": "penumbral", "gamma": 1.0}`. Returns null on error.
///
/// # Safety
/// `json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ca_config_from_json(json: *const c_char) -> *mut CaConfig {
    if json.is_null() {
        set_last_error("json is null");
        return ptr::null_mut();
    }
    let text = unsafe { CStr::from_ptr(json) }.to_string_lossy();
    let parsed: Result<KernelConfig, _> = serde_json_from_str(&text);
    match parsed {
        Ok(config) => match config.validate() {
            Ok(()) => Box::into_raw(Box::new(CaConfig { inner: config })),
            Err(e) => {
                set_last_error(&e.to_string());
                ptr::null_mut()
            }
        },
        Err(e) => {
            set_last_error(&e);
            ptr::null_mut()
        }
    }
}

fn serde_json_from_str(text: &str) -> Result<KernelConfig, String> {
    KernelConfig::from_json_str(text).map_err(|e| e.to_string())
}

/// Frees a config created by this library. Null is a no-op.
///
/// # Safety
/// `config` must be a pointer returned by `ca_config_new` or
/// `ca_config_from_json` that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ca_config_free(config: *mut CaConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

macro_rules! config_setter {
    ($(#[$doc:meta])* $name:ident, $field:ident) => {
        $(#[$doc])*
        /// # Safety
        /// `config` must be a live handle from this library.
        #[no_mangle]
        pub unsafe extern "C" fn $name(config: *mut CaConfig, value: f64) -> CaStatus {
            let Some(config) = (unsafe { config.as_mut() }) else {
                set_last_error("config is null");
                return CaStatus::NullPointer;
            };
            let previous = config.inner.$field;
            config.inner.$field = value;
            match config.inner.validate() {
                Ok(()) => CaStatus::Ok,
                Err(e) => {
                    config.inner.$field = previous;
                    fail(e)
                }
            }
        }
    };
}

config_setter!(
    /// Sets the softmax temperature gamma (> 0).
    ca_config_set_gamma,
    gamma
);
config_setter!(
    /// Sets the penumbral light-source height h (> 0).
    ca_config_set_light_height,
    light_height
);
config_setter!(
    /// Sets the umbral occluder radius r (> 0).
    ca_config_set_ball_radius,
    ball_radius
);
config_setter!(
    /// Sets the distance-attention scale beta (> 0).
    ca_config_set_beta,
    beta
);
config_setter!(
    /// Sets the distance-attention offset c.
    ca_config_set_c,
    c
);

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

/// Scalar logit of one query/key pair of `d`-dimensional Euclidean
/// inputs, projection included.
///
/// # Safety
/// `query` and `key` must point to `d` doubles, `out` to one double, and
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ca_logit(
    config: *const CaConfig,
    query: *const f64,
    key: *const f64,
    d: usize,
    out: *mut f64,
) -> CaStatus {
    let Some(config) = (unsafe { config.as_ref() }) else {
        set_last_error("config is null");
        return CaStatus::NullPointer;
    };
    let (Some(q), Some(k)) = (unsafe { slice_arg(query, d) }, unsafe { slice_arg(key, d) }) else {
        set_last_error("query/key is null");
        return CaStatus::NullPointer;
    };
    if out.is_null() {
        set_last_error("out is null");
        return CaStatus::NullPointer;
    }
    guarded(AssertUnwindSafe(|| match scalar_logit_euclidean(q, k, &config.inner) {
        Ok(logit) => {
            unsafe { *out = logit };
            CaStatus::Ok
        }
        Err(e) => fail(e),
    }))
}

/// Pairwise logit gradient with respect to both Euclidean inputs.
/// `nonsmooth_out` (optional) receives 1 when the pair sits on a branch
/// tie or existence boundary and the documented subgradient was returned.
///
/// # Safety
/// `query`, `key`, `grad_query_out`, `grad_key_out` must point to `d`
/// doubles each; `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ca_logit_grad(
    config: *const CaConfig,
    query: *const f64,
    key: *const f64,
    d: usize,
    grad_query_out: *mut f64,
    grad_key_out: *mut f64,
    nonsmooth_out: *mut u8,
) -> CaStatus {
    let Some(config) = (unsafe { config.as_ref() }) else {
        set_last_error("config is null");
        return CaStatus::NullPointer;
    };
    let (Some(q), Some(k)) = (unsafe { slice_arg(query, d) }, unsafe { slice_arg(key, d) }) else {
        set_last_error("query/key is null");
        return CaStatus::NullPointer;
    };
    if grad_query_out.is_null() || grad_key_out.is_null() {
        set_last_error("gradient output is null");
        return CaStatus::NullPointer;
    }
    guarded(AssertUnwindSafe(|| match kernel_grad(q, k, &config.inner) {
        Ok(grads) => {
            unsafe {
                std::ptr::copy_nonoverlapping(grads.grad_u.as_ptr(), grad_query_out, d);
                std::ptr::copy_nonoverlapping(grads.grad_v.as_ptr(), grad_key_out, d);
                if !nonsmooth_out.is_null() {
                    *nonsmooth_out = grads.nonsmooth as u8;
                }
            }
            CaStatus::Ok
        }
        Err(e) => fail(e),
    }))
}

/// Fills `out` (row-major n x m) with the pairwise logits of `queries`
/// (n x d) against `keys` (m x d). Masked pairs are not supported here;
/// use [`ca_attend`] for masking.
///
/// # Safety
/// Buffers must have the stated sizes; `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ca_logit_matrix(
    config: *const CaConfig,
    queries: *const f64,
    n: usize,
    keys: *const f64,
    m: usize,
    d: usize,
    out: *mut f64,
) -> CaStatus {
    let Some(config) = (unsafe { config.as_ref() }) else {
        set_last_error("config is null");
        return CaStatus::NullPointer;
    };
    let (Some(q), Some(k)) = (
        unsafe { slice_arg(queries, n * d) },
        unsafe { slice_arg(keys, m * d) },
    ) else {
        set_last_error("queries/keys is null");
        return CaStatus::NullPointer;
    };
    if out.is_null() {
        set_last_error("out is null");
        return CaStatus::NullPointer;
    }
    guarded(AssertUnwindSafe(|| {
        let batch = match batch_of(q, n, k, m, d, &vec![0.0; m], 1, None) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        match pairwise_logits(&batch, &config.inner) {
            Ok(sim) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(sim.logits.data().as_ptr(), out, n * m);
                }
                CaStatus::Ok
            }
            Err(e) => fail(e),
        }
    }))
}

#[allow(clippy::too_many_arguments)]
fn batch_of(
    q: &[f64],
    n: usize,
    k: &[f64],
    m: usize,
    d: usize,
    v: &[f64],
    dv: usize,
    mask: Option<&[u8]>,
) -> Result<AttentionBatch, Error> {
    AttentionBatch::new(
        Matrix::from_vec(n, d, q.to_vec())?,
        Matrix::from_vec(m, d, k.to_vec())?,
        Matrix::from_vec(m, dv, v.to_vec())?,
        mask.map(|m| m.iter().map(|&b| b != 0).collect()),
    )
}

/// Full attention read-out into `out` (row-major n x dv). `mask` may be
/// null (attend everywhere) or point to n*m bytes where nonzero means
/// attend; every query row needs at least one attended key. Honors the
/// config's `heads` field.
///
/// # Safety
/// Buffers must have the stated sizes; `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ca_attend(
    config: *const CaConfig,
    queries: *const f64,
    n: usize,
    keys: *const f64,
    m: usize,
    d: usize,
    values: *const f64,
    dv: usize,
    mask: *const u8,
    out: *mut f64,
) -> CaStatus {
    let Some(config) = (unsafe { config.as_ref() }) else {
        set_last_error("config is null");
        return CaStatus::NullPointer;
    };
    let (Some(q), Some(k), Some(v)) = (
        unsafe { slice_arg(queries, n * d) },
        unsafe { slice_arg(keys, m * d) },
        unsafe { slice_arg(values, m * dv) },
    ) else {
        set_last_error("queries/keys/values is null");
        return CaStatus::NullPointer;
    };
    if out.is_null() {
        set_last_error("out is null");
        return CaStatus::NullPointer;
    }
    let mask = if mask.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(mask, n * m) })
    };
    guarded(AssertUnwindSafe(|| {
        let batch = match batch_of(q, n, k, m, d, v, dv, mask) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        let result = if config.inner.heads > 1 {
            multi_head(&batch, &config.inner, config.inner.heads)
        } else {
            attend(&batch, &config.inner)
        };
        match result {
            Ok(output) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(output.data().as_ptr(), out, n * dv);
                }
                CaStatus::Ok
            }
            Err(e) => fail(e),
        }
    }))
}
