//! C ABI over `qtraj`.
//!
//! Conventions:
//! - every fallible call returns a [`QtrajStatus`]; on failure a message is available from
//!   [`qtraj_last_error`] on the same thread until the next call;
//! - complex arrays are interleaved `re, im` doubles; matrices are row-major;
//! - strings returned through `*mut *mut c_char` are owned by the caller and released with
//!   [`qtraj_string_free`]; model handles are released with [`qtraj_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use qtraj::gallery::{self, GalleryParams};
use qtraj::measure::{wasserstein1, EmpiricalMeasure};
use qtraj::operator::{c, fs_distance, ComplexOperator, DensityMatrix, HermitianOperator, ProjectivePoint, C64};
use qtraj::{check_l_erg, check_pur, evolve_master, Error, OperatorModel};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QtrajStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Json = 5,
    Budget = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque model handle.
pub struct QtrajModel {
    inner: OperatorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QtrajStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::NotSquare { .. } => QtrajStatus::DimensionMismatch,
        Error::Json(_) => QtrajStatus::Json,
        Error::Io(_) => QtrajStatus::Io,
        Error::TransportBudget { .. } | Error::JumpBudget { .. } => QtrajStatus::Budget,
        Error::NonFinite | Error::Quadrature(_) | Error::Degenerate(_) => QtrajStatus::Numerical,
        _ => QtrajStatus::InvalidArgument,
    }
}

/// Run `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), (QtrajStatus, String)>>(f: F) -> QtrajStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QtrajStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            QtrajStatus::Panic
        }
    }
}

fn lift(e: Error) -> (QtrajStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (QtrajStatus, String) {
    (QtrajStatus::NullPointer, "null pointer argument".into())
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, (QtrajStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (QtrajStatus::InvalidArgument, "string is not UTF-8".into()))
}

unsafe fn complex_slice(p: *const f64, len: usize) -> Result<Vec<C64>, (QtrajStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    let raw = slice::from_raw_parts(p, 2 * len);
    Ok(raw.chunks_exact(2).map(|z| c(z[0], z[1])).collect())
}

unsafe fn give_string(s: String, out: *mut *mut c_char) -> Result<(), (QtrajStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    *out = CString::new(s)
        .map_err(|_| (QtrajStatus::Json, "interior NUL".into()))?
        .into_raw();
    Ok(())
}

unsafe fn give_model(m: OperatorModel, out: *mut *mut QtrajModel) -> Result<(), (QtrajStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(QtrajModel { inner: m }));
    Ok(())
}

unsafe fn model_ref<'a>(m: *const QtrajModel) -> Result<&'a OperatorModel, (QtrajStatus, String)> {
    m.as_ref().map(|m| &m.inner).ok_or_else(null)
}

/// Message for the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn qtraj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn qtraj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a model from its JSON file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_model_from_json(json: *const c_char, out: *mut *mut QtrajModel) -> QtrajStatus {
    guard(|| {
        let s = read_str(json)?;
        give_model(OperatorModel::from_json(s).map_err(lift)?, out)
    })
}

/// Build a gallery example. `params_json` may be NULL or an object with optional keys
/// `gamma`, `a`, `b`, `q`, `h_diag`.
///
/// # Safety
/// `name` must be a NUL-terminated string, `params_json` NULL or NUL-terminated; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_model_gallery(
    name: *const c_char,
    params_json: *const c_char,
    out: *mut *mut QtrajModel,
) -> QtrajStatus {
    guard(|| {
        let name = read_str(name)?;
        let params: GalleryParams = if params_json.is_null() {
            GalleryParams::default()
        } else {
            serde_json::from_str(read_str(params_json)?).map_err(|e| lift(e.into()))?
        };
        let ex = gallery::named(name, &params).map_err(lift)?;
        give_model(ex.model, out)
    })
}

/// Serialize a model to JSON.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_model_to_json(model: *const QtrajModel, out: *mut *mut c_char) -> QtrajStatus {
    guard(|| {
        let m = model_ref(model)?;
        give_string(m.to_json().map_err(lift)?, out)
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_model_dim(model: *const QtrajModel, out: *mut usize) -> QtrajStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null());
        }
        *out = m.dim();
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library, or be NULL. It must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qtraj_model_free(model: *mut QtrajModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Ergodicity report as JSON.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_check_erg(model: *const QtrajModel, out: *mut *mut c_char) -> QtrajStatus {
    guard(|| {
        let r = check_l_erg(model_ref(model)?).map_err(lift)?;
        give_string(serde_json::to_string(&r).map_err(|e| lift(e.into()))?, out)
    })
}

/// Purification report as JSON.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_check_pur(model: *const QtrajModel, out: *mut *mut c_char) -> QtrajStatus {
    guard(|| {
        let r = check_pur(model_ref(model)?);
        give_string(serde_json::to_string(&r).map_err(|e| lift(e.into()))?, out)
    })
}

/// `e^{tL}(ρ)`. `rho_in` and `rho_out` hold `k * k` complex entries (`2 k²` doubles) and may
/// alias.
///
/// # Safety
/// Both buffers must hold `2 k²` doubles where `k` is the model dimension.
#[no_mangle]
pub unsafe extern "C" fn qtraj_evolve_master(
    model: *const QtrajModel,
    rho_in: *const f64,
    t: f64,
    rho_out: *mut f64,
) -> QtrajStatus {
    guard(|| {
        let m = model_ref(model)?;
        let k = m.dim();
        let entries = complex_slice(rho_in, k * k)?;
        if rho_out.is_null() {
            return Err(null());
        }
        let op = ComplexOperator::from_row_slice(k, &entries).map_err(lift)?;
        let rho = DensityMatrix::new(HermitianOperator::new(op).map_err(lift)?).map_err(lift)?;
        let res = evolve_master(m, &rho, t).map_err(lift)?;
        let out = slice::from_raw_parts_mut(rho_out, 2 * k * k);
        for i in 0..k {
            for j in 0..k {
                let z = res.matrix()[(i, j)];
                out[2 * (i * k + j)] = z.re;
                out[2 * (i * k + j) + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// Fubini–Study distance between the rays of two nonzero vectors in `ℂ^k`.
///
/// # Safety
/// `x` and `y` must each hold `2k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtraj_fs_distance(x: *const f64, y: *const f64, k: usize, out: *mut f64) -> QtrajStatus {
    guard(|| {
        let px = ProjectivePoint::from_slice(&complex_slice(x, k)?).map_err(lift)?;
        let py = ProjectivePoint::from_slice(&complex_slice(y, k)?).map_err(lift)?;
        if out.is_null() {
            return Err(null());
        }
        *out = fs_distance(&px, &py);
        Ok(())
    })
}

unsafe fn measure(atoms: *const f64, weights: *const f64, n: usize, k: usize) -> Result<EmpiricalMeasure, (QtrajStatus, String)> {
    let flat = complex_slice(atoms, n * k)?;
    let points = flat
        .chunks_exact(k.max(1))
        .map(ProjectivePoint::from_slice)
        .collect::<Result<Vec<_>, _>>()
        .map_err(lift)?;
    let w = if weights.is_null() {
        return EmpiricalMeasure::uniform(points).map_err(lift);
    } else {
        slice::from_raw_parts(weights, n).to_vec()
    };
    EmpiricalMeasure::new(points, w).map_err(lift)
}

/// Exact W₁ under the Fubini–Study distance between `Σ wa_i δ_{a_i}` and `Σ wb_j δ_{b_j}`.
/// Atoms are `n` (resp. `m`) consecutive vectors of `k` complex entries. A NULL weight pointer
/// means uniform weights.
///
/// # Safety
/// `a` holds `2nk` doubles, `b` holds `2mk`, `wa`/`wb` hold `n`/`m` doubles or are NULL.
#[no_mangle]
pub unsafe extern "C" fn qtraj_wasserstein1(
    a: *const f64,
    wa: *const f64,
    n: usize,
    b: *const f64,
    wb: *const f64,
    m: usize,
    k: usize,
    out: *mut f64,
) -> QtrajStatus {
    guard(|| {
        if k == 0 || n == 0 || m == 0 {
            return Err((QtrajStatus::InvalidArgument, "empty measure or zero dimension".into()));
        }
        let mu = measure(a, wa, n, k)?;
        let nu = measure(b, wb, m, k)?;
        if out.is_null() {
            return Err(null());
        }
        *out = wasserstein1(&mu, &nu).map_err(lift)?;
        Ok(())
    })
}
