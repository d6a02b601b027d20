//! C interface. Every function returns an [`EssStatus`]; on failure the
//! message is kept per thread and read with [`ess_last_error_message`].
//! Models are opaque handles released with [`ess_model_free`].
//!
//! On x86-64 hosts with OpenBLAS 0.3.20, export `OPENBLAS_CORETYPE=Haswell`
//! before loading the library: the auto-detected Cooper Lake kernels give
//! wrong singular values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use essspec::alpha::{alpha_derivative, alpha_smatrix, fredholm_check};
use essspec::error::Error;
use essspec::hankel::gamma_matrix;
use essspec::opcore::{build_model, ModelKind, ModelSpec, OperatorPair};
use essspec::resolvent::boundary_value;
use essspec::scatter1d::smatrix_transfer;
use essspec::tolerances::Tunables;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    BandEdge = 4,
    Resonance = 5,
    NumericalFailure = 6,
    IdentityViolated = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssAlphaRoute {
    Derivative = 0,
    Smatrix = 1,
}

/// Opaque model handle.
pub struct EssModel {
    pair: OperatorPair,
    tunables: Tunables,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> EssStatus {
    match e {
        Error::InvalidModel(_) | Error::UnsupportedKind(_) | Error::Json(_) => {
            EssStatus::InvalidModel
        }
        Error::InvalidArgument(_) | Error::InvalidConfig(_) => EssStatus::InvalidArgument,
        Error::BandEdge { .. } => EssStatus::BandEdge,
        Error::Resonance { .. } => EssStatus::Resonance,
        Error::IdentityViolated { .. }
        | Error::InvariantViolated { .. }
        | Error::FredholmEquivalence { .. } => EssStatus::IdentityViolated,
        _ => EssStatus::NumericalFailure,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> EssStatus
where
    F: FnOnce() -> Result<(), (EssStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EssStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            EssStatus::Panic
        }
    }
}

fn lift<T>(r: essspec::error::Result<T>) -> Result<T, (EssStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (EssStatus, String) {
    (EssStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const EssModel) -> Result<&'a EssModel, (EssStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ess_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; valid until the next
/// failing call on the same thread. Empty if there was none.
#[no_mangle]
pub extern "C" fn ess_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a model from its JSON description. On success `*out` owns a handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ess_model_from_json(
    json: *const c_char,
    out: *mut *mut EssModel,
) -> EssStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = std::ptr::null_mut();
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            (
                EssStatus::InvalidArgument,
                format!("json is not UTF-8: {e}"),
            )
        })?;
        let spec = lift(ModelSpec::from_json(text))?;
        let pair = lift(build_model(&spec))?;
        *out = Box::into_raw(Box::new(EssModel {
            pair,
            tunables: Tunables::default(),
        }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`ess_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ess_model_free(model: *mut EssModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension `2N + 1` of the truncated space.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_model_dim(model: *const EssModel, out: *mut usize) -> EssStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.pair.n();
        Ok(())
    })
}

/// `alpha(lambda)` by the chosen route.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_alpha(
    model: *const EssModel,
    lambda: f64,
    route: EssAlphaRoute,
    out: *mut f64,
) -> EssStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let bv = lift(boundary_value(&m.pair, lambda, &m.tunables))?;
        let est = match route {
            EssAlphaRoute::Derivative => lift(alpha_derivative(&bv, &m.pair.j))?,
            EssAlphaRoute::Smatrix => lift(alpha_smatrix(&bv, &m.pair.j))?,
        };
        *out = est.value;
        Ok(())
    })
}

/// Smallest singular values of `I + A0 J` and `I - A J`, and whether the
/// projection pair is Fredholm at `lambda` (`*fredholm` is 0 or 1).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_fredholm(
    model: *const EssModel,
    lambda: f64,
    kernel_tol: f64,
    sigma_min_0: *mut f64,
    sigma_min_1: *mut f64,
    fredholm: *mut i32,
) -> EssStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (s0, s1, f) = (
            sigma_min_0.as_mut().ok_or_else(|| null("sigma_min_0"))?,
            sigma_min_1.as_mut().ok_or_else(|| null("sigma_min_1"))?,
            fredholm.as_mut().ok_or_else(|| null("fredholm"))?,
        );
        let bv = lift(boundary_value(&m.pair, lambda, &m.tunables))?;
        let rec = lift(fredholm_check(&bv, &m.pair.j, kernel_tol))?;
        *s0 = rec.sigma_min_0;
        *s1 = rec.sigma_min_1;
        *f = rec.fredholm as i32;
        Ok(())
    })
}

/// Transfer-matrix scattering matrix of the model's potential, written to
/// `out[8]` row-major as `re, im` pairs.
///
/// # Safety
/// `out` must point to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ess_smatrix(
    model: *const EssModel,
    lambda: f64,
    out: *mut f64,
) -> EssStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if m.pair.spec.kind != ModelKind::Lattice1d {
            return Err((
                EssStatus::InvalidModel,
                "transfer matrices need a lattice1d model".into(),
            ));
        }
        let sc = lift(smatrix_transfer(
            &m.pair.spec.potential,
            lambda,
            &m.tunables,
        ))?;
        let buf = std::slice::from_raw_parts_mut(out, 8);
        for (i, z) in sc.s.iter().enumerate() {
            buf[2 * i] = z.re;
            buf[2 * i + 1] = z.im;
        }
        Ok(())
    })
}

/// Largest eigenvalue of the `n`-node discretization of `Gamma` on `(0, T)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_gamma_max_eigenvalue(
    n: usize,
    cutoff: f64,
    out: *mut f64,
) -> EssStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g = lift(gamma_matrix(n, cutoff))?;
        *out = *lift(g.eigenvalues())?.last().unwrap_or(&0.0);
        Ok(())
    })
}
