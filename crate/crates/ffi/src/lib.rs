//! C ABI over scorelab.
//!
//! Densities are opaque handles built from spec text. Every function
//! returns a [`ScorelabStatus`]; on failure the message is available from
//! [`scorelab_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use scorelab::densities::{parse_density_spec, TargetDensity};
use scorelab::linalg::sym_eigs;
use scorelab::score::{score, score_jacobian};
use scorelab::tilted::QuadratureSpec;
use scorelab::verify::wasserstein2_1d;
use scorelab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScorelabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Unsupported = 4,
    Quadrature = 5,
    Config = 6,
    Diverged = 7,
    Io = 8,
    Panic = 9,
}

/// Opaque density handle.
pub struct ScorelabDensity {
    inner: TargetDensity,
    spec: QuadratureSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ScorelabStatus {
    match e {
        Error::Input(_) => ScorelabStatus::InvalidInput,
        Error::Domain(_) => ScorelabStatus::Domain,
        Error::Unsupported(_) => ScorelabStatus::Unsupported,
        Error::Quadrature(_) => ScorelabStatus::Quadrature,
        Error::Config { .. } => ScorelabStatus::Config,
        Error::Diverged(_) => ScorelabStatus::Diverged,
        Error::Io(_) | Error::Json(_) => ScorelabStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScorelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ScorelabStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            ScorelabStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(&format!("panic: {}", msg.unwrap_or_else(|| "unknown".into())));
            ScorelabStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn handle<'a>(d: *const ScorelabDensity) -> Result<&'a ScorelabDensity, Fail> {
    d.as_ref().ok_or(Fail::Null("density"))
}

unsafe fn point(d: &ScorelabDensity, x: *const f64, len: usize) -> Result<DVector<f64>, Fail> {
    if len != d.inner.dim() {
        return Err(Fail::Lib(Error::Input(format!("point has length {len}, density has dimension {}", d.inner.dim()))));
    }
    Ok(DVector::from_column_slice(slice(x, len, "x")?))
}

/// Message of the last failed call on this thread; empty after success.
/// The pointer stays valid until the next scorelab call on this thread.
#[no_mangle]
pub extern "C" fn scorelab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse a density spec (TOML text) into a new handle.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scorelab_density_from_spec(spec: *const c_char, out: *mut *mut ScorelabDensity) -> ScorelabStatus {
    guard(|| {
        if spec.is_null() {
            return Err(Fail::Null("spec"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(spec).to_str().map_err(|e| Error::Input(format!("spec is not UTF-8: {e}")))?;
        let inner = parse_density_spec(text)?;
        *out = Box::into_raw(Box::new(ScorelabDensity { inner, spec: QuadratureSpec::default() }));
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `d` must come from `scorelab_density_from_spec` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn scorelab_density_free(d: *mut ScorelabDensity) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scorelab_density_dim(d: *const ScorelabDensity, out: *mut usize) -> ScorelabStatus {
    guard(|| {
        let d = handle(d)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = d.inner.dim();
        Ok(())
    })
}

/// Unnormalized log density at `x`; −∞ outside the support.
///
/// # Safety
/// `x` must hold `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scorelab_log_density(d: *const ScorelabDensity, x: *const f64, len: usize, out: *mut f64) -> ScorelabStatus {
    guard(|| {
        let d = handle(d)?;
        let x = point(d, x, len)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = d.inner.log_density_unnormalized(&x)?.to_f64();
        Ok(())
    })
}

/// Score s(t, x) written to `out` (`len` doubles).
///
/// # Safety
/// `x` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn scorelab_score(d: *const ScorelabDensity, t: f64, x: *const f64, len: usize, out: *mut f64) -> ScorelabStatus {
    guard(|| {
        let d = handle(d)?;
        let x = point(d, x, len)?;
        let s = score(&d.inner, t, &x, &d.spec)?;
        slice_mut(out, len, "out")?.copy_from_slice(s.as_slice());
        Ok(())
    })
}

/// Jacobian ∇s(t, x), row-major, written to `out` (`len * len` doubles).
///
/// # Safety
/// `x` must hold `len` doubles and `out` `len * len`.
#[no_mangle]
pub unsafe extern "C" fn scorelab_score_jacobian(d: *const ScorelabDensity, t: f64, x: *const f64, len: usize, out: *mut f64) -> ScorelabStatus {
    guard(|| {
        let d = handle(d)?;
        let x = point(d, x, len)?;
        let j = score_jacobian(&d.inner, t, &x, &d.spec)?;
        let out = slice_mut(out, len * len, "out")?;
        for r in 0..len {
            for c in 0..len {
                out[r * len + c] = j[(r, c)];
            }
        }
        Ok(())
    })
}

/// Ascending eigenvalues of a symmetric row-major `n × n` matrix.
///
/// # Safety
/// `m` must hold `n * n` doubles and `values` `n`.
#[no_mangle]
pub unsafe extern "C" fn scorelab_sym_eigs(m: *const f64, n: usize, values: *mut f64) -> ScorelabStatus {
    guard(|| {
        let data = slice(m, n * n, "m")?;
        let mat = DMatrix::from_row_slice(n, n, data);
        let e = sym_eigs(&mat)?;
        slice_mut(values, n, "values")?.copy_from_slice(&e.values);
        Ok(())
    })
}

/// Empirical W₂ between two 1D samples.
///
/// # Safety
/// `a` must hold `na` doubles, `b` `nb`, and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scorelab_wasserstein2_1d(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut f64) -> ScorelabStatus {
    guard(|| {
        let w = wasserstein2_1d(slice(a, na, "a")?, slice(b, nb, "b")?)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = w.value;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err() -> String {
        unsafe { CStr::from_ptr(scorelab_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_handle_is_reported() {
        let mut dim = 0usize;
        let st = unsafe { scorelab_density_dim(ptr::null(), &mut dim) };
        assert_eq!(st, ScorelabStatus::NullPointer);
        assert!(err().contains("density"));
    }

    #[test]
    fn status_clears_after_success() {
        let st = unsafe { scorelab_sym_eigs(ptr::null(), 2, ptr::null_mut()) };
        assert_eq!(st, ScorelabStatus::NullPointer);
        let m = [2.0, 0.0, 0.0, 1.0];
        let mut v = [0.0; 2];
        assert_eq!(unsafe { scorelab_sym_eigs(m.as_ptr(), 2, v.as_mut_ptr()) }, ScorelabStatus::Ok);
        assert_eq!(v, [1.0, 2.0]);
        assert_eq!(err(), "");
    }
}
