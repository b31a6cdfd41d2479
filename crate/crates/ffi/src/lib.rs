//! C interface to `lrsurf`.
//!
//! Surfaces are passed around as opaque [`LrsSurface`] handles. Every fallible
//! function returns an [`LrsStatus`]; on failure a description is available
//! from [`lrs_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lrsurf::fitting::{adaptive_fit, FitConfig};
use lrsurf::io::{raster_from_surface, read_lrsurf, write_asc, write_lrsurf};
use lrsurf::{Error, LRSurface, PointCloud};

/// Opaque surface handle.
pub struct LrsSurface(LRSurface);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfDomain = 5,
    Compute = 6,
    Panic = 7,
}

/// Parameter domain `[u0, u1] x [v0, v1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LrsRect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: LrsStatus, msg: impl Into<String>) -> LrsStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> LrsStatus {
    let status = match e {
        Error::Io { .. } => LrsStatus::Io,
        Error::Parse { .. } => LrsStatus::Parse,
        Error::InvalidInput(_) | Error::InvalidKnots(_) => LrsStatus::InvalidArgument,
        Error::OutOfDomain { .. } => LrsStatus::OutOfDomain,
        _ => LrsStatus::Compute,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`LrsStatus::Panic`].
fn guard(f: impl FnOnce() -> LrsStatus) -> LrsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(LrsStatus::Panic, "internal panic"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, LrsStatus> {
    if path.is_null() {
        return Err(fail(LrsStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(LrsStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn surface_arg<'a>(s: *const LrsSurface) -> Result<&'a LRSurface, LrsStatus> {
    s.as_ref()
        .map(|s| &s.0)
        .ok_or_else(|| fail(LrsStatus::NullPointer, "surface is null"))
}

fn into_handle(surf: LRSurface, out: *mut *mut LrsSurface) {
    // SAFETY: callers check `out` before doing any work.
    unsafe { *out = Box::into_raw(Box::new(LrsSurface(surf))) };
}

/// Message describing the last failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lrs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Read a surface from an `lrsurf` file.
///
/// # Safety
/// `path` must be a null-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_read(path: *const c_char, out: *mut *mut LrsSurface) -> LrsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LrsStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_lrsurf(&path) {
            Ok(surf) => {
                into_handle(surf, out);
                LrsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Write a surface to an `lrsurf` file.
///
/// # Safety
/// `surface` must be a live handle and `path` a null-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_write(surface: *const LrsSurface, path: *const c_char) -> LrsStatus {
    guard(|| {
        let (surf, path) = match (surface_arg(surface), path_arg(path)) {
            (Ok(s), Ok(p)) => (s, p),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        write_lrsurf(surf, &path).map_or_else(from_error, |_| LrsStatus::Ok)
    })
}

/// Evaluate the surface at `(u, v)`.
///
/// # Safety
/// `surface` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_evaluate(
    surface: *const LrsSurface,
    u: f64,
    v: f64,
    out: *mut f64,
) -> LrsStatus {
    guard(|| {
        let surf = match surface_arg(surface) {
            Ok(s) => s,
            Err(e) => return e,
        };
        if out.is_null() {
            return fail(LrsStatus::NullPointer, "out is null");
        }
        match surf.evaluate(u, v, 0, 0) {
            Ok(z) => {
                *out = z;
                LrsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Evaluate at `n` points. `out` receives NaN where a point lies outside
/// the domain; the call still succeeds.
///
/// # Safety
/// `u`, `v` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_evaluate_many(
    surface: *const LrsSurface,
    u: *const f64,
    v: *const f64,
    n: usize,
    out: *mut f64,
) -> LrsStatus {
    guard(|| {
        let surf = match surface_arg(surface) {
            Ok(s) => s,
            Err(e) => return e,
        };
        if n == 0 {
            return LrsStatus::Ok;
        }
        if u.is_null() || v.is_null() || out.is_null() {
            return fail(LrsStatus::NullPointer, "coordinate or output array is null");
        }
        let (u, v) = (std::slice::from_raw_parts(u, n), std::slice::from_raw_parts(v, n));
        let out = std::slice::from_raw_parts_mut(out, n);
        for k in 0..n {
            out[k] = surf.evaluate(u[k], v[k], 0, 0).unwrap_or(f64::NAN);
        }
        LrsStatus::Ok
    })
}

/// # Safety
/// `surface` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_domain(surface: *const LrsSurface, out: *mut LrsRect) -> LrsStatus {
    guard(|| {
        let surf = match surface_arg(surface) {
            Ok(s) => s,
            Err(e) => return e,
        };
        if out.is_null() {
            return fail(LrsStatus::NullPointer, "out is null");
        }
        let d = surf.domain();
        *out = LrsRect {
            u0: d.u0,
            u1: d.u1,
            v0: d.v0,
            v1: d.v1,
        };
        LrsStatus::Ok
    })
}

/// Number of B-spline coefficients, 0 for a null handle.
///
/// # Safety
/// `surface` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_num_coefs(surface: *const LrsSurface) -> usize {
    surface.as_ref().map_or(0, |s| s.0.num_coefs())
}

/// Fit a surface to `n` points with a named preset (`"F7"`, `"V9"`, ...).
///
/// # Safety
/// `x`, `y` and `z` must each point to `n` doubles, `preset` must be a
/// null-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrs_fit(
    x: *const f64,
    y: *const f64,
    z: *const f64,
    n: usize,
    preset: *const c_char,
    out: *mut *mut LrsSurface,
) -> LrsStatus {
    guard(|| {
        if x.is_null() || y.is_null() || z.is_null() || preset.is_null() || out.is_null() {
            return fail(LrsStatus::NullPointer, "null argument");
        }
        if n == 0 {
            return fail(LrsStatus::InvalidArgument, "no points");
        }
        let Ok(name) = CStr::from_ptr(preset).to_str() else {
            return fail(LrsStatus::InvalidArgument, "preset is not valid UTF-8");
        };
        let config = match FitConfig::preset(name) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let (x, y, z) = (
            std::slice::from_raw_parts(x, n),
            std::slice::from_raw_parts(y, n),
            std::slice::from_raw_parts(z, n),
        );
        let cloud = PointCloud::from_xyz((0..n).map(|k| (x[k], y[k], z[k])));
        match adaptive_fit(&cloud, &config) {
            Ok(fit) => {
                into_handle(fit.surface, out);
                LrsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Sample the surface at cell centres and write an ESRI ASCII grid.
///
/// # Safety
/// `surface` must be a live handle and `path` a null-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lrs_export_raster(
    surface: *const LrsSurface,
    cellsize: f64,
    path: *const c_char,
) -> LrsStatus {
    guard(|| {
        let (surf, path) = match (surface_arg(surface), path_arg(path)) {
            (Ok(s), Ok(p)) => (s, p),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return fail(LrsStatus::InvalidArgument, format!("cellsize must be positive, got {cellsize}"));
        }
        match raster_from_surface(surf, cellsize, None).and_then(|r| write_asc(&r, &path)) {
            Ok(()) => LrsStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `surface` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lrs_surface_free(surface: *mut LrsSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}
