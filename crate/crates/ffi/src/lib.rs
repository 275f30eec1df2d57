//! C interface to `twistop`.
//!
//! Every function returns a [`TwStatus`]. On failure the message is kept
//! per thread and read with [`tw_last_error`]. Maps and matrices are opaque
//! handles released with their `_free` functions; passing null to a free
//! function is a no-op. Array arguments are caller-owned and must hold the
//! stated number of elements.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use twistop::cli_io::{exit_code, parse_config, run_pipeline, MapSpec, RunPaths, Stage};
use twistop::grid::UlamPartition;
use twistop::ldp_core::{lambda_curve, rate_function, CurveOptions, TiltedFamily};
use twistop::map_model::{eta0, PiecewiseAffineMap};
use twistop::spectral::{green_kubo_variance, invariant_density, spectral_gap, GapOptions, GreenKuboOptions};
use twistop::ulam_transfer::{build_ulam, AssemblyMethod, TransferMatrix};
use twistop::Error;

/// Result codes. Refusals (`NOT_MIXING`, `ZERO_VARIANCE`) mean the input
/// violates a standing assumption rather than that something broke.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    SchemaError = 4,
    UnknownMap = 5,
    InvalidMap = 6,
    BoundaryPoint = 7,
    OutsideDomain = 8,
    NoConvergence = 9,
    NotMixing = 10,
    ZeroVariance = 11,
    EpsilonMismatch = 12,
    Io = 13,
    Panic = 14,
    Other = 15,
}

/// Opaque map handle.
pub struct TwMap(PiecewiseAffineMap);

/// Opaque Ulam matrix handle.
pub struct TwMatrix(TransferMatrix<f64>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TwStatus {
    match e.root() {
        Error::SchemaError { .. } => TwStatus::SchemaError,
        Error::UnknownMap(_) => TwStatus::UnknownMap,
        Error::InvalidBranch { .. } | Error::SingularBranch { .. } | Error::InvalidRectangle(_) | Error::NonAffineExact { .. } => {
            TwStatus::InvalidMap
        }
        Error::BoundaryPoint { .. } => TwStatus::BoundaryPoint,
        Error::OutsideDomain { .. } => TwStatus::OutsideDomain,
        Error::NoConvergence { .. } => TwStatus::NoConvergence,
        Error::NotMixing { .. } => TwStatus::NotMixing,
        Error::ZeroVariance { .. } => TwStatus::ZeroVariance,
        Error::EpsilonMismatch { .. } => TwStatus::EpsilonMismatch,
        Error::Io(_) => TwStatus::Io,
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::GridMismatch(_) | Error::EmptyPartition => {
            TwStatus::InvalidArgument
        }
        _ => TwStatus::Other,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (TwStatus, String)>) -> TwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TwStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            TwStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (TwStatus, String)>;
}

impl<T> IntoFfi<T> for twistop::Result<T> {
    fn ffi(self) -> Result<T, (TwStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (TwStatus, String) {
    (TwStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (TwStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (TwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (TwStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn matrix_arg<'a>(m: *const TwMatrix) -> Result<&'a TransferMatrix<f64>, (TwStatus, String)> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("matrix"))
}

fn check_len(n: usize, expected: usize) -> Result<(), (TwStatus, String)> {
    if n != expected {
        return Err((TwStatus::InvalidArgument, format!("expected {expected} values, got {n}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Built-in map by name (`doubling`, `beta-2.5`, `triple-2d`, `identity`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_map_builtin(name: *const c_char, out: *mut *mut TwMap) -> TwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let map = twistop::map_model::builtin(str_arg(name, "name")?).ffi()?;
        *out = Box::into_raw(Box::new(TwMap(map)));
        Ok(())
    })
}

/// Map from the JSON `map` value of a job config: a built-in name as a
/// JSON string, or an explicit object with `phase_space` and `branches`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_map_from_json(json: *const c_char, alpha: f64, out: *mut *mut TwMap) -> TwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec: MapSpec = serde_json::from_str(str_arg(json, "json")?)
            .map_err(|e| (TwStatus::SchemaError, e.to_string()))?;
        let map = spec.build(alpha).ffi()?;
        *out = Box::into_raw(Box::new(TwMap(map)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tw_map_free(map: *mut TwMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tw_map_dim(map: *const TwMap, out: *mut usize) -> TwStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        *out_arg(out, "out")? = map.0.dim();
        Ok(())
    })
}

/// `T(x)` for a point of dimension `tw_map_dim`; writes the image to `out`.
/// Points on a branch boundary give `TW_STATUS_BOUNDARY_POINT`.
///
/// # Safety
/// `x` and `out` must each hold `tw_map_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn tw_map_evaluate(map: *const TwMap, x: *const f64, out: *mut f64) -> TwStatus {
    guard(|| {
        let map = &map.as_ref().ok_or_else(|| null("map"))?.0;
        let d = map.dim();
        let x = slice_arg(x, d, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let out = std::slice::from_raw_parts_mut(out, d);
        map.evaluate_into(x, out).ffi()?;
        Ok(())
    })
}

/// Regularity constants: expansion `s`, complexity `Y` and `η₀`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tw_map_regularity(map: *const TwMap, s: *mut f64, y: *mut u64, eta0_out: *mut f64) -> TwStatus {
    guard(|| {
        let map = &map.as_ref().ok_or_else(|| null("map"))?.0;
        let r = eta0(map).ffi()?;
        *out_arg(s, "s")? = r.s;
        *out_arg(y, "y")? = r.y;
        *out_arg(eta0_out, "eta0")? = r.eta0;
        Ok(())
    })
}

/// Exact Ulam matrix on a product grid with `shape[k]` cells along axis `k`.
///
/// # Safety
/// `shape` must hold `ndim` entries and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_ulam_build(map: *const TwMap, shape: *const usize, ndim: usize, out: *mut *mut TwMatrix) -> TwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let map = &map.as_ref().ok_or_else(|| null("map"))?.0;
        let shape = slice_arg(shape, ndim, "shape")?.to_vec();
        let partition = UlamPartition::new(map.phase_space.clone(), shape).ffi()?;
        let k = build_ulam(map, &partition, &AssemblyMethod::ExactAffine).ffi()?;
        *out = Box::into_raw(Box::new(TwMatrix(k)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tw_matrix_free(m: *mut TwMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of cells.
///
/// # Safety
/// `m` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tw_matrix_dim(m: *const TwMatrix, out: *mut usize) -> TwStatus {
    guard(|| {
        *out_arg(out, "out")? = matrix_arg(m)?.dim();
        Ok(())
    })
}

/// `out = K f` on cell averages.
///
/// # Safety
/// `f` and `out` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn tw_matrix_apply(m: *const TwMatrix, f: *const f64, n: usize, out: *mut f64) -> TwStatus {
    guard(|| {
        let k = matrix_arg(m)?;
        check_len(n, k.dim())?;
        let f = slice_arg(f, n, "f")?;
        if out.is_null() {
            return Err(null("out"));
        }
        k.apply_into(f, std::slice::from_raw_parts_mut(out, n));
        Ok(())
    })
}

/// Invariant density as cell averages with unit mass; `lambda` receives
/// the leading eigenvalue.
///
/// # Safety
/// `out` must hold `n` doubles and `lambda` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_invariant_density(m: *const TwMatrix, out: *mut f64, n: usize, lambda: *mut f64) -> TwStatus {
    guard(|| {
        let k = matrix_arg(m)?;
        check_len(n, k.dim())?;
        let lambda = out_arg(lambda, "lambda")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sd = invariant_density(k, Default::default()).ffi()?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&sd.right);
        *lambda = sd.lambda;
        Ok(())
    })
}

/// Leading eigenvalue `λ(θ)` of the matrix twisted by the cell observable `phi`.
///
/// # Safety
/// `phi` must hold `n` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_lambda(m: *const TwMatrix, phi: *const f64, n: usize, theta: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        let k = matrix_arg(m)?;
        check_len(n, k.dim())?;
        let family = TiltedFamily::new(k, slice_arg(phi, n, "phi")?.to_vec()).ffi()?;
        *out_arg(out, "out")? = family.lambda(theta).ffi()?;
        Ok(())
    })
}

/// Centers `phi` against the invariant density.
fn centered(k: &TransferMatrix<f64>, phi: &[f64]) -> twistop::Result<(twistop::spectral::SpectralData<f64>, Vec<f64>)> {
    let sd = invariant_density(k, Default::default())?;
    let mean = k.partition().integrate(&phi.iter().zip(&sd.right).map(|(a, b)| a * b).collect::<Vec<_>>());
    Ok((sd, phi.iter().map(|x| x - mean).collect()))
}

/// Green–Kubo variance of the cell observable `phi`, centered first.
///
/// # Safety
/// `phi` must hold `n` doubles and `sigma2` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_green_kubo(m: *const TwMatrix, phi: *const f64, n: usize, sigma2: *mut f64) -> TwStatus {
    guard(|| {
        let k = matrix_arg(m)?;
        check_len(n, k.dim())?;
        let (sd, phi) = centered(k, slice_arg(phi, n, "phi")?).ffi()?;
        *out_arg(sigma2, "sigma2")? = green_kubo_variance(k, &sd, &phi, GreenKuboOptions::default()).ffi()?.sigma2;
        Ok(())
    })
}

/// Rate function value `c(ε)` of the centered cell observable, with the
/// default θ grid. `eps` must lie strictly inside `(ε₋, ε₊)`.
///
/// # Safety
/// `phi` must hold `n` doubles and `c` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tw_rate(m: *const TwMatrix, phi: *const f64, n: usize, eps: f64, c: *mut f64) -> TwStatus {
    guard(|| {
        let k = matrix_arg(m)?;
        check_len(n, k.dim())?;
        let c = out_arg(c, "c")?;
        let (sd, phi) = centered(k, slice_arg(phi, n, "phi")?).ffi()?;
        let gap = spectral_gap(k, &sd, GapOptions::default()).ffi()?;
        if !gap.mixing_flag {
            return Err((TwStatus::NotMixing, Error::NotMixing { lambda1: gap.lambda1, lambda2: gap.lambda2_modulus }.to_string()));
        }
        let sigma2 = green_kubo_variance(k, &sd, &phi, GreenKuboOptions { rate: Some(gap.lambda2_modulus), ..Default::default() })
            .ffi()?
            .sigma2;
        let family = TiltedFamily::new(k, phi).ffi()?;
        let curve = lambda_curve(&family, &gap, CurveOptions::default()).ffi()?;
        let rate = rate_function(&family, &curve, sigma2, 2, &[eps]).ffi()?;
        *c = rate.value_at(eps).ffi()?;
        Ok(())
    })
}

/// Runs every pipeline stage for a JSON job config, writing artifacts to
/// `out_dir`. `exit` receives the command-line exit code (0, 1 or 2); the
/// returned status describes the failure, if any.
///
/// # Safety
/// `json` and `out_dir` must be NUL-terminated strings and `exit` valid.
#[no_mangle]
pub unsafe extern "C" fn tw_run_config(json: *const c_char, out_dir: *const c_char, exit: *mut c_int) -> TwStatus {
    guard(|| {
        let exit = out_arg(exit, "exit")?;
        let json = str_arg(json, "json")?;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let result = parse_config(json).and_then(|cfg| run_pipeline(&cfg, &Stage::ALL, &RunPaths::new(dir)).map(|_| ()));
        *exit = exit_code(&result) as c_int;
        result.ffi()
    })
}

/// Version string of the library.
#[no_mangle]
pub extern "C" fn tw_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
