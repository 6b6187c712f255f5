//! C ABI over the exmol pricer.
//!
//! Objects cross the boundary as opaque heap handles created by the library
//! and released with the matching `_free`. Fallible calls
//! return an [`ExmolStatus`]; on failure the thread-local message is available
//! from [`exmol_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use exmol::exercise_boundary::{boundary_limit, BoundaryLimit};
use exmol::grid::{MeshSpec, SegmentList};
use exmol::lsmc::{lsmc_price, McConfig};
use exmol::margrabe::{margrabe_price, MargrabeInputs};
use exmol::pricer::{solve, OptionStyle, Solution, SolverConfig};
use exmol::riccati::BoundaryConditionKind;
use exmol::{Error, ModelParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExmolStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an unknown enum value.
    InvalidArgument = 1,
    /// Parameters, mesh or configuration rejected.
    InvalidInput = 2,
    /// The numerical solver failed.
    SolverFailure = 3,
    /// `q1 = 0`: no finite exercise boundary.
    NoEarlyExercise = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExmolStyle {
    European = 0,
    American = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExmolBoundaryCondition {
    StandardVega = 0,
    VenttselFull = 1,
    VenttselConstantVol = 2,
}

/// Discretization. A null `segments` selects the reference `s` axis.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ExmolMeshSpec {
    pub n_time: usize,
    pub m_var: usize,
    pub v_max: f64,
    /// `start:end:intervals,...`
    pub segments: *const c_char,
}

/// Opaque model parameter set.
pub struct ExmolParams {
    inner: ModelParams,
}

/// Opaque solved price surface.
pub struct ExmolSolution {
    inner: Solution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> ExmolStatus {
    match err {
        Error::NoEarlyExercise => ExmolStatus::NoEarlyExercise,
        e if exmol::cli::exit_code(e) == 1 => ExmolStatus::InvalidInput,
        _ => ExmolStatus::SolverFailure,
    }
}

enum Failure {
    Arg(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ExmolStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ExmolStatus::Ok,
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            ExmolStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            ExmolStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg("string argument is not UTF-8"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Arg("null output pointer"))
}

unsafe fn params_arg<'a>(p: *const ExmolParams) -> Result<&'a ModelParams, Failure> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or(Failure::Arg("null parameter handle"))
}

unsafe fn solution_arg<'a>(p: *const ExmolSolution) -> Result<&'a Solution, Failure> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or(Failure::Arg("null solution handle"))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn exmol_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn exmol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reference parameter set. Never null.
#[no_mangle]
pub extern "C" fn exmol_params_reference() -> *mut ExmolParams {
    Box::into_raw(Box::new(ExmolParams {
        inner: ModelParams::table1(),
    }))
}

/// Parses flat `key = value` text; every model key is required, unknown keys are rejected.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_params_parse(
    text: *const c_char,
    out: *mut *mut ExmolParams,
) -> ExmolStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let params = ModelParams::from_config_str(str_arg(text, "null config text")?)?;
        *out = Box::into_raw(Box::new(ExmolParams { inner: params }));
        Ok(())
    })
}

/// # Safety
/// `params` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn exmol_params_free(params: *mut ExmolParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// # Safety
/// `params` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn exmol_params_set(
    params: *mut ExmolParams,
    key: *const c_char,
    value: f64,
) -> ExmolStatus {
    guard(|| {
        let key = str_arg(key, "null key")?;
        let h = params
            .as_mut()
            .ok_or(Failure::Arg("null parameter handle"))?;
        h.inner.set(key, value)?;
        Ok(())
    })
}

/// # Safety
/// `params` must be a live handle, `key` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_params_get(
    params: *const ExmolParams,
    key: *const c_char,
    out: *mut f64,
) -> ExmolStatus {
    guard(|| {
        let p = params_arg(params)?;
        *out_arg(out)? = p.get(str_arg(key, "null key")?)?;
        Ok(())
    })
}

/// `Ok` when every model constraint holds, `InvalidInput` with the violations otherwise.
///
/// # Safety
/// `params` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn exmol_params_validate(params: *const ExmolParams) -> ExmolStatus {
    guard(|| {
        let report = params_arg(params)?.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report).into())
        }
    })
}

/// Exercise boundary at maturity, `A(0+, v)`, in yield-ratio units.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_boundary_limit(
    params: *const ExmolParams,
    out: *mut f64,
) -> ExmolStatus {
    guard(|| {
        let p = params_arg(params)?;
        let out = out_arg(out)?;
        match boundary_limit(p) {
            limit @ BoundaryLimit::Finite { .. } => {
                *out = limit.a_at_maturity(p).expect("finite limit");
                Ok(())
            }
            BoundaryLimit::NoEarlyExercise => Err(Error::NoEarlyExercise.into()),
        }
    })
}

/// Closed-form constant-volatility price at ratio `s` and time to maturity `tau`.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_margrabe_price(
    params: *const ExmolParams,
    s: f64,
    tau: f64,
    out: *mut f64,
) -> ExmolStatus {
    guard(|| {
        let p = params_arg(params)?;
        *out_arg(out)? = margrabe_price(s, &MargrabeInputs::from_params(p, tau));
        Ok(())
    })
}

/// Solves the pricing problem on the given mesh.
///
/// # Safety
/// `params` must be a live handle, `mesh` readable (its `segments` null or
/// NUL-terminated) and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_solve(
    params: *const ExmolParams,
    mesh: *const ExmolMeshSpec,
    style: ExmolStyle,
    bc: ExmolBoundaryCondition,
    out: *mut *mut ExmolSolution,
) -> ExmolStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let p = params_arg(params)?;
        let m = mesh.as_ref().ok_or(Failure::Arg("null mesh spec"))?;
        let segments: SegmentList = if m.segments.is_null() {
            SegmentList::reference()
        } else {
            str_arg(m.segments, "null segments")?.parse()?
        };
        let spec = MeshSpec {
            n_time: m.n_time,
            m_var: m.m_var,
            v_max: m.v_max,
            segments,
        };
        let grid = spec.build(p.maturity)?;
        let style = match style {
            ExmolStyle::European => OptionStyle::European,
            ExmolStyle::American => OptionStyle::American,
        };
        let bc = match bc {
            ExmolBoundaryCondition::StandardVega => BoundaryConditionKind::StandardVega,
            ExmolBoundaryCondition::VenttselFull => BoundaryConditionKind::VenttselFull,
            ExmolBoundaryCondition::VenttselConstantVol => {
                BoundaryConditionKind::VenttselConstantVol
            }
        };
        let sol = solve(p, &grid, style, &SolverConfig::with_bc(bc))?;
        *out = Box::into_raw(Box::new(ExmolSolution { inner: sol }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`exmol_solve`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn exmol_solution_free(solution: *mut ExmolSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Price at `t = 0` for ratio `s` and variance `v`.
///
/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_solution_price(
    solution: *const ExmolSolution,
    s: f64,
    v: f64,
    out: *mut f64,
) -> ExmolStatus {
    guard(|| {
        *out_arg(out)? = solution_arg(solution)?.price_at(s, v)?;
        Ok(())
    })
}

/// Delta `dV/ds` at `t = 0`.
///
/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_solution_delta(
    solution: *const ExmolSolution,
    s: f64,
    v: f64,
    out: *mut f64,
) -> ExmolStatus {
    guard(|| {
        *out_arg(out)? = solution_arg(solution)?.delta_at(s, v)?;
        Ok(())
    })
}

/// Early exercise boundary `A(0, v)`; `NoEarlyExercise` for a European solution.
///
/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_solution_boundary(
    solution: *const ExmolSolution,
    v: f64,
    out: *mut f64,
) -> ExmolStatus {
    guard(|| {
        let sol = solution_arg(solution)?;
        let out = out_arg(out)?;
        match sol.boundary_at(sol.lines.len() - 1, v) {
            Some(a) => {
                *out = a;
                Ok(())
            }
            None => Err(Error::NoEarlyExercise.into()),
        }
    })
}

/// Least-squares Monte Carlo American price with default basis and antithetics.
///
/// # Safety
/// `params` must be a live handle; `price` and `std_error` writable.
#[no_mangle]
pub unsafe extern "C" fn exmol_lsmc_price(
    params: *const ExmolParams,
    s0: f64,
    v0: f64,
    paths: usize,
    steps: usize,
    seed: u64,
    price: *mut f64,
    std_error: *mut f64,
) -> ExmolStatus {
    guard(|| {
        let p = params_arg(params)?;
        let price = out_arg(price)?;
        let se = out_arg(std_error)?;
        let cfg = McConfig {
            paths,
            steps,
            seed,
            ..McConfig::default()
        };
        let e = lsmc_price(p, s0, v0, &cfg)?;
        *price = e.price;
        *se = e.std_error;
        Ok(())
    })
}
