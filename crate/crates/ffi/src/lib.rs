//! C ABI over `fpt-joint`: strip problems, two-boundary sub-densities (Euler
//! solver or Laplace inversion) and the Brownian image series.
//!
//! Every fallible call returns an [`FptStatus`]; on failure the message is kept
//! per thread and read with [`fpt_last_error_message`]. Handles are released
//! with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fpt_joint::boundary::{Boundary, StripProblem};
use fpt_joint::closed_form::{bm_sub_density_lower, bm_sub_density_upper, SeriesControl};
use fpt_joint::laplace::{invert_sub_densities, InversionControl, LaplaceEvaluator, Representation};
use fpt_joint::process::{Process, ProcessKind};
use fpt_joint::volterra::{solve_two_boundary, SubDensityPair, TimeGrid};
use fpt_joint::FptError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FptStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    InvalidStrip = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FptProcessKind {
    StandardBrownian = 0,
    ScaledBrownian = 1,
    GeometricBrownian = 2,
    OrnsteinUhlenbeck = 3,
}

/// Process description; fields a kind does not use are ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FptProcessParams {
    pub kind: FptProcessKind,
    pub x0: f64,
    pub t0: f64,
    pub sigma: f64,
    pub theta: f64,
    pub mu: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FptBoundaryKind {
    Constant = 0,
    Cosine = 1,
}

/// `c` for a constant boundary, `c + amplitude·cos(angular_frequency·t + phase)`
/// for a cosine one.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FptBoundarySpec {
    pub kind: FptBoundaryKind,
    pub c: f64,
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub phase: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FptRepresentation {
    ItoMcKean = 0,
    Fortet = 1,
}

/// Opaque strip problem.
pub struct FptProblem {
    inner: StripProblem,
}

/// Opaque sub-density arrays.
pub struct FptSubDensities {
    inner: SubDensityPair,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FptStatus, String);

impl From<FptError> for Failure {
    fn from(e: FptError) -> Self {
        let status = match e {
            FptError::InvalidStrip(_) => FptStatus::InvalidStrip,
            FptError::StepSize(_) | FptError::NonFinite(_) | FptError::Conditioning(_) => FptStatus::Numerical,
            _ => FptStatus::Domain,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FptStatus::NullPointer, format!("{what} is null"))
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FptStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FptStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FptStatus::Panic
        }
    }
}

fn process_from(p: &FptProcessParams) -> Result<Process, Failure> {
    let kind = match p.kind {
        FptProcessKind::StandardBrownian => ProcessKind::StandardBrownian,
        FptProcessKind::ScaledBrownian => ProcessKind::ScaledBrownian { sigma: p.sigma },
        FptProcessKind::GeometricBrownian => ProcessKind::GeometricBrownian { sigma: p.sigma },
        FptProcessKind::OrnsteinUhlenbeck => ProcessKind::OrnsteinUhlenbeck { theta: p.theta, mu: p.mu, sigma: p.sigma },
    };
    Ok(Process::new(kind, p.x0, p.t0)?)
}

fn boundary_from(b: &FptBoundarySpec) -> Boundary {
    match b.kind {
        FptBoundaryKind::Constant => Boundary::Constant(b.c),
        FptBoundaryKind::Cosine => Boundary::cosine(b.c, b.amplitude, b.angular_frequency, b.phase),
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn fpt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Build a strip problem. On success `*out` owns a handle for
/// [`fpt_problem_free`].
///
/// # Safety
/// Non-null pointers must be valid for reads (inputs) or writes (`out`).
#[no_mangle]
pub unsafe extern "C" fn fpt_problem_new(
    process: *const FptProcessParams,
    lower: *const FptBoundarySpec,
    upper: *const FptBoundarySpec,
    out: *mut *mut FptProblem,
) -> FptStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let process = process.as_ref().ok_or_else(|| null("process"))?;
        let lower = lower.as_ref().ok_or_else(|| null("lower"))?;
        let upper = upper.as_ref().ok_or_else(|| null("upper"))?;
        let inner = StripProblem::new(process_from(process)?, boundary_from(lower), boundary_from(upper))?;
        *out = Box::into_raw(Box::new(FptProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`fpt_problem_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fpt_problem_free(problem: *mut FptProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

unsafe fn emit(pair: SubDensityPair, out: *mut *mut FptSubDensities) {
    *out = Box::into_raw(Box::new(FptSubDensities { inner: pair }));
}

/// Euler solution on the knots `t0 + i·h`, `i = 1..=n`.
///
/// # Safety
/// `problem` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpt_solve_two_boundary(problem: *const FptProblem, h: f64, n: usize, out: *mut *mut FptSubDensities) -> FptStatus {
    guard(|| {
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = ptr::null_mut();
        let sp = &problem.as_ref().ok_or_else(|| null("problem"))?.inner;
        let grid = TimeGrid::new(sp.process.t0(), h, n)?;
        emit(solve_two_boundary(sp, grid)?, out);
        Ok(())
    })
}

/// Sub-densities by numerical Laplace inversion with default controls.
/// Standard Brownian motion and constant boundaries only.
///
/// # Safety
/// As [`fpt_solve_two_boundary`].
#[no_mangle]
pub unsafe extern "C" fn fpt_laplace_sub_densities(
    problem: *const FptProblem,
    representation: FptRepresentation,
    h: f64,
    n: usize,
    out: *mut *mut FptSubDensities,
) -> FptStatus {
    guard(|| {
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = ptr::null_mut();
        let sp = &problem.as_ref().ok_or_else(|| null("problem"))?.inner;
        let rep = match representation {
            FptRepresentation::ItoMcKean => Representation::ItoMcKean,
            FptRepresentation::Fortet => Representation::Fortet,
        };
        let ev = LaplaceEvaluator::for_problem(rep, sp)?;
        let grid = TimeGrid::new(sp.process.t0(), h, n)?;
        emit(invert_sub_densities(&ev, grid, &InversionControl::default())?, out);
        Ok(())
    })
}

/// Number of knots, or 0 for a null handle.
///
/// # Safety
/// `sub` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpt_subdensities_len(sub: *const FptSubDensities) -> usize {
    sub.as_ref().map_or(0, |s| s.inner.grid.n)
}

/// Copy `len` values into each non-null buffer; `clamped` receives 0 or 1.
///
/// # Safety
/// Each non-null buffer must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn fpt_subdensities_copy(
    sub: *const FptSubDensities,
    lower: *mut f64,
    upper: *mut f64,
    clamped: *mut u8,
    len: usize,
) -> FptStatus {
    guard(|| {
        let s = &sub.as_ref().ok_or_else(|| null("sub"))?.inner;
        if len != s.grid.n {
            return Err(Failure(FptStatus::Domain, format!("buffer length {len} differs from {} knots", s.grid.n)));
        }
        if !lower.is_null() {
            ptr::copy_nonoverlapping(s.lower.as_ptr(), lower, len);
        }
        if !upper.is_null() {
            ptr::copy_nonoverlapping(s.upper.as_ptr(), upper, len);
        }
        if !clamped.is_null() {
            for (k, &c) in s.clamped.iter().enumerate() {
                *clamped.add(k) = c as u8;
            }
        }
        Ok(())
    })
}

/// `h·Σ g_lower` and `h·Σ g_upper`.
///
/// # Safety
/// `sub` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpt_subdensities_mass(sub: *const FptSubDensities, lower: *mut f64, upper: *mut f64) -> FptStatus {
    guard(|| {
        let s = &sub.as_ref().ok_or_else(|| null("sub"))?.inner;
        *lower.as_mut().ok_or_else(|| null("lower"))? = s.mass_lower();
        *upper.as_mut().ok_or_else(|| null("upper"))? = s.mass_upper();
        Ok(())
    })
}

/// # Safety
/// `sub` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fpt_subdensities_free(sub: *mut FptSubDensities) {
    if !sub.is_null() {
        drop(Box::from_raw(sub));
    }
}

/// Image-series sub-densities of a standard Brownian motion in `(a, b)` after
/// `elapsed` time units, summing `|k| ≤ max_terms`.
///
/// # Safety
/// Outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpt_bm_sub_density(
    elapsed: f64,
    x0: f64,
    a: f64,
    b: f64,
    max_terms: usize,
    lower: *mut f64,
    upper: *mut f64,
) -> FptStatus {
    guard(|| {
        let lower = lower.as_mut().ok_or_else(|| null("lower"))?;
        let upper = upper.as_mut().ok_or_else(|| null("upper"))?;
        let ctl = SeriesControl::new(max_terms, SeriesControl::default().tail_tolerance)?;
        *lower = bm_sub_density_lower(elapsed, x0, a, b, &ctl)?.value;
        *upper = bm_sub_density_upper(elapsed, x0, a, b, &ctl)?.value;
        Ok(())
    })
}
