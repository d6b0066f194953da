//! C ABI for the glps-fem library.
//!
//! Handles are opaque pointers created and freed by this library; every
//! fallible call returns a [`GlpsStatus`] and records a message retrievable
//! with [`glps_last_error_message`] on failure. All entry points catch
//! panics, so no Rust unwind ever crosses the language boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use glps_fem::assembly::{self, ProblemKind};
use glps_fem::io;
use glps_fem::mesh::TriMesh;
use glps_fem::problems::ManufacturedProblem;
use glps_fem::solver::{self, DiscreteSolution};
use glps_fem::space::{ScalarField, VectorField};
use glps_fem::stabilization::StabilizationParams;
use glps_fem::verification::{self, ErrorColumn, StudyConfig};
use glps_fem::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlpsStatus {
    /// The call succeeded.
    Ok = 0,
    /// An argument was null, out of range, or otherwise invalid.
    InvalidArgument = 1,
    /// The computation itself failed (singular system, I/O error, ...).
    Failure = 2,
    /// A panic was caught at the language boundary.
    Panic = 3,
}

/// Problem selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlpsProblem {
    Darcy = 0,
    Stokes = 1,
}

/// Error-norm column of a convergence study.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlpsColumn {
    VelocityL2 = 0,
    VelocityH1 = 1,
    PressureL2 = 2,
    Triple = 3,
}

/// One row of a convergence study: error norms of one refinement level.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GlpsErrorRow {
    pub level: usize,
    pub cells: usize,
    pub h_max: f64,
    pub err_u_l2: f64,
    pub err_u_h1: f64,
    pub err_p_l2: f64,
    pub err_triple: f64,
}

/// Completed convergence study (opaque).
pub struct GlpsStudy {
    report: verification::ConvergenceReport,
}

/// Discrete solution on one mesh (opaque).
pub struct GlpsSolution {
    mesh: TriMesh,
    solution: DiscreteSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    // An interior NUL cannot occur in our messages, but a caller-supplied
    // path could smuggle one in; replace rather than fail.
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

fn fail(e: &Error) -> GlpsStatus {
    set_error(&e.to_string());
    match e {
        Error::InvalidArgument(_) => GlpsStatus::InvalidArgument,
        _ => GlpsStatus::Failure,
    }
}

fn invalid(message: &str) -> GlpsStatus {
    set_error(message);
    GlpsStatus::InvalidArgument
}

/// Runs `f` with panics converted to [`GlpsStatus::Panic`]. Clears the
/// error message first so it always refers to the current call.
fn guard(f: impl FnOnce() -> GlpsStatus) -> GlpsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {message}"));
            GlpsStatus::Panic
        }
    }
}

impl GlpsProblem {
    fn kind(self) -> ProblemKind {
        match self {
            GlpsProblem::Darcy => ProblemKind::Darcy,
            GlpsProblem::Stokes => ProblemKind::Stokes,
        }
    }
}

impl GlpsColumn {
    fn column(self) -> ErrorColumn {
        match self {
            GlpsColumn::VelocityL2 => ErrorColumn::VelocityL2,
            GlpsColumn::VelocityH1 => ErrorColumn::VelocityH1,
            GlpsColumn::PressureL2 => ErrorColumn::PressureL2,
            GlpsColumn::Triple => ErrorColumn::Triple,
        }
    }
}

/// Version of this library as a NUL-terminated static string.
#[no_mangle]
pub extern "C" fn glps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread, as a NUL-terminated
/// string. Empty after a success. The pointer stays valid until the next
/// glps call on the same thread.
#[no_mangle]
pub extern "C" fn glps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Runs a mesh-refinement study against the built-in manufactured solution
/// and returns an opaque handle to the resulting error table.
///
/// `levels` is the number of refinement levels (1 to 8), `initial_n` the
/// number of squares per side of the level-0 criss-cross mesh, `beta` the
/// interior stabilization strength, `zeta` the boundary penalty (Stokes
/// only), and `quad_degree` the quadrature degree (1 to 8). With `perturb`
/// set, interior vertices of every level are displaced pseudo-randomly
/// from `perturb_seed`, reproducibly.
///
/// # Safety
/// `out_study` must be a valid, writable pointer. On success it receives a
/// handle that must be released with [`glps_study_free`].
#[no_mangle]
pub unsafe extern "C" fn glps_study_run(
    problem: GlpsProblem,
    levels: usize,
    initial_n: usize,
    beta: f64,
    zeta: f64,
    quad_degree: usize,
    perturb: bool,
    perturb_seed: u64,
    out_study: *mut *mut GlpsStudy,
) -> GlpsStatus {
    guard(|| {
        if out_study.is_null() {
            return invalid("out_study is null");
        }
        let config = StudyConfig {
            kind: problem.kind(),
            levels,
            initial_n,
            params: StabilizationParams { beta, zeta },
            quad_degree,
            perturb: perturb.then_some(perturb_seed),
        };
        let manufactured = ManufacturedProblem::default_for(config.kind);
        match verification::run_study(&config, &manufactured) {
            Ok(report) => {
                unsafe { *out_study = Box::into_raw(Box::new(GlpsStudy { report })) };
                GlpsStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of rows (refinement levels) in the study, 0 for a null handle.
///
/// # Safety
/// `study` must be null or a live handle from [`glps_study_run`].
#[no_mangle]
pub unsafe extern "C" fn glps_study_rows(study: *const GlpsStudy) -> usize {
    if study.is_null() {
        return 0;
    }
    unsafe { (*study).report.samples.len() }
}

/// Copies row `index` of the study into `out_row`.
///
/// # Safety
/// `study` must be a live handle from [`glps_study_run`] and `out_row` a
/// valid, writable pointer.
#[no_mangle]
pub unsafe extern "C" fn glps_study_row(
    study: *const GlpsStudy,
    index: usize,
    out_row: *mut GlpsErrorRow,
) -> GlpsStatus {
    guard(|| {
        if study.is_null() {
            return invalid("study is null");
        }
        if out_row.is_null() {
            return invalid("out_row is null");
        }
        let samples = unsafe { &(*study).report.samples };
        let Some(s) = samples.get(index) else {
            return invalid(&format!(
                "row index {index} out of range, study has {} rows",
                samples.len()
            ));
        };
        unsafe {
            *out_row = GlpsErrorRow {
                level: s.level,
                cells: s.cells,
                h_max: s.h_max,
                err_u_l2: s.err_u_l2,
                err_u_h1: s.err_u_h1,
                err_p_l2: s.err_p_l2,
                err_triple: s.err_triple,
            };
        }
        GlpsStatus::Ok
    })
}

/// Least-squares slope of log error against log h for one error column.
/// Fails on studies with fewer than two rows or non-positive errors.
///
/// # Safety
/// `study` must be a live handle and `out_order` a valid, writable pointer.
#[no_mangle]
pub unsafe extern "C" fn glps_study_fitted_order(
    study: *const GlpsStudy,
    column: GlpsColumn,
    out_order: *mut f64,
) -> GlpsStatus {
    guard(|| {
        if study.is_null() {
            return invalid("study is null");
        }
        if out_order.is_null() {
            return invalid("out_order is null");
        }
        match unsafe { &(*study).report }.fitted_order(column.column()) {
            Some(order) => {
                unsafe { *out_order = order };
                GlpsStatus::Ok
            }
            None => invalid("fitted order needs at least two levels with positive errors"),
        }
    })
}

/// Releases a study handle. A null handle is ignored.
///
/// # Safety
/// `study` must be null or a handle from [`glps_study_run`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn glps_study_free(study: *mut GlpsStudy) {
    if !study.is_null() {
        drop(unsafe { Box::from_raw(study) });
    }
}

/// Assembles and solves one problem on the criss-cross mesh with `n`
/// squares per side, returning an opaque solution handle.
///
/// # Safety
/// `out_solution` must be a valid, writable pointer. On success it
/// receives a handle that must be released with [`glps_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn glps_solve(
    problem: GlpsProblem,
    n: usize,
    beta: f64,
    zeta: f64,
    quad_degree: usize,
    out_solution: *mut *mut GlpsSolution,
) -> GlpsStatus {
    guard(|| {
        if out_solution.is_null() {
            return invalid("out_solution is null");
        }
        let kind = problem.kind();
        let params = StabilizationParams { beta, zeta };
        let run = || -> glps_fem::Result<GlpsSolution> {
            params.validate(kind)?;
            let mesh = TriMesh::criss_cross(n)?;
            let manufactured = ManufacturedProblem::default_for(kind);
            manufactured.validate_on(&mesh, kind, quad_degree)?;
            let system = assembly::assemble(&mesh, &params, &manufactured, kind, quad_degree)?;
            let solution = solver::solve(&system)?;
            Ok(GlpsSolution { mesh, solution })
        };
        match run() {
            Ok(handle) => {
                unsafe { *out_solution = Box::into_raw(Box::new(handle)) };
                GlpsStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Writes the coefficient counts of the solution: `out_velocity` receives
/// the number of velocity dofs (two per vertex), `out_pressure` the number
/// of pressure dofs (one per vertex). Either output may be null to skip it.
///
/// # Safety
/// `solution` must be a live handle from [`glps_solve`]; non-null outputs
/// must be valid, writable pointers.
#[no_mangle]
pub unsafe extern "C" fn glps_solution_dofs(
    solution: *const GlpsSolution,
    out_velocity: *mut usize,
    out_pressure: *mut usize,
) -> GlpsStatus {
    guard(|| {
        if solution.is_null() {
            return invalid("solution is null");
        }
        let handle = unsafe { &*solution };
        if !out_velocity.is_null() {
            unsafe { *out_velocity = handle.solution.velocity.len() };
        }
        if !out_pressure.is_null() {
            unsafe { *out_pressure = handle.solution.pressure.len() };
        }
        GlpsStatus::Ok
    })
}

/// Relative residual of the solved linear system, NaN for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle from [`glps_solve`].
#[no_mangle]
pub unsafe extern "C" fn glps_solution_residual(solution: *const GlpsSolution) -> f64 {
    if solution.is_null() {
        return f64::NAN;
    }
    unsafe { (*solution).solution.relative_residual }
}

/// Evaluates the discrete fields at a point of the unit square.
/// `out_velocity` receives two components, `out_pressure` one; either may
/// be null to skip it. Points outside the mesh are rejected.
///
/// # Safety
/// `solution` must be a live handle; a non-null `out_velocity` must point
/// to at least two writable doubles, a non-null `out_pressure` to one.
#[no_mangle]
pub unsafe extern "C" fn glps_solution_eval(
    solution: *const GlpsSolution,
    x: f64,
    y: f64,
    out_velocity: *mut f64,
    out_pressure: *mut f64,
) -> GlpsStatus {
    guard(|| {
        if solution.is_null() {
            return invalid("solution is null");
        }
        let handle = unsafe { &*solution };
        let Some((cell, bary)) = handle.mesh.locate([x, y]) else {
            return invalid(&format!("point ({x}, {y}) is outside the mesh"));
        };
        if !out_velocity.is_null() {
            let field = match VectorField::new(&handle.mesh, &handle.solution.velocity) {
                Ok(f) => f,
                Err(e) => return fail(&e),
            };
            match field.eval(cell, bary) {
                Ok(value) => unsafe {
                    *out_velocity = value[0];
                    *out_velocity.add(1) = value[1];
                },
                Err(e) => return fail(&e),
            }
        }
        if !out_pressure.is_null() {
            let field = match ScalarField::new(&handle.mesh, &handle.solution.pressure) {
                Ok(f) => f,
                Err(e) => return fail(&e),
            };
            match field.eval(cell, bary) {
                Ok(value) => unsafe { *out_pressure = value },
                Err(e) => return fail(&e),
            }
        }
        GlpsStatus::Ok
    })
}

/// Writes the solution as a legacy ASCII VTK file at `path`.
///
/// # Safety
/// `solution` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn glps_solution_write_vtk(
    solution: *const GlpsSolution,
    path: *const c_char,
) -> GlpsStatus {
    guard(|| {
        if solution.is_null() {
            return invalid("solution is null");
        }
        if path.is_null() {
            return invalid("path is null");
        }
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return invalid("path is not valid UTF-8");
        };
        let handle = unsafe { &*solution };
        match io::write_vtk(
            Path::new(path),
            "glps-fem-ffi",
            &handle.mesh,
            &handle.solution,
        ) {
            Ok(()) => GlpsStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Releases a solution handle. A null handle is ignored.
///
/// # Safety
/// `solution` must be null or a handle from [`glps_solve`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn glps_solution_free(solution: *mut GlpsSolution) {
    if !solution.is_null() {
        drop(unsafe { Box::from_raw(solution) });
    }
}
