//! C ABI for `lowrex`.
//!
//! Maps and regularizers are opaque heap handles created by `*_new`-style
//! constructors and released with the matching `*_free`. Every fallible
//! function returns a [`LowrexStatus`]; on failure a message is available
//! from [`lowrex_last_error`] on the calling thread. Vectors are passed as
//! pointer plus length, matrices row-major. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lowrex::certificates::{certificate_report_with, precertificate, ReportDetail};
use lowrex::problem::gen_gaussian_map;
use lowrex::solvers::{self, identification_iteration, SolveOptions, SolveTrace, Step};
use lowrex::{risk, Error, LinearMap, Position, Regularizer};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowrexStatus {
    Ok = 0,
    NullPointer = 1,
    DimensionMismatch = 2,
    InvalidArgument = 3,
    Unsupported = 4,
    NotInjective = 5,
    RankDeficient = 6,
    Infeasible = 7,
    SingularJacobian = 8,
    InsufficientData = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for LowrexStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } => LowrexStatus::DimensionMismatch,
            Error::InvalidArgument(_) => LowrexStatus::InvalidArgument,
            Error::InfeasibleSpec(_) => LowrexStatus::InvalidArgument,
            Error::Unsupported { .. } => LowrexStatus::Unsupported,
            Error::NotInjective { .. } => LowrexStatus::NotInjective,
            Error::RankDeficient { .. } => LowrexStatus::RankDeficient,
            Error::Infeasible(_) => LowrexStatus::Infeasible,
            Error::SingularJacobian { .. } => LowrexStatus::SingularJacobian,
            Error::InsufficientData(_) => LowrexStatus::InsufficientData,
            Error::Config(_) => LowrexStatus::Config,
            Error::Io(_) => LowrexStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lowrex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lowrex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> LowrexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LowrexStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            LowrexStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = LowrexStatus::from(&e);
            set_error(e.to_string());
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LowrexStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> std::result::Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> std::result::Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> std::result::Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> std::result::Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn write_vec(dst: &mut [f64], src: &DVector<f64>) -> FfiResult {
    if dst.len() != src.len() {
        return Err(Error::DimensionMismatch {
            context: "output buffer",
            expected: src.len(),
            found: dst.len(),
        }
        .into());
    }
    dst.copy_from_slice(src.as_slice());
    Ok(())
}

/// Opaque linear operator `Φ`.
pub struct LowrexMap(LinearMap);

/// Opaque regularizer `J`.
pub struct LowrexRegularizer(Regularizer);

fn boxed<T>(slot: &mut *mut T, value: T) {
    *slot = Box::into_raw(Box::new(value));
}

/// Map from a row-major `rows × cols` array.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_map_new(rows: usize, cols: usize, data: *const f64, out_map: *mut *mut LowrexMap) -> LowrexStatus {
    guard(|| {
        let slot = out(out_map, "out_map")?;
        let values = slice(data, rows * cols, "data")?;
        boxed(slot, LowrexMap(LinearMap::from_rows(rows, cols, values)?));
        Ok(())
    })
}

/// `p × n` map with i.i.d. standard normal entries, optionally with unit columns.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_map_gaussian(p: usize, n: usize, seed: u64, normalize: bool, out_map: *mut *mut LowrexMap) -> LowrexStatus {
    guard(|| {
        let slot = out(out_map, "out_map")?;
        boxed(slot, LowrexMap(gen_gaussian_map(p, n, seed, normalize)?));
        Ok(())
    })
}

/// # Safety
/// `map` must come from a `lowrex_map_*` constructor, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn lowrex_map_free(map: *mut LowrexMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn lowrex_map_rows(map: *const LowrexMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `map` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn lowrex_map_cols(map: *const LowrexMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.cols())
}

/// `out = Φ x`.
///
/// # Safety
/// Buffers must hold `x_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lowrex_map_apply(
    map: *const LowrexMap,
    x: *const f64,
    x_len: usize,
    result: *mut f64,
    result_len: usize,
) -> LowrexStatus {
    guard(|| {
        let m = &handle(map, "map")?.0;
        let x = DVector::from_column_slice(slice(x, x_len, "x")?);
        if x.len() != m.cols() {
            return Err(Error::DimensionMismatch {
                context: "lowrex_map_apply (x)",
                expected: m.cols(),
                found: x.len(),
            }
            .into());
        }
        write_vec(slice_mut(result, result_len, "result")?, &m.apply(&x))
    })
}

fn new_regularizer(slot: *mut *mut LowrexRegularizer, make: impl FnOnce() -> lowrex::Result<Regularizer>) -> LowrexStatus {
    guard(|| {
        // SAFETY: callers pass a writable out-pointer or NULL.
        let slot = unsafe { out(slot, "out_reg")? };
        boxed(slot, LowrexRegularizer(make()?));
        Ok(())
    })
}

/// # Safety
/// `out_reg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_l1(out_reg: *mut *mut LowrexRegularizer) -> LowrexStatus {
    new_regularizer(out_reg, || Ok(Regularizer::L1))
}

/// # Safety
/// `out_reg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_linf(out_reg: *mut *mut LowrexRegularizer) -> LowrexStatus {
    new_regularizer(out_reg, || Ok(Regularizer::Linf))
}

/// Group ℓ1-ℓ2 over contiguous blocks of `block_size` entries.
///
/// # Safety
/// `out_reg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_group(n: usize, block_size: usize, out_reg: *mut *mut LowrexRegularizer) -> LowrexStatus {
    new_regularizer(out_reg, || Regularizer::uniform_groups(n, block_size))
}

/// Nuclear norm of `n0 × n0` matrices flattened column-major.
///
/// # Safety
/// `out_reg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_nuclear(n0: usize, out_reg: *mut *mut LowrexRegularizer) -> LowrexStatus {
    new_regularizer(out_reg, || Regularizer::nuclear(n0))
}

/// Analysis ℓ1 `‖D* x‖₁` with `D` given row-major as `n × q`.
///
/// # Safety
/// `d` must point to `n * q` doubles; `out_reg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_analysis(
    n: usize,
    q: usize,
    d: *const f64,
    out_reg: *mut *mut LowrexRegularizer,
) -> LowrexStatus {
    let data = match slice(d, n * q, "d") {
        Ok(s) => s.to_vec(),
        Err(f) => return guard(|| Err(f)),
    };
    new_regularizer(out_reg, move || Regularizer::analysis(DMatrix::from_row_slice(n, q, &data)))
}

/// One-dimensional total variation on signals of length `n`.
///
/// # Safety
/// `out_reg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_tv(n: usize, out_reg: *mut *mut LowrexRegularizer) -> LowrexStatus {
    new_regularizer(out_reg, || Regularizer::total_variation(n))
}

/// # Safety
/// `reg` must come from a `lowrex_regularizer_*` constructor, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_free(reg: *mut LowrexRegularizer) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// `*value = J(x)`.
///
/// # Safety
/// `x` must hold `n` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_eval(reg: *const LowrexRegularizer, x: *const f64, n: usize, value: *mut f64) -> LowrexStatus {
    guard(|| {
        let j = &handle(reg, "reg")?.0;
        let x = DVector::from_column_slice(slice(x, n, "x")?);
        *out(value, "value")? = j.eval(&x)?;
        Ok(())
    })
}

/// `result = Prox_{γJ}(x)`.
///
/// # Safety
/// `x` and `result` must hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn lowrex_regularizer_prox(
    reg: *const LowrexRegularizer,
    gamma: f64,
    x: *const f64,
    n: usize,
    result: *mut f64,
) -> LowrexStatus {
    guard(|| {
        let j = &handle(reg, "reg")?.0;
        let x = DVector::from_column_slice(slice(x, n, "x")?);
        write_vec(slice_mut(result, n, "result")?, &j.prox(gamma, &x)?)
    })
}

/// Linearized pre-certificate `η_F`; fails with `NotInjective` when `Φ` is
/// not injective on the model tangent of `x0`.
///
/// # Safety
/// `x0` and `eta` must hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn lowrex_precertificate(
    map: *const LowrexMap,
    reg: *const LowrexRegularizer,
    x0: *const f64,
    n: usize,
    eta: *mut f64,
) -> LowrexStatus {
    guard(|| {
        let (m, j) = (&handle(map, "map")?.0, &handle(reg, "reg")?.0);
        let x0 = DVector::from_column_slice(slice(x0, n, "x0")?);
        write_vec(slice_mut(eta, n, "eta")?, &precertificate(m, j, &x0)?.eta)
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowrexPosition {
    Interior = 0,
    Boundary = 1,
    Outside = 2,
}

/// Scalar fields of a certificate report. `ic` is NaN when not applicable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowrexCertificateSummary {
    pub dim_t: usize,
    pub sigma_min_t: f64,
    pub injective: bool,
    pub position: LowrexPosition,
    pub margin: f64,
    pub ic: f64,
    pub identifiable: bool,
}

/// Restricted injectivity and position of `η_F` for `x0`.
///
/// # Safety
/// `x0` must hold `n` doubles; `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_certificate_report(
    map: *const LowrexMap,
    reg: *const LowrexRegularizer,
    x0: *const f64,
    n: usize,
    summary: *mut LowrexCertificateSummary,
) -> LowrexStatus {
    guard(|| {
        let (m, j) = (&handle(map, "map")?.0, &handle(reg, "reg")?.0);
        let x0 = DVector::from_column_slice(slice(x0, n, "x0")?);
        let r = certificate_report_with(m, j, &x0, ReportDetail::Basic)?;
        *out(summary, "summary")? = LowrexCertificateSummary {
            dim_t: r.dim_t,
            sigma_min_t: r.sigma_min_t,
            injective: r.injective,
            position: match r.position.value {
                Position::Interior => LowrexPosition::Interior,
                Position::Boundary => LowrexPosition::Boundary,
                Position::Outside => LowrexPosition::Outside,
            },
            margin: r.position.margin,
            ic: r.ic.unwrap_or(f64::NAN),
            identifiable: r.identifiable,
        };
        Ok(())
    })
}

/// Solver settings. `step <= 0` selects the automatic step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowrexSolveOptions {
    pub step: f64,
    pub accelerate: bool,
    pub max_iter: usize,
    pub tol_rel: f64,
}

/// Outcome of a solve. `identification_iteration` is -1 when the manifold
/// never stabilized.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowrexSolveInfo {
    pub iterations: usize,
    pub converged: bool,
    pub identification_iteration: i64,
    pub step: f64,
}

#[no_mangle]
pub extern "C" fn lowrex_solve_options_default() -> LowrexSolveOptions {
    let d = SolveOptions::default();
    LowrexSolveOptions {
        step: 0.0,
        accelerate: d.accelerate,
        max_iter: d.max_iter,
        tol_rel: d.tol_rel,
    }
}

unsafe fn solve_options(opts: *const LowrexSolveOptions) -> SolveOptions {
    let o = opts.as_ref().copied().unwrap_or_else(|| lowrex_solve_options_default());
    SolveOptions {
        step: if o.step > 0.0 { Step::Fixed(o.step) } else { Step::Auto },
        accelerate: o.accelerate,
        max_iter: o.max_iter,
        tol_rel: o.tol_rel,
        ..SolveOptions::default()
    }
}

fn info(tr: &SolveTrace) -> LowrexSolveInfo {
    LowrexSolveInfo {
        iterations: tr.iterations,
        converged: tr.converged,
        identification_iteration: identification_iteration(tr).map_or(-1, |i| i as i64),
        step: tr.step,
    }
}

#[derive(Clone, Copy)]
enum Method {
    ForwardBackward,
    DouglasRachford,
    PrimalDual,
    PrimalDualConstrained,
}

#[allow(clippy::too_many_arguments)]
unsafe fn solve(
    method: Method,
    map: *const LowrexMap,
    y: *const f64,
    p: usize,
    lambda: f64,
    reg: *const LowrexRegularizer,
    opts: *const LowrexSolveOptions,
    x: *mut f64,
    n: usize,
    solve_info: *mut LowrexSolveInfo,
) -> LowrexStatus {
    guard(|| {
        let (m, j) = (&handle(map, "map")?.0, &handle(reg, "reg")?.0);
        let y = DVector::from_column_slice(slice(y, p, "y")?);
        let o = solve_options(opts);
        let (sol, tr) = match method {
            Method::ForwardBackward => solvers::fb_solve(m, &y, lambda, j, &o)?,
            Method::DouglasRachford => solvers::dr_solve(m, &y, j, &o)?,
            Method::PrimalDual => solvers::primal_dual_solve(m, &y, lambda, j, &o)?,
            Method::PrimalDualConstrained => solvers::primal_dual_constrained(m, &y, j, &o)?,
        };
        write_vec(slice_mut(x, n, "x")?, &sol)?;
        if let Some(slot) = solve_info.as_mut() {
            *slot = info(&tr);
        }
        Ok(())
    })
}

/// Forward-backward for `min ½‖y − Φx‖² + λJ(x)`. `opts` and `info` may be
/// NULL.
///
/// # Safety
/// `y` must hold `p` doubles and `x` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lowrex_fb_solve(
    map: *const LowrexMap,
    y: *const f64,
    p: usize,
    lambda: f64,
    reg: *const LowrexRegularizer,
    opts: *const LowrexSolveOptions,
    x: *mut f64,
    n: usize,
    info: *mut LowrexSolveInfo,
) -> LowrexStatus {
    solve(Method::ForwardBackward, map, y, p, lambda, reg, opts, x, n, info)
}

/// Douglas-Rachford for `min J(x) s.t. Φx = y`.
///
/// # Safety
/// As for [`lowrex_fb_solve`].
#[no_mangle]
pub unsafe extern "C" fn lowrex_dr_solve(
    map: *const LowrexMap,
    y: *const f64,
    p: usize,
    reg: *const LowrexRegularizer,
    opts: *const LowrexSolveOptions,
    x: *mut f64,
    n: usize,
    info: *mut LowrexSolveInfo,
) -> LowrexStatus {
    solve(Method::DouglasRachford, map, y, p, 0.0, reg, opts, x, n, info)
}

/// Chambolle-Pock for the analysis prior `min ½‖y − Φx‖² + λ‖D*x‖₁`.
///
/// # Safety
/// As for [`lowrex_fb_solve`].
#[no_mangle]
pub unsafe extern "C" fn lowrex_primal_dual_solve(
    map: *const LowrexMap,
    y: *const f64,
    p: usize,
    lambda: f64,
    reg: *const LowrexRegularizer,
    opts: *const LowrexSolveOptions,
    x: *mut f64,
    n: usize,
    info: *mut LowrexSolveInfo,
) -> LowrexStatus {
    solve(Method::PrimalDual, map, y, p, lambda, reg, opts, x, n, info)
}

/// Chambolle-Pock for the noiseless analysis problem `min ‖D*x‖₁ s.t. Φx = y`.
///
/// # Safety
/// As for [`lowrex_fb_solve`].
#[no_mangle]
pub unsafe extern "C" fn lowrex_primal_dual_constrained(
    map: *const LowrexMap,
    y: *const f64,
    p: usize,
    reg: *const LowrexRegularizer,
    opts: *const LowrexSolveOptions,
    x: *mut f64,
    n: usize,
    info: *mut LowrexSolveInfo,
) -> LowrexStatus {
    solve(Method::PrimalDualConstrained, map, y, p, 0.0, reg, opts, x, n, info)
}

/// Closed-form degrees of freedom at a solution `x_star`.
///
/// # Safety
/// `x_star` must hold `n` doubles; `dof` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_dof_closed_form(
    map: *const LowrexMap,
    reg: *const LowrexRegularizer,
    x_star: *const f64,
    n: usize,
    lambda: f64,
    dof: *mut f64,
) -> LowrexStatus {
    guard(|| {
        let (m, j) = (&handle(map, "map")?.0, &handle(reg, "reg")?.0);
        let x = DVector::from_column_slice(slice(x_star, n, "x_star")?);
        *out(dof, "dof")? = risk::dof_closed_form(m, j, &x, lambda)?;
        Ok(())
    })
}

/// `‖y − μ‖² + 2σ²·dof − Pσ²`.
///
/// # Safety
/// `y` and `mu` must hold `p` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lowrex_sure(y: *const f64, mu: *const f64, p: usize, dof: f64, sigma: f64, value: *mut f64) -> LowrexStatus {
    guard(|| {
        let y = DVector::from_column_slice(slice(y, p, "y")?);
        let mu = DVector::from_column_slice(slice(mu, p, "mu")?);
        *out(value, "value")? = risk::sure(&y, &mu, dof, sigma)?;
        Ok(())
    })
}
