//! C ABI for `dk-sim`.
//!
//! Objects are opaque handles created by `dk_*_new`-style calls and released
//! with the matching `dk_*_free`. Every call returns a [`DkStatus`]; on
//! failure a message is available from [`dk_last_error_message`] on the same
//! thread. Panics are caught at the boundary and reported as
//! [`DkStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dk_sim::config::ExperimentConfig;
use dk_sim::grid::{GridSpec, RealField};
use dk_sim::kernels::{self, KernelSpec};
use dk_sim::noise::{self, NoiseSpec};
use dk_sim::solver::{self, TrajectoryRecord};
use dk_sim::{diagnostics, regularization, DkError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalAbort = 4,
    Io = 5,
    GridMismatch = 6,
    Panic = 7,
}

pub struct DkGrid(GridSpec);
pub struct DkField(RealField);
pub struct DkKernel(KernelSpec);
pub struct DkNoise(NoiseSpec);
pub struct DkConfig(ExperimentConfig);
pub struct DkTrajectory(TrajectoryRecord);

/// Outcome of the integrability audit.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DkLpsReport {
    pub a1_pass: bool,
    pub a2_pass: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(DkStatus, String);

impl From<DkError> for Failure {
    fn from(e: DkError) -> Self {
        let status = match &e {
            DkError::Config(_) => DkStatus::ConfigError,
            DkError::NumericalAbort { .. } => DkStatus::NumericalAbort,
            DkError::Io(_) => DkStatus::Io,
            DkError::GridMismatch { .. } => DkStatus::GridMismatch,
            _ => DkStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            DkStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Failure(
            DkStatus::InvalidArgument,
            format!("buffer holds {} values, need {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dk_grid_new(dim: usize, n: usize, out: *mut *mut DkGrid) -> DkStatus {
    guard(|| put(out, DkGrid(GridSpec::new(dim, n)?)))
}

/// # Safety
/// `grid` must come from `dk_grid_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dk_grid_free(grid: *mut DkGrid) {
    free(grid)
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_grid_len(grid: *const DkGrid, out: *mut usize) -> DkStatus {
    guard(|| write(out, get(grid, "grid")?.0.len()))
}

/// Field from `len` row-major values.
///
/// # Safety
/// `values` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_field_new(
    grid: *const DkGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut DkField,
) -> DkStatus {
    guard(|| {
        let g = get(grid, "grid")?.0;
        let v = slice(values, len, "values")?.to_vec();
        put(out, DkField(RealField::new(g, v)?))
    })
}

/// # Safety
/// `out` must point to `len` writable doubles, `len` equal to the grid size.
#[no_mangle]
pub unsafe extern "C" fn dk_field_copy_values(field: *const DkField, out: *mut f64, len: usize) -> DkStatus {
    guard(|| copy_out(get(field, "field")?.0.values(), slice_mut(out, len, "out")?))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_field_integrate(field: *const DkField, out: *mut f64) -> DkStatus {
    guard(|| write(out, get(field, "field")?.0.integrate()))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_field_lp_norm(field: *const DkField, p: f64, out: *mut f64) -> DkStatus {
    guard(|| write(out, get(field, "field")?.0.lp_norm(p)?))
}

/// # Safety
/// `field` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dk_field_free(field: *mut DkField) {
    free(field)
}

/// `int Psi(rho)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_entropy(field: *const DkField, out: *mut f64) -> DkStatus {
    guard(|| write(out, diagnostics::entropy(&get(field, "field")?.0)?))
}

/// `int |grad sqrt rho|^2`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_dissipation(field: *const DkField, out: *mut f64) -> DkStatus {
    guard(|| write(out, diagnostics::dissipation(&get(field, "field")?.0)))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_l1_distance(a: *const DkField, b: *const DkField, out: *mut f64) -> DkStatus {
    guard(|| write(out, diagnostics::l1_distance(&get(a, "a")?.0, &get(b, "b")?.0)?))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_kinetic_distance(
    a: *const DkField,
    b: *const DkField,
    bins: usize,
    out: *mut f64,
) -> DkStatus {
    guard(|| write(out, diagnostics::kinetic_distance(&get(a, "a")?.0, &get(b, "b")?.0, bins)?))
}

/// Truncated periodic Biot-Savart kernel (d = 2).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_kernel_biot_savart(
    grid: *const DkGrid,
    truncation: usize,
    out: *mut *mut DkKernel,
) -> DkStatus {
    guard(|| put(out, DkKernel(kernels::biot_savart(get(grid, "grid")?.0, truncation)?)))
}

/// `V_i(x) = amplitude_i sin(2 pi k.x)`; `k` and `amplitude` hold d entries.
///
/// # Safety
/// `k` and `amplitude` must point to d readable values.
#[no_mangle]
pub unsafe extern "C" fn dk_kernel_single_mode(
    grid: *const DkGrid,
    k: *const i64,
    amplitude: *const f64,
    out: *mut *mut DkKernel,
) -> DkStatus {
    guard(|| {
        let g = get(grid, "grid")?.0;
        if k.is_null() {
            return Err(null("k"));
        }
        let ks = std::slice::from_raw_parts(k, g.dim());
        let amp = slice(amplitude, g.dim(), "amplitude")?;
        put(out, DkKernel(KernelSpec::single_mode(g, ks, amp)?))
    })
}

/// New kernel smoothed at scale `gamma`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_kernel_mollify(kernel: *const DkKernel, gamma: f64, out: *mut *mut DkKernel) -> DkStatus {
    guard(|| put(out, DkKernel(kernels::mollify(&get(kernel, "kernel")?.0, gamma)?)))
}

/// `V * rho`, written component after component (`d * grid_len` values).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_kernel_apply(
    kernel: *const DkKernel,
    field: *const DkField,
    out: *mut f64,
    len: usize,
) -> DkStatus {
    guard(|| {
        let v = kernels::apply(&get(kernel, "kernel")?.0, &get(field, "field")?.0)?;
        let flat: Vec<f64> = v.components().iter().flat_map(|c| c.values().iter().copied()).collect();
        copy_out(&flat, slice_mut(out, len, "out")?)
    })
}

/// # Safety
/// `kernel` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dk_kernel_free(kernel: *mut DkKernel) {
    free(kernel)
}

/// Audits integrability exponents (use `INFINITY` for infinite ones).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dk_check_lps(
    d: usize,
    p: f64,
    pstar: f64,
    q: f64,
    qstar: f64,
    out: *mut DkLpsReport,
) -> DkStatus {
    guard(|| {
        let r = kernels::check_lps(d, p, pstar, q, qstar);
        write(
            out,
            DkLpsReport {
                a1_pass: r.a1_pass,
                a2_pass: r.a2_pass,
            },
        )
    })
}

/// Paired sin/cos noise with the same amplitude on every wavevector with
/// `0 < |k| <= cutoff`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_noise_uv(
    grid: *const DkGrid,
    cutoff: usize,
    amplitude: f64,
    out: *mut *mut DkNoise,
) -> DkStatus {
    guard(|| put(out, DkNoise(noise::uv_noise_uniform(get(grid, "grid")?.0, cutoff, amplitude)?)))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_noise_mode_count(noise: *const DkNoise, out: *mut usize) -> DkStatus {
    guard(|| write(out, get(noise, "noise")?.0.mode_count()))
}

/// `F1 = sum_k f_k^2` on the grid.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_noise_f1(noise: *const DkNoise, out: *mut f64, len: usize) -> DkStatus {
    guard(|| {
        let f = noise::compute_f(&get(noise, "noise")?.0);
        copy_out(f.f1.values(), slice_mut(out, len, "out")?)
    })
}

/// # Safety
/// `noise` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dk_noise_free(noise: *mut DkNoise) {
    free(noise)
}

/// `sigma_n(xi)` and `sigma_n'(xi)`; either output may be null.
///
/// # Safety
/// Non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dk_sigma_eval(index: usize, xi: f64, value: *mut f64, derivative: *mut f64) -> DkStatus {
    guard(|| {
        let s = regularization::sigma(index)?;
        if !value.is_null() {
            *value = s.value(xi);
        }
        if !derivative.is_null() {
            *derivative = s.derivative(xi);
        }
        Ok(())
    })
}

/// Parses and validates a TOML experiment config.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dk_config_parse(text: *const c_char, out: *mut *mut DkConfig) -> DkStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Failure(DkStatus::ConfigError, "config is not UTF-8".into()))?;
        let cfg = ExperimentConfig::from_toml(s)?;
        cfg.validate()?;
        put(out, DkConfig(cfg))
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dk_config_free(config: *mut DkConfig) {
    free(config)
}

/// Runs the solver for a parsed config (first replica only).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_simulate(config: *const DkConfig, out: *mut *mut DkTrajectory) -> DkStatus {
    guard(|| {
        let cfg = get(config, "config")?.0.solver_config()?;
        put(out, DkTrajectory(solver::run(&cfg)?))
    })
}

/// Number of stored snapshots.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_len(traj: *const DkTrajectory, out: *mut usize) -> DkStatus {
    guard(|| write(out, get(traj, "trajectory")?.0.snapshots.len()))
}

/// Diagnostics rows `t, mass, entropy, dissipation, min_rho, l2, l4`,
/// row-major. `rows` receives the row count; pass a null `out` to query it.
///
/// # Safety
/// A non-null `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_diagnostics(
    traj: *const DkTrajectory,
    out: *mut f64,
    len: usize,
    rows: *mut usize,
) -> DkStatus {
    guard(|| {
        let t = &get(traj, "trajectory")?.0;
        write(rows, t.diagnostics.len())?;
        if out.is_null() {
            return Ok(());
        }
        let flat: Vec<f64> = t.diagnostics.iter().flat_map(|d| d.row()).collect();
        copy_out(&flat, slice_mut(out, len, "out")?)
    })
}

/// Copies snapshot `index` (grid size values) and its time.
///
/// # Safety
/// `out` must point to `len` writable doubles; `time` may be null.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_snapshot(
    traj: *const DkTrajectory,
    index: usize,
    out: *mut f64,
    len: usize,
    time: *mut f64,
) -> DkStatus {
    guard(|| {
        let s = &get(traj, "trajectory")?.0.snapshots;
        let field = s.fields().get(index).ok_or_else(|| {
            Failure(
                DkStatus::InvalidArgument,
                format!("snapshot {index} out of range ({} stored)", s.len()),
            )
        })?;
        copy_out(field.values(), slice_mut(out, len, "out")?)?;
        if !time.is_null() {
            *time = s.times()[index];
        }
        Ok(())
    })
}

/// # Safety
/// `traj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_free(traj: *mut DkTrajectory) {
    free(traj)
}
