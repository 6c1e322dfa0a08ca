//! C ABI over `nfar-core`.
//!
//! Objects are opaque handles created by `*_new` / `*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`NfarStatus`]; on failure a message is available from
//! [`nfar_last_error_message`] on the same thread. Fields cross the boundary
//! as row-major `S×S` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use nfar_core::config::ExperimentConfig;
use nfar_core::diagnostics::{check_assumption_m2, CovarianceOperatorDisc};
use nfar_core::gp::{CirculantSpectrum, NoiseSampler, StationaryKernel};
use nfar_core::learner::{self, OperatorModel};
use nfar_core::mlp::Checkpoint;
use nfar_core::nfar::{NfarModel as CoreModel, NfarParams, NfarPath as CorePath, Tau};
use nfar_core::seed::{stream, Role};
use nfar_core::{Error, GridField, GridSpec};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Embedding = 4,
    Overflow = 5,
    Io = 6,
    Parse = 7,
    Training = 8,
    Config = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Other = 12,
}

/// Nonlinearity applied pointwise inside the transition operator.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfarTau {
    Trig = 0,
    Identity = 1,
    Zero = 2,
}

impl From<NfarTau> for Tau {
    fn from(t: NfarTau) -> Self {
        match t {
            NfarTau::Trig => Tau::Trig,
            NfarTau::Identity => Tau::Identity,
            NfarTau::Zero => Tau::Zero,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NfarEmbeddingReport {
    pub grid_size: usize,
    pub min_lambda: f64,
    pub max_lambda: f64,
    pub min_lambda_before_clamp: f64,
    pub clamp_count: usize,
    pub clamped_mass: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NfarDriftReport {
    pub trace: f64,
    pub lambda_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho: f64,
    pub kappa: f64,
    /// 1 when `rho < 1`.
    pub passes: i32,
}

/// Gaussian noise generator on an `S×S` grid.
pub struct NfarSampler {
    inner: NoiseSampler,
}

/// Transition operator of the autoregression.
pub struct NfarModel {
    inner: CoreModel,
}

/// A simulated sequence of fields.
pub struct NfarPath {
    inner: CorePath,
}

/// A learned operator with a network kernel.
pub struct NfarOperator {
    inner: OperatorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NfarStatus {
    match e {
        Error::InvalidGrid(_) | Error::InvalidArgument(_) | Error::NonFinite(_) => {
            NfarStatus::InvalidArgument
        }
        Error::Shape(_) | Error::TooLarge(..) => NfarStatus::Shape,
        Error::Embedding { .. } => NfarStatus::Embedding,
        Error::Overflow { .. } => NfarStatus::Overflow,
        Error::Io { .. } => NfarStatus::Io,
        Error::Parse(_) | Error::Json(_) => NfarStatus::Parse,
        Error::Training { .. } => NfarStatus::Training,
        Error::Config(_) => NfarStatus::Config,
        Error::Cell { source, .. } => status_of(source),
        #[allow(unreachable_patterns)]
        _ => NfarStatus::Other,
    }
}

struct Fail(NfarStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NfarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NfarStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            NfarStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(NfarStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: callers pass handles obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: as in `handle`; the C side must not share a handle across threads concurrently.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, by contract, NUL-terminated.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(NfarStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn str_arg(p: *const c_char, what: &str) -> Result<String, Fail> {
    Ok(unsafe { path_arg(p, what) }?.to_string_lossy().into_owned())
}

unsafe fn field_in(grid: GridSpec, values: *const f64, len: usize) -> Result<GridField, Fail> {
    if values.is_null() {
        return Err(null("input field"));
    }
    if len != grid.len() {
        return Err(Fail(
            NfarStatus::Shape,
            format!("input has {len} values, grid needs {}", grid.len()),
        ));
    }
    // SAFETY: non-null and at least `len` readable doubles by contract.
    let slice = unsafe { std::slice::from_raw_parts(values, len) };
    Ok(GridField::new(grid, slice.to_vec())?)
}

unsafe fn field_out(f: &GridField, out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < f.values().len() {
        return Err(Fail(
            NfarStatus::BufferTooSmall,
            format!("output buffer holds {len} values, need {}", f.values().len()),
        ));
    }
    // SAFETY: non-null with room for `len ≥ S²` doubles by contract.
    unsafe { std::ptr::copy_nonoverlapping(f.values().as_ptr(), out, f.values().len()) };
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle pointer"));
    }
    // SAFETY: `out` is a valid location for one pointer by contract.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `Box::into_raw` in this library and is freed once.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nfar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes (without the terminating NUL) of the last error message on this thread.
#[no_mangle]
pub extern "C" fn nfar_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len − 1` bytes). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nfar_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: `buf` has room for `len` bytes and `n + 1 ≤ len`.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Builds the circulant spectrum for an `S×S` grid and a sampler seeded with `seed`.
///
/// # Safety
/// `out` must point to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfar_sampler_new(
    grid_size: usize,
    kernel_scale: f64,
    seed: u64,
    out: *mut *mut NfarSampler,
) -> NfarStatus {
    guard(|| {
        let grid = GridSpec::new(grid_size)?;
        let spectrum = Arc::new(CirculantSpectrum::build(&StationaryKernel::new(kernel_scale)?, grid)?);
        let inner = NoiseSampler::new(spectrum, stream(seed, &[], Role::Noise));
        unsafe { store(out, NfarSampler { inner }) }
    })
}

/// Draws one noise field into `out` (`len ≥ S²`).
///
/// # Safety
/// `sampler` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nfar_sampler_sample(
    sampler: *mut NfarSampler,
    out: *mut f64,
    len: usize,
) -> NfarStatus {
    guard(|| {
        let s = unsafe { handle_mut(sampler, "sampler") }?;
        let f = s.inner.sample_field();
        unsafe { field_out(&f, out, len) }
    })
}

/// # Safety
/// `sampler` must be a live handle; `out` must point to a writable report.
#[no_mangle]
pub unsafe extern "C" fn nfar_sampler_report(
    sampler: *const NfarSampler,
    out: *mut NfarEmbeddingReport,
) -> NfarStatus {
    guard(|| {
        let s = unsafe { handle(sampler, "sampler") }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("report"))?;
        let r = s.inner.spectrum().report();
        *out = NfarEmbeddingReport {
            grid_size: r.grid_size,
            min_lambda: r.min_lambda,
            max_lambda: r.max_lambda,
            min_lambda_before_clamp: r.min_lambda_before_clamp,
            clamp_count: r.clamp_count,
            clamped_mass: r.clamped_mass,
        };
        Ok(())
    })
}

/// # Safety
/// `sampler` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfar_sampler_free(sampler: *mut NfarSampler) {
    unsafe { free(sampler) }
}

/// Transition operator `z ↦ (1/S²) Σ amplitude·K(u−v)·τ(z(v))` on an `S×S` grid.
///
/// # Safety
/// `out` must point to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfar_model_new(
    grid_size: usize,
    kernel_scale: f64,
    amplitude: f64,
    tau: NfarTau,
    out: *mut *mut NfarModel,
) -> NfarStatus {
    guard(|| {
        let params = NfarParams {
            kernel_scale,
            amplitude,
            tau: tau.into(),
            ..NfarParams::default()
        };
        let inner = CoreModel::new(params, GridSpec::new(grid_size)?)?;
        unsafe { store(out, NfarModel { inner }) }
    })
}

/// Applies the noise-free transition to `z` (`S²` values) and writes `S²` values to `out`.
///
/// # Safety
/// `model` must be a live handle; `z` must hold `z_len` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn nfar_model_apply(
    model: *const NfarModel,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
    out_len: usize,
) -> NfarStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        let f = unsafe { field_in(m.inner.grid(), z, z_len) }?;
        let r = m.inner.apply_true_operator(&f)?;
        unsafe { field_out(&r, out, out_len) }
    })
}

/// Simulates `length` fields after `burn_in` discarded steps, starting from zero.
///
/// # Safety
/// `model` must be a live handle; `out` must point to storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfar_model_simulate(
    model: *const NfarModel,
    seed: u64,
    length: usize,
    burn_in: usize,
    out: *mut *mut NfarPath,
) -> NfarStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        let grid = m.inner.grid();
        let spectrum = Arc::new(CirculantSpectrum::build(m.inner.kernel(), grid)?);
        let mut sampler = NoiseSampler::new(spectrum, stream(seed, &[], Role::Noise));
        let mut path = m.inner.simulate_path(&mut sampler, length, burn_in)?;
        path.meta.seed = Some(seed);
        unsafe { store(out, NfarPath { inner: path }) }
    })
}

/// Drift constants of the model's growth bound at its grid resolution.
///
/// # Safety
/// `model` must be a live handle; `out` must point to a writable report.
#[no_mangle]
pub unsafe extern "C" fn nfar_model_check_drift(
    model: *const NfarModel,
    out: *mut NfarDriftReport,
) -> NfarStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("report"))?;
        let q = CovarianceOperatorDisc::new(m.inner.kernel(), m.inner.grid())?;
        let r = check_assumption_m2(&m.inner, &q);
        *out = NfarDriftReport {
            trace: r.trace,
            lambda_max: r.lambda_max,
            c1: r.c1,
            c2: r.c2,
            rho: r.rho,
            kappa: r.kappa,
            passes: r.passes as i32,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfar_model_free(model: *mut NfarModel) {
    unsafe { free(model) }
}

/// # Safety
/// `path` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfar_path_len(path: *const NfarPath) -> usize {
    unsafe { path.as_ref() }.map_or(0, |p| p.inner.len())
}

/// # Safety
/// `path` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfar_path_grid_size(path: *const NfarPath) -> usize {
    unsafe { path.as_ref() }.map_or(0, |p| p.inner.grid().size())
}

/// Copies field `t` (0-based) into `out`.
///
/// # Safety
/// `path` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nfar_path_field(
    path: *const NfarPath,
    t: usize,
    out: *mut f64,
    len: usize,
) -> NfarStatus {
    guard(|| {
        let p = unsafe { handle(path, "path") }?;
        let f = p.inner.fields.get(t).ok_or_else(|| {
            Fail(
                NfarStatus::InvalidArgument,
                format!("index {t} out of range for path of length {}", p.inner.len()),
            )
        })?;
        unsafe { field_out(f, out, len) }
    })
}

/// Writes CSV frames and `meta.json` into directory `dir`.
///
/// # Safety
/// `path` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nfar_path_write_dir(path: *const NfarPath, dir: *const c_char) -> NfarStatus {
    guard(|| {
        let p = unsafe { handle(path, "path") }?;
        let dir = unsafe { path_arg(dir, "dir") }?;
        Ok(p.inner.write_dir(&dir)?)
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string; `out` storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfar_path_read_dir(dir: *const c_char, out: *mut *mut NfarPath) -> NfarStatus {
    guard(|| {
        let dir = unsafe { path_arg(dir, "dir") }?;
        let inner = CorePath::read_dir(&dir)?;
        unsafe { store(out, NfarPath { inner }) }
    })
}

/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfar_path_free(path: *mut NfarPath) {
    unsafe { free(path) }
}

/// Trains a kernel network on `path` with the `[train]` section of a TOML
/// experiment config (`config_toml` may be null for defaults).
///
/// # Safety
/// `path` must be a live handle; `config_toml` null or NUL-terminated;
/// `out` storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfar_train(
    path: *const NfarPath,
    config_toml: *const c_char,
    out: *mut *mut NfarOperator,
) -> NfarStatus {
    guard(|| {
        let p = unsafe { handle(path, "path") }?;
        let cfg = if config_toml.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_toml_str(&unsafe { str_arg(config_toml, "config") }?)?
        };
        let outcome = learner::train(&p.inner, &cfg.train)?;
        unsafe { store(out, NfarOperator { inner: outcome.model }) }
    })
}

/// Loads a checkpoint JSON file; `grid_size` 0 takes the size stored in the checkpoint.
///
/// # Safety
/// `file` must be NUL-terminated; `out` storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfar_operator_load(
    file: *const c_char,
    grid_size: usize,
    out: *mut *mut NfarOperator,
) -> NfarStatus {
    guard(|| {
        let file = unsafe { path_arg(file, "file") }?;
        let text = std::fs::read_to_string(&file).map_err(|e| Error::Io {
            path: file.clone(),
            source: e,
        })?;
        let ck = Checkpoint::from_json(&text)?;
        let size = if grid_size == 0 {
            ck.grid_size.ok_or_else(|| {
                Fail(NfarStatus::InvalidArgument, "checkpoint has no grid size".into())
            })?
        } else {
            grid_size
        };
        let inner = OperatorModel::from_checkpoint(&ck, GridSpec::new(size)?)?;
        unsafe { store(out, NfarOperator { inner }) }
    })
}

/// Saves the operator's network as checkpoint JSON.
///
/// # Safety
/// `op` must be a live handle; `file` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nfar_operator_save(op: *const NfarOperator, file: *const c_char) -> NfarStatus {
    guard(|| {
        let o = unsafe { handle(op, "operator") }?;
        let file = unsafe { path_arg(file, "file") }?;
        std::fs::write(&file, o.inner.checkpoint(None, 0, 0).to_json())
            .map_err(|e| Error::Io { path: file, source: e })?;
        Ok(())
    })
}

/// # Safety
/// `op` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfar_operator_grid_size(op: *const NfarOperator) -> usize {
    unsafe { op.as_ref() }.map_or(0, |o| o.inner.grid.size())
}

/// Applies the learned operator with full grid quadrature.
///
/// # Safety
/// `op` must be a live handle; `z` must hold `z_len` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn nfar_operator_apply(
    op: *const NfarOperator,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
    out_len: usize,
) -> NfarStatus {
    guard(|| {
        let o = unsafe { handle(op, "operator") }?;
        let f = unsafe { field_in(o.inner.grid, z, z_len) }?;
        let r = o.inner.apply_full(&f)?;
        unsafe { field_out(&r, out, out_len) }
    })
}

/// # Safety
/// `op` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfar_operator_free(op: *mut NfarOperator) {
    unsafe { free(op) }
}
