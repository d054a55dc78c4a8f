//! C ABI over `qchaos`.
//!
//! Objects cross the boundary as opaque heap handles created by a
//! `qchaos_*_new`-style function and released by the matching `*_free`.
//! Every fallible call returns a [`QchaosStatus`]; on failure the message
//! is available from [`qchaos_last_error_message`] on the same thread.
//! Panics are caught and reported as [`QchaosStatus::Panic`].
//!
//! Strings returned through `char **` are owned by the caller and must be
//! released with [`qchaos_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use qchaos::expcli::{run_experiment, ExperimentConfig, RunOptions};
use qchaos::lyapunov::classical_tangent_oracle;
use qchaos::model::{duffing_spec, ModelSpec, PotentialSpec, SpatialGrid};
use qchaos::noise::NoisePath;
use qchaos::qct::{compute_t_star, strong_qct_report, Action, StrongQctParams, Thresholds};
use qchaos::quantum::{MomentEvaluator, SpatialState, SplitStep};
use qchaos::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QchaosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    InvalidModel = 4,
    GridOverflow = 5,
    NonfiniteState = 6,
    StretchOverflow = 7,
    SingularPoint = 8,
    NumericalFailure = 9,
    InvariantViolation = 10,
    ConfigError = 11,
    IoError = 12,
    Panic = 13,
}

impl From<&Error> for QchaosStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidGrid(_) => QchaosStatus::InvalidGrid,
            Error::InvalidModel(_) => QchaosStatus::InvalidModel,
            Error::InvalidParameter(_) => QchaosStatus::InvalidArgument,
            Error::GridOverflow { .. } => QchaosStatus::GridOverflow,
            Error::NonfiniteState { .. } | Error::NonfiniteField { .. } => QchaosStatus::NonfiniteState,
            Error::StretchOverflow { .. } => QchaosStatus::StretchOverflow,
            Error::SingularPoint { .. } => QchaosStatus::SingularPoint,
            Error::TraceDrift { .. } | Error::ClosureBreakdown { .. } => {
                QchaosStatus::NumericalFailure
            }
            Error::Invariant(_) => QchaosStatus::InvariantViolation,
            Error::Config(_) => QchaosStatus::ConfigError,
            Error::Io(_) | Error::Json(_) => QchaosStatus::IoError,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(QchaosStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(QchaosStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(QchaosStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(QchaosStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QchaosStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QchaosStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            QchaosStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

// ---------------------------------------------------------------------------
// library

/// Version string, static storage.
#[no_mangle]
pub extern "C" fn qchaos_version() -> *const c_char {
    concat!("qchaos ", env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, or 0 if
/// there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qchaos_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qchaos_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// model

/// Opaque model: potential, mass, ħ, measurement strength and diffusion.
pub struct QchaosModel(ModelSpec);

/// The driven Duffing oscillator with `ħ = 1`, `k = 0`, `D = 0`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_duffing(out: *mut *mut QchaosModel) -> QchaosStatus {
    guard(|| {
        *self::out(out, "out")? = Box::into_raw(Box::new(QchaosModel(duffing_spec())));
        Ok(())
    })
}

/// Model with `V(x, t) = Σ coeffs[j] x^j + drive_amp · x · cos(drive_omega t)`.
///
/// # Safety
/// `coeffs` must point to `n_coeffs` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_new(
    coeffs: *const f64,
    n_coeffs: usize,
    drive_amp: f64,
    drive_omega: f64,
    mass: f64,
    hbar: f64,
    k: f64,
    diffusion: f64,
    out: *mut *mut QchaosModel,
) -> QchaosStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        if coeffs.is_null() && n_coeffs > 0 {
            return Err(null("coeffs"));
        }
        let c = if n_coeffs == 0 { Vec::new() } else { std::slice::from_raw_parts(coeffs, n_coeffs).to_vec() };
        let m = ModelSpec::new(PotentialSpec::new(c, drive_amp, drive_omega)?, mass, hbar, k, diffusion)?;
        *out = Box::into_raw(Box::new(QchaosModel(m)));
        Ok(())
    })
}

/// Copy of `model` with new `ħ`, `k` and `D`.
///
/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_with_parameters(
    model: *const QchaosModel,
    hbar: f64,
    k: f64,
    diffusion: f64,
    out: *mut *mut QchaosModel,
) -> QchaosStatus {
    guard(|| {
        let m = handle(model, "model")?.0.clone().with_hbar(hbar).with_k(k).with_diffusion(diffusion);
        m.validate()?;
        *self::out(out, "out")? = Box::into_raw(Box::new(QchaosModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_free(model: *mut QchaosModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_period(model: *const QchaosModel, period: *mut f64) -> QchaosStatus {
    guard(|| {
        *out(period, "period")? = handle(model, "model")?.0.period();
        Ok(())
    })
}

/// `V(x, t)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_potential(model: *const QchaosModel, x: f64, t: f64, v: *mut f64) -> QchaosStatus {
    guard(|| {
        *out(v, "v")? = handle(model, "model")?.0.potential.value(x, t);
        Ok(())
    })
}

/// Force `F = −∂ₓV` and its first two x-derivatives at `(x, t)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QchaosForce {
    pub force: f64,
    pub gradient: f64,
    pub curvature: f64,
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_model_force(model: *const QchaosModel, x: f64, t: f64, f: *mut QchaosForce) -> QchaosStatus {
    guard(|| {
        let d = handle(model, "model")?.0.potential.force_and_derivatives(x, t);
        *out(f, "f")? = QchaosForce { force: d.force, gradient: d.gradient, curvature: d.curvature };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// noise

/// Opaque reproducible Wiener-increment stream.
pub struct QchaosNoise(NoisePath);

/// Stream `index` under `base_seed`, increments of variance `dt`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_noise_new(base_seed: u64, index: u64, dt: f64, out: *mut *mut QchaosNoise) -> QchaosStatus {
    guard(|| {
        let n = NoisePath::for_realization(base_seed, index, dt)?;
        *self::out(out, "out")? = Box::into_raw(Box::new(QchaosNoise(n)));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_noise_next(noise: *mut QchaosNoise, dw: *mut f64) -> QchaosStatus {
    guard(|| {
        *out(dw, "dw")? = handle_mut(noise, "noise")?.0.next_dw();
        Ok(())
    })
}

/// # Safety
/// `noise` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qchaos_noise_free(noise: *mut QchaosNoise) {
    if !noise.is_null() {
        drop(Box::from_raw(noise));
    }
}

// ---------------------------------------------------------------------------
// wavefunctions and propagation

/// Opaque wavefunction on a uniform grid.
pub struct QchaosState {
    state: SpatialState,
    hbar: f64,
}

/// Centroid and second moments of a state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QchaosMoments {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    pub vx: f64,
    pub vp: f64,
    pub cxp: f64,
}

/// Minimum-uncertainty Gaussian at `(x0, p0)` with position width `width`
/// on `n` points spanning `[x_min, x_max)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_state_coherent(
    x_min: f64,
    x_max: f64,
    n: usize,
    hbar: f64,
    x0: f64,
    p0: f64,
    width: f64,
    out: *mut *mut QchaosState,
) -> QchaosStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        if !(hbar > 0.0 && width > 0.0) {
            return Err(invalid("hbar and width must be > 0"));
        }
        let grid = SpatialGrid::new(x_min, x_max, n)?;
        let state = SpatialState::coherent(grid, hbar, x0, p0, width);
        *out = Box::into_raw(Box::new(QchaosState { state, hbar }));
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qchaos_state_free(state: *mut QchaosState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_state_moments(state: *const QchaosState, m: *mut QchaosMoments) -> QchaosStatus {
    guard(|| {
        let s = handle(state, "state")?;
        let r = MomentEvaluator::new(*s.state.grid(), s.hbar).moments(&s.state);
        *out(m, "m")? = QchaosMoments { t: r.t, x: r.x, p: r.p, vx: r.vx, vp: r.vp, cxp: r.cxp };
        Ok(())
    })
}

/// `∫|ψ|² dx`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_state_norm(state: *const QchaosState, norm: *mut f64) -> QchaosStatus {
    guard(|| {
        let s = handle(state, "state")?;
        *out(norm, "norm")? = s.state.norm_sq();
        Ok(())
    })
}

/// Copy `|ψ(x_i)|²` into `density`, which must hold `len` values; `len`
/// must equal the grid size.
///
/// # Safety
/// `density` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn qchaos_state_density(state: *const QchaosState, density: *mut f64, len: usize) -> QchaosStatus {
    guard(|| {
        let s = handle(state, "state")?;
        if density.is_null() {
            return Err(null("density"));
        }
        let d = s.state.density();
        if len != d.len() {
            return Err(invalid(format!("buffer holds {len} values, grid has {}", d.len())));
        }
        ptr::copy_nonoverlapping(d.as_ptr(), density, len);
        Ok(())
    })
}

/// Opaque split-step propagator for one model, grid and time step.
pub struct QchaosPropagator(SplitStep);

/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_propagator_new(
    model: *const QchaosModel,
    x_min: f64,
    x_max: f64,
    n: usize,
    dt: f64,
    out: *mut *mut QchaosPropagator,
) -> QchaosStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = SplitStep::new(SpatialGrid::new(x_min, x_max, n)?, m, dt)?;
        *self::out(out, "out")? = Box::into_raw(Box::new(QchaosPropagator(p)));
        Ok(())
    })
}

/// # Safety
/// `prop` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qchaos_propagator_free(prop: *mut QchaosPropagator) {
    if !prop.is_null() {
        drop(Box::from_raw(prop));
    }
}

/// `steps` conditioned steps drawing increments from `noise`; the summed
/// record increment is written to `dy_sum` when it is non-null. The state
/// is left unchanged on failure.
///
/// # Safety
/// Handles must be valid; `dy_sum` may be null.
#[no_mangle]
pub unsafe extern "C" fn qchaos_propagator_sse(
    prop: *mut QchaosPropagator,
    state: *mut QchaosState,
    noise: *mut QchaosNoise,
    steps: usize,
    dy_sum: *mut f64,
) -> QchaosStatus {
    guard(|| {
        let p = handle_mut(prop, "prop")?;
        let s = handle_mut(state, "state")?;
        let n = handle_mut(noise, "noise")?;
        let mut acc = 0.0;
        p.0.sse_evolve_noise(&mut s.state, &mut n.0, steps, |i| acc += i.dy)?;
        if let Some(d) = dy_sum.as_mut() {
            *d = acc;
        }
        Ok(())
    })
}

/// `steps` unitary steps.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_propagator_isolated(prop: *mut QchaosPropagator, state: *mut QchaosState, steps: usize) -> QchaosStatus {
    guard(|| {
        let p = handle_mut(prop, "prop")?;
        let s = handle_mut(state, "state")?;
        p.0.isolated_evolve(&mut s.state, steps)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// criteria and exponents

/// Smoothing time and fold spacing.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QchaosTStar {
    pub t_star: f64,
    pub fold_spacing: f64,
    pub no_root: bool,
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_t_star(lambda: f64, diffusion: f64, mass: f64, area: f64, u0: f64, out: *mut QchaosTStar) -> QchaosStatus {
    guard(|| {
        let r = compute_t_star(lambda, diffusion, mass, area, u0)?;
        *self::out(out, "out")? = QchaosTStar { t_star: r.t_star, fold_spacing: r.fold_spacing, no_root: r.no_root };
        Ok(())
    })
}

/// Maximal exponent (per unit model time) of the noiseless flow from the
/// variational equations.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qchaos_tangent_oracle(
    model: *const QchaosModel,
    x0: f64,
    p0: f64,
    dt: f64,
    steps: usize,
    renorm_steps: usize,
    lambda: *mut f64,
) -> QchaosStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        *out(lambda, "lambda")? = classical_tangent_oracle(m, x0, p0, dt, steps, renorm_steps)?.lambda;
        Ok(())
    })
}

/// Strong-QCT report at `(x, p, t)` with physical action `action`, record
/// window `window` (model time) and tolerance `tolerance`, using default
/// thresholds. Writes the overall verdict and, if `json` is non-null, the
/// report as a JSON string.
///
/// # Safety
/// `model` and `all_satisfied` must be valid; `json` may be null.
#[no_mangle]
pub unsafe extern "C" fn qchaos_strong_qct_report(
    model: *const QchaosModel,
    x: f64,
    p: f64,
    t: f64,
    action: f64,
    window: f64,
    tolerance: f64,
    all_satisfied: *mut bool,
    json: *mut *mut c_char,
) -> QchaosStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let ok = out(all_satisfied, "all_satisfied")?;
        let params = StrongQctParams { action: Action::Physical(action), window, tolerance };
        let r = strong_qct_report(m, x, p, t, &params, &Thresholds::default())?;
        *ok = r.all_satisfied();
        if let Some(j) = json.as_mut() {
            *j = into_c_string(r.to_json()?);
        }
        Ok(())
    })
}

/// Run the experiment described by the TOML file at `config_path`. `out_dir`
/// (nullable) overrides the configured output directory. The summary is
/// returned as JSON through `summary` when it is non-null.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` and `summary`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn qchaos_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    summary: *mut *mut c_char,
) -> QchaosStatus {
    guard(|| {
        let path = c_str(config_path, "config_path")?;
        let cfg = ExperimentConfig::load(&PathBuf::from(path))?;
        let out = if out_dir.is_null() { None } else { Some(PathBuf::from(c_str(out_dir, "out_dir")?)) };
        let s = run_experiment(cfg, &RunOptions { out, ..Default::default() })?;
        if let Some(j) = summary.as_mut() {
            *j = into_c_string(serde_json::to_string(&s).map_err(Error::from)?);
        }
        Ok(())
    })
}
