//! C ABI over the frachem simulator.
//!
//! A simulation is an opaque [`FrachemSim`] handle created from TOML text or a
//! TOML file and released with [`frachem_sim_free`]. Every fallible call
//! returns a [`FrachemStatus`]; on failure the message is kept per thread and
//! can be copied out with [`frachem_last_error_message`]. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use frachem::config::RunConfig;
use frachem::diagnostics::energy;
use frachem::error::{exit_code, Error};
use frachem::solver::{Discretization, SimState};

/// Call outcome. The values 2, 3 and 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrachemStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    Invariant = 4,
    BufferTooSmall = 5,
    Panic = 6,
    InvalidUtf8 = 7,
}

/// Opaque simulation handle.
pub struct FrachemSim {
    disc: Discretization,
    state: SimState,
    mass0: f64,
    t0: f64,
    steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> FrachemStatus {
    set_error(err.to_string());
    match exit_code(err) {
        3 => FrachemStatus::Numerical,
        4 => FrachemStatus::Invariant,
        _ => FrachemStatus::Config,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), FrachemStatus>) -> FrachemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FrachemStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FrachemStatus::Panic
        }
    }
}

fn null(what: &str) -> FrachemStatus {
    set_error(format!("{what} is null"));
    FrachemStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FrachemStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        set_error(format!("{what} is not UTF-8: {e}"));
        FrachemStatus::InvalidUtf8
    })
}

unsafe fn sim_ref<'a>(sim: *const FrachemSim) -> Result<&'a FrachemSim, FrachemStatus> {
    sim.as_ref().ok_or_else(|| null("simulation handle"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), FrachemStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn build(cfg: RunConfig) -> Result<Box<FrachemSim>, FrachemStatus> {
    cfg.validate().map_err(|e| status_of(&e))?;
    let disc = cfg.discretization().map_err(|e| status_of(&e))?;
    let state = cfg.initial_state(&disc).map_err(|e| status_of(&e))?;
    let mass0 = disc.mean(&state.coords);
    let t0 = state.t;
    Ok(Box::new(FrachemSim {
        disc,
        state,
        mass0,
        t0,
        steps: 0,
    }))
}

/// Creates a simulation from TOML configuration text. An empty string gives
/// the default configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_new_from_config(
    toml: *const c_char,
    out: *mut *mut FrachemSim,
) -> FrachemStatus {
    guard(|| {
        let text = str_arg(toml, "config text")?;
        let cfg = RunConfig::from_toml(text).map_err(|e| status_of(&e))?;
        let sim = build(cfg)?;
        write_out(out, Box::into_raw(sim))
    })
}

/// Creates a simulation from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_new_from_file(
    path: *const c_char,
    out: *mut *mut FrachemSim,
) -> FrachemStatus {
    guard(|| {
        let p = str_arg(path, "config path")?;
        let cfg = RunConfig::from_file(Path::new(p)).map_err(|e| status_of(&e))?;
        let sim = build(cfg)?;
        write_out(out, Box::into_raw(sim))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from a `frachem_sim_new_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_free(sim: *mut FrachemSim) {
    if !sim.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(sim))));
    }
}

/// Advances by `n_steps` time steps of the configured size.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_step(sim: *mut FrachemSim, n_steps: usize) -> FrachemStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("simulation handle"))?;
        let stepper = sim.disc.stepper().map_err(|e| status_of(&e))?;
        for _ in 0..n_steps {
            stepper.step(&mut sim.state).map_err(|e| status_of(&e))?;
            sim.steps += 1;
            sim.state.t = sim.t0 + sim.steps as f64 * sim.disc.cfg.dt;
            let mass = sim.disc.mean(&sim.state.coords);
            if (mass - sim.mass0).abs() > frachem::solver::MASS_TOLERANCE * (1.0 + sim.mass0.abs())
            {
                return Err(status_of(&Error::InvariantBreach(format!(
                    "mean drifted from {} to {mass}",
                    sim.mass0
                ))));
            }
        }
        Ok(())
    })
}

/// Current time.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_time(sim: *const FrachemSim, out: *mut f64) -> FrachemStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.t))
}

/// Discrete energy of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_energy(
    sim: *const FrachemSim,
    out: *mut f64,
) -> FrachemStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        write_out(out, energy(&s.disc, &s.state).energy)
    })
}

/// Spatial mean `⟨u⟩` of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_mass(sim: *const FrachemSim, out: *mut f64) -> FrachemStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        write_out(out, s.disc.mean(&s.state.coords))
    })
}

/// Number of mesh nodes, boundary included; the length `get_u` and `get_mu` fill.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_node_count(
    sim: *const FrachemSim,
    out: *mut usize,
) -> FrachemStatus {
    guard(|| write_out(out, sim_ref(sim)?.disc.mesh.node_count()))
}

unsafe fn copy_nodes(values: &[f64], buf: *mut f64, len: usize) -> Result<(), FrachemStatus> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < values.len() {
        set_error(format!("buffer holds {len} values, need {}", values.len()));
        return Err(FrachemStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Copies nodal `u` on all nodes (zero at both ends) into `buf`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_get_u(
    sim: *const FrachemSim,
    buf: *mut f64,
    len: usize,
) -> FrachemStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        let u = s.disc.mesh.extend_by_zero(&s.state.u);
        copy_nodes(u.as_slice(), buf, len)
    })
}

/// Copies nodal `μ` on all nodes into `buf`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn frachem_sim_get_mu(
    sim: *const FrachemSim,
    buf: *mut f64,
    len: usize,
) -> FrachemStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        copy_nodes(s.state.mu.as_slice(), buf, len)
    })
}

/// The normalizing constant `C_{1,β}` of the fractional Laplacian.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn frachem_c_constant(beta: f64, out: *mut f64) -> FrachemStatus {
    guard(|| {
        let c = frachem::fractional::c_constant(1, beta).map_err(|e| status_of(&e))?;
        write_out(out, c)
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length plus one, so a
/// caller can size the buffer. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn frachem_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            buf.add(n).write(0);
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn frachem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
