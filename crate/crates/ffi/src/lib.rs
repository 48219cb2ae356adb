//! C interface to `gmr-core`.
//!
//! Every entry point returns a [`GmrStatus`]; on failure the message is kept
//! per thread and can be read with [`gmr_last_error`]. Simulations are opaque
//! handles created by [`gmr_simulation_new`] and released with
//! [`gmr_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gmr_core::config::SimConfig;
use gmr_core::dynamics::{BudgetRecord, OceanState, StageEval};
use gmr_core::scenario::Scenario;
use gmr_core::GmrError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// Non-finite values, failed solves or states leaving the admissible range.
    Numerical = 4,
    Io = 5,
    Unsupported = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmrField {
    U = 0,
    V = 1,
    Theta = 2,
    Salt = 3,
}

/// One row of the budget table.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GmrBudgets {
    pub t: f64,
    pub ke: f64,
    pub theta_l2: f64,
    pub s_l2: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub s_mean: f64,
    pub iso_dissipation: f64,
    pub gm_variance: f64,
    pub robin_term: f64,
    pub energy_residual: f64,
}

impl From<&BudgetRecord> for GmrBudgets {
    fn from(r: &BudgetRecord) -> Self {
        Self {
            t: r.t,
            ke: r.ke,
            theta_l2: r.theta_l2,
            s_l2: r.s_l2,
            theta_min: r.theta_min,
            theta_max: r.theta_max,
            s_min: r.s_min,
            s_max: r.s_max,
            s_mean: r.s_mean,
            iso_dissipation: r.iso_dissipation,
            gm_variance: r.gm_variance,
            robin_term: r.robin_term,
            energy_residual: r.energy_residual,
        }
    }
}

/// Opaque simulation handle.
pub struct GmrSimulation {
    scenario: Scenario,
    state: OceanState,
    eval: StageEval,
    budgets: BudgetRecord,
    steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &GmrError) -> GmrStatus {
    match e {
        GmrError::Config(_) | GmrError::ConfigList(_) => GmrStatus::Config,
        GmrError::Argument(_) => GmrStatus::InvalidArgument,
        GmrError::EosDomain { .. } | GmrError::Admissibility { .. } | GmrError::Numerical(_) => GmrStatus::Numerical,
        GmrError::Unsupported(_) => GmrStatus::Unsupported,
        GmrError::Io(_) | GmrError::Json(_) => GmrStatus::Io,
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (GmrStatus, String)>) -> GmrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmrStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GmrStatus::Panic
        }
    }
}

fn lib_err(e: GmrError) -> (GmrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GmrStatus, String) {
    (GmrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GmrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GmrStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gmr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn gmr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a simulation from a JSON configuration (null for defaults) and
/// `n_overrides` `key=value` strings applied in order.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `overrides` must
/// point to `n_overrides` NUL-terminated strings (or be null when
/// `n_overrides` is 0); `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmr_simulation_new(
    config_json: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut GmrSimulation,
) -> GmrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let base = if config_json.is_null() {
            SimConfig::default()
        } else {
            SimConfig::from_json(read_str(config_json, "config_json")?).map_err(lib_err)?
        };
        let mut sets = Vec::with_capacity(n_overrides);
        if n_overrides > 0 {
            if overrides.is_null() {
                return Err(null("overrides"));
            }
            for i in 0..n_overrides {
                sets.push(read_str(*overrides.add(i), "override")?.to_string());
            }
        }
        let cfg = base.with_overrides(&sets).map_err(lib_err)?;
        let scenario = Scenario::build(&cfg).map_err(lib_err)?;
        let state = scenario.initial.clone();
        let eval = scenario.model.evaluate(&state).map_err(lib_err)?;
        let budgets = scenario.model.budgets_with(&state, &eval);
        *out = Box::into_raw(Box::new(GmrSimulation {
            scenario,
            state,
            eval,
            budgets,
            steps: 0,
        }));
        Ok(())
    })
}

/// Release a simulation. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`gmr_simulation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gmr_simulation_free(sim: *mut GmrSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advance `n` steps at the stable step size. On failure the handle keeps
/// the last valid state.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gmr_simulation_step(sim: *mut GmrSimulation, n: usize) -> GmrStatus {
    guard(|| {
        let s = sim.as_mut().ok_or_else(|| null("sim"))?;
        for _ in 0..n {
            let model = &s.scenario.model;
            let dt = model.stable_dt(&s.state, &s.eval);
            let (state, rec, eval) = model.step_from(&s.state, s.eval.clone(), dt).map_err(lib_err)?;
            s.state = state;
            s.eval = eval;
            s.budgets = rec;
            s.steps += 1;
        }
        Ok(())
    })
}

/// Budgets of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmr_simulation_budgets(sim: *const GmrSimulation, out: *mut GmrBudgets) -> GmrStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = GmrBudgets::from(&s.budgets);
        Ok(())
    })
}

/// Grid dimensions and the number of steps taken so far.
///
/// # Safety
/// `sim` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmr_simulation_info(
    sim: *const GmrSimulation,
    nx: *mut usize,
    ny: *mut usize,
    nz: *mut usize,
    steps: *mut usize,
) -> GmrStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        if nx.is_null() || ny.is_null() || nz.is_null() || steps.is_null() {
            return Err(null("output pointer"));
        }
        let d = s.scenario.model.grid().dims;
        *nx = d.nx;
        *ny = d.ny;
        *nz = d.nz;
        *steps = s.steps;
        Ok(())
    })
}

/// Copy one prognostic field (x fastest, bottom layer first) into `buf`,
/// which must hold `nx * ny * nz` values.
///
/// # Safety
/// `sim` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gmr_simulation_copy_field(
    sim: *const GmrSimulation,
    field: GmrField,
    buf: *mut f64,
    len: usize,
) -> GmrStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let f = match field {
            GmrField::U => &s.state.v.x,
            GmrField::V => &s.state.v.y,
            GmrField::Theta => &s.state.theta,
            GmrField::Salt => &s.state.salt,
        };
        let data = f.as_slice();
        if len < data.len() {
            return Err((
                GmrStatus::BufferTooSmall,
                format!("buffer holds {len} values, field needs {}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// Run a named invariant suite (`all` for every suite); `failed` receives
/// the number of failing checks.
///
/// # Safety
/// `suite` must be a NUL-terminated string and `failed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmr_verify(suite: *const c_char, failed: *mut usize) -> GmrStatus {
    guard(|| {
        let name = read_str(suite, "suite")?;
        let failed = failed.as_mut().ok_or_else(|| null("failed"))?;
        let checks = gmr_core::verify::run_suite(name).map_err(lib_err)?;
        *failed = checks.iter().filter(|c| !c.passed).count();
        Ok(())
    })
}
