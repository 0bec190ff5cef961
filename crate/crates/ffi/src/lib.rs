//! C ABI over `splitflow`.
//!
//! Objects cross the boundary as opaque handles released with the matching
//! `sf_*_free`. Every fallible call returns an [`SfStatus`]; on failure the
//! message is available from [`sf_last_error`] on the same thread until the
//! next failing call.
//!
//! Handles are not thread-safe; use one per thread or synchronize.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use splitflow::acceptance::{self, Mutation};
use splitflow::config::{parse_config, RunConfig, RunKind};
use splitflow::flows::{uniformize, FlowKind, FlowState};
use splitflow::grid::TorusGrid;
use splitflow::runner::{self, Trajectory};
use splitflow::{snapshot, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string was not valid UTF-8, or an index was out of range.
    InvalidArgument = 2,
    /// The configuration was rejected.
    Config = 3,
    /// The integrator or a solver gave up.
    Abort = 4,
    /// File system or snapshot format error.
    Io = 5,
    /// A panic was caught at the boundary.
    Internal = 6,
}

/// Parsed run configuration.
pub struct SfConfig {
    cfg: RunConfig,
    text: String,
}

/// Result of a run.
pub struct SfTrajectory {
    grid: TorusGrid,
    traj: Trajectory,
}

/// A flow state, from a snapshot or the end of a run.
pub struct SfState {
    grid: TorusGrid,
    state: FlowState,
}

/// Subset of a monitor report with fixed layout. Absent quantities are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SfReport {
    pub t: f64,
    pub vol: f64,
    pub curvature_l2_sq: f64,
    pub curvature_lp: f64,
    pub map_energy_lp: f64,
    pub spinor_hess_lq: f64,
    pub spinor_hess_sup: f64,
    pub datum_energy: f64,
    pub inj_lower_bound: f64,
    pub diameter_est: f64,
    pub velocity_l2: f64,
    pub horizontal_l2: f64,
    pub horizontal_c0: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SfUniformization {
    pub steps: usize,
    pub converged: bool,
    pub final_time: f64,
    pub curvature_sup: f64,
    /// Unit-volume flat representative `(g11, g12, g22)`.
    pub flat_metric: [f64; 3],
    pub w_min: f64,
    pub w_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::Config(_) => SfStatus::Config,
        Error::Abort { .. } | Error::NonFinite(_) | Error::Gauge(_) | Error::NonUnit { .. } => SfStatus::Abort,
        Error::Io(_) | Error::Snapshot { .. } => SfStatus::Io,
        _ => SfStatus::InvalidArgument,
    }
}

struct Fail(SfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            SfStatus::Internal
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(SfStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(SfStatus::NullPointer, format!("{name} is null")))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SfStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SfStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Copies `s` into `buf` as a nul-terminated string, truncating to fit.
/// Returns the full length without the terminator.
unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize) -> usize {
    if !buf.is_null() && cap > 0 {
        let k = s.len().min(cap - 1);
        ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, k);
        *buf.add(k) = 0;
    }
    s.len()
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses TOML configuration text.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_config_parse(text: *const c_char, out_cfg: *mut *mut SfConfig) -> SfStatus {
    guard(|| {
        let slot = out(out_cfg, "out")?;
        *slot = ptr::null_mut();
        let text = string(text, "text")?;
        let cfg = parse_config(text)?;
        *slot = Box::into_raw(Box::new(SfConfig { cfg, text: text.to_owned() }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`sf_config_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_config_free(cfg: *mut SfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Grid size of a configuration.
///
/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_config_n(cfg: *const SfConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.cfg.n)
}

/// Runs a flow configuration. `output_dir` may be null to keep everything
/// in memory. Paired configurations are rejected; an aborted run still
/// yields a trajectory, see [`sf_trajectory_aborted`].
///
/// # Safety
/// Pointers must be valid; `output_dir` may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_run(
    cfg: *const SfConfig,
    output_dir: *const c_char,
    out_traj: *mut *mut SfTrajectory,
) -> SfStatus {
    guard(|| {
        let slot = out(out_traj, "out")?;
        *slot = ptr::null_mut();
        let c = arg(cfg, "cfg")?;
        let dir = if output_dir.is_null() { None } else { Some(Path::new(string(output_dir, "output_dir")?)) };
        if matches!(c.cfg.kind, RunKind::Paired(_)) {
            return Err(Fail(SfStatus::InvalidArgument, "paired configurations are not supported by sf_run".into()));
        }
        let (grid, state) = runner::initial_state(&c.cfg)?;
        let traj = runner::run_flow(&grid, &c.cfg, state, &c.text, dir)?;
        *slot = Box::into_raw(Box::new(SfTrajectory { grid, traj }));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`sf_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_free(traj: *mut SfTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_steps(traj: *const SfTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.traj.steps)
}

/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_final_time(traj: *const SfTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.traj.final_time)
}

/// Whether the run ended in a numerical abort or blow-up.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_aborted(traj: *const SfTrajectory) -> bool {
    traj.as_ref().is_some_and(|t| t.traj.termination.is_abort())
}

/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_report_count(traj: *const SfTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.traj.reports.len())
}

/// Copies report `index` into `out`.
///
/// # Safety
/// `traj` must be a live handle and `out_report` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_report(
    traj: *const SfTrajectory,
    index: usize,
    out_report: *mut SfReport,
) -> SfStatus {
    guard(|| {
        let t = arg(traj, "traj")?;
        let slot = out(out_report, "out")?;
        let r = t.traj.reports.get(index).ok_or_else(|| {
            Fail(SfStatus::InvalidArgument, format!("report {index} out of range ({})", t.traj.reports.len()))
        })?;
        *slot = SfReport {
            t: r.t,
            vol: r.vol,
            curvature_l2_sq: r.curvature_l2_sq,
            curvature_lp: r.curvature_lp,
            map_energy_lp: opt(r.map_energy_lp),
            spinor_hess_lq: opt(r.spinor_hess_lq),
            spinor_hess_sup: opt(r.spinor_hess_sup),
            datum_energy: opt(r.datum_energy),
            inj_lower_bound: r.inj_lower_bound,
            diameter_est: r.diameter_est,
            velocity_l2: opt(r.velocity_l2),
            horizontal_l2: opt(r.horizontal_l2),
            horizontal_c0: opt(r.horizontal_c0),
        };
        Ok(())
    })
}

/// Writes the one-line verdict into `buf` (truncated to `cap`) and returns
/// its full byte length.
///
/// # Safety
/// `traj` must be a live handle; `buf` must hold `cap` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_verdict(traj: *const SfTrajectory, buf: *mut c_char, cap: usize) -> usize {
    traj.as_ref().map_or(0, |t| copy_out(&t.traj.verdict_line, buf, cap))
}

/// Copies the final state of a run into a new state handle.
///
/// # Safety
/// `traj` must be a live handle and `out_state` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_final_state(traj: *const SfTrajectory, out_state: *mut *mut SfState) -> SfStatus {
    guard(|| {
        let slot = out(out_state, "out")?;
        *slot = ptr::null_mut();
        let t = arg(traj, "traj")?;
        let state = t.traj.final_state.clone().ok_or_else(|| Fail(SfStatus::InvalidArgument, "no final state".into()))?;
        *slot = Box::into_raw(Box::new(SfState { grid: TorusGrid::new(t.grid.n())?, state }));
        Ok(())
    })
}

/// Reads a snapshot file.
///
/// # Safety
/// `path` must be nul-terminated and `out_state` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_snapshot_read(path: *const c_char, out_state: *mut *mut SfState) -> SfStatus {
    guard(|| {
        let slot = out(out_state, "out")?;
        *slot = ptr::null_mut();
        let (grid, state) = snapshot::read(Path::new(string(path, "path")?))?;
        *slot = Box::into_raw(Box::new(SfState { grid, state }));
        Ok(())
    })
}

/// Writes a state as a snapshot file.
///
/// # Safety
/// `state` must be a live handle and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn sf_snapshot_write(state: *const SfState, path: *const c_char) -> SfStatus {
    guard(|| {
        let s = arg(state, "state")?;
        snapshot::write(Path::new(string(path, "path")?), &s.grid, &s.state)?;
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_state_free(state: *mut SfState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// `state` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_state_n(state: *const SfState) -> usize {
    state.as_ref().map_or(0, |s| s.grid.n())
}

/// # Safety
/// `state` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_state_time(state: *const SfState) -> f64 {
    state.as_ref().map_or(f64::NAN, |s| s.state.t())
}

/// `(Vol, ∫R², E)` of a state; `E` is 0 without a datum.
///
/// # Safety
/// `state` must be a live handle and `out3` point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_state_invariants(state: *const SfState, out3: *mut f64) -> SfStatus {
    guard(|| {
        let s = arg(state, "state")?;
        if out3.is_null() {
            return Err(Fail(SfStatus::NullPointer, "out is null".into()));
        }
        let v = runner::invariants(&s.grid, &s.state)?;
        ptr::copy_nonoverlapping(v.as_ptr(), out3, 3);
        Ok(())
    })
}

/// Uniformizes the initial conformal metric of a `ricci` configuration.
/// Non-convergence within the step budget is reported through
/// `converged`, not as an error.
///
/// # Safety
/// `cfg` must be a live handle and `out_result` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_uniformize(cfg: *const SfConfig, out_result: *mut SfUniformization) -> SfStatus {
    guard(|| {
        let c = arg(cfg, "cfg")?;
        let slot = out(out_result, "out")?;
        if c.cfg.kind != RunKind::Flow(FlowKind::Ricci) {
            return Err(Fail(SfStatus::InvalidArgument, "uniformization needs flow = \"ricci\"".into()));
        }
        let (grid, cm, _) = runner::preset_data(&c.cfg)?;
        let u = uniformize(&grid, &cm, c.cfg.curvature_tol, &c.cfg.step)?;
        let g = u.flat.matrix();
        *slot = SfUniformization {
            steps: u.report.steps,
            converged: u.report.converged,
            final_time: u.report.final_time,
            curvature_sup: u.report.final_curvature_sup,
            flat_metric: [g.xx, g.xy, g.yy],
            w_min: u.w.iter().cloned().fold(f64::INFINITY, f64::min),
            w_max: u.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        Ok(())
    })
}

/// Runs the whole acceptance suite (minutes). `mutation` 0 runs it as is,
/// 1 injects the trace-sign defect. `passed` receives one flag per
/// criterion, in order, up to `cap` entries; returns the number of
/// criteria that passed.
///
/// # Safety
/// `passed` must hold `cap` bools or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_acceptance_run(mutation: u32, passed: *mut bool, cap: usize) -> usize {
    let m = (mutation == 1).then_some(Mutation::TraceSign);
    let rep = match catch_unwind(|| acceptance::run_all(m)) {
        Ok(r) => r,
        Err(_) => {
            set_error("internal error: acceptance suite panicked");
            return 0;
        }
    };
    if !passed.is_null() {
        for (i, r) in rep.results.iter().take(cap).enumerate() {
            *passed.add(i) = r.passed;
        }
    }
    rep.results.iter().filter(|r| r.passed).count()
}
