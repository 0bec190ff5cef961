//! Classical four-stage Runge–Kutta stepping with a diffusion CFL bound and
//! step halving on non-finite stages.

use serde::Serialize;

use super::Renormalization;
use crate::error::{Error, Result};
use crate::grid::TorusGrid;

/// RK4 stability limit on the negative real axis divided by the largest
/// spectral Laplacian symbol on an `h`-grid, `2.785 / (2π²)`, rounded down.
pub const RK4_DIFFUSION_LIMIT: f64 = 0.14;

/// Largest number of consecutive halvings before a step is abandoned.
pub const MAX_HALVINGS: u32 = 10;

/// A state the integrator can combine linearly with its rates.
pub trait Rk4State: Sized + Clone {
    type Rate;

    /// `self + dt Σ c_i k_i`.
    fn advanced(&self, terms: &[(&Self::Rate, f64)], dt: f64) -> Result<Self>;
    fn renormalize(&mut self) -> Renormalization;
    fn is_finite(&self) -> bool;
    fn rate_is_finite(rate: &Self::Rate) -> bool;
    /// Largest nodal magnitude of a rate, for stationarity detection.
    fn rate_size(rate: &Self::Rate) -> f64;
    fn time(&self) -> f64;
    fn min_metric_eigenvalue(&self) -> f64;
}

#[derive(Clone, Debug, Serialize)]
pub struct StepControl {
    /// Safety factor applied to the CFL bound, in `(0, 1]`.
    pub cfl: f64,
    /// Diffusion coefficient of the stiffest equation.
    pub diffusion: f64,
    /// Overrides the CFL step when set (it is still halved on failure).
    pub fixed_dt: Option<f64>,
    pub max_steps: usize,
    pub final_time: f64,
    /// Rates below this size count as stationary.
    pub stationary_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { cfl: 0.9, diffusion: 1.0, fixed_dt: None, max_steps: 100_000, final_time: 0.1, stationary_tol: 1e-12 }
    }
}

/// `cfl · 0.14 · h² · λ_min(g) / κ`.
pub fn cfl_dt(grid: &TorusGrid, min_eigenvalue: f64, ctrl: &StepControl) -> f64 {
    ctrl.cfl * RK4_DIFFUSION_LIMIT * grid.h() * grid.h() * min_eigenvalue / ctrl.diffusion
}

#[derive(Clone, Debug)]
pub struct StepOutcome<S: Rk4State> {
    pub state: S,
    /// Rate at the start of the accepted step.
    pub rate: S::Rate,
    pub dt: f64,
    pub halvings: u32,
    pub renormalization: Renormalization,
}

/// One accepted step, or an abort after [`MAX_HALVINGS`] failed attempts.
/// The step never overshoots `ctrl.final_time`.
pub fn step<S, F>(grid: &TorusGrid, state: &S, rhs: &mut F, ctrl: &StepControl) -> Result<StepOutcome<S>>
where
    S: Rk4State,
    F: FnMut(&S) -> Result<S::Rate>,
{
    if !state.is_finite() {
        return Err(Error::Abort { t: state.time(), reason: "non-finite state".into() });
    }
    let k1 = rhs(state)?;
    if !S::rate_is_finite(&k1) {
        return Err(Error::Abort { t: state.time(), reason: "non-finite rate".into() });
    }
    let mut dt = ctrl.fixed_dt.unwrap_or_else(|| cfl_dt(grid, state.min_metric_eigenvalue(), ctrl));
    let remaining = ctrl.final_time - state.time();
    if remaining > 0.0 && dt > remaining {
        dt = remaining;
    }
    let mut last_reason = String::new();
    for halvings in 0..=MAX_HALVINGS {
        match attempt(state, &k1, rhs, dt) {
            Ok(Some(mut next)) => {
                let renormalization = next.renormalize();
                if next.is_finite() {
                    return Ok(StepOutcome { state: next, rate: k1, dt, halvings, renormalization });
                }
                last_reason = "non-finite state after renormalization".into();
            }
            Ok(None) => last_reason = "non-finite stage".into(),
            // Stage evaluations may fail on degenerate metrics; treat like overflow.
            Err(e) => last_reason = e.to_string(),
        }
        dt *= 0.5;
    }
    Err(Error::Abort { t: state.time(), reason: format!("{last_reason} after {MAX_HALVINGS} halvings") })
}

fn attempt<S, F>(state: &S, k1: &S::Rate, rhs: &mut F, dt: f64) -> Result<Option<S>>
where
    S: Rk4State,
    F: FnMut(&S) -> Result<S::Rate>,
{
    let s2 = state.advanced(&[(k1, 0.5)], dt)?;
    if !s2.is_finite() {
        return Ok(None);
    }
    let k2 = rhs(&s2)?;
    if !S::rate_is_finite(&k2) {
        return Ok(None);
    }
    let s3 = state.advanced(&[(&k2, 0.5)], dt)?;
    if !s3.is_finite() {
        return Ok(None);
    }
    let k3 = rhs(&s3)?;
    if !S::rate_is_finite(&k3) {
        return Ok(None);
    }
    let s4 = state.advanced(&[(&k3, 1.0)], dt)?;
    if !s4.is_finite() {
        return Ok(None);
    }
    let k4 = rhs(&s4)?;
    if !S::rate_is_finite(&k4) {
        return Ok(None);
    }
    let next = state.advanced(&[(k1, 1.0 / 6.0), (&k2, 1.0 / 3.0), (&k3, 1.0 / 3.0), (&k4, 1.0 / 6.0)], dt)?;
    Ok(next.is_finite().then_some(next))
}
