//! Normalized Ricci flow in conformal gauge and constructive uniformization.

use serde::Serialize;

use super::integrator::{step, StepControl};
use super::{Datum, DatumRate, Kinematics, SplitRate, SplitState};
use crate::error::{Error, Result};
use crate::gauge::{GaugeSolution, HorizontalTensor};
use crate::grid::{ScalarField, TorusGrid};
use crate::metric::{integrate, scalar_curvature, ConformalMetric, FlatMetric};
use crate::monitors;

/// `∂_t u = (r − R_g)/2` and the average curvature `r`.
///
/// On the torus `r` vanishes by Gauss–Bonnet, so the returned field is
/// `−R_g/2`; `r` is recomputed and returned so callers can audit it.
pub fn ricci_normalized_rhs(grid: &TorusGrid, u: &ScalarField, g: &FlatMetric) -> (ScalarField, f64) {
    let cm = ConformalMetric::new(*g, u.clone());
    let r = scalar_curvature(grid, &cm);
    let vol = integrate(grid, &grid.constant(1.0), &cm);
    let r_mean = integrate(grid, &r, &cm) / vol;
    (r.scaled(-0.5), r_mean)
}

/// Split-state rate of the normalized Ricci flow: `ḡ` and the gauge stay put.
pub(crate) fn ricci_split_rate(grid: &TorusGrid, state: &SplitState) -> SplitRate {
    let (du, r_mean) = ricci_normalized_rhs(grid, &state.u, &state.gbar);
    // ∂_t g = 2 u̇ g, so |∂_t g|_g = 2√2 |u̇|.
    let cm = state.conformal();
    let sq: Vec<f64> = du.iter().map(|v| 8.0 * v * v).collect();
    let velocity_l2 = integrate(grid, &sq, &cm).sqrt();
    SplitRate {
        gbar: HorizontalTensor::zero(&state.gbar),
        u: du,
        datum: DatumRate::None,
        gauge: GaugeSolution::zero(grid),
        kinematics: Kinematics {
            velocity_l2,
            horizontal_l2: Some(0.0),
            horizontal_c0: Some(0.0),
            gauge: None,
            r_mean,
            ..Default::default()
        },
    }
}

/// Inputs and outcome of one uniformization run.
#[derive(Clone, Debug, Serialize)]
pub struct UniformizeReport {
    pub steps: usize,
    pub converged: bool,
    pub final_time: f64,
    pub final_curvature_sup: f64,
    pub initial_inj: f64,
    pub initial_volume: f64,
    pub initial_curvature_l2_sq: f64,
    /// `‖w‖_{C⁰}` of the conformal factor relating the input to its unit-volume flat representative.
    pub u_c0: f64,
    /// Oscillation of the limiting factor, `max u∞ − min u∞`.
    pub limit_oscillation: f64,
}

/// Result of [`uniformize`].
#[derive(Clone, Debug)]
pub struct Uniformization {
    /// Limiting conformal factor of the flow, constant up to the tolerance.
    pub u_limit: ScalarField,
    /// Unit-volume flat representative `ĝ` of the conformal class.
    pub flat: FlatMetric,
    /// `w` with `g₀ = e^{2w} ĝ`.
    pub w: ScalarField,
    pub report: UniformizeReport,
}

/// Runs the normalized Ricci flow from `cm` until `‖R_g‖_∞ < tol`.
///
/// Step exhaustion is not an error: the partial result is returned with
/// `report.converged = false`.
pub fn uniformize(grid: &TorusGrid, cm: &ConformalMetric, tol: f64, ctrl: &StepControl) -> Result<Uniformization> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let r0 = scalar_curvature(grid, cm);
    let r0_sq: Vec<f64> = r0.iter().map(|r| r * r).collect();
    let initial_volume = integrate(grid, &grid.constant(1.0), cm);
    let initial_curvature_l2_sq = integrate(grid, &r0_sq, cm);
    let initial_inj = monitors::injectivity_lower_bound(grid, cm);

    let mut ctrl = ctrl.clone();
    ctrl.final_time = f64::INFINITY;
    let mut state = SplitState::new(grid, cm.clone(), Datum::None);
    let mut steps = 0;
    let mut sup = r0.max_abs();
    while sup >= tol && steps < ctrl.max_steps {
        let out = step(grid, &state, &mut |s: &SplitState| Ok(ricci_split_rate(grid, s)), &ctrl)?;
        state = out.state;
        steps += 1;
        sup = scalar_curvature(grid, &state.conformal()).max_abs();
    }

    let u_limit = state.u;
    let c_vol = 0.5 * initial_volume.ln();
    let mean = grid.mean(&u_limit);
    let w = ScalarField((0..grid.len()).map(|k| cm.u[k] - u_limit[k] + c_vol).collect());
    // ĝ = e^{2(mean u∞ − c_vol)} G, renormalized to unit determinant.
    let (flat, _) = FlatMetric::normalized(cm.base.matrix().scaled((2.0 * (mean - c_vol)).exp()))?;
    let hi = u_limit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = u_limit.iter().cloned().fold(f64::INFINITY, f64::min);
    let report = UniformizeReport {
        steps,
        converged: sup < tol,
        final_time: state.t,
        final_curvature_sup: sup,
        initial_inj,
        initial_volume,
        initial_curvature_l2_sq,
        u_c0: w.max_abs(),
        limit_oscillation: hi - lo,
    };
    Ok(Uniformization { u_limit, flat, w, report })
}
