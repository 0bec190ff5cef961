//! Spinor flow, the negative gradient flow of `E(g, φ) = ½ ∫ |∇φ|²`.

use serde::Serialize;

use super::{Datum, DatumRate, Kinematics, Signs, SplitRate, SplitState};
use crate::error::{Error, Result};
use crate::gauge::{
    assemble_rho, gauge_data, horizontal_projection, solve_gauge, solve_gauge_field_x, solve_rho_tilde, RhoAssembly,
};
use crate::grid::{OneFormField, ScalarField, SymTensorField, TorusGrid};
use crate::metric::{FlatMetric, Geometry};
use crate::spinor::{
    frame_rotation_field, frame_rotation_rate, gradients_unchecked, omega, spin_lie_derivative, spinor_gradients,
    LieFlat, SpinorField,
};

/// Which ρ drives the conformal factor and the X equation of the split
/// spinor flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum SpinorRho {
    /// ρ from its own Poisson problem, as for every other flow.
    #[default]
    Direct,
    /// ρ assembled from the auxiliary potential ρ̃.
    Assembled(RhoAssembly),
}

/// `(Q₁, Q₂)` at a unit spinor.
pub fn spinor_rhs(geo: &Geometry, phi: &SpinorField) -> Result<(SymTensorField, SpinorField)> {
    let gr = spinor_gradients(geo, phi)?;
    Ok((gr.q1, gr.q2))
}

/// `φ̇ = Q₂ − ½ θ̇ ω φ`: the frame correction keeps the evolving components
/// those of a spinor moved by parallel transport along the metric path.
fn add_rotation(q2: &SpinorField, theta: &[f64], phi: &SpinorField) -> SpinorField {
    SpinorField {
        data: (0..phi.len())
            .map(|k| {
                let w = omega(&phi.data[k]);
                let t = -0.5 * theta[k];
                [q2.data[k][0] + w[0] * t, q2.data[k][1] + w[1] * t]
            })
            .collect(),
        structure: phi.structure,
    }
}

pub(crate) fn spinor_unsplit_rate(geo: &Geometry, phi: &SpinorField) -> (SymTensorField, DatumRate, Kinematics, f64) {
    let gr = gradients_unchecked(geo, phi);
    let theta = frame_rotation_field(geo, &gr.q1);
    let datum = add_rotation(&gr.q2, &theta, phi);
    let velocity_l2 = geo.lp(&geo.norm_sym(&gr.q1), 2.0);
    let r_mean = geo.integrate(geo.scalar_curvature()) / geo.volume();
    let q2_sq = phi_l2_sq(geo, &gr.q2);
    let kin = Kinematics { velocity_l2, r_mean, ..Default::default() };
    (gr.q1, DatumRate::Spinor(datum), kin, velocity_l2 * velocity_l2 + q2_sq)
}

fn phi_l2_sq(geo: &Geometry, s: &SpinorField) -> f64 {
    s.l2_inner(s, geo)
}

/// Extra quantities of one split spinor evaluation.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SpinorSplitDiagnostics {
    /// `‖δ_ḡ Q̊₁ − ½ e^{2u} d tr_g Q₁‖_{L²(ḡ)}`
    pub bianchi_residual: f64,
    /// `‖ρ − (ρ̃ + ½ tr_g Q₁)‖` and `‖ρ − ρ̃‖` in `L²(ḡ)`.
    pub rho_half_trace_gap: f64,
    pub rho_curvature_gap: f64,
    /// Constant frame rotation rate induced by `∂_t ḡ`.
    pub theta_rate: f64,
    /// `‖Q₁‖² + ‖Q₂‖²`, the energy dissipation rate.
    pub dissipation: f64,
}

/// Split spinor flow:
/// `∂_t ḡ = P(e^{−2u} Q̊₁)`, `∂_t u = ¼ tr_g Q₁ ± (X(u) − ½ρ)`,
/// `∂_t φ = Q₂ ± L̃_X φ − ½ θ̇ ω φ`, where `θ̇` is the constant frame
/// rotation of `(ḡ, ∂_t ḡ)`.
pub fn spinor_split_rhs(
    grid: &TorusGrid,
    state: &SplitState,
    signs: Signs,
    rho_choice: SpinorRho,
) -> Result<(SplitRate, SpinorSplitDiagnostics)> {
    let phi = match &state.datum {
        Datum::Spinor(s) => s,
        _ => return Err(Error::Invalid("spinor flow needs a spinor datum".into())),
    };
    let geo = state.geometry(grid)?;
    let gr = gradients_unchecked(&geo, phi);
    let q_ring = geo.trace_free(&gr.q1);
    let tr = geo.trace(&gr.q1);
    let mut gauge = solve_gauge(grid, &q_ring, &state.gbar, &state.u)?;
    let rho_tilde = solve_rho_tilde(&geo, &gr.q1, &state.u, &state.gbar)?.field;
    let half = assemble_rho(&rho_tilde, &tr, RhoAssembly::HalfTrace);
    let curv = assemble_rho(&rho_tilde, &tr, RhoAssembly::CurvatureWeighted);
    let l2 = |f: &ScalarField| (f.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt();
    let rho_half_trace_gap = l2(&gauge.rho.add_scaled(&half, -1.0));
    let rho_curvature_gap = l2(&gauge.rho.add_scaled(&curv, -1.0));
    if let SpinorRho::Assembled(a) = rho_choice {
        let rho = if a == RhoAssembly::HalfTrace { half } else { curv };
        gauge.x = solve_gauge_field_x(grid, &q_ring, &rho, &state.gbar, &state.u)?;
        gauge.rho = rho;
    }
    gauge.rho_tilde = rho_tilde;

    let gbar_rate = horizontal_projection(grid, &gauge_data(&q_ring, &state.u), &state.gbar);
    let theta = frame_rotation_rate(&state.gbar.matrix(), &gbar_rate.to_sym());
    let s = match signs {
        Signs::Standard => 1.0,
        Signs::Reversed => -1.0,
    };
    let [ux, uy] = grid.gradient(&state.u);
    let du = ScalarField(
        (0..grid.len())
            .map(|k| 0.25 * tr[k] + s * (gauge.x.x[k] * ux[k] + gauge.x.y[k] * uy[k] - 0.5 * gauge.rho[k]))
            .collect(),
    );
    let lie = spin_lie_derivative(&geo, &gauge.x, phi, LieFlat::Metric);
    let rotated = add_rotation(&gr.q2, &vec![theta; grid.len()], phi);
    let datum = rotated.add_scaled(&lie, s);

    let velocity_l2 = geo.lp(&geo.norm_sym(&gr.q1), 2.0);
    let diag = SpinorSplitDiagnostics {
        bianchi_residual: bianchi_residual(grid, &q_ring, &tr, &state.u, &state.gbar),
        rho_half_trace_gap,
        rho_curvature_gap,
        theta_rate: theta,
        dissipation: velocity_l2 * velocity_l2 + phi_l2_sq(&geo, &gr.q2),
    };
    let kin = Kinematics {
        velocity_l2,
        horizontal_l2: Some(gbar_rate.l2_norm()),
        horizontal_c0: Some(gbar_rate.c0_norm(&state.gbar)),
        gauge: Some(gauge.diagnostics.clone()),
        r_mean: geo.integrate(geo.scalar_curvature()) / geo.volume(),
        ..Default::default()
    };
    Ok((SplitRate { gbar: gbar_rate, u: du, datum: DatumRate::Spinor(datum), gauge, kinematics: kin }, diag))
}

/// `δ_ḡ Q̊ − ½ e^{2u} d tr_g Q`, which equals `e^{2u} δ_g Q`.
pub fn bianchi_defect(grid: &TorusGrid, q_ring: &SymTensorField, tr: &ScalarField, u: &ScalarField, gbar: &FlatMetric) -> OneFormField {
    let flat = Geometry::flat(grid, gbar);
    let div = flat.divergence_sym(q_ring);
    let [tx, ty] = grid.gradient(tr);
    OneFormField {
        x: ScalarField((0..grid.len()).map(|k| div.x[k] - 0.5 * (2.0 * u[k]).exp() * tx[k]).collect()),
        y: ScalarField((0..grid.len()).map(|k| div.y[k] - 0.5 * (2.0 * u[k]).exp() * ty[k]).collect()),
    }
}

/// `‖δ_ḡ Q̊ − ½ e^{2u} d tr_g Q‖_{L²(ḡ)}`.
pub fn bianchi_residual(grid: &TorusGrid, q_ring: &SymTensorField, tr: &ScalarField, u: &ScalarField, gbar: &FlatMetric) -> f64 {
    let flat = Geometry::flat(grid, gbar);
    flat.lp(&flat.norm_one_form(&bianchi_defect(grid, q_ring, tr, u, gbar)), 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ConformalMetric;
    use crate::spinor::SpinStructure;
    use num_complex::Complex64;

    #[test]
    fn constant_spinor_is_stationary() {
        let grid = TorusGrid::new(16).unwrap();
        let st = SpinStructure::default();
        let phi = SpinorField::constant(&grid, [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)], st);
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let (q1, q2) = spinor_rhs(&geo, &phi).unwrap();
        assert!(q1.max_abs() < 1e-14 && q2.max_abs() < 1e-14);

        let state = SplitState::new(&grid, ConformalMetric::flat(&grid, FlatMetric::IDENTITY), Datum::Spinor(phi));
        let (rate, diag) = spinor_split_rhs(&grid, &state, Signs::Standard, SpinorRho::Direct).unwrap();
        assert!(rate.u.max_abs() < 1e-14);
        assert!(rate.gbar.l2_norm() < 1e-14);
        assert_eq!(diag.dissipation, 0.0);
    }

    #[test]
    fn bianchi_defect_is_the_diffeomorphism_remainder() {
        use crate::grid::VectorField;
        use crate::spinor::{spin_lie_derivative, spinor_gradients, LieFlat};
        use std::f64::consts::PI;
        let grid = TorusGrid::new(64).unwrap();
        let g = FlatMetric::normalized(crate::grid::Sym2::new(1.2, 0.25, 0.9)).unwrap().0;
        let spin = SpinStructure { x: true, y: false };
        let u = crate::presets::conformal_factor(&grid, crate::presets::FactorPreset::Random, 0.2, 3, 2);
        let Datum::Spinor(phi) = crate::presets::datum(&grid, crate::presets::DatumPreset::RandomSpinor, 0.3, 3, 2, spin).unwrap() else {
            unreachable!()
        };
        let cm = ConformalMetric::new(g, u.clone());
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let gr = spinor_gradients(&geo, &phi).unwrap();
        let q_ring = geo.trace_free(&gr.q1);
        let tr = geo.trace(&gr.q1);
        let defect = bianchi_defect(&grid, &q_ring, &tr, &u, &g);

        let x = VectorField {
            x: grid.sample(|x, y| (2.0 * PI * y).sin() + 0.3 * (2.0 * PI * x).cos()),
            y: grid.sample(|x, y| (2.0 * PI * (x - y)).cos()),
        };
        let weak = 2.0 * Geometry::flat(&grid, &g).pair(&x, &defect);
        let metric_side = geo.l2_inner_sym(&gr.q1, &geo.killing(&x));
        let spinor_side = gr.q2.l2_inner(&spin_lie_derivative(&geo, &x, &phi, LieFlat::Metric), &geo);
        assert!((weak - metric_side).abs() < 1e-9 * metric_side.abs(), "{weak} vs {metric_side}");
        assert!((weak + spinor_side).abs() < 1e-8 * metric_side.abs(), "{weak} vs {spinor_side}");
        // δ_g Q₁ = 0 would need the spinor side to vanish; it does not here.
        assert!(metric_side.abs() > 1e-2);
        let state = SplitState::new(&grid, cm, Datum::Spinor(phi));
        let (_, diag) = spinor_split_rhs(&grid, &state, Signs::Standard, SpinorRho::Direct).unwrap();
        assert!(diag.bianchi_residual > 1.0);
    }
}
