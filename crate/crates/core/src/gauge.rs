//! Elliptic gauge solves of the split flow on a flat background: the
//! conformal correction ρ, the diffeomorphism field X, the horizontal
//! projection onto parallel trace-free tensors and the curvature potential.
//!
//! All solves are Fourier inversions on the flat background, so they are
//! exact up to round-off on band-limited data. Kernels (constants for the
//! Laplacian, parallel fields for `δδ*`) are projected out and the discarded
//! component is reported.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{OneFormField, ScalarField, Sym2, SymTensorField, TorusGrid, VectorField};
use crate::metric::{flat_symbol, scalar_curvature, ConformalMetric, FlatMetric, Geometry};

/// Threshold on the discarded kernel component above which the data is
/// flagged as not solvable.
pub const KERNEL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub field: ScalarField,
    /// Coordinate mean of the right-hand side that was projected out.
    pub removed_mean: f64,
}

impl PoissonSolution {
    pub fn was_projected(&self) -> bool {
        self.removed_mean.abs() > KERNEL_TOL
    }
}

/// Zero-mean solution of `Δ_G f = rhs` (positive Laplacian).
pub fn poisson_solve_zero_mean(grid: &TorusGrid, rhs: &[f64], g: &FlatMetric) -> PoissonSolution {
    let gi = g.inverse();
    let removed_mean = grid.mean(rhs);
    let field = grid.apply_symbol(rhs, |m| if m.is_zero() { 0.0 } else { 1.0 / flat_symbol(&gi, m) });
    PoissonSolution { field, removed_mean }
}

/// Residual norms and estimate ratios of one gauge solve.
#[derive(Clone, Debug, Default, Serialize)]
pub struct GaugeDiagnostics {
    /// `‖Δρ + δδ(e^{-2u}Q̊)‖_{L²}`
    pub rho_residual: f64,
    /// `‖δδ*X♭ + δ(e^{-2u}Q̊ + ρḡ)‖_{L²}`
    pub x_residual: f64,
    /// `‖ρ − δX♭‖_{L²}`, the compatibility of the two solves.
    pub compatibility: f64,
    /// Oscillating part of `e^{-2u}Q̊ + L_Xḡ + ρḡ`, which must be parallel.
    pub tt_residual: f64,
    /// Mean of the ρ right-hand side removed before inversion.
    pub rho_removed_mean: f64,
    /// Parallel-field component of the X right-hand side removed before inversion.
    pub x_kernel_component: f64,
    pub rho_l2: f64,
    pub x_w12: f64,
    /// `‖e^{-2u}Q̊‖_{L²}`
    pub data_l2: f64,
}

impl GaugeDiagnostics {
    /// Ratio `‖ρ‖ / ‖e^{-2u}Q̊‖` (the empirical ρ-estimate constant).
    pub fn rho_constant(&self) -> Option<f64> {
        (self.data_l2 > 0.0).then(|| self.rho_l2 / self.data_l2)
    }

    /// Ratio `‖X‖_{W^{1,2}} / ‖e^{-2u}Q̊‖`.
    pub fn x_constant(&self) -> Option<f64> {
        (self.data_l2 > 0.0).then(|| self.x_w12 / self.data_l2)
    }

    pub fn max_residual(&self) -> f64 {
        self.rho_residual.max(self.x_residual).max(self.compatibility).max(self.tt_residual)
    }
}

#[derive(Clone, Debug)]
pub struct GaugeSolution {
    pub rho: ScalarField,
    /// Spinor-flow auxiliary potential; zero for other flows.
    pub rho_tilde: ScalarField,
    pub x: VectorField,
    pub diagnostics: GaugeDiagnostics,
}

impl GaugeSolution {
    pub fn zero(grid: &TorusGrid) -> Self {
        Self {
            rho: grid.zeros(),
            rho_tilde: grid.zeros(),
            x: VectorField::zeros(grid),
            diagnostics: GaugeDiagnostics::default(),
        }
    }
}

fn l2(grid: &TorusGrid, f: &[f64]) -> f64 {
    (f.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
}

fn l2_sym(geo: &Geometry, h: &SymTensorField) -> f64 {
    geo.l2_inner_sym(h, h).max(0.0).sqrt()
}

fn check_finite(h: &SymTensorField, u: &[f64]) -> Result<()> {
    if !h.is_finite() || u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gauge data"));
    }
    Ok(())
}

/// `e^{-2u} Q̊`, the data of both gauge equations.
pub fn gauge_data(q_ring: &SymTensorField, u: &[f64]) -> SymTensorField {
    let w: Vec<f64> = u.iter().map(|&u| (-2.0 * u).exp()).collect();
    q_ring.weighted(&w)
}

/// Zero-mean ρ with `Δ_ḡ ρ = −δ_ḡ δ_ḡ(e^{-2u} Q̊)`.
pub fn solve_rho(grid: &TorusGrid, q_ring: &SymTensorField, gbar: &FlatMetric, u: &[f64]) -> Result<ScalarField> {
    check_finite(q_ring, u)?;
    let flat = Geometry::flat(grid, gbar);
    Ok(solve_rho_from_data(grid, &flat, &gauge_data(q_ring, u), gbar).0.field)
}

fn solve_rho_from_data(
    grid: &TorusGrid,
    flat: &Geometry,
    data: &SymTensorField,
    gbar: &FlatMetric,
) -> (PoissonSolution, ScalarField) {
    let rhs = flat.codifferential(&flat.divergence_sym(data)).scaled(-1.0);
    (poisson_solve_zero_mean(grid, &rhs, gbar), rhs)
}

/// Solves `δ_ḡ δ_ḡ* X♭ = b` for X orthogonal to the parallel fields.
/// Returns X and the size of the discarded parallel component of `b`.
fn solve_killing_system(grid: &TorusGrid, b: &OneFormField, gbar: &FlatMetric) -> (VectorField, f64) {
    let gi = gbar.inverse();
    let kernel = (grid.mean(&b.x).powi(2) + grid.mean(&b.y).powi(2)).sqrt();
    let [ax, ay] = grid.apply_matrix_symbol([&b.x, &b.y], |m, [bx, by]| {
        if m.is_zero() || m.nyq_x || m.nyq_y {
            return [Complex64::new(0.0, 0.0); 2];
        }
        let xi = [m.wx, m.wy];
        let s = flat_symbol(&gi, m);
        // M = |ξ|² I + ξ (G^{-1} ξ)ᵀ
        let gx = gi.apply(xi);
        let m00 = s + xi[0] * gx[0];
        let m01 = xi[0] * gx[1];
        let m10 = xi[1] * gx[0];
        let m11 = s + xi[1] * gx[1];
        let det = m00 * m11 - m01 * m10;
        [(bx * m11 - by * m01) / det, (by * m00 - bx * m10) / det]
    });
    let x = VectorField { x: ax, y: ay };
    // lowered components were solved for; raise with G^{-1}
    let raised = VectorField {
        x: x.x.zip_map(&x.y, |a, b| gi.xx * a + gi.xy * b),
        y: x.x.zip_map(&x.y, |a, b| gi.xy * a + gi.yy * b),
    };
    (raised, kernel)
}

/// X with `δ_ḡ δ_ḡ* X♭ = −δ_ḡ(e^{-2u}Q̊ + ρ ḡ)`, orthogonal to parallel fields.
pub fn solve_gauge_field_x(
    grid: &TorusGrid,
    q_ring: &SymTensorField,
    rho: &ScalarField,
    gbar: &FlatMetric,
    u: &[f64],
) -> Result<VectorField> {
    check_finite(q_ring, u)?;
    let flat = Geometry::flat(grid, gbar);
    let (x, kernel, _) = solve_x_from_data(grid, &flat, &gauge_data(q_ring, u), rho, gbar);
    if kernel > KERNEL_TOL {
        return Err(Error::Gauge(format!("X data has a parallel component of size {kernel:.3e}")));
    }
    Ok(x)
}

fn solve_x_from_data(
    grid: &TorusGrid,
    flat: &Geometry,
    data: &SymTensorField,
    rho: &ScalarField,
    gbar: &FlatMetric,
) -> (VectorField, f64, OneFormField) {
    let src = data.add_scaled(&SymTensorField::constant(grid, gbar.matrix()).weighted(rho), 1.0);
    let div = flat.divergence_sym(&src);
    let b = OneFormField { x: div.x.scaled(-1.0), y: div.y.scaled(-1.0) };
    let (x, kernel) = solve_killing_system(grid, &b, gbar);
    (x, kernel, b)
}

/// Solves both gauge equations for the trace-free part `q_ring` of the metric
/// velocity and records every residual.
pub fn solve_gauge(grid: &TorusGrid, q_ring: &SymTensorField, gbar: &FlatMetric, u: &[f64]) -> Result<GaugeSolution> {
    check_finite(q_ring, u)?;
    let flat = Geometry::flat(grid, gbar);
    let data = gauge_data(q_ring, u);
    let (rho_sol, rho_rhs) = solve_rho_from_data(grid, &flat, &data, gbar);
    let rho = rho_sol.field;
    let (x, kernel, b) = solve_x_from_data(grid, &flat, &data, &rho, gbar);
    if kernel > KERNEL_TOL * (1.0 + data.max_abs()) {
        return Err(Error::Gauge(format!("X data has a parallel component of size {kernel:.3e}")));
    }

    let lie = flat.killing(&x);
    let rho_res = laplacian_of(grid, &rho, gbar).add_scaled(&rho_rhs, -1.0);
    let dd = flat.divergence_sym(&lie);
    let x_res = OneFormField { x: dd.x.add_scaled(&b.x, -1.0), y: dd.y.add_scaled(&b.y, -1.0) };
    let delta_x = flat.codifferential(&flat.lower(&x));
    let g = SymTensorField::constant(grid, gbar.matrix());
    let h = data.add_scaled(&lie, 1.0).add_scaled(&g.weighted(&rho), 1.0);
    let hm = h.mean(grid);
    let osc = h.add_scaled(&SymTensorField::constant(grid, hm), -1.0);
    let diagnostics = GaugeDiagnostics {
        rho_residual: l2(grid, &rho_res),
        x_residual: flat.lp(&flat.norm_one_form(&x_res), 2.0),
        compatibility: l2(grid, &rho.add_scaled(&delta_x, -1.0)),
        tt_residual: l2_sym(&flat, &osc),
        rho_removed_mean: rho_sol.removed_mean,
        x_kernel_component: kernel,
        rho_l2: l2(grid, &rho),
        x_w12: w12_norm(grid, &flat, &x),
        data_l2: l2_sym(&flat, &data),
    };
    Ok(GaugeSolution { rho, rho_tilde: grid.zeros(), x, diagnostics })
}

fn laplacian_of(grid: &TorusGrid, f: &[f64], g: &FlatMetric) -> ScalarField {
    crate::metric::laplacian_flat(grid, f, g)
}

/// `‖X‖_{W^{1,2}(ḡ)} = (∫ |X|² + |∇X|²)^{1/2}` on a flat background.
pub fn w12_norm(grid: &TorusGrid, flat: &Geometry, x: &VectorField) -> f64 {
    let gm = flat.g(0);
    let gi = flat.ginv(0);
    let [xx, xy] = grid.gradient(&x.x);
    let [yx, yy] = grid.gradient(&x.y);
    let s: f64 = (0..grid.len())
        .map(|k| {
            let v = gm.quad([x.x[k], x.y[k]]);
            // |∇X|² = g^{ij} g_{mn} ∂_i X^m ∂_j X^n
            let col = |i: usize| if i == 0 { [xx[k], yx[k]] } else { [xy[k], yy[k]] };
            let mut d = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let a = col(i);
                    let b = gm.apply(col(j));
                    d += gi.get(i, j) * (a[0] * b[0] + a[1] * b[1]);
                }
            }
            v + d
        })
        .sum();
    (s * grid.cell_area()).sqrt()
}

/// Spinor-flow potential ρ̃: zero-mean solution of
/// `Δ_ḡ ρ̃ = δ_ḡ (Q̊₁(du, ·))`, with `du` raised by `g`.
pub fn solve_rho_tilde(geo: &Geometry, q1: &SymTensorField, u: &[f64], gbar: &FlatMetric) -> Result<PoissonSolution> {
    if !q1.is_finite() {
        return Err(Error::NonFinite("Q1"));
    }
    let grid = geo.grid();
    let q1r = geo.trace_free(q1);
    let du = geo.d(u);
    let grad = geo.raise(&du);
    let a = OneFormField {
        x: ScalarField((0..grid.len()).map(|k| q1r.xx[k] * grad.x[k] + q1r.xy[k] * grad.y[k]).collect()),
        y: ScalarField((0..grid.len()).map(|k| q1r.xy[k] * grad.x[k] + q1r.yy[k] * grad.y[k]).collect()),
    };
    let flat = Geometry::flat(grid, gbar);
    let rhs = flat.codifferential(&a);
    Ok(poisson_solve_zero_mean(grid, &rhs, gbar))
}

/// The two assemblies of ρ from ρ̃ found in the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RhoAssembly {
    /// `ρ = ρ̃ + ½ tr_g Q₁`
    HalfTrace,
    /// `ρ = ρ̃ + ½ R_ḡ tr_g Q₁` (equal to ρ̃ on the torus)
    CurvatureWeighted,
}

pub fn assemble_rho(rho_tilde: &ScalarField, tr_q1: &[f64], assembly: RhoAssembly) -> ScalarField {
    match assembly {
        RhoAssembly::HalfTrace => rho_tilde.add_scaled(tr_q1, 0.5),
        RhoAssembly::CurvatureWeighted => rho_tilde.clone(),
    }
}

/// Element of the 2-dimensional space of parallel `ḡ`-trace-free tensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizontalTensor {
    pub coeffs: [f64; 2],
    pub basis: [Sym2; 2],
}

/// `ḡ`-orthonormal basis of constant trace-free symmetric tensors, by
/// Gram–Schmidt from `diag(1, -1)` and `offdiag(1, 1)`.
pub fn horizontal_basis(gbar: &FlatMetric) -> [Sym2; 2] {
    let g = gbar.matrix();
    let gi = gbar.inverse();
    let tf = |a: Sym2| a.sub(&g.scaled(0.5 * gi.contract(&a)));
    let ip = |a: &Sym2, b: &Sym2| gi.sandwich(a).contract(b);
    let a = tf(Sym2::new(1.0, 0.0, -1.0));
    let e1 = a.scaled(1.0 / ip(&a, &a).sqrt());
    let b = tf(Sym2::new(0.0, 1.0, 0.0));
    let b = b.sub(&e1.scaled(ip(&b, &e1)));
    let e2 = b.scaled(1.0 / ip(&b, &b).sqrt());
    [e1, e2]
}

impl HorizontalTensor {
    pub fn zero(gbar: &FlatMetric) -> Self {
        Self { coeffs: [0.0; 2], basis: horizontal_basis(gbar) }
    }

    /// Projection of a constant tensor.
    pub fn from_constant(gbar: &FlatMetric, h: &Sym2) -> Self {
        let basis = horizontal_basis(gbar);
        let gi = gbar.inverse();
        let coeffs = basis.map(|e| gi.sandwich(&e).contract(h));
        Self { coeffs, basis }
    }

    pub fn to_sym(&self) -> Sym2 {
        self.basis[0].scaled(self.coeffs[0]).add(&self.basis[1].scaled(self.coeffs[1]))
    }

    pub fn to_field(&self, grid: &TorusGrid) -> SymTensorField {
        SymTensorField::constant(grid, self.to_sym())
    }

    /// `L²(ḡ)` norm on the unit-volume torus; equals the pointwise norm.
    pub fn l2_norm(&self) -> f64 {
        (self.coeffs[0].powi(2) + self.coeffs[1].powi(2)).sqrt()
    }

    /// Pointwise `C⁰(ḡ)` norm computed from the tensor components.
    pub fn c0_norm(&self, gbar: &FlatMetric) -> f64 {
        let s = self.to_sym();
        gbar.inverse().sandwich(&s).contract(&s).sqrt()
    }
}

/// `L²(ḡ)` orthogonal projection onto parallel trace-free tensors.
pub fn horizontal_projection(grid: &TorusGrid, h: &SymTensorField, gbar: &FlatMetric) -> HorizontalTensor {
    HorizontalTensor::from_constant(gbar, &h.mean(grid))
}

#[derive(Clone, Debug)]
pub struct CurvaturePotential {
    pub f: ScalarField,
    /// `‖Δ_g f − (R − r)‖_{L²(ḡ)}`
    pub residual: f64,
    /// Average scalar curvature (zero on the torus up to round-off).
    pub r_mean: f64,
    pub sup: f64,
}

/// Curvature potential: `Δ_g f = R_g − r` with `∫ f vol_g = 0`.
pub fn curvature_potential(grid: &TorusGrid, cm: &ConformalMetric) -> CurvaturePotential {
    let r = scalar_curvature(grid, cm);
    let w: ScalarField = cm.u.map(|u| (2.0 * u).exp());
    let vol: f64 = w.iter().sum::<f64>() * grid.cell_area();
    let r_mean = r.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() * grid.cell_area() / vol;
    // Δ_g = e^{-2u} Δ_G, so Δ_G f = e^{2u}(R − r).
    let rhs: Vec<f64> = (0..grid.len()).map(|k| w[k] * (r[k] - r_mean)).collect();
    let sol = poisson_solve_zero_mean(grid, &rhs, &cm.base).field;
    let shift = sol.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() * grid.cell_area() / vol;
    let f = sol.map(|v| v - shift);
    let lf = crate::metric::laplacian_flat(grid, &f, &cm.base);
    let res: Vec<f64> = (0..grid.len()).map(|k| lf[k] / w[k] - (r[k] - r_mean)).collect();
    let sup = f.max_abs();
    CurvaturePotential { f, residual: l2(grid, &res), r_mean, sup }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::laplacian_flat;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(64).unwrap()
    }

    fn skew_metric() -> FlatMetric {
        FlatMetric::new(1.3, 0.4, (1.0 + 0.16) / 1.3).unwrap()
    }

    #[test]
    fn poisson_inverts_single_and_double_modes() {
        let grid = grid();
        let g = FlatMetric::IDENTITY;
        let s = grid.sample(|x, _| (2.0 * PI * x).sin());
        let rhs = s.scaled(4.0 * PI * PI);
        let sol = poisson_solve_zero_mean(&grid, &rhs, &g);
        assert!(sol.field.add_scaled(&s, -1.0).max_abs() < 1e-12);
        assert!(!sol.was_projected());
        let zero = poisson_solve_zero_mean(&grid, &grid.zeros(), &g);
        assert_eq!(zero.field.max_abs(), 0.0);
        let t = grid.sample(|x, y| (2.0 * PI * (x + 2.0 * y)).cos());
        let rhs2 = rhs.add_scaled(&t, 20.0 * PI * PI);
        let sol2 = poisson_solve_zero_mean(&grid, &rhs2, &g);
        assert!(sol2.field.add_scaled(&s, -1.0).add_scaled(&t, -1.0).max_abs() < 1e-12);
    }

    #[test]
    fn poisson_reports_removed_mean() {
        let grid = grid();
        let sol = poisson_solve_zero_mean(&grid, &grid.constant(0.5), &FlatMetric::IDENTITY);
        assert!((sol.removed_mean - 0.5).abs() < 1e-15);
        assert!(sol.was_projected());
    }

    #[test]
    fn zero_data_gives_zero_gauge() {
        let grid = grid();
        let sol = solve_gauge(&grid, &SymTensorField::zeros(&grid), &skew_metric(), &grid.zeros()).unwrap();
        assert_eq!(sol.rho.max_abs(), 0.0);
        assert_eq!(sol.x.max_abs(), 0.0);
    }

    #[test]
    fn manufactured_killing_data_recovers_field() {
        let grid = grid();
        let g = skew_metric();
        let flat = Geometry::flat(&grid, &g);
        let y = VectorField {
            x: grid.sample(|x, y| (2.0 * PI * y).sin() + 0.5 * (2.0 * PI * (x - y)).cos()),
            y: grid.sample(|x, y| (4.0 * PI * x).cos() * (2.0 * PI * y).sin()),
        };
        let u = grid.sample(|x, y| 0.2 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        // Choose Q̊ so that e^{-2u}Q̊ is the trace-free part of L_Y ḡ.
        let data = flat.trace_free(&flat.killing(&y));
        let q = data.weighted(&u.map(|v| (2.0 * v).exp()));
        let sol = solve_gauge(&grid, &q, &g, &u).unwrap();
        let want_rho = flat.codifferential(&flat.lower(&y)).scaled(-1.0);
        let err_x = (sol.x.x.add_scaled(&y.x, 1.0).iter().chain(sol.x.y.add_scaled(&y.y, 1.0).iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            / grid.n() as f64;
        assert!(err_x < 1e-9, "{err_x}");
        assert!(sol.rho.add_scaled(&want_rho, -1.0).max_abs() < 1e-9);
        assert!(sol.diagnostics.max_residual() < 1e-8, "{:?}", sol.diagnostics);
    }

    #[test]
    fn rho_solves_its_equation() {
        let grid = grid();
        let g = skew_metric();
        let u = grid.sample(|x, _| 0.3 * (2.0 * PI * x).sin());
        let q = SymTensorField {
            xx: grid.sample(|x, y| (2.0 * PI * (x + y)).cos()),
            xy: grid.sample(|_, y| (2.0 * PI * y).sin()),
            yy: grid.sample(|x, _| (4.0 * PI * x).cos()),
        };
        let geo = Geometry::conformal(&grid, &ConformalMetric::new(g, u.clone())).unwrap();
        let qr = geo.trace_free(&q);
        let rho = solve_rho(&grid, &qr, &g, &u).unwrap();
        let flat = Geometry::flat(&grid, &g);
        let rhs = flat.codifferential(&flat.divergence_sym(&gauge_data(&qr, &u)));
        let res = laplacian_flat(&grid, &rho, &g).add_scaled(&rhs, 1.0);
        assert!(res.max_abs() < 1e-8);
        assert!(grid.mean(&rho).abs() < 1e-14);
    }

    #[test]
    fn horizontal_projection_properties() {
        let grid = grid();
        let g = skew_metric();
        let flat = Geometry::flat(&grid, &g);
        let basis = horizontal_basis(&g);
        let gi = g.inverse();
        for (a, ea) in basis.iter().enumerate() {
            assert!(gi.contract(ea).abs() < 1e-14);
            for (b, eb) in basis.iter().enumerate() {
                let ip = gi.sandwich(ea).contract(eb);
                assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let h = SymTensorField {
            xx: grid.sample(|x, _| 1.0 + x.sin()),
            xy: grid.sample(|_, y| 0.3 + y.cos()),
            yy: grid.sample(|x, y| (x * y).cos()),
        };
        let p = horizontal_projection(&grid, &h, &g);
        let pp = horizontal_projection(&grid, &p.to_field(&grid), &g);
        assert!((p.coeffs[0] - pp.coeffs[0]).abs() < 1e-12);
        assert!((p.coeffs[1] - pp.coeffs[1]).abs() < 1e-12);
        let rho = grid.sample(|x, y| (2.0 * PI * (x - y)).sin() + 0.7);
        let pr = horizontal_projection(&grid, &SymTensorField::constant(&grid, g.matrix()).weighted(&rho), &g);
        assert!(pr.l2_norm() < 1e-12);
        let v = VectorField {
            x: grid.sample(|_, y| (2.0 * PI * y).sin()),
            y: grid.sample(|x, _| (2.0 * PI * x).cos()),
        };
        assert!(horizontal_projection(&grid, &flat.killing(&v), &g).l2_norm() < 1e-10);
    }

    #[test]
    fn curvature_potential_matches_closed_form() {
        let grid = grid();
        let u = grid.sample(|x, _| 0.25 * (2.0 * PI * x).sin());
        let cm = ConformalMetric::new(FlatMetric::IDENTITY, u.clone());
        let pot = curvature_potential(&grid, &cm);
        let w = u.map(|v| (2.0 * v).exp());
        let c = u.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        for k in 0..grid.len() {
            assert!((pot.f[k] - 2.0 * (u[k] - c)).abs() < 1e-10);
        }
        assert!(pot.residual < 1e-8);
        let zero = curvature_potential(&grid, &ConformalMetric::flat(&grid, FlatMetric::IDENTITY));
        assert!(zero.f.max_abs() < 1e-14);
    }
}
