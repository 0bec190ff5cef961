//! Flat backgrounds, conformal metrics, general metric fields and the
//! Riemannian operators built on them.
//!
//! Every operator is spectral: derivatives of grid fields go through the
//! transforms in [`crate::grid`], products are taken nodewise.

use serde::Serialize;
use crate::error::{Error, Result};
use crate::grid::{Mode, OneFormField, ScalarField, Sym2, SymTensorField, TorusGrid, VectorField};

/// Constant unit-determinant metric on the fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlatMetric(Sym2);

const DET_TOL: f64 = 1e-10;

impl FlatMetric {
    pub const IDENTITY: FlatMetric = FlatMetric(Sym2::IDENTITY);

    pub fn new(g11: f64, g12: f64, g22: f64) -> Result<Self> {
        Self::from_sym(Sym2::new(g11, g12, g22))
    }

    pub fn from_sym(m: Sym2) -> Result<Self> {
        check_spd(&m)?;
        if (m.det() - 1.0).abs() > DET_TOL {
            return Err(Error::InvalidMetric(format!("det G = {} is not 1", m.det())));
        }
        Ok(Self(m))
    }

    /// Rescales an SPD matrix to unit determinant; returns the metric and the
    /// original determinant.
    pub fn normalized(m: Sym2) -> Result<(Self, f64)> {
        check_spd(&m)?;
        let det = m.det();
        Ok((Self(m.scaled(1.0 / det.sqrt())), det))
    }

    pub fn matrix(&self) -> Sym2 {
        self.0
    }

    pub fn inverse(&self) -> Sym2 {
        self.0.inverse()
    }

    /// Length of the coordinate displacement `v`.
    pub fn length(&self, v: [f64; 2]) -> f64 {
        self.0.quad(v).sqrt()
    }

    pub fn diag(a: f64, b: f64) -> Result<Self> {
        Self::new(a, 0.0, b)
    }
}

fn check_spd(m: &Sym2) -> Result<()> {
    if !(m.xx.is_finite() && m.xy.is_finite() && m.yy.is_finite()) {
        return Err(Error::InvalidMetric("non-finite entries".into()));
    }
    if !m.is_positive_definite() {
        return Err(Error::InvalidMetric(format!(
            "[[{}, {}], [{}, {}]] is not positive-definite",
            m.xx, m.xy, m.xy, m.yy
        )));
    }
    Ok(())
}

/// `g = e^{2u} G`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalMetric {
    pub base: FlatMetric,
    pub u: ScalarField,
}

impl ConformalMetric {
    pub fn new(base: FlatMetric, u: ScalarField) -> Self {
        Self { base, u }
    }

    pub fn flat(grid: &TorusGrid, base: FlatMetric) -> Self {
        Self { base, u: grid.zeros() }
    }

    pub fn to_metric_field(&self) -> MetricField {
        let g = self.base.matrix();
        MetricField {
            g: SymTensorField::from_fn(self.u.len(), |k| g.scaled((2.0 * self.u[k]).exp())),
        }
    }
}

/// Arbitrary smooth metric given by its components at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    pub g: SymTensorField,
}

impl MetricField {
    pub fn constant(grid: &TorusGrid, m: Sym2) -> Self {
        Self { g: SymTensorField::constant(grid, m) }
    }

    pub fn at(&self, k: usize) -> Sym2 {
        self.g.at(k)
    }

    /// Smallest eigenvalue over all nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.g.xx.len()).map(|k| self.at(k).eigenvalues().0).fold(f64::INFINITY, f64::min)
    }
}

/// Laplacian of `G` with the positive sign convention, `-G^{ij} d_i d_j f`.
pub fn laplacian_flat(grid: &TorusGrid, f: &[f64], g: &FlatMetric) -> ScalarField {
    grid.apply_symbol(f, |m| flat_symbol(&g.inverse(), m))
}

/// Fourier symbol of the positive flat Laplacian with inverse metric `gi`.
pub(crate) fn flat_symbol(gi: &Sym2, m: Mode) -> f64 {
    gi.xx * m.wx * m.wx + 2.0 * gi.xy * m.odd_x() * m.odd_y() + gi.yy * m.wy * m.wy
}

/// Scalar curvature of `e^{2u} G` from the conformal formula
/// `R = e^{-2u} 2 Δ_G u` (the flat background has `R = 0`).
pub fn scalar_curvature(grid: &TorusGrid, cm: &ConformalMetric) -> ScalarField {
    let lap = laplacian_flat(grid, &cm.u, &cm.base);
    lap.zip_map(&cm.u, |l, u| 2.0 * l * (-2.0 * u).exp())
}

/// `∫ f vol_g` for `g = e^{2u} G`.
pub fn integrate(grid: &TorusGrid, f: &[f64], cm: &ConformalMetric) -> f64 {
    f.iter().zip(cm.u.iter()).map(|(&f, &u)| f * (2.0 * u).exp()).sum::<f64>() * grid.cell_area()
}

/// `(∫ |f|^p vol)^{1/p}` from pointwise norms and volume weights;
/// `p = ∞` gives the nodal sup.
pub fn lp_from_pointwise(norms: &[f64], density: &[f64], cell_area: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return norms.iter().fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    }
    let s: f64 = norms.iter().zip(density).map(|(&f, &w)| f.abs().powf(p) * w).sum();
    (s * cell_area).powf(1.0 / p)
}

/// `L^p(g)` norm of a scalar field for `g = e^{2u} G`.
pub fn lp_norm(grid: &TorusGrid, f: &[f64], cm: &ConformalMetric, p: f64) -> f64 {
    let w: Vec<f64> = cm.u.iter().map(|&u| (2.0 * u).exp()).collect();
    lp_from_pointwise(f, &w, grid.cell_area(), p)
}

/// Christoffel symbols `Γ[k][i][j]` at one node.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// Metric-dependent data precomputed once per metric: inverse, volume
/// density, Christoffel symbols, the symmetric orthonormal frame and the spin
/// connection coefficient, and the scalar curvature.
pub struct Geometry<'a> {
    grid: &'a TorusGrid,
    g: Vec<Sym2>,
    ginv: Vec<Sym2>,
    sqrt_det: Vec<f64>,
    dg: [Vec<Sym2>; 2],
    gamma: Vec<Christoffel>,
    frame: Vec<Sym2>,
    coframe: Vec<Sym2>,
    spin_conn: [ScalarField; 2],
    scalar: ScalarField,
}

impl<'a> Geometry<'a> {
    pub fn new(grid: &'a TorusGrid, metric: &MetricField) -> Result<Self> {
        let len = grid.len();
        if metric.g.xx.len() != len {
            return Err(Error::Shape { expected: len, got: metric.g.xx.len() });
        }
        if !metric.g.is_finite() {
            return Err(Error::NonFinite("metric"));
        }
        let g: Vec<Sym2> = (0..len).map(|k| metric.at(k)).collect();
        if g.iter().any(|m| !m.is_positive_definite()) {
            return Err(Error::InvalidMetric("metric field is not positive-definite".into()));
        }
        let ginv: Vec<Sym2> = g.iter().map(Sym2::inverse).collect();
        let sqrt_det = g.iter().map(|m| m.det().sqrt()).collect();

        let [gxx_x, gxx_y] = grid.gradient(&metric.g.xx);
        let [gxy_x, gxy_y] = grid.gradient(&metric.g.xy);
        let [gyy_x, gyy_y] = grid.gradient(&metric.g.yy);
        let dg = [
            (0..len).map(|k| Sym2::new(gxx_x[k], gxy_x[k], gyy_x[k])).collect::<Vec<_>>(),
            (0..len).map(|k| Sym2::new(gxx_y[k], gxy_y[k], gyy_y[k])).collect::<Vec<_>>(),
        ];

        let gamma: Vec<Christoffel> = (0..len)
            .map(|n| {
                let d = |m: usize, i: usize, j: usize| dg[m][n].get(i, j);
                // first kind: Γ_{l,ij} = ½(d_i g_jl + d_j g_il - d_l g_ij)
                let mut low = [[[0.0; 2]; 2]; 2];
                for (l, low_l) in low.iter_mut().enumerate() {
                    for i in 0..2 {
                        for j in 0..2 {
                            low_l[i][j] = 0.5 * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                        }
                    }
                }
                let mut out = [[[0.0; 2]; 2]; 2];
                for (k, out_k) in out.iter_mut().enumerate() {
                    for i in 0..2 {
                        for j in 0..2 {
                            out_k[i][j] = (0..2).map(|l| ginv[n].get(k, l) * low[l][i][j]).sum();
                        }
                    }
                }
                out
            })
            .collect();

        let coframe: Vec<Sym2> = g.iter().map(Sym2::sqrt).collect();
        let frame: Vec<Sym2> = coframe.iter().map(Sym2::inverse).collect();

        let spin_conn = spin_connection(grid, &g, &gamma, &frame);
        let scalar = curvature_from_christoffel(grid, &ginv, &gamma);

        Ok(Self { grid, g, ginv, sqrt_det, dg, gamma, frame, coframe, spin_conn, scalar })
    }

    pub fn conformal(grid: &'a TorusGrid, cm: &ConformalMetric) -> Result<Self> {
        if !cm.u.is_finite() {
            return Err(Error::NonFinite("conformal factor"));
        }
        let mut geo = Self::new(grid, &cm.to_metric_field())?;
        // The conformal formula is cheaper and exact on band-limited u.
        geo.scalar = scalar_curvature(grid, cm);
        Ok(geo)
    }

    pub fn flat(grid: &'a TorusGrid, base: &FlatMetric) -> Self {
        Self::new(grid, &MetricField::constant(grid, base.matrix()))
            .expect("flat metrics are valid")
    }

    pub fn grid(&self) -> &'a TorusGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn g(&self, k: usize) -> Sym2 {
        self.g[k]
    }

    pub fn ginv(&self, k: usize) -> Sym2 {
        self.ginv[k]
    }

    /// `√det g`, the density of `vol_g` against `dx dy`.
    pub fn density(&self) -> &[f64] {
        &self.sqrt_det
    }

    pub fn christoffel(&self, k: usize) -> &Christoffel {
        &self.gamma[k]
    }

    /// `g^{-1/2}`; column `a` holds the coordinate components of `e_a`.
    pub fn frame(&self, k: usize) -> Sym2 {
        self.frame[k]
    }

    /// `g^{1/2}`; row `a` holds the coframe one-form `e^a`.
    pub fn coframe(&self, k: usize) -> Sym2 {
        self.coframe[k]
    }

    /// Coefficient `A_i` with `∇_i φ = ∂_i φ + A_i ω·φ` on spinors.
    pub fn spin_connection(&self) -> &[ScalarField; 2] {
        &self.spin_conn
    }

    pub fn scalar_curvature(&self) -> &ScalarField {
        &self.scalar
    }

    pub fn metric_field(&self) -> MetricField {
        MetricField { g: SymTensorField::from_fn(self.len(), |k| self.g[k]) }
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.sqrt_det).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }

    pub fn volume(&self) -> f64 {
        self.sqrt_det.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// `L^p(g)` norm of pointwise values (already reduced to scalars).
    pub fn lp(&self, pointwise: &[f64], p: f64) -> f64 {
        lp_from_pointwise(pointwise, &self.sqrt_det, self.grid.cell_area(), p)
    }

    pub fn d(&self, f: &[f64]) -> OneFormField {
        let [x, y] = self.grid.gradient(f);
        OneFormField { x, y }
    }

    pub fn raise(&self, a: &OneFormField) -> VectorField {
        let (x, y) = self.pointwise2(|k| self.ginv[k].apply([a.x[k], a.y[k]]));
        VectorField { x, y }
    }

    pub fn lower(&self, v: &VectorField) -> OneFormField {
        let (x, y) = self.pointwise2(|k| self.g[k].apply([v.x[k], v.y[k]]));
        OneFormField { x, y }
    }

    pub fn gradient(&self, f: &[f64]) -> VectorField {
        self.raise(&self.d(f))
    }

    fn pointwise2(&self, f: impl Fn(usize) -> [f64; 2]) -> (ScalarField, ScalarField) {
        let mut a = Vec::with_capacity(self.len());
        let mut b = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let [p, q] = f(k);
            a.push(p);
            b.push(q);
        }
        (ScalarField(a), ScalarField(b))
    }

    /// Covariant Hessian `∂_i∂_j f − Γ^k_ij ∂_k f`.
    pub fn hessian(&self, f: &[f64]) -> SymTensorField {
        let [fx, fy] = self.grid.gradient(f);
        let [fxx, fxy, fyy] = self.grid.second_derivatives(f);
        SymTensorField::from_fn(self.len(), |k| {
            let gm = &self.gamma[k];
            let df = [fx[k], fy[k]];
            let c = |i: usize, j: usize| gm[0][i][j] * df[0] + gm[1][i][j] * df[1];
            Sym2::new(fxx[k] - c(0, 0), fxy[k] - c(0, 1), fyy[k] - c(1, 1))
        })
    }

    /// Positive Laplace–Beltrami operator `-g^{ij} ∇_i∇_j f`.
    pub fn laplacian(&self, f: &[f64]) -> ScalarField {
        let h = self.hessian(f);
        ScalarField((0..self.len()).map(|k| -self.ginv[k].contract(&h.at(k))).collect())
    }

    /// `L_X g`, written `δ* X♭` here (no factor ½).
    pub fn killing(&self, v: &VectorField) -> SymTensorField {
        let [xx, xy] = self.grid.gradient(&v.x);
        let [yx, yy] = self.grid.gradient(&v.y);
        SymTensorField::from_fn(self.len(), |k| {
            let g = &self.g[k];
            // dv[i][m] = ∂_i X^m
            let dv = [[xx[k], yx[k]], [xy[k], yy[k]]];
            let x = [v.x[k], v.y[k]];
            let e = |i: usize, j: usize| {
                let transport = x[0] * self.dg[0][k].get(i, j) + x[1] * self.dg[1][k].get(i, j);
                let a: f64 = (0..2).map(|m| g.get(m, j) * dv[i][m] + g.get(i, m) * dv[j][m]).sum();
                transport + a
            };
            Sym2::new(e(0, 0), e(0, 1), e(1, 1))
        })
    }

    /// Divergence of a symmetric tensor, `(δh)_j = -g^{ik} ∇_k h_ij`.
    pub fn divergence_sym(&self, h: &SymTensorField) -> OneFormField {
        let [hxx_x, hxx_y] = self.grid.gradient(&h.xx);
        let [hxy_x, hxy_y] = self.grid.gradient(&h.xy);
        let [hyy_x, hyy_y] = self.grid.gradient(&h.yy);
        let (x, y) = self.pointwise2(|n| {
            let dh = [
                Sym2::new(hxx_x[n], hxy_x[n], hyy_x[n]),
                Sym2::new(hxx_y[n], hxy_y[n], hyy_y[n]),
            ];
            let hv = h.at(n);
            let gm = &self.gamma[n];
            let gi = &self.ginv[n];
            let cov = |kk: usize, i: usize, j: usize| {
                dh[kk].get(i, j)
                    - (0..2)
                        .map(|m| gm[m][kk][i] * hv.get(m, j) + gm[m][kk][j] * hv.get(i, m))
                        .sum::<f64>()
            };
            let mut out = [0.0; 2];
            for (j, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for i in 0..2 {
                    for kk in 0..2 {
                        s += gi.get(i, kk) * cov(kk, i, j);
                    }
                }
                *o = -s;
            }
            out
        });
        OneFormField { x, y }
    }

    /// `∇_i X^i`.
    pub fn div_vector(&self, v: &VectorField) -> ScalarField {
        let [xx, _] = self.grid.gradient(&v.x);
        let [_, yy] = self.grid.gradient(&v.y);
        ScalarField(
            (0..self.len())
                .map(|k| {
                    let gm = &self.gamma[k];
                    let x = [v.x[k], v.y[k]];
                    let tr: f64 = (0..2)
                        .map(|i| (0..2).map(|m| gm[i][i][m] * x[m]).sum::<f64>())
                        .sum();
                    xx[k] + yy[k] + tr
                })
                .collect(),
        )
    }

    /// Codifferential of a one-form, `δα = -∇^i α_i`.
    pub fn codifferential(&self, a: &OneFormField) -> ScalarField {
        self.div_vector(&self.raise(a)).scaled(-1.0)
    }

    pub fn trace(&self, h: &SymTensorField) -> ScalarField {
        ScalarField((0..self.len()).map(|k| self.ginv[k].contract(&h.at(k))).collect())
    }

    pub fn trace_free(&self, h: &SymTensorField) -> SymTensorField {
        SymTensorField::from_fn(self.len(), |k| {
            let hk = h.at(k);
            let t = self.ginv[k].contract(&hk);
            hk.sub(&self.g[k].scaled(0.5 * t))
        })
    }

    /// Pointwise `⟨h, k⟩_g`.
    pub fn inner_sym(&self, h: &SymTensorField, k: &SymTensorField) -> ScalarField {
        ScalarField(
            (0..self.len())
                .map(|n| self.ginv[n].sandwich(&h.at(n)).contract(&k.at(n)))
                .collect(),
        )
    }

    pub fn norm_sym(&self, h: &SymTensorField) -> ScalarField {
        self.inner_sym(h, h).map(|v| v.max(0.0).sqrt())
    }

    pub fn norm_one_form(&self, a: &OneFormField) -> ScalarField {
        ScalarField((0..self.len()).map(|k| self.ginv[k].quad([a.x[k], a.y[k]]).sqrt()).collect())
    }

    pub fn norm_vector(&self, v: &VectorField) -> ScalarField {
        ScalarField((0..self.len()).map(|k| self.g[k].quad([v.x[k], v.y[k]]).sqrt()).collect())
    }

    /// `∫⟨h, k⟩_g vol_g`.
    pub fn l2_inner_sym(&self, h: &SymTensorField, k: &SymTensorField) -> f64 {
        self.integrate(&self.inner_sym(h, k))
    }

    /// `∫ α(X) vol_g`, the `L^2(g)` pairing of `X♭` with `α`.
    pub fn pair(&self, v: &VectorField, a: &OneFormField) -> f64 {
        let f: Vec<f64> = (0..self.len()).map(|k| v.x[k] * a.x[k] + v.y[k] * a.y[k]).collect();
        self.integrate(&f)
    }

    /// Smallest eigenvalue of `g` over all nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        self.g.iter().map(|m| m.eigenvalues().0).fold(f64::INFINITY, f64::min)
    }
}

fn spin_connection(grid: &TorusGrid, g: &[Sym2], gamma: &[Christoffel], frame: &[Sym2]) -> [ScalarField; 2] {
    let fxx: Vec<f64> = frame.iter().map(|f| f.xx).collect();
    let fxy: Vec<f64> = frame.iter().map(|f| f.xy).collect();
    let dfxx = grid.gradient(&fxx);
    let dfxy = grid.gradient(&fxy);
    let mut out = [Vec::with_capacity(g.len()), Vec::with_capacity(g.len())];
    for n in 0..g.len() {
        let f = &frame[n];
        let e1 = [f.xx, f.xy];
        let e2 = [f.xy, f.yy];
        for (i, o) in out.iter_mut().enumerate() {
            // ∂_i e_1^k
            let de1 = [dfxx[i][n], dfxy[i][n]];
            let mut nabla = [0.0; 2];
            for (k, v) in nabla.iter_mut().enumerate() {
                *v = de1[k] + (0..2).map(|l| gamma[n][k][i][l] * e1[l]).sum::<f64>();
            }
            let w12 = g[n].apply(nabla);
            let omega = w12[0] * e2[0] + w12[1] * e2[1];
            o.push(0.5 * omega);
        }
    }
    let [a, b] = out;
    [ScalarField(a), ScalarField(b)]
}

fn curvature_from_christoffel(grid: &TorusGrid, ginv: &[Sym2], gamma: &[Christoffel]) -> ScalarField {
    let len = ginv.len();
    // dgam[m][k][i][j] = ∂_m Γ^k_ij
    let mut dgam = vec![[[[[0.0; 2]; 2]; 2]; 2]; len];
    for k in 0..2 {
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let comp: Vec<f64> = gamma.iter().map(|c| c[k][i][j]).collect();
            let d = grid.gradient(&comp);
            for n in 0..len {
                for m in 0..2 {
                    dgam[n][m][k][i][j] = d[m][n];
                    dgam[n][m][k][j][i] = d[m][n];
                }
            }
        }
    }
    ScalarField(
        (0..len)
            .map(|n| {
                let gm = &gamma[n];
                let dg = &dgam[n];
                let ric = |i: usize, j: usize| {
                    let mut r = 0.0;
                    for k in 0..2 {
                        r += dg[k][k][i][j] - dg[j][k][i][k];
                        for l in 0..2 {
                            r += gm[k][k][l] * gm[l][i][j] - gm[k][j][l] * gm[l][i][k];
                        }
                    }
                    r
                };
                let r = Sym2::new(ric(0, 0), 0.5 * (ric(0, 1) + ric(1, 0)), ric(1, 1));
                ginv[n].contract(&r)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(64).unwrap()
    }

    fn bump(grid: &TorusGrid) -> ScalarField {
        grid.sample(|x, y| 0.2 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.1 * (4.0 * PI * y).sin())
    }

    #[test]
    fn flat_laplacian_examples() {
        let grid = grid();
        let one = grid.constant(1.0);
        assert!(laplacian_flat(&grid, &one, &FlatMetric::IDENTITY).max_abs() < 1e-12);
        let f = grid.sample(|x, _| (2.0 * PI * x).sin());
        let lf = laplacian_flat(&grid, &f, &FlatMetric::IDENTITY);
        for k in 0..grid.len() {
            assert!((lf[k] - 4.0 * PI * PI * f[k]).abs() < 1e-9);
        }
        let f = grid.sample(|_, y| (2.0 * PI * y).sin());
        let lf = laplacian_flat(&grid, &f, &FlatMetric::diag(2.0, 0.5).unwrap());
        for k in 0..grid.len() {
            assert!((lf[k] - 8.0 * PI * PI * f[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn curvature_of_sine_factor() {
        let grid = grid();
        let u = grid.sample(|x, _| 0.1 * (2.0 * PI * x).sin());
        let cm = ConformalMetric::new(FlatMetric::IDENTITY, u);
        let r = scalar_curvature(&grid, &cm);
        let k = grid.idx(16, 0);
        assert!((r[k] - 6.4643).abs() < 2e-4, "{}", r[k]);
        let oracle = 0.8 * PI * PI * (-0.2f64).exp();
        assert!((r[k] - oracle).abs() < 1e-10);
    }

    #[test]
    fn general_curvature_matches_conformal_formula() {
        let grid = grid();
        let cm = ConformalMetric::new(FlatMetric::new(1.5, 0.5, 5.0 / 6.0).unwrap(), bump(&grid));
        let geo = Geometry::new(&grid, &cm.to_metric_field()).unwrap();
        let r = scalar_curvature(&grid, &cm);
        for k in 0..grid.len() {
            assert!((geo.scalar_curvature()[k] - r[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn integrate_examples() {
        let grid = grid();
        let one = grid.constant(1.0);
        let cm = ConformalMetric::flat(&grid, FlatMetric::IDENTITY);
        assert!((integrate(&grid, &one, &cm) - 1.0).abs() < 1e-14);
        let cm = ConformalMetric::new(FlatMetric::IDENTITY, grid.constant(0.3));
        assert!((integrate(&grid, &one, &cm) - (0.6f64).exp()).abs() < 1e-12);
        let two = grid.constant(2.0);
        let flat = ConformalMetric::flat(&grid, FlatMetric::IDENTITY);
        assert!((lp_norm(&grid, &two, &flat, 2.0) - 2.0).abs() < 1e-13);
        let s = grid.sample(|x, _| (2.0 * PI * x).sin());
        assert!((lp_norm(&grid, &s, &flat, f64::INFINITY) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn one_form_norm_of_du() {
        let grid = grid();
        let c = 0.2;
        let g = FlatMetric::new(2.0, 0.3, (1.0 + 0.09) / 2.0).unwrap();
        let u = grid.sample(|x, _| c * (2.0 * PI * x).sin());
        let geo = Geometry::conformal(&grid, &ConformalMetric::new(g, u.clone())).unwrap();
        let n = geo.norm_one_form(&geo.d(&u));
        for k in 0..grid.len() {
            let (x, _) = grid.coords(k);
            let want = (-2.0 * u[k]).exp() * g.inverse().xx * (2.0 * PI * c * (2.0 * PI * x).cos()).powi(2);
            assert!((n[k] * n[k] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn translations_are_killing_on_flat_metrics() {
        let grid = grid();
        let geo = Geometry::flat(&grid, &FlatMetric::new(2.0, 1.0, 1.0).unwrap());
        let v = VectorField { x: grid.constant(0.3), y: grid.constant(-1.1) };
        assert!(geo.killing(&v).max_abs() < 1e-12);
    }

    #[test]
    fn trace_free_kills_pure_trace_and_is_idempotent() {
        let grid = grid();
        let cm = ConformalMetric::new(FlatMetric::IDENTITY, bump(&grid));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let rho = grid.sample(|x, y| (2.0 * PI * (x + y)).cos());
        let h = geo.metric_field().g.weighted(&rho);
        assert!(geo.trace_free(&h).max_abs() < 1e-12);
        let k = SymTensorField {
            xx: rho.clone(),
            xy: grid.sample(|x, _| x.sin()),
            yy: grid.sample(|_, y| y.cos()),
        };
        let once = geo.trace_free(&k);
        let twice = geo.trace_free(&once);
        assert!(once.add_scaled(&twice, -1.0).max_abs() < 1e-12);
        assert!(geo.trace(&once).max_abs() < 1e-12);
    }

    #[test]
    fn killing_and_divergence_are_adjoint_with_factor_two() {
        let grid = grid();
        let cm = ConformalMetric::new(FlatMetric::new(1.2, -0.4, (1.0 + 0.16) / 1.2).unwrap(), bump(&grid));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let v = VectorField {
            x: grid.sample(|x, y| (2.0 * PI * y).sin() + 0.3 * (2.0 * PI * x).cos()),
            y: grid.sample(|x, y| (2.0 * PI * (x - y)).cos()),
        };
        let h = SymTensorField {
            xx: grid.sample(|x, _| (2.0 * PI * x).cos()),
            xy: grid.sample(|x, y| (2.0 * PI * (x + 2.0 * y)).sin()),
            yy: grid.sample(|_, y| (4.0 * PI * y).cos()),
        };
        let lhs = geo.l2_inner_sym(&geo.killing(&v), &h);
        let rhs = geo.pair(&v, &geo.divergence_sym(&h));
        assert!((lhs - 2.0 * rhs).abs() < 1e-8 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn curvature_scales_under_constant_shift() {
        let grid = grid();
        let u = bump(&grid);
        let c = 0.5;
        let r0 = scalar_curvature(&grid, &ConformalMetric::new(FlatMetric::IDENTITY, u.clone()));
        let r1 = scalar_curvature(&grid, &ConformalMetric::new(FlatMetric::IDENTITY, u.map(|v| v + c)));
        for k in 0..grid.len() {
            assert!((r1[k] - (-2.0 * c).exp() * r0[k]).abs() < 1e-12 * r0.max_abs());
        }
    }

    #[test]
    fn laplace_beltrami_is_conformal_rescaling_of_flat() {
        let grid = grid();
        let cm = ConformalMetric::new(FlatMetric::new(1.5, 0.5, 5.0 / 6.0).unwrap(), bump(&grid));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let f = grid.sample(|x, y| (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        let lb = geo.laplacian(&f);
        let lf = laplacian_flat(&grid, &f, &cm.base);
        for k in 0..grid.len() {
            assert!((lb[k] - (-2.0 * cm.u[k]).exp() * lf[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let grid = grid();
        let cm = ConformalMetric::new(FlatMetric::new(1.5, 0.5, 5.0 / 6.0).unwrap(), bump(&grid));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        for k in 0..grid.len() {
            let e = geo.frame(k);
            let gram = e.sandwich(&geo.g(k));
            assert!(gram.sub(&Sym2::IDENTITY).max_abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unit_determinant() {
        assert!(FlatMetric::new(2.0, 0.0, 1.0).is_err());
        let (g, det) = FlatMetric::normalized(Sym2::new(2.0, 0.0, 1.0)).unwrap();
        assert!((det - 2.0).abs() < 1e-15);
        assert!((g.matrix().xx - 2f64.sqrt()).abs() < 1e-15);
    }
}
