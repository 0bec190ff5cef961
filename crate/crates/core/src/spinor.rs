//! Spinors on the torus: Clifford algebra, spin connection, Dirac operator,
//! the T-tensor and the metric/spinor gradients of the spinorial energy.
//!
//! Spinor components are taken with respect to the symmetric orthonormal
//! frame `g^{-1/2}` of the current metric. Gamma matrices are
//! `γ₁ = iσ₁`, `γ₂ = iσ₂`, so `ω = γ₁γ₂ = −iσ₃`.

use serde::Serialize;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Sym2, SymTensorField, TorusGrid, Twist, VectorField};
use crate::metric::{FlatMetric, Geometry};

pub type Spinor = [Complex64; 2];

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Unit-norm tolerance accepted by the public gradient operators.
pub const UNIT_TOL: f64 = 1e-8;

/// Periodic (`false`) or antiperiodic (`true`) boundary phase per direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SpinStructure {
    pub x: bool,
    pub y: bool,
}

impl SpinStructure {
    pub fn twist(&self) -> Twist {
        Twist { x: self.x, y: self.y }
    }

    pub fn bits(&self) -> [u8; 2] {
        [self.x as u8, self.y as u8]
    }
}

pub fn gamma1(s: &Spinor) -> Spinor {
    [I * s[1], I * s[0]]
}

pub fn gamma2(s: &Spinor) -> Spinor {
    [s[1], -s[0]]
}

/// Volume element `ω = γ₁γ₂`.
pub fn omega(s: &Spinor) -> Spinor {
    [-I * s[0], I * s[1]]
}

pub fn gamma(a: usize, s: &Spinor) -> Spinor {
    if a == 0 {
        gamma1(s)
    } else {
        gamma2(s)
    }
}

/// Hermitian product, conjugate-linear in the first slot.
pub fn herm(a: &Spinor, b: &Spinor) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// Real inner product `Re⟨a, b⟩`.
pub fn real_inner(a: &Spinor, b: &Spinor) -> f64 {
    herm(a, b).re
}

pub fn norm_sq(a: &Spinor) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr()
}

fn axpy(a: &Spinor, s: f64, b: &Spinor) -> Spinor {
    [a[0] + b[0] * s, a[1] + b[1] * s]
}

fn add(a: &Spinor, b: &Spinor) -> Spinor {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: &Spinor, s: f64) -> Spinor {
    [a[0] * s, a[1] * s]
}

/// `e^{θ ω / 2} φ`.
pub fn rotate(s: &Spinor, theta: f64) -> Spinor {
    // ω is diagonal: diag(-i, i)
    [s[0] * Complex64::from_polar(1.0, -0.5 * theta), s[1] * Complex64::from_polar(1.0, 0.5 * theta)]
}

/// Gamma matrices together with the frame they represent; used to state the
/// Clifford relations as checkable matrix identities.
#[derive(Clone, Copy, Debug)]
pub struct CliffordFrame {
    /// `g^{1/2}` at a node; row `a` is the coframe one-form `e^a`.
    pub coframe: Sym2,
    pub gammas: [[[Complex64; 2]; 2]; 2],
    pub volume: [[Complex64; 2]; 2],
}

impl CliffordFrame {
    pub fn at(geo: &Geometry, k: usize) -> Self {
        let col = |f: fn(&Spinor) -> Spinor| {
            let a = f(&[Complex64::new(1.0, 0.0), ZERO]);
            let b = f(&[ZERO, Complex64::new(1.0, 0.0)]);
            [[a[0], b[0]], [a[1], b[1]]]
        };
        Self { coframe: geo.coframe(k), gammas: [col(gamma1), col(gamma2)], volume: col(omega) }
    }

    fn mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
        let mut m = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        m
    }

    /// Max deviation from `γᵢγⱼ + γⱼγᵢ = −2δᵢⱼ` and `ω² = −1`.
    pub fn relation_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let a = Self::mul(&self.gammas[i], &self.gammas[j]);
                let b = Self::mul(&self.gammas[j], &self.gammas[i]);
                for r in 0..2 {
                    for c in 0..2 {
                        let want = if i == j && r == c { -2.0 } else { 0.0 };
                        d = d.max((a[r][c] + b[r][c] - want).norm());
                    }
                }
            }
        }
        let w = Self::mul(&self.volume, &self.volume);
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((w[r][c] + if r == c { 1.0 } else { 0.0 }).norm());
            }
        }
        d
    }
}

/// Two-component complex field carrying its spin structure.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub data: Vec<Spinor>,
    pub structure: SpinStructure,
}

impl SpinorField {
    pub fn constant(grid: &TorusGrid, s: Spinor, structure: SpinStructure) -> Self {
        Self { data: vec![s; grid.len()], structure }
    }

    pub fn from_fn(grid: &TorusGrid, structure: SpinStructure, f: impl Fn(f64, f64) -> Spinor) -> Self {
        Self {
            data: (0..grid.len()).map(|k| {
                let (x, y) = grid.coords(k);
                f(x, y)
            }).collect(),
            structure,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self { data: vec![[ZERO; 2]; self.len()], structure: self.structure }
    }

    pub fn add_scaled(&self, other: &SpinorField, s: f64) -> Self {
        Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| axpy(a, s, b)).collect(),
            structure: self.structure,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { data: self.data.iter().map(|a| scale(a, s)).collect(), structure: self.structure }
    }

    /// Pointwise product with a real field.
    pub fn weighted(&self, w: &[f64]) -> Self {
        Self { data: self.data.iter().zip(w).map(|(a, &s)| scale(a, s)).collect(), structure: self.structure }
    }

    /// Largest `| |φ| − 1 |` over nodes.
    pub fn unit_deviation(&self) -> f64 {
        self.data.iter().map(|s| (norm_sq(s).sqrt() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Rescales every node to unit norm; returns the largest correction.
    pub fn normalize(&mut self) -> f64 {
        let dev = self.unit_deviation();
        for s in &mut self.data {
            let n = norm_sq(s).sqrt();
            *s = scale(s, 1.0 / n);
        }
        dev
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|s| s.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|s| norm_sq(s).sqrt()).fold(0.0, f64::max)
    }

    fn check_unit(&self) -> Result<()> {
        let dev = self.unit_deviation();
        if dev > UNIT_TOL || dev.is_nan() {
            return Err(Error::NonUnit { what: "spinor", deviation: dev });
        }
        Ok(())
    }

    /// `∫ Re⟨self, other⟩ vol_g`.
    pub fn l2_inner(&self, other: &SpinorField, geo: &Geometry) -> f64 {
        let f: Vec<f64> = self.data.iter().zip(&other.data).map(|(a, b)| real_inner(a, b)).collect();
        geo.integrate(&f)
    }

    /// Pointwise `φ ↦ e^{θ(x) ω/2} φ`.
    pub fn rotated(&self, theta: &[f64]) -> Self {
        Self {
            data: self.data.iter().zip(theta).map(|(s, &t)| rotate(s, t)).collect(),
            structure: self.structure,
        }
    }

}

/// Coordinate components `∂_i φ` of a spinor-valued field.
fn partials(grid: &TorusGrid, data: &[Spinor], twist: Twist) -> [Vec<Spinor>; 2] {
    let c0: Vec<Complex64> = data.iter().map(|s| s[0]).collect();
    let c1: Vec<Complex64> = data.iter().map(|s| s[1]).collect();
    let [a0, b0] = grid.gradient_complex(&c0, twist);
    let [a1, b1] = grid.gradient_complex(&c1, twist);
    [
        a0.into_iter().zip(a1).map(|(p, q)| [p, q]).collect(),
        b0.into_iter().zip(b1).map(|(p, q)| [p, q]).collect(),
    ]
}

/// Coordinate components `∇_i φ`, `i ∈ {x, y}`.
#[derive(Clone, Debug)]
pub struct SpinorOneForm {
    pub comps: [Vec<Spinor>; 2],
}

impl SpinorOneForm {
    /// Frame components `∇_{e_a} φ = F^i_a ∇_i φ`.
    pub fn frame_component(&self, geo: &Geometry, a: usize, k: usize) -> Spinor {
        let f = geo.frame(k);
        axpy(&scale(&self.comps[0][k], f.get(0, a)), f.get(1, a), &self.comps[1][k])
    }
}

/// Spin covariant derivative `∇_i φ = ∂_i φ + A_i ω·φ`.
pub fn spin_covariant_derivative(geo: &Geometry, phi: &SpinorField) -> SpinorOneForm {
    let grid = geo.grid();
    let mut comps = partials(grid, &phi.data, phi.structure.twist());
    let conn = geo.spin_connection();
    for (i, comp) in comps.iter_mut().enumerate() {
        for (k, v) in comp.iter_mut().enumerate() {
            *v = axpy(v, conn[i][k], &omega(&phi.data[k]));
        }
    }
    SpinorOneForm { comps }
}

/// Coordinate Clifford action of `∂_i`: `Γ_i = Σ_a (g^{1/2})_{ai} γ_a`.
fn coord_clifford(geo: &Geometry, i: usize, k: usize, s: &Spinor) -> Spinor {
    let c = geo.coframe(k);
    axpy(&scale(&gamma1(s), c.get(0, i)), c.get(1, i), &gamma2(s))
}

/// Clifford multiplication by a vector field.
pub fn clifford_mul(geo: &Geometry, v: &VectorField, phi: &SpinorField) -> SpinorField {
    SpinorField {
        data: (0..phi.len())
            .map(|k| {
                let a = coord_clifford(geo, 0, k, &phi.data[k]);
                let b = coord_clifford(geo, 1, k, &phi.data[k]);
                axpy(&scale(&a, v.x[k]), v.y[k], &b)
            })
            .collect(),
        structure: phi.structure,
    }
}

/// Dirac operator `D = Σ_a e_a · ∇_{e_a}`.
pub fn dirac(geo: &Geometry, phi: &SpinorField) -> SpinorField {
    let nabla = spin_covariant_derivative(geo, phi);
    dirac_from(geo, &nabla, phi.structure)
}

fn dirac_from(geo: &Geometry, nabla: &SpinorOneForm, structure: SpinStructure) -> SpinorField {
    SpinorField {
        data: (0..geo.len())
            .map(|k| {
                let a = nabla.frame_component(geo, 0, k);
                let b = nabla.frame_component(geo, 1, k);
                add(&gamma1(&a), &gamma2(&b))
            })
            .collect(),
        structure,
    }
}

/// Second covariant derivative `∇²_{ij} φ = ∂_i(∇_j φ) + A_i ω ∇_j φ − Γ^k_ij ∇_k φ`,
/// indexed `[i][j]`.
fn second_coordinate(geo: &Geometry, nabla: &SpinorOneForm, structure: SpinStructure) -> [[Vec<Spinor>; 2]; 2] {
    let grid = geo.grid();
    let twist = structure.twist();
    let [dx_of_x, dy_of_x] = partials(grid, &nabla.comps[0], twist);
    let [dx_of_y, dy_of_y] = partials(grid, &nabla.comps[1], twist);
    // raw[i][j] = ∂_i ∇_j φ
    let mut raw = [[dx_of_x, dx_of_y], [dy_of_x, dy_of_y]];
    let conn = geo.spin_connection();
    for k in 0..grid.len() {
        let gm = geo.christoffel(k);
        for i in 0..2 {
            for j in 0..2 {
                let mut v = axpy(&raw[i][j][k], conn[i][k], &omega(&nabla.comps[j][k]));
                for m in 0..2 {
                    v = axpy(&v, -gm[m][i][j], &nabla.comps[m][k]);
                }
                raw[i][j][k] = v;
            }
        }
    }
    raw
}

/// Rough Laplacian `∇*∇ φ = −g^{ij} ∇²_{ij} φ`.
pub fn connection_laplacian(geo: &Geometry, phi: &SpinorField) -> SpinorField {
    let nabla = spin_covariant_derivative(geo, phi);
    let second = second_coordinate(geo, &nabla, phi.structure);
    rough_laplacian_from(geo, &second, phi.structure)
}

fn rough_laplacian_from(geo: &Geometry, second: &[[Vec<Spinor>; 2]; 2], structure: SpinStructure) -> SpinorField {
    SpinorField {
        data: (0..geo.len())
            .map(|k| {
                let gi = geo.ginv(k);
                let mut v = [ZERO; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        v = axpy(&v, -gi.get(i, j), &second[i][j][k]);
                    }
                }
                v
            })
            .collect(),
        structure,
    }
}

/// Frame components `H_ab = ∇²φ(e_a, e_b)` split into symmetric and
/// antisymmetric parts (`H = sym + asym`, orthogonal).
#[derive(Clone, Debug)]
pub struct SecondDerivative {
    pub sym: Vec<[[Spinor; 2]; 2]>,
    pub asym: Vec<[[Spinor; 2]; 2]>,
}

fn frame_norm_sq(m: &[[Spinor; 2]; 2]) -> f64 {
    m.iter().flatten().map(norm_sq).sum()
}

impl SecondDerivative {
    pub fn full_norm_sq(&self) -> ScalarField {
        ScalarField(
            self.sym
                .iter()
                .zip(&self.asym)
                .map(|(s, a)| {
                    let mut t = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            t += norm_sq(&add(&s[i][j], &a[i][j]));
                        }
                    }
                    t
                })
                .collect(),
        )
    }

    pub fn sym_norm_sq(&self) -> ScalarField {
        ScalarField(self.sym.iter().map(frame_norm_sq).collect())
    }

    pub fn asym_norm_sq(&self) -> ScalarField {
        ScalarField(self.asym.iter().map(frame_norm_sq).collect())
    }

    /// `Σ_{a,b} |R^Σ(e_a, e_b) φ|²` where `R^Σ(e_a, e_b) = H_ab − H_ba`,
    /// i.e. `4 |asym|²`.
    pub fn curvature_norm_sq(&self) -> ScalarField {
        self.asym_norm_sq().scaled(4.0)
    }

    /// `R^Σ(e₁, e₂) φ` per node.
    pub fn curvature_action(&self) -> Vec<Spinor> {
        self.asym.iter().map(|a| scale(&a[0][1], 2.0)).collect()
    }
}

pub fn second_covariant_derivative(geo: &Geometry, phi: &SpinorField) -> SecondDerivative {
    let nabla = spin_covariant_derivative(geo, phi);
    let second = second_coordinate(geo, &nabla, phi.structure);
    second_frame(geo, &second)
}

fn second_frame(geo: &Geometry, second: &[[Vec<Spinor>; 2]; 2]) -> SecondDerivative {
    let mut sym = Vec::with_capacity(geo.len());
    let mut asym = Vec::with_capacity(geo.len());
    for k in 0..geo.len() {
        let f = geo.frame(k);
        let mut h = [[[ZERO; 2]; 2]; 2];
        for (a, row) in h.iter_mut().enumerate() {
            for (b, hab) in row.iter_mut().enumerate() {
                let mut v = [ZERO; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        v = axpy(&v, f.get(i, a) * f.get(j, b), &second[i][j][k]);
                    }
                }
                *hab = v;
            }
        }
        let mut s = [[[ZERO; 2]; 2]; 2];
        let mut t = [[[ZERO; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] = scale(&add(&h[a][b], &h[b][a]), 0.5);
                t[a][b] = scale(&axpy(&h[a][b], -1.0, &h[b][a]), 0.5);
            }
        }
        sym.push(s);
        asym.push(t);
    }
    SecondDerivative { sym, asym }
}

/// `T(∂_i, ∂_j, ∂_k) = sym_{jk} Re⟨∂_i·∂_j·φ, ∇_k φ⟩`, stored as
/// `t[i]` = `(T_ixx, T_ixy, T_iyy)`.
#[derive(Clone, Debug)]
pub struct TTensor {
    pub t: [SymTensorField; 2],
}

pub fn tensor_t(geo: &Geometry, phi: &SpinorField) -> TTensor {
    let nabla = spin_covariant_derivative(geo, phi);
    tensor_t_from(geo, phi, &nabla)
}

fn tensor_t_from(geo: &Geometry, phi: &SpinorField, nabla: &SpinorOneForm) -> TTensor {
    let t = [0, 1].map(|i| {
        SymTensorField::from_fn(geo.len(), |k| {
            let p = &phi.data[k];
            let cc = |j: usize| coord_clifford(geo, i, k, &coord_clifford(geo, j, k, p));
            let c = [cc(0), cc(1)];
            let e = |j: usize, l: usize| {
                0.5 * (real_inner(&c[j], &nabla.comps[l][k]) + real_inner(&c[l], &nabla.comps[j][k]))
            };
            Sym2::new(e(0, 0), e(0, 1), e(1, 1))
        })
    });
    TTensor { t }
}

/// `(div T)_{jk} = −g^{il} (∇_l T)_{ijk}`.
pub fn div_t(geo: &Geometry, t: &TTensor) -> SymTensorField {
    let grid = geo.grid();
    // d[i][l] = ∂_l T_i..
    let d: Vec<[SymTensorField; 2]> = t
        .t
        .iter()
        .map(|ti| {
            let [xx_x, xx_y] = grid.gradient(&ti.xx);
            let [xy_x, xy_y] = grid.gradient(&ti.xy);
            let [yy_x, yy_y] = grid.gradient(&ti.yy);
            [
                SymTensorField { xx: xx_x, xy: xy_x, yy: yy_x },
                SymTensorField { xx: xx_y, xy: xy_y, yy: yy_y },
            ]
        })
        .collect();
    SymTensorField::from_fn(grid.len(), |n| {
        let gm = geo.christoffel(n);
        let gi = geo.ginv(n);
        let tv = |i: usize, j: usize, k: usize| t.t[i].at(n).get(j, k);
        let cov = |l: usize, i: usize, j: usize, k: usize| {
            let mut v = d[i][l].at(n).get(j, k);
            for m in 0..2 {
                v -= gm[m][l][i] * tv(m, j, k) + gm[m][l][j] * tv(i, m, k) + gm[m][l][k] * tv(i, j, m);
            }
            v
        };
        let e = |j: usize, k: usize| {
            let mut s = 0.0;
            for i in 0..2 {
                for l in 0..2 {
                    s += gi.get(i, l) * cov(l, i, j, k);
                }
            }
            -s
        };
        Sym2::new(e(0, 0), e(0, 1), e(1, 1))
    })
}

/// Everything the spinor flow needs from one evaluation at `(g, φ)`.
#[derive(Clone, Debug)]
pub struct SpinorGradients {
    pub nabla: SpinorOneForm,
    /// `|∇φ|²_g`
    pub nabla_sq: ScalarField,
    pub q1: SymTensorField,
    pub q2: SpinorField,
    pub energy: f64,
}

/// `Q₁`, `Q₂` and `E` without the unit-norm precondition check.
pub(crate) fn gradients_unchecked(geo: &Geometry, phi: &SpinorField) -> SpinorGradients {
    let nabla = spin_covariant_derivative(geo, phi);
    let len = geo.len();
    let nabla_sq = ScalarField(
        (0..len)
            .map(|k| {
                let gi = geo.ginv(k);
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += gi.get(i, j) * real_inner(&nabla.comps[i][k], &nabla.comps[j][k]);
                    }
                }
                s
            })
            .collect(),
    );
    let t = tensor_t_from(geo, phi, &nabla);
    let dt = div_t(geo, &t);
    let q1 = SymTensorField::from_fn(len, |k| {
        let g = geo.g(k);
        let e = |j: usize, l: usize| real_inner(&nabla.comps[j][k], &nabla.comps[l][k]);
        let outer = Sym2::new(e(0, 0), e(0, 1), e(1, 1));
        g.scaled(-0.25 * nabla_sq[k]).sub(&dt.at(k).scaled(0.25)).add(&outer.scaled(0.5))
    });
    let second = second_coordinate(geo, &nabla, phi.structure);
    let rough = rough_laplacian_from(geo, &second, phi.structure);
    let q2 = SpinorField {
        data: (0..len).map(|k| axpy(&scale(&rough.data[k], -1.0), nabla_sq[k], &phi.data[k])).collect(),
        structure: phi.structure,
    };
    let energy = 0.5 * geo.integrate(&nabla_sq);
    SpinorGradients { nabla, nabla_sq, q1, q2, energy }
}

/// `Q₁`, `Q₂` and `E` at a unit spinor.
pub fn spinor_gradients(geo: &Geometry, phi: &SpinorField) -> Result<SpinorGradients> {
    phi.check_unit()?;
    Ok(gradients_unchecked(geo, phi))
}

/// Metric gradient `Q₁ = −¼|∇φ|² g − ¼ div T + ½ Re⟨∇φ ⊗ ∇φ⟩`.
pub fn q1(geo: &Geometry, phi: &SpinorField) -> Result<SymTensorField> {
    Ok(spinor_gradients(geo, phi)?.q1)
}

/// Spinor gradient `Q₂ = −∇*∇φ + |∇φ|² φ`.
pub fn q2(geo: &Geometry, phi: &SpinorField) -> Result<SpinorField> {
    Ok(spinor_gradients(geo, phi)?.q2)
}

/// `E = ½ ∫ |∇φ|² vol_g`; defined for any spinor.
pub fn energy(geo: &Geometry, phi: &SpinorField) -> f64 {
    let nabla = spin_covariant_derivative(geo, phi);
    let f: Vec<f64> = (0..geo.len())
        .map(|k| {
            let gi = geo.ginv(k);
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += gi.get(i, j) * real_inner(&nabla.comps[i][k], &nabla.comps[j][k]);
                }
            }
            s
        })
        .collect();
    0.5 * geo.integrate(&f)
}

/// Which metric lowers `X` and takes `d` in the spinorial Lie derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LieFlat {
    /// `X♭` and `dX♭(e₁, e₂)` with respect to `g` itself.
    Metric,
    /// `X♭` with respect to a flat background, contracted on its frame.
    Background(FlatMetric),
}

/// Kosmann derivative `L̃_X φ = ∇_X φ − ¼ dX♭ · φ`.
pub fn spin_lie_derivative(geo: &Geometry, x: &VectorField, phi: &SpinorField, flat: LieFlat) -> SpinorField {
    let grid = geo.grid();
    let nabla = spin_covariant_derivative(geo, phi);
    let (lowered, density): (crate::grid::OneFormField, Vec<f64>) = match flat {
        LieFlat::Metric => (geo.lower(x), geo.density().to_vec()),
        LieFlat::Background(g) => {
            let flat_geo = Geometry::flat(grid, &g);
            (flat_geo.lower(x), vec![1.0; grid.len()])
        }
    };
    let [_, ax_y] = grid.gradient(&lowered.x);
    let [ay_x, _] = grid.gradient(&lowered.y);
    SpinorField {
        data: (0..grid.len())
            .map(|k| {
                let dir = axpy(&scale(&nabla.comps[0][k], x.x[k]), x.y[k], &nabla.comps[1][k]);
                let beta12 = (ay_x[k] - ax_y[k]) / density[k];
                axpy(&dir, -0.25 * beta12, &omega(&phi.data[k]))
            })
            .collect(),
        structure: phi.structure,
    }
}

/// Rotation rate of the symmetric frame `g^{-1/2}` relative to the
/// parallel (Bourguignon–Gauduchon) transport when the metric moves with
/// velocity `gdot`. A spinor held fixed under that transport has components
/// `e^{−sθ̇ω/2} φ` in the moved frame, so flows add `−½ θ̇ ω φ` to `φ̇`.
pub fn frame_rotation_rate(g: &Sym2, gdot: &Sym2) -> f64 {
    let a = g.sqrt();
    // A Ȧ + Ȧ A = ġ for symmetric Ȧ = [[p, q], [q, r]]
    let m = [
        [2.0 * a.xx, 2.0 * a.xy, 0.0],
        [a.xy, a.xx + a.yy, a.xy],
        [0.0, 2.0 * a.xy, 2.0 * a.yy],
    ];
    let rhs = [gdot.xx, gdot.xy, gdot.yy];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let solve = |c: usize| {
        let mut mc = m;
        for (row, r) in mc.iter_mut().zip(rhs) {
            row[c] = r;
        }
        det3(&mc) / d
    };
    let adot = Sym2::new(solve(0), solve(1), solve(2));
    let ai = a.inverse();
    // M = −Ȧ A^{-1}; θ̇ is the (2,1) entry of its skew part
    let m21 = -(adot.xy * ai.xx + adot.yy * ai.xy);
    let m12 = -(adot.xx * ai.xy + adot.xy * ai.yy);
    0.5 * (m21 - m12)
}

/// Pointwise frame rotation rates for a metric field velocity.
pub fn frame_rotation_field(geo: &Geometry, gdot: &SymTensorField) -> ScalarField {
    ScalarField((0..geo.len()).map(|k| frame_rotation_rate(&geo.g(k), &gdot.at(k))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{ConformalMetric, MetricField};
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(64).unwrap()
    }

    fn u_field(grid: &TorusGrid) -> ScalarField {
        grid.sample(|x, y| 0.15 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.1 * (2.0 * PI * y).sin())
    }

    fn wavy_spinor(grid: &TorusGrid, st: SpinStructure) -> SpinorField {
        let sx = if st.x { 1.0 } else { 0.0 };
        let sy = if st.y { 1.0 } else { 0.0 };
        let mut phi = SpinorField::from_fn(grid, st, |x, y| {
            let base = Complex64::from_polar(1.0, PI * (sx * x + sy * y));
            [
                base * (1.0 + 0.3 * (2.0 * PI * y).cos()),
                base * Complex64::new(0.4 * (2.0 * PI * x).sin(), 0.2 * (2.0 * PI * (x + y)).cos()),
            ]
        });
        phi.normalize();
        phi
    }

    fn conformal_geo(grid: &TorusGrid) -> Geometry<'_> {
        let g = FlatMetric::new(1.25, 0.25, (1.0 + 0.0625) / 1.25).unwrap();
        Geometry::conformal(grid, &ConformalMetric::new(g, u_field(grid))).unwrap()
    }

    #[test]
    fn clifford_relations_hold() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        assert_eq!(CliffordFrame::at(&geo, 5).relation_defect(), 0.0);
        let s = [Complex64::new(0.3, -0.1), Complex64::new(0.2, 0.9)];
        let g11 = gamma1(&gamma1(&s));
        assert!((g11[0] + s[0]).norm() < 1e-15 && (g11[1] + s[1]).norm() < 1e-15);
        let ac = add(&gamma1(&gamma2(&s)), &gamma2(&gamma1(&s)));
        assert!(norm_sq(&ac) < 1e-30);
    }

    #[test]
    fn clifford_action_is_skew() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        let phi = wavy_spinor(&grid, SpinStructure::default());
        let v = VectorField { x: grid.sample(|x, _| x.cos()), y: grid.sample(|_, y| 1.0 + y) };
        let w = clifford_mul(&geo, &v, &phi);
        for k in 0..grid.len() {
            assert!(real_inner(&w.data[k], &phi.data[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_spinor_is_parallel_on_flat_metric() {
        let grid = grid();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let phi = SpinorField::constant(&grid, [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)], SpinStructure::default());
        let nabla = spin_covariant_derivative(&geo, &phi);
        assert!(nabla.comps.iter().flatten().all(|s| norm_sq(s) < 1e-28));
        let g = spinor_gradients(&geo, &phi).unwrap();
        assert!(g.q1.max_abs() < 1e-14);
        assert!(g.q2.max_abs() < 1e-14);
        assert!(g.energy.abs() < 1e-28);
        assert!(dirac(&geo, &phi).max_abs() < 1e-14);
    }

    #[test]
    fn metric_compatibility() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        let mut phi = wavy_spinor(&grid, SpinStructure { x: true, y: false });
        // break unit norm so that d|φ|² is non-trivial
        phi = phi.weighted(&grid.sample(|x, y| 1.0 + 0.2 * (2.0 * PI * (x - y)).sin()));
        let n2: Vec<f64> = phi.data.iter().map(norm_sq).collect();
        let d = grid.gradient(&n2);
        let nabla = spin_covariant_derivative(&geo, &phi);
        for i in 0..2 {
            for k in 0..grid.len() {
                let rhs = 2.0 * real_inner(&nabla.comps[i][k], &phi.data[k]);
                assert!((d[i][k] - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dirac_is_conformally_covariant() {
        let grid = grid();
        let g = FlatMetric::new(1.25, 0.25, (1.0 + 0.0625) / 1.25).unwrap();
        let u = u_field(&grid);
        let geo = Geometry::conformal(&grid, &ConformalMetric::new(g, u.clone())).unwrap();
        let flat = Geometry::flat(&grid, &g);
        let phi = wavy_spinor(&grid, SpinStructure { x: false, y: true });
        let lhs = dirac(&geo, &phi.weighted(&u.map(|v| (-0.5 * v).exp())));
        let rhs = dirac(&flat, &phi).weighted(&u.map(|v| (-1.5 * v).exp()));
        let err = lhs.add_scaled(&rhs, -1.0).max_abs();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn plane_wave_is_dirac_eigenspinor() {
        let grid = grid();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let (k1, k2) = (1.0f64, 2.0f64);
        let kn = (k1 * k1 + k2 * k2).sqrt();
        let v = [Complex64::new(k1, -k2), Complex64::new(kn, 0.0)];
        let phi = SpinorField::from_fn(&grid, SpinStructure::default(), |x, y| {
            let e = Complex64::from_polar(1.0, 2.0 * PI * (k1 * x + k2 * y));
            [v[0] * e, v[1] * e]
        });
        let d = dirac(&geo, &phi);
        let err = d.add_scaled(&phi, 2.0 * PI * kn).max_abs();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn lichnerowicz_and_curvature_identities() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        for st in [SpinStructure::default(), SpinStructure { x: true, y: true }] {
            let phi = wavy_spinor(&grid, st);
            let dd = dirac(&geo, &dirac(&geo, &phi));
            let rough = connection_laplacian(&geo, &phi);
            let r = geo.scalar_curvature();
            let res = dd.add_scaled(&rough, -1.0).add_scaled(&phi.weighted(r), -0.25);
            assert!(res.max_abs() < 1e-8, "{}", res.max_abs());

            let sd = second_covariant_derivative(&geo, &phi);
            let curv = sd.curvature_norm_sq();
            let asym = sd.asym_norm_sq();
            let full = sd.full_norm_sq();
            let parts = sd.sym_norm_sq().add_scaled(&asym, 1.0);
            for k in 0..grid.len() {
                assert!((curv[k] - r[k] * r[k] / 8.0).abs() < 1e-8);
                assert!((asym[k] - r[k] * r[k] / 32.0).abs() < 1e-8);
                assert!((full[k] - parts[k]).abs() < 1e-10);
                let want = scale(&omega(&phi.data[k]), -0.25 * r[k]);
                let got = sd.curvature_action()[k];
                assert!(norm_sq(&axpy(&got, -1.0, &want)) < 1e-16);
            }
        }
    }

    #[test]
    fn trace_identity_and_tangency() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        let phi = wavy_spinor(&grid, SpinStructure { x: true, y: false });
        let gr = spinor_gradients(&geo, &phi).unwrap();
        let tr = geo.trace(&gr.q1);
        let d = dirac(&geo, &phi);
        let r = geo.scalar_curvature();
        for k in 0..grid.len() {
            let want = -r[k] / 16.0 - 0.25 * gr.nabla_sq[k] + 0.25 * norm_sq(&d.data[k]);
            assert!((tr[k] - want).abs() < 1e-8, "{} vs {}", tr[k], want);
            assert!(real_inner(&gr.q2.data[k], &phi.data[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn t_tensor_vanishes_for_parallel_spinor() {
        let grid = grid();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let phi = SpinorField::constant(&grid, [Complex64::new(1.0, 0.0), ZERO], SpinStructure::default());
        let t = tensor_t(&geo, &phi);
        assert!(t.t[0].max_abs() < 1e-15 && t.t[1].max_abs() < 1e-15);
    }

    #[test]
    fn rejects_non_unit_spinor() {
        let grid = grid();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let phi = SpinorField::constant(&grid, [Complex64::new(2.0, 0.0), ZERO], SpinStructure::default());
        assert!(matches!(q2(&geo, &phi), Err(Error::NonUnit { .. })));
    }

    fn general_metric(grid: &TorusGrid) -> MetricField {
        MetricField {
            g: SymTensorField {
                xx: grid.sample(|x, y| 1.2 + 0.2 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()),
                xy: grid.sample(|x, y| 0.1 * (2.0 * PI * (x + y)).cos()),
                yy: grid.sample(|x, y| 0.9 + 0.15 * (2.0 * PI * y).sin() + 0.05 * (2.0 * PI * x).cos()),
            },
        }
    }

    fn perturbation(grid: &TorusGrid) -> SymTensorField {
        SymTensorField {
            xx: grid.sample(|x, y| (2.0 * PI * (x - y)).sin()),
            xy: grid.sample(|x, y| 0.5 * (2.0 * PI * x).cos() + 0.3 * (2.0 * PI * y).sin()),
            yy: grid.sample(|x, y| (4.0 * PI * x).cos() * (2.0 * PI * y).sin()),
        }
    }

    #[test]
    fn q1_is_metric_gradient_with_frame_transport() {
        let grid = grid();
        let mf = general_metric(&grid);
        let geo = Geometry::new(&grid, &mf).unwrap();
        let phi = wavy_spinor(&grid, SpinStructure { x: false, y: true });
        let h = perturbation(&grid);
        let gr = spinor_gradients(&geo, &phi).unwrap();
        let theta = frame_rotation_field(&geo, &h);
        let s = 1e-4;
        let e_at = |s: f64| {
            let m = MetricField { g: mf.g.add_scaled(&h, s) };
            let g = Geometry::new(&grid, &m).unwrap();
            energy(&g, &phi.rotated(&theta.scaled(-s)))
        };
        let fd = (e_at(s) - e_at(-s)) / (2.0 * s);
        let want = -geo.l2_inner_sym(&gr.q1, &h);
        assert!((fd - want).abs() < 1e-5 * want.abs(), "fd {fd} vs {want}");
    }

    #[test]
    fn q2_is_spinor_gradient() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        let phi = wavy_spinor(&grid, SpinStructure { x: true, y: true });
        let gr = spinor_gradients(&geo, &phi).unwrap();
        let mut psi = SpinorField::from_fn(&grid, phi.structure, |x, y| {
            let b = Complex64::from_polar(1.0, PI * (x + y));
            [b * (2.0 * PI * y).sin(), b * Complex64::new(0.0, (2.0 * PI * x).cos())]
        });
        for (p, f) in psi.data.iter_mut().zip(&phi.data) {
            let c = real_inner(f, p);
            *p = axpy(p, -c, f);
        }
        let s = 1e-4;
        let e_at = |s: f64| {
            let mut q = phi.add_scaled(&psi, s);
            q.normalize();
            energy(&geo, &q)
        };
        let fd = (e_at(s) - e_at(-s)) / (2.0 * s);
        let want = -gr.q2.l2_inner(&psi, &geo);
        assert!((fd - want).abs() < 1e-5 * want.abs(), "fd {fd} vs {want}");
    }

    #[test]
    fn diffeomorphism_invariance_selects_lie_derivative() {
        let grid = grid();
        let mf = general_metric(&grid);
        let geo = Geometry::new(&grid, &mf).unwrap();
        let phi = wavy_spinor(&grid, SpinStructure::default());
        let gr = spinor_gradients(&geo, &phi).unwrap();
        let x = VectorField {
            x: grid.sample(|_, y| (2.0 * PI * y).sin() + 0.2),
            y: grid.sample(|x, _| (2.0 * PI * x).cos()),
        };
        let lie_g = geo.killing(&x);
        let lie_phi = spin_lie_derivative(&geo, &x, &phi, LieFlat::Metric);
        let a = geo.l2_inner_sym(&gr.q1, &lie_g);
        let b = gr.q2.l2_inner(&lie_phi, &geo);
        assert!((a + b).abs() < 1e-8 * (a.abs() + b.abs()), "{a} + {b}");

        let cm = ConformalMetric::new(FlatMetric::IDENTITY, u_field(&grid));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let gr = spinor_gradients(&geo, &phi).unwrap();
        let a = geo.l2_inner_sym(&gr.q1, &geo.killing(&x));
        let bg = spin_lie_derivative(&geo, &x, &phi, LieFlat::Background(FlatMetric::IDENTITY));
        let b = gr.q2.l2_inner(&bg, &geo);
        assert!((a + b).abs() > 1e-4 * (a.abs() + b.abs()), "background lowering unexpectedly invariant");
    }

    #[test]
    fn lie_derivative_preserves_unit_norm() {
        let grid = grid();
        let geo = conformal_geo(&grid);
        let phi = wavy_spinor(&grid, SpinStructure::default());
        let x = VectorField { x: grid.sample(|_, y| (2.0 * PI * y).sin()), y: grid.sample(|x, _| (2.0 * PI * x).sin()) };
        for flat in [LieFlat::Metric, LieFlat::Background(FlatMetric::IDENTITY)] {
            let l = spin_lie_derivative(&geo, &x, &phi, flat);
            for k in 0..grid.len() {
                assert!(real_inner(&l.data[k], &phi.data[k]).abs() < 1e-9);
            }
        }
        let zero = spin_lie_derivative(&geo, &VectorField::zeros(&grid), &phi, LieFlat::Metric);
        assert_eq!(zero.max_abs(), 0.0);
    }
}
