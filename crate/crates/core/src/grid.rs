//! Periodic grid on the unit torus and the spectral transforms behind every
//! derivative in the crate.
//!
//! Nodes are stored row-major: `idx = j * n + i`, where `i` indexes `x` and
//! `j` indexes `y`, so node `(i, j)` sits at `(i h, j h)` with `h = 1/n`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Boundary twist of a field in each lattice direction. `true` means the field
/// changes sign across the fundamental domain (antiperiodic), which is how the
/// non-trivial spin structures appear on the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Twist {
    pub x: bool,
    pub y: bool,
}

impl Twist {
    pub const PERIODIC: Twist = Twist { x: false, y: false };

    fn any(self) -> bool {
        self.x || self.y
    }
}

pub struct TorusGrid {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.n).finish()
    }
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(n));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Area of one grid cell in coordinate measure.
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let h = self.h();
        ((idx % self.n) as f64 * h, (idx / self.n) as f64 * h)
    }

    /// Field of `f(x, y)` sampled at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField((0..self.len()).map(|k| {
            let (x, y) = self.coords(k);
            f(x, y)
        }).collect())
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField(vec![c; self.len()])
    }

    pub fn zeros(&self) -> ScalarField {
        self.constant(0.0)
    }

    /// Signed integer wavenumber of FFT bin `k`; the Nyquist bin maps to `-n/2`.
    fn signed_bin(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }

    /// Angular wavenumber used for first derivatives. Zero on the Nyquist bin
    /// of periodic directions so that derivatives of real fields stay real.
    fn first_symbol(&self, k: usize, twisted: bool) -> f64 {
        if twisted {
            2.0 * PI * (self.signed_bin(k) as f64 + 0.5)
        } else if self.is_nyquist(k) {
            0.0
        } else {
            2.0 * PI * self.signed_bin(k) as f64
        }
    }

    fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = data[j * n + i];
            }
            plan.process(&mut col);
            for j in 0..n {
                data[j * n + i] = col[j];
            }
        }
        if !forward {
            let s = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn twist_phase(&self, idx: usize, twist: Twist, sign: f64) -> Complex64 {
        let (x, y) = self.coords(idx);
        let mut arg = 0.0;
        if twist.x {
            arg += x;
        }
        if twist.y {
            arg += y;
        }
        Complex64::from_polar(1.0, sign * PI * arg)
    }

    /// Spectral coefficients of a (possibly twisted) complex field.
    pub fn spectrum(&self, f: &[Complex64], twist: Twist) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        if twist.any() {
            for (k, v) in buf.iter_mut().enumerate() {
                *v *= self.twist_phase(k, twist, -1.0);
            }
        }
        self.fft2(&mut buf, true);
        buf
    }

    fn synthesize(&self, mut spec: Vec<Complex64>, twist: Twist) -> Vec<Complex64> {
        self.fft2(&mut spec, false);
        if twist.any() {
            for (k, v) in spec.iter_mut().enumerate() {
                *v *= self.twist_phase(k, twist, 1.0);
            }
        }
        spec
    }

    /// `(d/dx f, d/dy f)` of a complex field with the given twist.
    pub fn gradient_complex(&self, f: &[Complex64], twist: Twist) -> [Vec<Complex64>; 2] {
        let spec = self.spectrum(f, twist);
        let n = self.n;
        let mut dx = vec![Complex64::new(0.0, 0.0); n * n];
        let mut dy = dx.clone();
        for ky in 0..n {
            let sy = self.first_symbol(ky, twist.y);
            for kx in 0..n {
                let sx = self.first_symbol(kx, twist.x);
                let c = spec[ky * n + kx];
                dx[ky * n + kx] = Complex64::new(0.0, sx) * c;
                dy[ky * n + kx] = Complex64::new(0.0, sy) * c;
            }
        }
        [self.synthesize(dx, twist), self.synthesize(dy, twist)]
    }

    /// `(d/dx f, d/dy f)` of a periodic real field.
    pub fn gradient(&self, f: &[f64]) -> [ScalarField; 2] {
        let c: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let [dx, dy] = self.gradient_complex(&c, Twist::PERIODIC);
        [
            ScalarField(dx.iter().map(|v| v.re).collect()),
            ScalarField(dy.iter().map(|v| v.re).collect()),
        ]
    }

    pub fn dx(&self, f: &[f64]) -> ScalarField {
        let [dx, _] = self.gradient(f);
        dx
    }

    pub fn dy(&self, f: &[f64]) -> ScalarField {
        let [_, dy] = self.gradient(f);
        dy
    }

    fn mode(&self, kx: usize, ky: usize) -> Mode {
        Mode {
            wx: 2.0 * PI * self.signed_bin(kx) as f64,
            wy: 2.0 * PI * self.signed_bin(ky) as f64,
            nyq_x: self.is_nyquist(kx),
            nyq_y: self.is_nyquist(ky),
        }
    }

    /// Applies a real Fourier multiplier to a periodic real field. The
    /// multiplier must be even in the mode so the result stays real.
    pub fn apply_symbol(&self, f: &[f64], symbol: impl Fn(Mode) -> f64) -> ScalarField {
        let n = self.n;
        let mut spec: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut spec, true);
        for ky in 0..n {
            for kx in 0..n {
                spec[ky * n + kx] *= symbol(self.mode(kx, ky));
            }
        }
        self.fft2(&mut spec, false);
        ScalarField(spec.iter().map(|v| v.re).collect())
    }

    /// `(f_xx, f_xy, f_yy)` of a periodic real field from a single transform.
    pub fn second_derivatives(&self, f: &[f64]) -> [ScalarField; 3] {
        let n = self.n;
        let mut spec: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut spec, true);
        let mut xx = spec.clone();
        let mut xy = spec.clone();
        let mut yy = spec;
        for ky in 0..n {
            for kx in 0..n {
                let m = self.mode(kx, ky);
                let k = ky * n + kx;
                xx[k] *= -m.wx * m.wx;
                xy[k] *= -m.odd_x() * m.odd_y();
                yy[k] *= -m.wy * m.wy;
            }
        }
        [xx, xy, yy].map(|mut s| {
            self.fft2(&mut s, false);
            ScalarField(s.iter().map(|v| v.re).collect())
        })
    }

    /// Coordinate mean (integral over the unit square).
    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / self.len() as f64
    }

    /// Solves a 2x2 linear system per Fourier mode for a pair of periodic real
    /// fields. `solve(wx, wy, [a, b])` returns the transformed pair; the zero
    /// mode is passed through `solve` like any other mode.
    pub(crate) fn apply_matrix_symbol(
        &self,
        f: [&[f64]; 2],
        solve: impl Fn(Mode, [Complex64; 2]) -> [Complex64; 2],
    ) -> [ScalarField; 2] {
        let n = self.n;
        let mut a: Vec<Complex64> = f[0].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut b: Vec<Complex64> = f[1].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut a, true);
        self.fft2(&mut b, true);
        for ky in 0..n {
            for kx in 0..n {
                let k = ky * n + kx;
                let [ra, rb] = solve(self.mode(kx, ky), [a[k], b[k]]);
                a[k] = ra;
                b[k] = rb;
            }
        }
        self.fft2(&mut a, false);
        self.fft2(&mut b, false);
        [
            ScalarField(a.iter().map(|v| v.re).collect()),
            ScalarField(b.iter().map(|v| v.re).collect()),
        ]
    }
}

/// Angular wavenumbers of one Fourier mode of a periodic field.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub wx: f64,
    pub wy: f64,
    pub nyq_x: bool,
    pub nyq_y: bool,
}

impl Mode {
    /// Wavenumber for odd-order symbols: zero on the Nyquist bin.
    pub fn odd_x(&self) -> f64 {
        if self.nyq_x { 0.0 } else { self.wx }
    }

    pub fn odd_y(&self) -> f64 {
        if self.nyq_y { 0.0 } else { self.wy }
    }

    pub fn is_zero(&self) -> bool {
        self.wx == 0.0 && self.wy == 0.0
    }
}

/// Real per-node values.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

impl Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl ScalarField {
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &[f64], f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().zip(other).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| v * s)
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &[f64], s: f64) -> ScalarField {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Covector components `(a_x, a_y)` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct OneFormField {
    pub x: ScalarField,
    pub y: ScalarField,
}

/// Vector components `(X^x, X^y)` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self { x: grid.zeros(), y: grid.zeros() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { x: self.x.scaled(s), y: self.y.scaled(s) }
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }
}

impl OneFormField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self { x: grid.zeros(), y: grid.zeros() }
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }
}

/// Symmetric 2-tensor `(h_xx, h_xy, h_yy)` per node; `h_yx = h_xy`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

impl SymTensorField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self { xx: grid.zeros(), xy: grid.zeros(), yy: grid.zeros() }
    }

    pub fn at(&self, k: usize) -> Sym2 {
        Sym2::new(self.xx[k], self.xy[k], self.yy[k])
    }

    pub fn from_fn(len: usize, f: impl Fn(usize) -> Sym2) -> Self {
        let mut xx = Vec::with_capacity(len);
        let mut xy = Vec::with_capacity(len);
        let mut yy = Vec::with_capacity(len);
        for k in 0..len {
            let s = f(k);
            xx.push(s.xx);
            xy.push(s.xy);
            yy.push(s.yy);
        }
        Self { xx: ScalarField(xx), xy: ScalarField(xy), yy: ScalarField(yy) }
    }

    pub fn constant(grid: &TorusGrid, s: Sym2) -> Self {
        Self::from_fn(grid.len(), |_| s)
    }

    pub fn add_scaled(&self, other: &SymTensorField, s: f64) -> Self {
        Self {
            xx: self.xx.add_scaled(&other.xx, s),
            xy: self.xy.add_scaled(&other.xy, s),
            yy: self.yy.add_scaled(&other.yy, s),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { xx: self.xx.scaled(s), xy: self.xy.scaled(s), yy: self.yy.scaled(s) }
    }

    /// Pointwise product with a scalar field.
    pub fn weighted(&self, w: &[f64]) -> Self {
        Self {
            xx: self.xx.zip_map(w, |a, b| a * b),
            xy: self.xy.zip_map(w, |a, b| a * b),
            yy: self.yy.zip_map(w, |a, b| a * b),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.max_abs().max(self.xy.max_abs()).max(self.yy.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    /// Coordinate mean of each component.
    pub fn mean(&self, grid: &TorusGrid) -> Sym2 {
        Sym2::new(grid.mean(&self.xx), grid.mean(&self.xy), grid.mean(&self.yy))
    }
}

/// A symmetric 2x2 real matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2::new(self.yy / d, -self.xy / d, self.xx / d)
    }

    pub fn scaled(&self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn quad(&self, v: [f64; 2]) -> f64 {
        let w = self.apply(v);
        v[0] * w[0] + v[1] * w[1]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * self.trace();
        let r = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (m - r, m + r)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    /// Symmetric positive square root.
    pub fn sqrt(&self) -> Sym2 {
        let s = self.det().sqrt();
        let t = (self.trace() + 2.0 * s).sqrt();
        Sym2::new((self.xx + s) / t, self.xy / t, (self.yy + s) / t)
    }

    /// Contraction `sum_ij a^{ij} b_ij` with `self` as `a`.
    pub fn contract(&self, b: &Sym2) -> f64 {
        self.xx * b.xx + 2.0 * self.xy * b.xy + self.yy * b.yy
    }

    /// `A B A` for symmetric `A = self` (result is symmetric).
    pub fn sandwich(&self, b: &Sym2) -> Sym2 {
        let a = self;
        let m00 = a.xx * b.xx + a.xy * b.xy;
        let m01 = a.xx * b.xy + a.xy * b.yy;
        let m10 = a.xy * b.xx + a.yy * b.xy;
        let m11 = a.xy * b.xy + a.yy * b.yy;
        Sym2::new(
            m00 * a.xx + m01 * a.xy,
            m00 * a.xy + m01 * a.yy,
            m10 * a.xy + m11 * a.yy,
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }
}
