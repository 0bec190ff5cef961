//! Right-hand sides and time integration of the normalized Ricci flow, the
//! harmonic Ricci flow and the spinor flow, unsplit and split.
//!
//! Unsplit states carry a general metric field, since the harmonic Ricci and
//! spinor flows leave the conformal class of their initial metric. Split
//! states carry `(ḡ, u, datum)` with `g = e^{2u} ḡ`.

pub mod hrf;
pub mod integrator;
pub mod ricci;
pub mod spinor_flow;

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::{GaugeDiagnostics, GaugeSolution, HorizontalTensor};
use crate::grid::{ScalarField, SymTensorField, TorusGrid};
use crate::metric::{ConformalMetric, FlatMetric, Geometry, MetricField};
use crate::spinor::SpinorField;

pub use hrf::{hrf_rhs, hrf_split_rhs, map_energy};
pub use integrator::{cfl_dt, step, Rk4State, StepControl, StepOutcome};
pub use ricci::{ricci_normalized_rhs, uniformize, UniformizeReport};
pub use spinor_flow::{bianchi_residual, spinor_rhs, spinor_split_rhs, SpinorRho, SpinorSplitDiagnostics};

/// Unit-norm tolerance accepted for map data.
pub const MAP_UNIT_TOL: f64 = 1e-8;

/// Which of the two sign sets appearing in the source is used for the
/// gauge terms of the split equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Signs {
    /// `u̇ = ¼ tr_g Q + X(u) − ½ρ`, `ṡ = Q_E + L_X s`.
    #[default]
    Standard,
    /// `u̇ = ¼ tr_g Q + ½ρ − X(u)`, `ṡ = Q_E − L_X s`.
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlowKind {
    Ricci,
    Hrf,
    HrfSplit,
    Spinor,
    SpinorSplit,
}

impl FlowKind {
    pub fn is_split(&self) -> bool {
        matches!(self, FlowKind::Ricci | FlowKind::HrfSplit | FlowKind::SpinorSplit)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Ricci => "ricci",
            FlowKind::Hrf => "hrf",
            FlowKind::HrfSplit => "hrf-split",
            FlowKind::Spinor => "spinor",
            FlowKind::SpinorSplit => "spinor-split",
        }
    }
}

/// Map into the unit sphere `S² ⊂ R³`, one component field per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    pub c: [ScalarField; 3],
}

impl MapField {
    pub fn constant(grid: &TorusGrid, v: [f64; 3]) -> Self {
        Self { c: v.map(|a| grid.constant(a)) }
    }

    /// `(cos 2πx, sin 2πx, 0)`.
    pub fn equator(grid: &TorusGrid) -> Self {
        Self {
            c: [
                grid.sample(|x, _| (2.0 * PI * x).cos()),
                grid.sample(|x, _| (2.0 * PI * x).sin()),
                grid.zeros(),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.c[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.c[0].is_empty()
    }

    pub fn at(&self, k: usize) -> [f64; 3] {
        [self.c[0][k], self.c[1][k], self.c[2][k]]
    }

    pub fn unit_deviation(&self) -> f64 {
        (0..self.len())
            .map(|k| {
                let v = self.at(k);
                ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn normalize(&mut self) -> f64 {
        let dev = self.unit_deviation();
        for k in 0..self.len() {
            let v = self.at(k);
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            for c in 0..3 {
                self.c[c][k] = v[c] / n;
            }
        }
        dev
    }

    pub fn add_scaled(&self, other: &MapField, s: f64) -> Self {
        Self { c: [0, 1, 2].map(|i| self.c[i].add_scaled(&other.c[i], s)) }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub(crate) fn check_unit(&self) -> Result<()> {
        let dev = self.unit_deviation();
        if dev > MAP_UNIT_TOL || dev.is_nan() {
            return Err(Error::NonUnit { what: "map", deviation: dev });
        }
        Ok(())
    }
}

/// Coupled datum: nothing (Ricci flow), a sphere-valued map, or a spinor.
#[derive(Clone, Debug, PartialEq)]
pub enum Datum {
    None,
    Map(MapField),
    Spinor(SpinorField),
}

impl Datum {
    pub fn is_finite(&self) -> bool {
        match self {
            Datum::None => true,
            Datum::Map(m) => m.is_finite(),
            Datum::Spinor(s) => s.is_finite(),
        }
    }

    /// Renormalizes to unit norm nodewise and returns the largest correction.
    pub fn normalize(&mut self) -> f64 {
        match self {
            Datum::None => 0.0,
            Datum::Map(m) => m.normalize(),
            Datum::Spinor(s) => s.normalize(),
        }
    }

    fn advanced(&self, terms: &[(&DatumRate, f64)]) -> Result<Datum> {
        match self {
            Datum::None => Ok(Datum::None),
            Datum::Map(m) => {
                let mut out = m.clone();
                for (r, c) in terms {
                    match r {
                        DatumRate::Map(v) => out = out.add_scaled(v, *c),
                        _ => return Err(Error::Invalid("rate does not match map datum".into())),
                    }
                }
                Ok(Datum::Map(out))
            }
            Datum::Spinor(s) => {
                let mut out = s.clone();
                for (r, c) in terms {
                    match r {
                        DatumRate::Spinor(v) => out = out.add_scaled(v, *c),
                        _ => return Err(Error::Invalid("rate does not match spinor datum".into())),
                    }
                }
                Ok(Datum::Spinor(out))
            }
        }
    }

    /// Energy of the datum with respect to the metric of `geo`.
    pub fn energy(&self, geo: &Geometry) -> Option<f64> {
        match self {
            Datum::None => None,
            Datum::Map(m) => Some(map_energy(geo, m)),
            Datum::Spinor(s) => Some(crate::spinor::energy(geo, s)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum DatumRate {
    None,
    Map(MapField),
    Spinor(SpinorField),
}

impl DatumRate {
    fn is_finite(&self) -> bool {
        match self {
            DatumRate::None => true,
            DatumRate::Map(m) => m.is_finite(),
            DatumRate::Spinor(s) => s.is_finite(),
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            DatumRate::None => 0.0,
            DatumRate::Map(m) => m.max_abs(),
            DatumRate::Spinor(s) => s.max_abs(),
        }
    }
}

/// Quantities about the velocity that the monitors report.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Kinematics {
    /// `‖Q_m‖_{L²(g)}`, the metric velocity of the flow up to diffeomorphism.
    pub velocity_l2: f64,
    /// `‖∂_t ḡ‖` in `L²(ḡ)` and `C⁰(ḡ)`; split flows only.
    pub horizontal_l2: Option<f64>,
    pub horizontal_c0: Option<f64>,
    pub gauge: Option<GaugeDiagnostics>,
    /// Average scalar curvature recomputed for the normalization term.
    pub r_mean: f64,
    /// `‖Q₁‖² + ‖Q₂‖²` for the spinor flows.
    pub dissipation: Option<f64>,
    pub spinor: Option<SpinorSplitDiagnostics>,
}

/// `(g, datum)` for the unsplit flows.
#[derive(Clone, Debug)]
pub struct UnsplitState {
    pub t: f64,
    /// Flat metric the run started from; reference for `H²` and spacetime norms.
    pub reference: FlatMetric,
    pub metric: MetricField,
    pub datum: Datum,
}

impl UnsplitState {
    pub fn from_conformal(cm: &ConformalMetric, datum: Datum) -> Self {
        Self { t: 0.0, reference: cm.base, metric: cm.to_metric_field(), datum }
    }

    pub fn geometry<'a>(&self, grid: &'a TorusGrid) -> Result<Geometry<'a>> {
        Geometry::new(grid, &self.metric)
    }
}

#[derive(Clone, Debug)]
pub struct UnsplitRate {
    pub metric: SymTensorField,
    pub datum: DatumRate,
    pub kinematics: Kinematics,
}

/// `(ḡ, u, datum)` with `g = e^{2u} ḡ`, plus the last gauge solve.
#[derive(Clone, Debug)]
pub struct SplitState {
    pub t: f64,
    pub gbar: FlatMetric,
    pub u: ScalarField,
    pub datum: Datum,
    pub gauge: GaugeSolution,
    /// `|det ḡ − 1|` removed when this state was formed.
    pub moduli_drift: f64,
}

impl SplitState {
    pub fn new(grid: &TorusGrid, cm: ConformalMetric, datum: Datum) -> Self {
        Self { t: 0.0, gbar: cm.base, u: cm.u, datum, gauge: GaugeSolution::zero(grid), moduli_drift: 0.0 }
    }

    pub fn conformal(&self) -> ConformalMetric {
        ConformalMetric::new(self.gbar, self.u.clone())
    }

    pub fn geometry<'a>(&self, grid: &'a TorusGrid) -> Result<Geometry<'a>> {
        Geometry::conformal(grid, &self.conformal())
    }
}

#[derive(Clone, Debug)]
pub struct SplitRate {
    pub gbar: HorizontalTensor,
    pub u: ScalarField,
    pub datum: DatumRate,
    pub gauge: GaugeSolution,
    pub kinematics: Kinematics,
}

/// Size of the per-step renormalizations.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Renormalization {
    pub datum: f64,
    /// `|det ḡ − 1|` before rescaling; split states only.
    pub moduli: f64,
}

impl Rk4State for UnsplitState {
    type Rate = UnsplitRate;

    fn advanced(&self, terms: &[(&UnsplitRate, f64)], dt: f64) -> Result<Self> {
        let mut g = self.metric.g.clone();
        for (r, c) in terms {
            g = g.add_scaled(&r.metric, c * dt);
        }
        let dterms: Vec<(&DatumRate, f64)> = terms.iter().map(|(r, c)| (&r.datum, c * dt)).collect();
        Ok(Self {
            t: self.t + dt,
            reference: self.reference,
            metric: MetricField { g },
            datum: self.datum.advanced(&dterms)?,
        })
    }

    fn renormalize(&mut self) -> Renormalization {
        Renormalization { datum: self.datum.normalize(), moduli: 0.0 }
    }

    fn is_finite(&self) -> bool {
        self.metric.g.is_finite() && self.datum.is_finite()
    }

    fn rate_is_finite(rate: &UnsplitRate) -> bool {
        rate.metric.is_finite() && rate.datum.is_finite()
    }

    fn rate_size(rate: &UnsplitRate) -> f64 {
        rate.metric.max_abs().max(rate.datum.max_abs())
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn min_metric_eigenvalue(&self) -> f64 {
        self.metric.min_eigenvalue()
    }
}

impl Rk4State for SplitState {
    type Rate = SplitRate;

    fn advanced(&self, terms: &[(&SplitRate, f64)], dt: f64) -> Result<Self> {
        let mut g = self.gbar.matrix();
        let mut u = self.u.clone();
        for (r, c) in terms {
            g = g.add(&r.gbar.to_sym().scaled(c * dt));
            u = u.add_scaled(&r.u, c * dt);
        }
        let dterms: Vec<(&DatumRate, f64)> = terms.iter().map(|(r, c)| (&r.datum, c * dt)).collect();
        // Every stage stays on the unit-determinant slice; the correction is
        // second order because ∂_t ḡ is trace-free.
        let (gbar, det) = FlatMetric::normalized(g)?;
        let gauge = terms.last().map(|(r, _)| r.gauge.clone()).unwrap_or_else(|| self.gauge.clone());
        Ok(Self {
            t: self.t + dt,
            gbar,
            u,
            datum: self.datum.advanced(&dterms)?,
            gauge,
            moduli_drift: (det - 1.0).abs(),
        })
    }

    fn renormalize(&mut self) -> Renormalization {
        Renormalization { datum: self.datum.normalize(), moduli: self.moduli_drift }
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.datum.is_finite()
    }

    fn rate_is_finite(rate: &SplitRate) -> bool {
        rate.u.is_finite() && rate.datum.is_finite() && rate.gbar.coeffs.iter().all(|c| c.is_finite())
    }

    fn rate_size(rate: &SplitRate) -> f64 {
        rate.u.max_abs().max(rate.datum.max_abs()).max(rate.gbar.l2_norm())
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn min_metric_eigenvalue(&self) -> f64 {
        let umin = self.u.iter().cloned().fold(f64::INFINITY, f64::min);
        (2.0 * umin).exp() * self.gbar.matrix().eigenvalues().0
    }
}

/// Either state kind, as handled by the runner and the monitors.
#[derive(Clone, Debug)]
pub enum FlowState {
    Unsplit(UnsplitState),
    Split(SplitState),
}

impl FlowState {
    pub fn t(&self) -> f64 {
        match self {
            FlowState::Unsplit(s) => s.t,
            FlowState::Split(s) => s.t,
        }
    }

    pub fn datum(&self) -> &Datum {
        match self {
            FlowState::Unsplit(s) => &s.datum,
            FlowState::Split(s) => &s.datum,
        }
    }

    pub fn metric_field(&self) -> MetricField {
        match self {
            FlowState::Unsplit(s) => s.metric.clone(),
            FlowState::Split(s) => s.conformal().to_metric_field(),
        }
    }

    pub fn geometry<'a>(&self, grid: &'a TorusGrid) -> Result<Geometry<'a>> {
        match self {
            FlowState::Unsplit(s) => s.geometry(grid),
            FlowState::Split(s) => s.geometry(grid),
        }
    }

    /// Flat metric used for reference norms: the initial flat metric for
    /// unsplit runs and the current `ḡ` for split runs.
    pub fn reference(&self) -> FlatMetric {
        match self {
            FlowState::Unsplit(s) => s.reference,
            FlowState::Split(s) => s.gbar,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            FlowState::Unsplit(s) => s.is_finite(),
            FlowState::Split(s) => s.is_finite(),
        }
    }
}

/// Everything that selects the right-hand side of a run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowParams {
    pub kind: FlowKind,
    /// Map coupling constant of the harmonic Ricci flow.
    pub alpha: f64,
    pub signs: Signs,
    pub rho: SpinorRho,
}

impl FlowParams {
    pub fn new(kind: FlowKind) -> Self {
        Self { kind, alpha: 1.0, signs: Signs::Standard, rho: SpinorRho::Direct }
    }
}

/// Rate of an unsplit state. The Ricci flow is supported here too, as
/// `∂_t g = −R g` on a general metric field.
pub fn unsplit_rate(grid: &TorusGrid, params: &FlowParams, state: &UnsplitState) -> Result<UnsplitRate> {
    let geo = state.geometry(grid)?;
    let (metric, datum, kinematics) = match (&state.datum, params.kind) {
        (Datum::None, FlowKind::Ricci) => {
            let r = geo.scalar_curvature();
            let r_mean = geo.integrate(r) / geo.volume();
            let metric = SymTensorField::from_fn(grid.len(), |k| geo.g(k).scaled(r_mean - r[k]));
            let velocity_l2 = geo.lp(&geo.norm_sym(&metric), 2.0);
            (metric, DatumRate::None, Kinematics { velocity_l2, r_mean, ..Default::default() })
        }
        (Datum::Map(m), FlowKind::Hrf | FlowKind::HrfSplit) => hrf::hrf_unsplit_rate(&geo, m, params.alpha),
        (Datum::Spinor(s), FlowKind::Spinor | FlowKind::SpinorSplit) => {
            let (metric, datum, mut kin, dissipation) = spinor_flow::spinor_unsplit_rate(&geo, s);
            kin.dissipation = Some(dissipation);
            (metric, datum, kin)
        }
        _ => return Err(Error::Invalid(format!("datum does not match flow {}", params.kind.name()))),
    };
    Ok(UnsplitRate { metric, datum, kinematics })
}

/// Rate of a split state.
pub fn split_rate(grid: &TorusGrid, params: &FlowParams, state: &SplitState) -> Result<SplitRate> {
    match (&state.datum, params.kind) {
        (Datum::None, FlowKind::Ricci) => Ok(ricci::ricci_split_rate(grid, state)),
        (Datum::Map(_), FlowKind::Hrf | FlowKind::HrfSplit) => hrf_split_rhs(grid, state, params.alpha, params.signs),
        (Datum::Spinor(_), FlowKind::Spinor | FlowKind::SpinorSplit) => {
            let (mut rate, diag) = spinor_split_rhs(grid, state, params.signs, params.rho)?;
            rate.kinematics.dissipation = Some(diag.dissipation);
            rate.kinematics.spinor = Some(diag);
            Ok(rate)
        }
        _ => Err(Error::Invalid(format!("datum does not match flow {}", params.kind.name()))),
    }
}
