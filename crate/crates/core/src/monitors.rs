//! Blow-up criterion quantities: volumes, curvature and Hessian integrals,
//! injectivity and diameter estimates, space-time norms, and the verdicts
//! that compare them against thresholds.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{Datum, FlowState, Kinematics};
use crate::gauge::curvature_potential;
use crate::grid::{ScalarField, Sym2, TorusGrid};
use crate::metric::{ConformalMetric, FlatMetric, Geometry, MetricField};
use crate::spinor::second_covariant_derivative;

/// Number of seed-fixed basepoints for the graph searches.
pub const BASEPOINTS: usize = 16;
const BASEPOINT_SEED: u64 = 0x5eed;
/// Largest deck-translation index searched for noncontractible loops.
const MAX_CLASS: i64 = 2;

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_Q: f64 = 6.0;

/// Exponents of the monitored integrals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonitorConfig {
    pub epsilon: f64,
    pub q: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, q: DEFAULT_Q }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.epsilon > 0.0) {
            errs.push(format!("epsilon = {} must be positive", self.epsilon));
        }
        if !(self.q > 4.0) {
            errs.push(format!("q = {} must exceed 4 (the spinor integral criterion holds only for some q > 4)", self.q));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Shortest lattice vector of `G` over `|p|, |q| ≤ 16`.
pub fn systole_flat(g: &FlatMetric) -> f64 {
    let mut best = f64::INFINITY;
    for p in -16i32..=16 {
        for q in -16i32..=16 {
            if p != 0 || q != 0 {
                best = best.min(g.length([p as f64, q as f64]));
            }
        }
    }
    best
}

/// Nodewise lengths of grid displacements for a metric field.
struct LengthGraph<'a> {
    grid: &'a TorusGrid,
    g: Vec<Sym2>,
}

const STENCIL: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];

impl<'a> LengthGraph<'a> {
    fn new(grid: &'a TorusGrid, metric: &MetricField) -> Self {
        Self { grid, g: (0..grid.len()).map(|k| metric.at(k)).collect() }
    }

    fn node(&self, i: i64, j: i64) -> usize {
        let n = self.grid.n() as i64;
        self.grid.idx(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize)
    }

    /// Geometric mean of the edge lengths measured at both ends.
    fn weight(&self, a: usize, b: usize, d: (i64, i64)) -> f64 {
        let h = self.grid.h();
        let v = [d.0 as f64 * h, d.1 as f64 * h];
        (self.g[a].quad(v).sqrt() * self.g[b].quad(v).sqrt()).sqrt()
    }

    fn basepoints(&self) -> Vec<(i64, i64)> {
        let n = self.grid.n() as i64;
        let mut rng = ChaCha8Rng::seed_from_u64(BASEPOINT_SEED);
        (0..BASEPOINTS).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
    }

    /// Shortest loop at `(i0, j0)` in a nontrivial class `(p, q)`,
    /// `|p|, |q| ≤ 2`, by Dijkstra on the lifted grid stopped at the first
    /// deck translate reached.
    fn loop_length(&self, i0: i64, j0: i64) -> f64 {
        let n = self.grid.n() as i64;
        let half = MAX_CLASS * n + n / 2;
        let side = 2 * half + 1;
        let mut dist = vec![f64::INFINITY; (side * side) as usize];
        let at = |x: i64, y: i64| ((y + half) * side + (x + half)) as usize;
        let mut heap = BinaryHeap::new();
        dist[at(0, 0)] = 0.0;
        // Non-negative floats order like their bit patterns.
        heap.push(Reverse((0f64.to_bits(), 0i64, 0i64)));
        while let Some(Reverse((bits, x, y))) = heap.pop() {
            let d = f64::from_bits(bits);
            if d > dist[at(x, y)] {
                continue;
            }
            if (x != 0 || y != 0) && x % n == 0 && y % n == 0 {
                return d;
            }
            let a = self.node(i0 + x, j0 + y);
            for &(dx, dy) in &STENCIL {
                let (nx, ny) = (x + dx, y + dy);
                if nx.abs() > half || ny.abs() > half {
                    continue;
                }
                let b = self.node(i0 + nx, j0 + ny);
                let nd = d + self.weight(a, b, (dx, dy));
                let slot = at(nx, ny);
                if nd < dist[slot] {
                    dist[slot] = nd;
                    heap.push(Reverse((nd.to_bits(), nx, ny)));
                }
            }
        }
        f64::INFINITY
    }

    /// Largest graph distance from `(i0, j0)` on the torus.
    fn eccentricity(&self, i0: i64, j0: i64) -> f64 {
        let n = self.grid.n() as i64;
        let mut dist = vec![f64::INFINITY; self.grid.len()];
        let start = self.node(i0, j0);
        dist[start] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0f64.to_bits(), start)));
        while let Some(Reverse((bits, a))) = heap.pop() {
            let d = f64::from_bits(bits);
            if d > dist[a] {
                continue;
            }
            let (i, j) = ((a % n as usize) as i64, (a / n as usize) as i64);
            for &(dx, dy) in &STENCIL {
                let b = self.node(i + dx, j + dy);
                let nd = d + self.weight(a, b, (dx, dy));
                if nd < dist[b] {
                    dist[b] = nd;
                    heap.push(Reverse((nd.to_bits(), b)));
                }
            }
        }
        dist.into_iter().fold(0.0, f64::max)
    }
}

/// Graph systole of a metric field: the shortest noncontractible loop over
/// the basepoint sample.
pub fn graph_systole(grid: &TorusGrid, metric: &MetricField) -> f64 {
    let graph = LengthGraph::new(grid, metric);
    graph.basepoints().into_iter().map(|(i, j)| graph.loop_length(i, j)).fold(f64::INFINITY, f64::min)
}

/// Largest eccentricity over the basepoint sample.
pub fn diameter_estimate(grid: &TorusGrid, metric: &MetricField) -> f64 {
    let graph = LengthGraph::new(grid, metric);
    graph.basepoints().into_iter().map(|(i, j)| graph.eccentricity(i, j)).fold(0.0, f64::max)
}

/// `π / √(sup K⁺)` with `K = R/2`; infinite when `R ≤ 0` everywhere.
pub fn conjugate_radius(r: &[f64]) -> f64 {
    let kmax = r.iter().cloned().fold(0.0, f64::max) / 2.0;
    if kmax > 0.0 {
        PI / kmax.sqrt()
    } else {
        f64::INFINITY
    }
}

/// `min(systole/2, π/√(sup R⁺/2))` for a general metric field.
pub fn injectivity_from(grid: &TorusGrid, metric: &MetricField, r: &[f64]) -> f64 {
    (0.5 * graph_systole(grid, metric)).min(conjugate_radius(r))
}

pub fn injectivity_lower_bound(grid: &TorusGrid, cm: &ConformalMetric) -> f64 {
    let r = crate::metric::scalar_curvature(grid, cm);
    injectivity_from(grid, &cm.to_metric_field(), &r)
}

/// `‖u‖_{H²(ĝ)}` for a flat `ĝ`: `(∫ u² + |du|² + |∇²u|²)^{1/2}`.
pub fn h2_norm_flat(grid: &TorusGrid, u: &[f64], ghat: &FlatMetric) -> f64 {
    let flat = Geometry::flat(grid, ghat);
    let du = flat.norm_one_form(&flat.d(u));
    let hess = flat.norm_sym(&flat.hessian(u));
    let s: f64 = (0..grid.len()).map(|k| u[k] * u[k] + du[k] * du[k] + hess[k] * hess[k]).sum();
    (s * grid.cell_area()).sqrt()
}

/// `‖u − ū‖_{H²(g)} / ‖Δ_g u‖_{L²(g)}`, the empirical Calderón constant.
pub fn calderon_ratio(geo: &Geometry, u: &[f64]) -> Option<f64> {
    let mean = geo.integrate(u) / geo.volume();
    let v: Vec<f64> = u.iter().map(|x| x - mean).collect();
    let lap = geo.laplacian(&v);
    let denom = geo.lp(&lap.iter().map(|x| x.abs()).collect::<Vec<_>>(), 2.0);
    if denom <= 0.0 {
        return None;
    }
    let du = geo.norm_one_form(&geo.d(&v));
    let hess = geo.norm_sym(&geo.hessian(&v));
    let pw: Vec<f64> = (0..v.len()).map(|k| v[k] * v[k] + du[k] * du[k] + hess[k] * hess[k]).collect();
    Some(geo.integrate(&pw).sqrt() / denom)
}

/// All blow-up criterion quantities at one time.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MonitorReport {
    pub t: f64,
    pub vol: f64,
    /// `∫ R² vol`
    pub curvature_l2_sq: f64,
    /// `∫ |R|^{2+ε} vol`
    pub curvature_lp: f64,
    /// `∫ |dφ|^{4+2ε} vol`
    pub map_energy_lp: Option<f64>,
    /// `∫ |∇²φ|^q vol`
    pub spinor_hess_lq: Option<f64>,
    pub spinor_hess_sup: Option<f64>,
    /// `|∫ Σ|R^Σ(e_a,e_b)φ|² − ∫ R²/8|`, the curvature-form identity gap.
    pub spinor_curvature_gap: Option<f64>,
    pub datum_energy: Option<f64>,
    pub inj_lower_bound: f64,
    /// `systole(ḡ)/2` for split states.
    pub inj_flat: Option<f64>,
    pub diameter_est: f64,
    pub u_c0: Option<f64>,
    pub u_h2: Option<f64>,
    pub velocity_l2: Option<f64>,
    pub horizontal_l2: Option<f64>,
    pub horizontal_c0: Option<f64>,
    /// `‖∂_t ḡ‖_{L²} / ‖∂_t g‖_{L²}`
    pub velocity_ratio: Option<f64>,
    pub gauge_residual: Option<f64>,
    pub rho_constant: Option<f64>,
    pub x_constant: Option<f64>,
    pub calderon_ratio: Option<f64>,
    pub curvature_potential_sup: Option<f64>,
    pub dissipation: Option<f64>,
    pub bianchi_residual: Option<f64>,
    pub unit_drift: f64,
    pub moduli_drift: f64,
}

/// CSV column names, in field order.
pub const REPORT_COLUMNS: [&str; 29] = [
    "t",
    "vol",
    "curvature_l2_sq",
    "curvature_lp",
    "map_energy_lp",
    "spinor_hess_lq",
    "spinor_hess_sup",
    "spinor_curvature_gap",
    "datum_energy",
    "inj_lower_bound",
    "inj_flat",
    "diameter_est",
    "u_c0",
    "u_h2",
    "velocity_l2",
    "horizontal_l2",
    "horizontal_c0",
    "velocity_ratio",
    "gauge_residual",
    "rho_constant",
    "x_constant",
    "calderon_ratio",
    "curvature_potential_sup",
    "dissipation",
    "bianchi_residual",
    "unit_drift",
    "moduli_drift",
    "steps",
    "dt",
];

impl MonitorReport {
    fn cells(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.t),
            Some(self.vol),
            Some(self.curvature_l2_sq),
            Some(self.curvature_lp),
            self.map_energy_lp,
            self.spinor_hess_lq,
            self.spinor_hess_sup,
            self.spinor_curvature_gap,
            self.datum_energy,
            Some(self.inj_lower_bound),
            self.inj_flat,
            Some(self.diameter_est),
            self.u_c0,
            self.u_h2,
            self.velocity_l2,
            self.horizontal_l2,
            self.horizontal_c0,
            self.velocity_ratio,
            self.gauge_residual,
            self.rho_constant,
            self.x_constant,
            self.calderon_ratio,
            self.curvature_potential_sup,
            self.dissipation,
            self.bianchi_residual,
            Some(self.unit_drift),
            Some(self.moduli_drift),
        ]
    }

    /// One CSV row; `steps` and `dt` describe the step that produced it.
    pub fn csv_row(&self, steps: usize, dt: f64) -> String {
        let mut out = String::new();
        for (i, c) in self.cells().into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if let Some(v) = c {
                let _ = write!(out, "{v:e}");
            }
        }
        let _ = write!(out, ",{steps},{dt:e}");
        out
    }

    /// Whether any present quantity is non-finite.
    pub fn has_non_finite(&self) -> bool {
        self.cells().into_iter().flatten().any(|v| !v.is_finite())
    }
}

/// Computes the report for `state`. `rate` supplies the velocity terms when
/// available; a non-finite state yields a report of NaNs instead of an error.
pub fn blowup_report(
    grid: &TorusGrid,
    state: &FlowState,
    rate: Option<&Kinematics>,
    config: &MonitorConfig,
    unit_drift: f64,
    moduli_drift: f64,
) -> MonitorReport {
    let t = state.t();
    let geo = match state.geometry(grid) {
        Ok(geo) if state.is_finite() => geo,
        _ => return nan_report(t, state),
    };
    let r = geo.scalar_curvature().clone();
    let abs_r: Vec<f64> = r.iter().map(|v| v.abs()).collect();
    let p = 2.0 + config.epsilon;
    let integral = |pw: &[f64], p: f64| geo.integrate(&pw.iter().map(|v| v.powf(p)).collect::<Vec<_>>());
    let metric = state.metric_field();

    let mut rep = MonitorReport {
        t,
        vol: geo.volume(),
        curvature_l2_sq: integral(&abs_r, 2.0),
        curvature_lp: integral(&abs_r, p),
        inj_lower_bound: injectivity_from(grid, &metric, &r),
        diameter_est: diameter_estimate(grid, &metric),
        unit_drift,
        moduli_drift,
        ..Default::default()
    };

    match state.datum() {
        Datum::None => {}
        Datum::Map(m) => {
            let dens = map_density(&geo, m);
            let norms: Vec<f64> = dens.iter().map(|v| v.max(0.0).sqrt()).collect();
            rep.map_energy_lp = Some(integral(&norms, 4.0 + 2.0 * config.epsilon));
            rep.datum_energy = Some(0.5 * geo.integrate(&dens));
        }
        Datum::Spinor(s) => {
            let sd = second_covariant_derivative(&geo, s);
            let norms: Vec<f64> = sd.full_norm_sq().iter().map(|v| v.max(0.0).sqrt()).collect();
            rep.spinor_hess_lq = Some(integral(&norms, config.q));
            rep.spinor_hess_sup = Some(norms.iter().cloned().fold(0.0, f64::max));
            let curv = geo.integrate(&sd.curvature_norm_sq());
            rep.spinor_curvature_gap = Some((curv - rep.curvature_l2_sq / 8.0).abs());
            rep.datum_energy = Some(crate::spinor::energy(&geo, s));
        }
    }

    if let FlowState::Split(s) = state {
        rep.inj_flat = Some(0.5 * systole_flat(&s.gbar));
        rep.u_c0 = Some(s.u.max_abs());
        rep.u_h2 = Some(h2_norm_flat(grid, &s.u, &s.gbar));
        rep.calderon_ratio = calderon_ratio(&geo, &s.u);
        rep.curvature_potential_sup = Some(curvature_potential(grid, &s.conformal()).sup);
    }

    if let Some(k) = rate {
        rep.velocity_l2 = Some(k.velocity_l2);
        rep.horizontal_l2 = k.horizontal_l2;
        rep.horizontal_c0 = k.horizontal_c0;
        rep.velocity_ratio = k.horizontal_l2.and_then(|h| (k.velocity_l2 > 0.0).then(|| h / k.velocity_l2));
        if let Some(g) = &k.gauge {
            rep.gauge_residual = Some(g.max_residual());
            rep.rho_constant = g.rho_constant();
            rep.x_constant = g.x_constant();
        }
        rep.dissipation = k.dissipation;
        rep.bianchi_residual = k.spinor.as_ref().map(|d| d.bianchi_residual);
    }
    rep
}

fn map_density(geo: &Geometry, m: &crate::flows::MapField) -> ScalarField {
    let grid = geo.grid();
    let d = [0, 1, 2].map(|c| grid.gradient(&m.c[c]));
    ScalarField(
        (0..geo.len())
            .map(|k| {
                let gi = geo.ginv(k);
                (0..3)
                    .map(|c| gi.quad([d[c][0][k], d[c][1][k]]))
                    .sum::<f64>()
            })
            .collect(),
    )
}

fn nan_report(t: f64, state: &FlowState) -> MonitorReport {
    let nan = f64::NAN;
    let some_nan = |b: bool| b.then_some(nan);
    let (map, spinor) = match state.datum() {
        Datum::None => (false, false),
        Datum::Map(_) => (true, false),
        Datum::Spinor(_) => (false, true),
    };
    MonitorReport {
        t,
        vol: nan,
        curvature_l2_sq: nan,
        curvature_lp: nan,
        map_energy_lp: some_nan(map),
        spinor_hess_lq: some_nan(spinor),
        spinor_hess_sup: some_nan(spinor),
        datum_energy: some_nan(map || spinor),
        inj_lower_bound: nan,
        diameter_est: nan,
        unit_drift: nan,
        moduli_drift: nan,
        ..Default::default()
    }
}

/// Space-time norms of a scalar trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct SpacetimeNorms {
    /// `(∫∫ |∂_t u|^p + |∇u|^p + |∇²u|^p)^{1/p}`
    pub w21p: f64,
    /// Sampled parabolic Hölder seminorm `[u]_{α, α/2}` (an estimator).
    pub holder: f64,
    pub holder_samples: usize,
}

/// `W^{2,1}_p` norm by trapezoidal time quadrature with centered time
/// differences, and the parabolic Hölder seminorm estimated from
/// `samples` seeded random pairs at parabolic distance at most `window`.
#[allow(clippy::too_many_arguments)]
pub fn spacetime_norms(
    grid: &TorusGrid,
    times: &[f64],
    fields: &[ScalarField],
    ghat: &FlatMetric,
    p: f64,
    alpha: f64,
    samples: usize,
    window: f64,
    seed: u64,
) -> Result<SpacetimeNorms> {
    if times.len() < 2 || times.len() != fields.len() {
        return Err(Error::Invalid("space-time norms need at least two snapshots with time stamps".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("time stamps must increase".into()));
    }
    let flat = Geometry::flat(grid, ghat);
    let m = times.len();
    let slice_integrals: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = if i == 0 { (0, 1) } else if i == m - 1 { (m - 2, m - 1) } else { (i - 1, i + 1) };
            let dt = times[b] - times[a];
            let du = flat.norm_one_form(&flat.d(&fields[i]));
            let hess = flat.norm_sym(&flat.hessian(&fields[i]));
            let s: f64 = (0..grid.len())
                .map(|k| {
                    let ut = (fields[b][k] - fields[a][k]) / dt;
                    ut.abs().powf(p) + du[k].powf(p) + hess[k].powf(p)
                })
                .sum();
            s * grid.cell_area()
        })
        .collect();
    let total: f64 = (0..m - 1).map(|i| 0.5 * (slice_integrals[i] + slice_integrals[i + 1]) * (times[i + 1] - times[i])).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n() as i64;
    let mut holder: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples {
        let a = rng.gen_range(0..m);
        let b = rng.gen_range(0..m);
        let ka = rng.gen_range(0..grid.len());
        let r = (window / grid.h()).ceil().max(1.0) as i64;
        let di = rng.gen_range(-r..=r);
        let dj = rng.gen_range(-r..=r);
        let (i, j) = ((ka % grid.n()) as i64, (ka / grid.n()) as i64);
        let kb = grid.idx((i + di).rem_euclid(n) as usize, (j + dj).rem_euclid(n) as usize);
        let dx = ghat.length([di as f64 * grid.h(), dj as f64 * grid.h()]);
        let d = (dx * dx + (times[a] - times[b]).abs()).sqrt();
        if d == 0.0 || d > window {
            continue;
        }
        used += 1;
        holder = holder.max((fields[a][ka] - fields[b][kb]).abs() / d.powf(alpha));
    }
    Ok(SpacetimeNorms { w21p: total.powf(1.0 / p), holder, holder_samples: used })
}

/// Upper bounds on integral quantities and a lower bound on inj.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct Thresholds {
    pub vol_max: f64,
    pub curvature_l2_max: f64,
    /// Bound on `∫ |R|^{2+ε} + |dφ|^{4+2ε}`.
    pub hrf_integral_max: f64,
    pub spinor_hess_lq_max: f64,
    pub spinor_hess_sup_max: f64,
    pub inj_min: f64,
    /// Only reports with `t ≥ t_last − window` are judged; all when `None`.
    pub window: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            vol_max: 1e3,
            curvature_l2_max: 1e8,
            hrf_integral_max: 1e10,
            spinor_hess_lq_max: 1e16,
            spinor_hess_sup_max: 1e6,
            inj_min: 1e-3,
            window: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Criterion {
    /// Volume, `∫R²` and injectivity radius (geometric control).
    GeometricControl,
    /// `∫ |R|^{2+ε} + |dφ|^{4+2ε}` and injectivity radius.
    HarmonicRicciExtension,
    /// `∫ |∇²φ|^q`, `q > 4`, and injectivity radius.
    SpinorIntegralExtension,
    /// `sup |∇²φ|`.
    SpinorPointwiseExtension,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::GeometricControl,
        Criterion::HarmonicRicciExtension,
        Criterion::SpinorIntegralExtension,
        Criterion::SpinorPointwiseExtension,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::GeometricControl => "geometric-control",
            Criterion::HarmonicRicciExtension => "harmonic-ricci",
            Criterion::SpinorIntegralExtension => "spinor-integral",
            Criterion::SpinorPointwiseExtension => "spinor-pointwise",
        }
    }
}

/// First hypothesis violation of one criterion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub quantity: &'static str,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Outcome {
    /// Hypotheses held over the window: the flow extends.
    Holds,
    Violated(Violation),
    /// The reports do not carry the quantities this criterion needs.
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub criterion: Criterion,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictRecord {
    pub verdicts: Vec<Verdict>,
}

impl VerdictRecord {
    pub fn get(&self, c: Criterion) -> &Outcome {
        &self.verdicts.iter().find(|v| v.criterion == c).expect("every criterion is judged").outcome
    }

    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| !matches!(v.outcome, Outcome::Violated(_)))
    }

    pub fn summary(&self) -> String {
        self.verdicts
            .iter()
            .map(|v| match &v.outcome {
                Outcome::Holds => format!("{}: extendable", v.criterion.name()),
                Outcome::Violated(x) => format!("{}: {} = {:e} at t = {:e}", v.criterion.name(), x.quantity, x.value, x.t),
                Outcome::NotApplicable => format!("{}: n/a", v.criterion.name()),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

type Check = (&'static str, fn(&MonitorReport) -> Option<f64>, Bound);

#[derive(Clone, Copy)]
enum Bound {
    Upper(fn(&Thresholds) -> f64),
    Lower(fn(&Thresholds) -> f64),
}

fn checks(c: Criterion) -> Vec<Check> {
    let inj: Check = ("inj_lower_bound", |r| Some(r.inj_lower_bound), Bound::Lower(|t| t.inj_min));
    match c {
        Criterion::GeometricControl => vec![
            ("vol", |r| Some(r.vol), Bound::Upper(|t| t.vol_max)),
            ("curvature_l2_sq", |r| Some(r.curvature_l2_sq), Bound::Upper(|t| t.curvature_l2_max)),
            inj,
        ],
        Criterion::HarmonicRicciExtension => vec![
            (
                "curvature_lp+map_energy_lp",
                |r| r.map_energy_lp.map(|m| r.curvature_lp + m),
                Bound::Upper(|t| t.hrf_integral_max),
            ),
            inj,
        ],
        Criterion::SpinorIntegralExtension => vec![
            ("spinor_hess_lq", |r| r.spinor_hess_lq, Bound::Upper(|t| t.spinor_hess_lq_max)),
            inj,
        ],
        Criterion::SpinorPointwiseExtension => {
            vec![("spinor_hess_sup", |r| r.spinor_hess_sup, Bound::Upper(|t| t.spinor_hess_sup_max))]
        }
    }
}

/// Judges every criterion over the report window. A non-finite value counts
/// as a violation at its time. Fails when the exponents break `ε > 0`,
/// `q > 4`, or the report sequence is empty.
pub fn verdict(reports: &[MonitorReport], thresholds: &Thresholds, config: &MonitorConfig) -> Result<VerdictRecord> {
    config.validate()?;
    let last = reports.last().ok_or_else(|| Error::Invalid("verdict needs at least one report".into()))?.t;
    let start = thresholds.window.map_or(f64::NEG_INFINITY, |w| last - w);
    let window: Vec<&MonitorReport> = reports.iter().filter(|r| r.t >= start || r.t.is_nan()).collect();
    let verdicts = Criterion::ALL
        .iter()
        .map(|&c| {
            let list = checks(c);
            // the first listed quantity decides applicability
            let applicable = window.iter().any(|r| (list[0].1)(r).is_some());
            let outcome = if !applicable {
                Outcome::NotApplicable
            } else {
                let mut first: Option<Violation> = None;
                'reports: for r in &window {
                    for (name, get, bound) in &list {
                        let Some(v) = get(r) else { continue };
                        let bad = match bound {
                            Bound::Upper(b) => !(v <= b(thresholds)),
                            Bound::Lower(b) => !(v >= b(thresholds)),
                        };
                        if bad {
                            first = Some(Violation { quantity: name, t: r.t, value: v });
                            break 'reports;
                        }
                    }
                }
                first.map_or(Outcome::Holds, Outcome::Violated)
            };
            Verdict { criterion: c, outcome }
        })
        .collect();
    Ok(VerdictRecord { verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{SplitState, UnsplitState};

    fn flat_metric(grid: &TorusGrid, g: &FlatMetric, c: f64) -> MetricField {
        ConformalMetric::new(*g, grid.constant(c)).to_metric_field()
    }

    #[test]
    fn flat_systole_enumeration() {
        assert_eq!(systole_flat(&FlatMetric::IDENTITY), 1.0);
        assert!((systole_flat(&FlatMetric::diag(4.0, 0.25).unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn graph_systole_and_inj_on_the_square_torus() {
        let grid = TorusGrid::new(32).unwrap();
        let m = flat_metric(&grid, &FlatMetric::IDENTITY, 0.0);
        let s = graph_systole(&grid, &m);
        assert!((s - 1.0).abs() < 1e-12, "{s}");
        let cm = ConformalMetric::flat(&grid, FlatMetric::IDENTITY);
        assert!((injectivity_lower_bound(&grid, &cm) - 0.5).abs() < 1e-12);
        let g = FlatMetric::diag(4.0, 0.25).unwrap();
        assert!((graph_systole(&grid, &flat_metric(&grid, &g, 0.0)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diameter_of_the_square_torus() {
        let grid = TorusGrid::new(32).unwrap();
        let d = diameter_estimate(&grid, &flat_metric(&grid, &FlatMetric::IDENTITY, 0.0));
        assert!((d - 0.5f64.sqrt()).abs() < 0.09 * 0.5f64.sqrt(), "{d}");
    }

    #[test]
    fn lengths_scale_with_constant_factor() {
        let grid = TorusGrid::new(16).unwrap();
        let g = FlatMetric::new(1.2, 0.3, (1.0 + 0.09) / 1.2).unwrap();
        let a = graph_systole(&grid, &flat_metric(&grid, &g, 0.0));
        let b = graph_systole(&grid, &flat_metric(&grid, &g, 0.5));
        assert!((b / a - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn flat_constant_spinor_report() {
        let grid = TorusGrid::new(16).unwrap();
        let phi = crate::spinor::SpinorField::constant(
            &grid,
            [num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 0.0)],
            Default::default(),
        );
        let cm = ConformalMetric::flat(&grid, FlatMetric::IDENTITY);
        let st = FlowState::Unsplit(UnsplitState::from_conformal(&cm, Datum::Spinor(phi.clone())));
        let rep = blowup_report(&grid, &st, None, &MonitorConfig::default(), 0.0, 0.0);
        assert!((rep.vol - 1.0).abs() < 1e-14);
        assert_eq!(rep.curvature_l2_sq, 0.0);
        assert!(rep.spinor_hess_sup.unwrap() < 1e-14);
        assert!((rep.inj_lower_bound - 0.5).abs() < 1e-12);
        // identical inputs give identical reports
        assert_eq!(rep, blowup_report(&grid, &st, None, &MonitorConfig::default(), 0.0, 0.0));
        let split = FlowState::Split(SplitState::new(&grid, cm, Datum::Spinor(phi)));
        let rep2 = blowup_report(&grid, &split, None, &MonitorConfig::default(), 0.0, 0.0);
        assert_eq!(rep2.inj_flat, Some(0.5));
        assert_eq!(rep2.u_c0, Some(0.0));
    }

    #[test]
    fn q_gate_rejects_small_exponents() {
        let cfg = MonitorConfig { epsilon: 0.5, q: 4.0 };
        assert!(cfg.validate().is_err());
        let rep = MonitorReport { inj_lower_bound: 1.0, ..Default::default() };
        assert!(verdict(&[rep], &Thresholds::default(), &cfg).is_err());
    }

    #[test]
    fn csv_row_matches_columns() {
        let rep = MonitorReport::default();
        let row = rep.csv_row(3, 0.5);
        assert_eq!(row.split(',').count(), REPORT_COLUMNS.len());
    }
}
