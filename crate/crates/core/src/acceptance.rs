//! Acceptance suite: twelve seeded, deterministic checks with pinned
//! tolerances. Each returns the measured quantity next to its bound.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::flows::{
    cfl_dt, step, uniformize, unsplit_rate, Datum, FlowKind, FlowParams, FlowState, Signs, SplitState, StepControl,
    UnsplitState,
};
use crate::gauge::{horizontal_basis, horizontal_projection, solve_gauge, solve_gauge_field_x, solve_rho, w12_norm, HorizontalTensor};
use crate::grid::{ScalarField, Sym2, SymTensorField, TorusGrid, VectorField};
use crate::metric::{integrate, scalar_curvature, ConformalMetric, FlatMetric, Geometry, MetricField};
use crate::monitors::{
    self, graph_systole, systole_flat, verdict, Criterion, MonitorConfig, MonitorReport, Outcome, Thresholds,
};
use crate::presets::{self, DatumPreset, FactorPreset};
use crate::runner;
use crate::spinor::{
    connection_laplacian, dirac, energy, frame_rotation_field, norm_sq, real_inner, second_covariant_derivative,
    spinor_gradients, SpinStructure, SpinorField,
};

/// Grid size of every criterion except the paired runs.
pub const N: usize = 64;
/// Grid size of the paired split/unsplit runs (see the README).
pub const N_PAIRED: usize = 32;

pub const GAUSS_BONNET_TOL: f64 = 1e-8;
pub const UNIFORMIZE_CURVATURE_TOL: f64 = 1e-6;
pub const UNIFORMIZE_FACTOR_TOL: f64 = 1e-6;
pub const MANUFACTURED_TOL: f64 = 1e-7;
pub const CONSTANT_SPREAD: f64 = 0.2;
/// Random inputs per seed whose largest ratio defines an estimate constant.
pub const BATCH: usize = 32;
pub const IDEMPOTENCE_TOL: f64 = 1e-12;
pub const ANNIHILATION_TOL: f64 = 1e-10;
pub const SPINOR_IDENTITY_TOL: f64 = 1e-7;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const DISSIPATION_TOL: f64 = 1e-4;
pub const VOLUME_DRIFT_TOL: f64 = 1e-6;
pub const PAIRED_TOL: f64 = 1e-3;
pub const PAIRED_FINAL_TIME: f64 = 0.1;
pub const STENCIL_FACTOR: f64 = 0.083;
pub const HOMOTHETY_TOL: f64 = 1e-9;
pub const HORIZONTAL_RATIO_TOL: f64 = 1e-10;

/// Deliberate defects used to check that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mutation {
    /// Flips the sign of the curvature term of the trace identity.
    TraceSign,
}

impl Mutation {
    pub fn parse(s: &str) -> Option<Self> {
        (s == "trace-sign").then_some(Mutation::TraceSign)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Measured values and their bounds, human readable.
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceReport {
    pub mutation: Option<Mutation>,
    pub results: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

fn result(id: u8, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult { id, name, passed, detail }
}

fn failed(id: u8, name: &'static str, e: Error) -> CriterionResult {
    result(id, name, false, format!("error: {e}"))
}

// Seeded random inputs.

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_field(grid: &TorusGrid, r: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    presets::random_band_limited(grid, r, 2, amp)
}

fn random_metric(r: &mut ChaCha8Rng) -> FlatMetric {
    let a = r.gen_range(0.7..1.4);
    let b = r.gen_range(-0.3..0.3);
    let c = r.gen_range(0.7..1.4);
    FlatMetric::normalized(Sym2::new(a, b, c)).expect("diagonally dominant").0
}

fn random_vector(grid: &TorusGrid, r: &mut ChaCha8Rng) -> VectorField {
    VectorField { x: random_field(grid, r, 1.0), y: random_field(grid, r, 1.0) }
}

fn random_sym(grid: &TorusGrid, r: &mut ChaCha8Rng) -> SymTensorField {
    let mut h = SymTensorField { xx: random_field(grid, r, 1.0), xy: random_field(grid, r, 1.0), yy: random_field(grid, r, 1.0) };
    let shift = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
    h.xx = h.xx.map(|v| v + shift[0]);
    h.xy = h.xy.map(|v| v + shift[1]);
    h.yy = h.yy.map(|v| v + shift[2]);
    h
}

fn random_spin(r: &mut ChaCha8Rng) -> SpinStructure {
    SpinStructure { x: r.gen_bool(0.5), y: r.gen_bool(0.5) }
}

fn random_spinor(grid: &TorusGrid, seed: u64, spin: SpinStructure) -> SpinorField {
    match presets::datum(grid, DatumPreset::RandomSpinor, 0.3, seed, 2, spin).expect("random spinors always exist") {
        Datum::Spinor(s) => s,
        _ => unreachable!(),
    }
}

fn l2_grid(grid: &TorusGrid, f: &[f64]) -> f64 {
    (f.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
}

fn l2_sym(geo: &Geometry, h: &SymTensorField) -> f64 {
    geo.lp(&geo.norm_sym(h), 2.0)
}

fn fmt_e(x: f64) -> String {
    format!("{x:.3e}")
}

/// Criterion 1: `|∫ R vol| < 1e−8 ‖R‖_{L¹}` for 20 random conformal metrics.
pub fn gauss_bonnet() -> CriterionResult {
    let grid = TorusGrid::new(N).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let g = random_metric(&mut r);
        let cm = ConformalMetric::new(g, random_field(&grid, &mut r, 0.4));
        let rc = scalar_curvature(&grid, &cm);
        let abs: Vec<f64> = rc.iter().map(|v| v.abs()).collect();
        worst = worst.max(integrate(&grid, &rc, &cm).abs() / integrate(&grid, &abs, &cm));
    }
    result(
        1,
        "gauss-bonnet",
        worst < GAUSS_BONNET_TOL,
        format!("max |∫R vol|/‖R‖₁ = {} over 20 metrics (tol {GAUSS_BONNET_TOL:e})", fmt_e(worst)),
    )
}

/// Outcome of the uniformization run, reused by the volume criterion.
pub struct UniformizationRun {
    pub result: CriterionResult,
    pub volume_drift_rate: Option<f64>,
}

/// Criterion 2: normalized Ricci flow from `0.3 sin 2πx sin 2πy` reaches
/// `‖R‖_∞ < 1e−6`, and the unit-volume split recovers `(G, u₀)`.
pub fn uniformization() -> UniformizationRun {
    let (id, name) = (2, "uniformization");
    let grid = TorusGrid::new(N).unwrap();
    let u0 = presets::conformal_factor(&grid, FactorPreset::SineBump, 0.3, 0, 0);
    let cm = ConformalMetric::new(FlatMetric::IDENTITY, u0.clone());
    let ctrl = StepControl { max_steps: 200_000, ..StepControl::default() };
    let out = match uniformize(&grid, &cm, UNIFORMIZE_CURVATURE_TOL, &ctrl) {
        Ok(o) => o,
        Err(e) => return UniformizationRun { result: failed(id, name, e), volume_drift_rate: None },
    };
    let err_u = out.w.add_scaled(&u0, -1.0).max_abs();
    let err_g = out.flat.matrix().sub(&Sym2::IDENTITY).max_abs();
    let rep = &out.report;
    let vol_end = integrate(&grid, &grid.constant(1.0), &ConformalMetric::new(FlatMetric::IDENTITY, out.u_limit.clone()));
    let drift = (vol_end - rep.initial_volume).abs() / rep.initial_volume / rep.final_time.max(f64::MIN_POSITIVE);
    let passed = rep.converged && err_u < UNIFORMIZE_FACTOR_TOL && err_g < UNIFORMIZE_FACTOR_TOL;
    UniformizationRun {
        result: result(
            id,
            name,
            passed,
            format!(
                "‖R‖_∞ = {} after {} steps (t = {:.4}; tol {UNIFORMIZE_CURVATURE_TOL:e}), ‖w − u₀‖_∞ = {}, |ĝ − G| = {} (tol {UNIFORMIZE_FACTOR_TOL:e})",
                fmt_e(rep.final_curvature_sup),
                rep.steps,
                rep.final_time,
                fmt_e(err_u),
                fmt_e(err_g)
            ),
        ),
        volume_drift_rate: Some(drift),
    }
}

/// Criterion 3: manufactured gauge data `e^{−2u}Q̊ = (L_Y ḡ)°` give `X = −Y` and
/// `ρ = −δY♭`; the estimate constants are stable across seeds.
pub fn manufactured_gauge() -> CriterionResult {
    let (id, name) = (3, "manufactured-gauge");
    let grid = TorusGrid::new(N).unwrap();
    let mut err: f64 = 0.0;
    let mut c_rho = Vec::new();
    let mut c_x = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(300 + seed);
        let g = random_metric(&mut r);
        let flat = Geometry::flat(&grid, &g);
        let u = random_field(&grid, &mut r, 0.3);
        let e2u = u.map(|v| (2.0 * v).exp());
        let y = random_vector(&grid, &mut r);
        // X is normalized orthogonal to parallel fields
        let (mx, my) = (grid.mean(&y.x), grid.mean(&y.y));
        let y = VectorField { x: y.x.map(|v| v - mx), y: y.y.map(|v| v - my) };
        let q = flat.trace_free(&flat.killing(&y)).weighted(&e2u);
        let sol = match solve_gauge(&grid, &q, &g, &u) {
            Ok(s) => s,
            Err(e) => return failed(id, name, e),
        };
        let want_rho = flat.codifferential(&flat.lower(&y)).scaled(-1.0);
        let ex = l2_grid(&grid, &sol.x.x.add_scaled(&y.x, 1.0)).hypot(l2_grid(&grid, &sol.x.y.add_scaled(&y.y, 1.0)));
        let er = l2_grid(&grid, &sol.rho.add_scaled(&want_rho, -1.0));
        // the X equation alone, fed the exact ρ
        let x_only = match solve_gauge_field_x(&grid, &q, &want_rho, &g, &u) {
            Ok(x) => x,
            Err(e) => return failed(id, name, e),
        };
        let ex2 = l2_grid(&grid, &x_only.x.add_scaled(&y.x, 1.0)).hypot(l2_grid(&grid, &x_only.y.add_scaled(&y.y, 1.0)));
        err = err.max(ex).max(er).max(ex2);

        // Estimate constants: largest ratio over a batch of random data.
        let (mut cr, mut cx): (f64, f64) = (0.0, 0.0);
        for _ in 0..BATCH {
            let uu = random_field(&grid, &mut r, 0.3);
            let cm = ConformalMetric::new(g, uu.clone());
            let geo = Geometry::conformal(&grid, &cm).unwrap();
            let qr = geo.trace_free(&random_sym(&grid, &mut r));
            let data = qr.weighted(&uu.map(|v| (-2.0 * v).exp()));
            let nd = l2_sym(&flat, &data);
            let rho = match solve_rho(&grid, &qr, &g, &uu) {
                Ok(s) => s,
                Err(e) => return failed(id, name, e),
            };
            let x = match solve_gauge_field_x(&grid, &qr, &rho, &g, &uu) {
                Ok(s) => s,
                Err(e) => return failed(id, name, e),
            };
            cr = cr.max(l2_grid(&grid, &rho) / nd);
            cx = cx.max(w12_norm(&grid, &flat, &x) / nd);
        }
        c_rho.push(cr);
        c_x.push(cx);
    }
    let spread = |c: &[f64]| {
        let mut s = c.to_vec();
        s.sort_by(f64::total_cmp);
        let med = 0.5 * (s[4] + s[5]);
        (med, c.iter().map(|v| (v / med - 1.0).abs()).fold(0.0, f64::max))
    };
    let (mr, sr) = spread(&c_rho);
    let (mx, sx) = spread(&c_x);
    result(
        id,
        name,
        err < MANUFACTURED_TOL && sr <= CONSTANT_SPREAD && sx <= CONSTANT_SPREAD,
        format!(
            "max L² error {} (tol {MANUFACTURED_TOL:e}); C_ρ = {mr:.4} ± {:.1}%, C_X = {mx:.4} ± {:.1}% over 10 seeds (tol ±{:.0}%)",
            fmt_e(err),
            100.0 * sr,
            100.0 * sx,
            100.0 * CONSTANT_SPREAD
        ),
    )
}

/// Criterion 4: `P∘P = P`, `P(δ*X♭) = 0`, `P(ρḡ) = 0` on random inputs.
pub fn horizontal_projection_check() -> CriterionResult {
    let grid = TorusGrid::new(N).unwrap();
    let (mut idem, mut ann): (f64, f64) = (0.0, 0.0);
    for seed in 0..10u64 {
        let mut r = rng(400 + seed);
        let g = random_metric(&mut r);
        let flat = Geometry::flat(&grid, &g);
        let p = horizontal_projection(&grid, &random_sym(&grid, &mut r), &g);
        let pp = horizontal_projection(&grid, &p.to_field(&grid), &g);
        idem = idem.max((p.coeffs[0] - pp.coeffs[0]).abs()).max((p.coeffs[1] - pp.coeffs[1]).abs());
        let x = random_vector(&grid, &mut r);
        ann = ann.max(horizontal_projection(&grid, &flat.killing(&x), &g).l2_norm());
        let rho = random_field(&grid, &mut r, 1.0).map(|v| v + 0.5);
        let pr = horizontal_projection(&grid, &SymTensorField::constant(&grid, g.matrix()).weighted(&rho), &g);
        ann = ann.max(pr.l2_norm());
    }
    result(
        4,
        "horizontal-projection",
        idem < IDEMPOTENCE_TOL && ann < ANNIHILATION_TOL,
        format!(
            "|P∘P − P| = {} (tol {IDEMPOTENCE_TOL:e}), max |P(δ*X♭)|, |P(ρḡ)| = {} (tol {ANNIHILATION_TOL:e})",
            fmt_e(idem),
            fmt_e(ann)
        ),
    )
}

/// Criterion 5: Lichnerowicz, trace identity, curvature-form identity and
/// `Q₂`-tangency residuals in `L²(g)` over 10 random states.
pub fn spinor_identities(mutation: Option<Mutation>) -> CriterionResult {
    let (id, name) = (5, "spinor-identities");
    let grid = TorusGrid::new(N).unwrap();
    let r_sign = if mutation == Some(Mutation::TraceSign) { 1.0 } else { -1.0 };
    let mut worst = [0.0f64; 4];
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let g = random_metric(&mut r);
        let spin = random_spin(&mut r);
        let cm = ConformalMetric::new(g, random_field(&grid, &mut r, 0.2));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let phi = random_spinor(&grid, 500 + seed, spin);
        let rc = geo.scalar_curvature();

        let lich = dirac(&geo, &dirac(&geo, &phi))
            .add_scaled(&connection_laplacian(&geo, &phi), -1.0)
            .add_scaled(&phi.weighted(rc), -0.25);
        let gr = match spinor_gradients(&geo, &phi) {
            Ok(g) => g,
            Err(e) => return failed(id, name, e),
        };
        let tr = geo.trace(&gr.q1);
        let d = dirac(&geo, &phi);
        let trace_res: Vec<f64> = (0..grid.len())
            .map(|k| tr[k] - (r_sign * rc[k] / 16.0 - 0.25 * gr.nabla_sq[k] + 0.25 * norm_sq(&d.data[k])))
            .collect();
        let curv = second_covariant_derivative(&geo, &phi).curvature_norm_sq();
        let curv_res: Vec<f64> = (0..grid.len()).map(|k| curv[k] - rc[k] * rc[k] / 8.0).collect();
        let tangency: Vec<f64> = (0..grid.len()).map(|k| real_inner(&gr.q2.data[k], &phi.data[k])).collect();

        let vals = [lich.l2_inner(&lich, &geo).sqrt(), geo.lp(&trace_res, 2.0), geo.lp(&curv_res, 2.0), geo.lp(&tangency, 2.0)];
        for i in 0..4 {
            worst[i] = worst[i].max(vals[i]);
        }
    }
    let names = ["Lichnerowicz", "trace identity", "|R^Σφ|² = R²/8", "Q₂ tangency"];
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {}", fmt_e(w)))
        .collect::<Vec<_>>()
        .join(", ");
    result(
        id,
        name,
        worst.iter().all(|&w| w < SPINOR_IDENTITY_TOL),
        format!("{detail} (tol {SPINOR_IDENTITY_TOL:e}){}", if mutation.is_some() { " [mutated]" } else { "" }),
    )
}

/// Criterion 6: centered differences of `E` along 5 metric and 5 spinor directions
/// against `−∫⟨Q₁, h⟩` and `−∫⟨Q₂, ψ⟩`.
pub fn gradient_correctness() -> CriterionResult {
    let (id, name) = (6, "gradient-correctness");
    let grid = TorusGrid::new(N).unwrap();
    let mut r = rng(600);
    let g = random_metric(&mut r);
    let spin = random_spin(&mut r);
    let cm = ConformalMetric::new(g, random_field(&grid, &mut r, 0.2));
    let mf = cm.to_metric_field();
    let geo = Geometry::new(&grid, &mf).unwrap();
    let phi = random_spinor(&grid, 600, spin);
    let gr = match spinor_gradients(&geo, &phi) {
        Ok(g) => g,
        Err(e) => return failed(id, name, e),
    };
    let s = 1e-4;
    let (mut w1, mut w2): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let h = random_sym(&grid, &mut r);
        let theta = frame_rotation_field(&geo, &h);
        let e_at = |s: f64| {
            let m = MetricField { g: mf.g.add_scaled(&h, s) };
            energy(&Geometry::new(&grid, &m).expect("small perturbation stays positive"), &phi.rotated(&theta.scaled(-s)))
        };
        let fd = (e_at(s) - e_at(-s)) / (2.0 * s);
        let want = -geo.l2_inner_sym(&gr.q1, &h);
        w1 = w1.max((fd - want).abs() / want.abs());

        let mut psi = random_spinor(&grid, r.gen(), spin);
        for (p, f) in psi.data.iter_mut().zip(&phi.data) {
            let c = real_inner(f, p);
            *p = [p[0] - f[0] * c, p[1] - f[1] * c];
        }
        let e_at = |s: f64| {
            let mut q = phi.add_scaled(&psi, s);
            q.normalize();
            energy(&geo, &q)
        };
        let fd = (e_at(s) - e_at(-s)) / (2.0 * s);
        let want = -gr.q2.l2_inner(&psi, &geo);
        w2 = w2.max((fd - want).abs() / want.abs());
    }
    result(
        id,
        name,
        w1 < GRADIENT_TOL && w2 < GRADIENT_TOL,
        format!("max relative error Q₁ {}, Q₂ {} over 5 directions each (tol {GRADIENT_TOL:e})", fmt_e(w1), fmt_e(w2)),
    )
}

/// Spinor-flow energy history, reused by the volume criterion.
pub struct GradientFlowRun {
    pub result: CriterionResult,
    pub spinor_volume_drift_rate: Option<f64>,
}

/// Criterion 7: along 200 fixed-`dt` spinor-flow steps, `dE/dt` from fourth-order
/// centered differences equals `−(‖Q₁‖² + ‖Q₂‖²)`; along the harmonic
/// Ricci flow the map energy never increases.
pub fn gradient_flow() -> GradientFlowRun {
    let (id, name) = (7, "gradient-flow");
    let fail = |e| GradientFlowRun { result: failed(id, name, e), spinor_volume_drift_rate: None };
    let grid = TorusGrid::new(N).unwrap();
    let mut r = rng(700);
    let g = random_metric(&mut r);
    let cm = ConformalMetric::new(g, random_field(&grid, &mut r, 0.2));
    let phi = random_spinor(&grid, 700, SpinStructure::default());

    let params = FlowParams::new(FlowKind::Spinor);
    let mut state = UnsplitState::from_conformal(&cm, Datum::Spinor(phi));
    let dt = 0.8 * cfl_dt(&grid, state.metric.min_eigenvalue(), &StepControl::default());
    let ctrl = StepControl { fixed_dt: Some(dt), final_time: f64::INFINITY, ..StepControl::default() };
    let steps = 200;
    let mut energies = Vec::with_capacity(steps + 1);
    let mut dissipation = Vec::with_capacity(steps + 1);
    let vol0 = state.geometry(&grid).unwrap().volume();
    for _ in 0..steps {
        let out = match step(&grid, &state, &mut |s: &UnsplitState| unsplit_rate(&grid, &params, s), &ctrl) {
            Ok(o) => o,
            Err(e) => return fail(e),
        };
        if out.halvings > 0 {
            return fail(Error::Invalid("fixed step was halved".into()));
        }
        let geo = state.geometry(&grid).unwrap();
        energies.push(state.datum.energy(&geo).unwrap());
        dissipation.push(out.rate.kinematics.dissipation.unwrap());
        state = out.state;
    }
    let geo = state.geometry(&grid).unwrap();
    energies.push(state.datum.energy(&geo).unwrap());
    let vol_drift = (geo.volume() - vol0).abs() / vol0 / state.t;
    let mut worst: f64 = 0.0;
    for k in 2..steps - 1 {
        let e = &energies;
        let de = (-e[k + 2] + 8.0 * e[k + 1] - 8.0 * e[k - 1] + e[k - 2]) / (12.0 * dt);
        worst = worst.max((de + dissipation[k]).abs() / dissipation[k]);
    }

    // Harmonic Ricci flow, α = 1, from a perturbed equator map.
    let hgrid = TorusGrid::new(N).unwrap();
    let mut hr = rng(701);
    let hcm = ConformalMetric::new(random_metric(&mut hr), random_field(&hgrid, &mut hr, 0.2));
    let map = match presets::datum(&hgrid, DatumPreset::RandomMap, 0.3, 701, 2, SpinStructure::default()) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let hparams = FlowParams::new(FlowKind::Hrf);
    let mut hs = UnsplitState::from_conformal(&hcm, map);
    let hctrl = StepControl { final_time: f64::INFINITY, ..StepControl::default() };
    let mut e_prev = hs.datum.energy(&hs.geometry(&hgrid).unwrap()).unwrap();
    let mut max_rise = f64::NEG_INFINITY;
    for _ in 0..steps {
        hs = match step(&hgrid, &hs, &mut |s: &UnsplitState| unsplit_rate(&hgrid, &hparams, s), &hctrl) {
            Ok(o) => o.state,
            Err(e) => return fail(e),
        };
        let e = hs.datum.energy(&hs.geometry(&hgrid).unwrap()).unwrap();
        max_rise = max_rise.max((e - e_prev) / e_prev);
        e_prev = e;
    }
    GradientFlowRun {
        result: result(
            id,
            name,
            worst < DISSIPATION_TOL && max_rise <= 0.0,
            format!(
                "max |dE/dt + ‖Q‖²|/‖Q‖² = {} over {steps} steps (tol {DISSIPATION_TOL:e}); HRF map energy largest step change {:+.3e} (must be ≤ 0)",
                fmt_e(worst),
                max_rise
            ),
        ),
        spinor_volume_drift_rate: Some(vol_drift),
    }
}

/// Criterion 8: volume drift per unit flow time of the spinor and Ricci runs.
pub fn volume_conservation(spinor: Option<f64>, ricci: Option<f64>) -> CriterionResult {
    let (id, name) = (8, "volume-conservation");
    match (spinor, ricci) {
        (Some(s), Some(r)) => result(
            id,
            name,
            s < VOLUME_DRIFT_TOL && r < VOLUME_DRIFT_TOL,
            format!(
                "|ΔVol|/Vol per unit time: spinor flow {}, normalized Ricci flow {} (tol {VOLUME_DRIFT_TOL:e})",
                fmt_e(s),
                fmt_e(r)
            ),
        ),
        _ => result(id, name, false, "source runs failed".into()),
    }
}

/// Criterion 9: paired split/unsplit runs over `[0, 0.1]`: the `(Vol, ∫R², E)` curves
/// agree for the default signs and disagree for the reversed ones.
pub fn split_consistency() -> CriterionResult {
    let (id, name) = (9, "split-consistency");
    let grid = TorusGrid::new(N_PAIRED).unwrap();
    let g = FlatMetric::normalized(Sym2::new(1.1, 0.2, 0.95)).unwrap().0;
    let u = presets::conformal_factor(&grid, FactorPreset::Random, 0.2, 9, 2);
    let cm = ConformalMetric::new(g, u);
    let ctrl = StepControl { final_time: PAIRED_FINAL_TIME, max_steps: 1_000_000, ..StepControl::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, preset) in [(FlowKind::Hrf, DatumPreset::RandomMap), (FlowKind::Spinor, DatumPreset::RandomSpinor)] {
        let datum = match presets::datum(&grid, preset, 0.3, 9, 2, SpinStructure::default()) {
            Ok(d) => d,
            Err(e) => return failed(id, name, e),
        };
        let mut passing = Vec::new();
        for signs in [Signs::Standard, Signs::Reversed] {
            let mut params = FlowParams::new(kind);
            params.signs = signs;
            let early = signs != Signs::default();
            let rep = match runner::paired_run(&grid, &cm, datum.clone(), &params, &ctrl, 20, PAIRED_TOL, early) {
                Ok(r) => r,
                Err(e) => return failed(id, name, e),
            };
            let worst = rep.max_rel.iter().cloned().fold(0.0, f64::max);
            let t_end = rep.points.last().map_or(0.0, |p| p.t);
            parts.push(format!("{} {:?}: max rel {} to t = {t_end:.3}", kind.name(), signs, fmt_e(worst)));
            if rep.passed {
                passing.push(signs);
            }
        }
        ok &= passing == [Signs::default()];
    }
    result(
        id,
        name,
        ok,
        format!("{} (tol {PAIRED_TOL:e}; n = {N_PAIRED}; exactly the default signs must pass)", parts.join("; ")),
    )
}

/// Criterion 10: graph systole against the lattice enumeration on 5 moduli, and
/// homothety laws under `u → u + ½`.
pub fn systole_estimators() -> CriterionResult {
    let (id, name) = (10, "systole-estimators");
    let grid = TorusGrid::new(N).unwrap();
    let s3 = 3f64.sqrt();
    let moduli = [
        Sym2::IDENTITY,
        Sym2::new(4.0, 0.0, 0.25),
        Sym2::new(2.0 / s3, 1.0 / s3, 2.0 / s3),
        Sym2::new(1.1, 0.2, 0.95),
        Sym2::new(2.0, -0.5, 0.625),
    ];
    let mut worst_sys: f64 = 0.0;
    for m in moduli {
        let g = FlatMetric::normalized(m).unwrap().0;
        let exact = systole_flat(&g);
        let est = graph_systole(&grid, &MetricField::constant(&grid, g.matrix()));
        worst_sys = worst_sys.max((est / exact - 1.0).abs());
    }

    let c = 0.5;
    let mut r = rng(1000);
    let g = random_metric(&mut r);
    let u = random_field(&grid, &mut r, 0.3);
    let cfg = MonitorConfig::default();
    let mk = |u: ScalarField| {
        let st = FlowState::Split(SplitState::new(&grid, ConformalMetric::new(g, u), Datum::None));
        monitors::blowup_report(&grid, &st, None, &cfg, 0.0, 0.0)
    };
    let a = mk(u.clone());
    let b = mk(u.map(|v| v + c));
    let p = 2.0 + cfg.epsilon;
    let laws = [
        (b.vol, a.vol * (2.0 * c).exp()),
        (b.inj_lower_bound, a.inj_lower_bound * c.exp()),
        (b.diameter_est, a.diameter_est * c.exp()),
        (b.curvature_l2_sq, a.curvature_l2_sq * ((2.0 - 2.0 * 2.0) * c).exp()),
        (b.curvature_lp, a.curvature_lp * ((2.0 - 2.0 * p) * c).exp()),
    ];
    let worst_h = laws.iter().map(|(x, y)| (x / y - 1.0).abs()).fold(0.0, f64::max);
    result(
        id,
        name,
        worst_sys <= STENCIL_FACTOR && worst_h < HOMOTHETY_TOL,
        format!(
            "graph/flat systole max deviation {:.2}% on 5 moduli (tol {:.1}%); homothety laws max relative error {} (tol {HOMOTHETY_TOL:e})",
            100.0 * worst_sys,
            100.0 * STENCIL_FACTOR,
            fmt_e(worst_h)
        ),
    )
}

/// Criterion 11: `‖∂_t ḡ‖_{C⁰} = ‖∂_t ḡ‖_{L²}` along split harmonic Ricci and
/// spinor runs.
pub fn horizontal_norm_identity() -> CriterionResult {
    let (id, name) = (11, "horizontal-norm-identity");
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (flow, datum) in [("hrf-split", "random-map"), ("spinor-split", "random-spinor")] {
        let text = format!(
            "[run]\nflow = \"{flow}\"\nn = {N}\nseed = 11\nmonitor_every = 5\n[metric]\ng = [1.2, 0.3, 0.9]\n\
             [initial]\npreset = \"random\"\namplitude = 0.2\ndatum = \"{datum}\"\ndatum_amplitude = 0.3\n[step]\nmax_steps = 20\n"
        );
        let cfg = match crate::config::parse_config(&text) {
            Ok(c) => c,
            Err(e) => return failed(id, name, e),
        };
        let traj = match runner::initial_state(&cfg).and_then(|(grid, s)| runner::run_flow(&grid, &cfg, s, &text, None)) {
            Ok(t) => t,
            Err(e) => return failed(id, name, e),
        };
        for rep in &traj.reports {
            if let (Some(c0), Some(l2)) = (rep.horizontal_c0, rep.horizontal_l2) {
                if l2 > 0.0 {
                    worst = worst.max((c0 / l2 - 1.0).abs());
                    count += 1;
                }
            }
        }
    }
    // The same identity for arbitrary horizontal tensors of random moduli.
    let mut r = rng(1100);
    for _ in 0..10 {
        let g = random_metric(&mut r);
        let h = HorizontalTensor { coeffs: [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)], basis: horizontal_basis(&g) };
        worst = worst.max((h.c0_norm(&g) / h.l2_norm() - 1.0).abs());
    }
    result(
        id,
        name,
        count > 0 && worst < HORIZONTAL_RATIO_TOL,
        format!("max |C⁰/L² − 1| = {} over {count} split reports and 10 random moduli (tol {HORIZONTAL_RATIO_TOL:e})", fmt_e(worst)),
    )
}

/// Criterion 12: synthetic report streams with injected violations.
pub fn verdict_logic() -> CriterionResult {
    let (id, name) = (12, "verdict-logic");
    let th = Thresholds::default();
    let cfg = MonitorConfig::default();
    let base = |t: f64| MonitorReport {
        t,
        vol: 1.0,
        inj_lower_bound: 0.5,
        diameter_est: 0.7,
        map_energy_lp: Some(0.0),
        spinor_hess_lq: Some(0.0),
        spinor_hess_sup: Some(0.0),
        ..Default::default()
    };
    let stream = |f: &dyn Fn(&mut MonitorReport)| -> Vec<MonitorReport> {
        (0..10)
            .map(|i| {
                let mut r = base(0.1 * i as f64);
                f(&mut r);
                r
            })
            .collect()
    };
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let judge = |reps: &[MonitorReport]| verdict(reps, &th, &cfg).expect("valid exponents");

    let v = judge(&stream(&|_| {}));
    checks.push(("all-zero stream holds", v.all_hold() && Criterion::ALL.iter().all(|&c| *v.get(c) == Outcome::Holds)));

    let v = judge(&stream(&|r| {
        if r.t > 0.25 {
            r.spinor_hess_sup = Some(f64::NAN);
        }
    }));
    let hit = |o: &Outcome, q: &str, t: f64| matches!(o, Outcome::Violated(x) if x.quantity == q && (x.t - t).abs() < 1e-12);
    checks.push((
        "NaN sup|∇²φ| fails the pointwise criterion only",
        hit(v.get(Criterion::SpinorPointwiseExtension), "spinor_hess_sup", 0.3)
            && *v.get(Criterion::SpinorIntegralExtension) == Outcome::Holds
            && *v.get(Criterion::GeometricControl) == Outcome::Holds,
    ));

    let v = judge(&stream(&|r| r.inj_lower_bound = 0.5 * (-20.0 * r.t).exp()));
    let t_cross = (0..10).map(|i| 0.1 * i as f64).find(|t| 0.5 * (-20.0 * t).exp() < th.inj_min).unwrap();
    checks.push((
        "decaying inj is named",
        hit(v.get(Criterion::GeometricControl), "inj_lower_bound", t_cross)
            && hit(v.get(Criterion::HarmonicRicciExtension), "inj_lower_bound", t_cross)
            && *v.get(Criterion::SpinorPointwiseExtension) == Outcome::Holds,
    ));

    let v = judge(&stream(&|r| {
        if r.t > 0.45 {
            r.curvature_lp = 2.0 * th.hrf_integral_max;
        }
    }));
    checks.push((
        "harmonic Ricci integral",
        hit(v.get(Criterion::HarmonicRicciExtension), "curvature_lp+map_energy_lp", 0.5)
            && *v.get(Criterion::GeometricControl) == Outcome::Holds,
    ));

    let v = judge(&stream(&|r| {
        if r.t > 0.65 {
            r.spinor_hess_lq = Some(2.0 * th.spinor_hess_lq_max);
        }
    }));
    checks.push(("spinor integral", hit(v.get(Criterion::SpinorIntegralExtension), "spinor_hess_lq", 0.7)));

    let v = judge(&stream(&|r| {
        r.map_energy_lp = None;
        r.spinor_hess_lq = None;
        r.spinor_hess_sup = None;
    }));
    checks.push((
        "missing quantities are not applicable",
        *v.get(Criterion::SpinorIntegralExtension) == Outcome::NotApplicable
            && *v.get(Criterion::HarmonicRicciExtension) == Outcome::NotApplicable,
    ));

    let bad_q = verdict(&stream(&|_| {}), &th, &MonitorConfig { q: 4.0, ..cfg }).is_err();
    let bad_cfg = crate::config::parse_config("[run]\nflow = \"spinor\"\nn = 16\n[initial]\ndatum = \"random-spinor\"\n[monitor]\nq = 3\n").is_err();
    checks.push(("q > 4 gate", bad_q && bad_cfg));

    let failed_names: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    result(
        id,
        name,
        failed_names.is_empty(),
        if failed_names.is_empty() {
            format!("{} synthetic streams judged as expected", checks.len())
        } else {
            format!("wrong verdicts: {}", failed_names.join(", "))
        },
    )
}

/// Runs every criterion in order.
pub fn run_all(mutation: Option<Mutation>) -> AcceptanceReport {
    run_with(mutation, |_| {})
}

/// As [`run_all`], calling `progress` after each criterion.
pub fn run_with(mutation: Option<Mutation>, mut progress: impl FnMut(&CriterionResult)) -> AcceptanceReport {
    let mut results = Vec::with_capacity(12);
    let mut push = |r: CriterionResult| {
        progress(&r);
        results.push(r);
    };
    push(gauss_bonnet());
    let uni = uniformization();
    push(uni.result);
    push(manufactured_gauge());
    push(horizontal_projection_check());
    push(spinor_identities(mutation));
    push(gradient_correctness());
    let gf = gradient_flow();
    push(gf.result);
    push(volume_conservation(gf.spinor_volume_drift_rate, uni.volume_drift_rate));
    push(split_consistency());
    push(systole_estimators());
    push(horizontal_norm_identity());
    push(verdict_logic());
    AcceptanceReport { mutation, results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_names() {
        assert_eq!(Mutation::parse("trace-sign"), Some(Mutation::TraceSign));
        assert_eq!(Mutation::parse("none"), None);
    }

    #[test]
    fn trace_sign_mutation_fails_only_the_trace_identity() {
        let r = spinor_identities(Some(Mutation::TraceSign));
        assert!(!r.passed);
        assert!(r.detail.contains("[mutated]"));
        assert!(spinor_identities(None).passed);
    }

    #[test]
    fn cheap_criteria_pass() {
        for r in [gauss_bonnet(), horizontal_projection_check(), verdict_logic()] {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn volume_criterion_needs_both_runs() {
        assert!(!volume_conservation(Some(0.0), None).passed);
        assert!(volume_conservation(Some(1e-9), Some(1e-9)).passed);
        assert!(!volume_conservation(Some(1e-5), Some(0.0)).passed);
    }

    #[test]
    fn result_lines_are_tagged() {
        let r = result(4, "x", false, "y".into());
        assert_eq!(r.to_string(), "[FAIL]  4 x: y");
    }
}
