//! Run configuration: TOML with flat sections and typed scalars.
//!
//! Validation is exhaustive: every problem in the file is collected, and
//! unknown sections or keys are errors.
//!
//! ```toml
//! [run]
//! flow = "hrf-split"   # ricci | hrf | hrf-split | spinor | spinor-split | paired-consistency
//! n = 64
//!
//! [metric]
//! g = [1.0, 0.0, 1.0]  # (g11, g12, g22), renormalized to unit determinant
//!
//! [initial]
//! preset = "random"    # flat | sine-bump | random, or give `snapshot`
//! amplitude = 0.2
//! datum = "random-map"
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::flows::{FlowKind, FlowParams, Signs, SpinorRho, StepControl};
use crate::gauge::RhoAssembly;
use crate::grid::Sym2;
use crate::metric::FlatMetric;
use crate::monitors::{MonitorConfig, Thresholds};
use crate::presets::{DatumPreset, FactorPreset};
use crate::spinor::SpinStructure;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RunKind {
    Flow(FlowKind),
    /// Split and unsplit runs of the same flow (`Hrf` or `Spinor`) from the
    /// same data, compared through their invariant curves.
    Paired(FlowKind),
}

impl RunKind {
    pub fn flow(&self) -> FlowKind {
        match self {
            RunKind::Flow(k) | RunKind::Paired(k) => *k,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum InitialSource {
    Preset {
        factor: FactorPreset,
        amplitude: f64,
        modes: usize,
        datum: DatumPreset,
        datum_amplitude: f64,
    },
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub kind: RunKind,
    pub n: usize,
    pub seed: u64,
    /// Trajectory directory, relative to the output root unless absolute.
    pub output: Option<PathBuf>,
    pub monitor_every: usize,
    pub snapshot_every: usize,
    pub metric: FlatMetric,
    pub initial: InitialSource,
    pub spin: SpinStructure,
    pub params: FlowParams,
    /// Stop once `‖R‖_∞` falls below this (Ricci flow and uniformization).
    pub curvature_tol: f64,
    /// Relative tolerance of the paired comparison.
    pub paired_tol: f64,
    pub monitor: MonitorConfig,
    pub step: StepControl,
    pub thresholds: Thresholds,
    /// Non-fatal adjustments, such as determinant renormalization.
    pub warnings: Vec<String>,
}

const SECTIONS: [&str; 7] = ["run", "metric", "initial", "flow", "monitor", "step", "thresholds"];

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errs: &mut Vec<String>) -> Self {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errs.push(format!("[{name}] must be a table"));
                None
            }
        };
        Self { name, table, used: BTreeSet::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn typed<T>(
        &mut self,
        key: &'static str,
        what: &str,
        errs: &mut Vec<String>,
        f: impl Fn(&'a Value) -> Option<T>,
    ) -> Option<T> {
        let v = self.raw(key)?;
        let out = f(v);
        if out.is_none() {
            errs.push(format!("{}.{key}: expected {what}, got {}", self.name, v.type_str()));
        }
        out
    }

    fn float(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        self.typed(key, "a number", errs, as_float)
    }

    fn int(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<i64> {
        self.typed(key, "an integer", errs, Value::as_integer)
    }

    fn count(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<usize> {
        let v = self.int(key, errs)?;
        if v < 0 {
            errs.push(format!("{}.{key}: must be non-negative, got {v}", self.name));
            return None;
        }
        Some(v as usize)
    }

    fn string(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<&'a str> {
        self.typed(key, "a string", errs, Value::as_str)
    }

    fn choice<T>(
        &mut self,
        key: &'static str,
        options: &str,
        errs: &mut Vec<String>,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Option<T> {
        let s = self.string(key, errs)?;
        let out = parse(s);
        if out.is_none() {
            errs.push(format!("{}.{key}: unknown value \"{s}\" (expected one of {options})", self.name));
        }
        out
    }

    fn finish(self, errs: &mut Vec<String>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k.as_str()) {
                    errs.push(format!("{}.{k}: unknown key", self.name));
                }
            }
        }
    }
}

fn as_float(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn parse_flow(s: &str) -> Option<RunKind> {
    Some(match s {
        "ricci" => RunKind::Flow(FlowKind::Ricci),
        "hrf" => RunKind::Flow(FlowKind::Hrf),
        "hrf-split" => RunKind::Flow(FlowKind::HrfSplit),
        "spinor" => RunKind::Flow(FlowKind::Spinor),
        "spinor-split" => RunKind::Flow(FlowKind::SpinorSplit),
        "paired-consistency" => RunKind::Paired(FlowKind::Hrf),
        _ => return None,
    })
}

/// Parses and validates configuration text, reporting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
    let mut errs = Vec::new();
    let mut warnings = Vec::new();
    for k in root.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            errs.push(format!("unknown section or top-level key \"{k}\""));
        }
    }

    let mut run = Section::new(&root, "run", &mut errs);
    let kind = run.choice("flow", "ricci, hrf, hrf-split, spinor, spinor-split, paired-consistency", &mut errs, parse_flow);
    if run.raw("flow").is_none() {
        errs.push("run.flow: missing required key".into());
    }
    let n = run.count("n", &mut errs);
    if run.raw("n").is_none() {
        errs.push("run.n: missing required key".into());
    }
    if let Some(n) = n {
        if n < 8 || !n.is_power_of_two() {
            errs.push(format!("run.n: {n} must be a power of two and at least 8"));
        }
    }
    let seed = run.int("seed", &mut errs).unwrap_or(0) as u64;
    let output = run.string("output", &mut errs).map(PathBuf::from);
    let monitor_every = run.count("monitor_every", &mut errs).unwrap_or(10);
    let snapshot_every = run.count("snapshot_every", &mut errs).unwrap_or(100);
    if monitor_every == 0 {
        errs.push("run.monitor_every: must be at least 1".into());
    }
    run.finish(&mut errs);

    let mut metric = Section::new(&root, "metric", &mut errs);
    let g = metric.typed("g", "an array of three numbers", &mut errs, |v| {
        let a = v.as_array()?;
        let xs: Option<Vec<f64>> = a.iter().map(as_float).collect();
        xs.filter(|x| x.len() == 3)
    });
    metric.finish(&mut errs);
    let base = match g {
        None => Some(FlatMetric::IDENTITY),
        Some(g) => {
            let m = Sym2::new(g[0], g[1], g[2]);
            match FlatMetric::normalized(m) {
                Ok((f, det)) => {
                    if (det - 1.0).abs() > 1e-12 {
                        let r = f.matrix();
                        warnings.push(format!(
                            "metric.g has determinant {det}; renormalized to [{}, {}, {}]",
                            r.xx, r.xy, r.yy
                        ));
                    }
                    Some(f)
                }
                Err(e) => {
                    errs.push(format!("metric.g: {e}"));
                    None
                }
            }
        }
    };

    let mut init = Section::new(&root, "initial", &mut errs);
    let snapshot = init.string("snapshot", &mut errs).map(PathBuf::from);
    let factor = init.choice("preset", "flat, sine-bump, random", &mut errs, FactorPreset::parse);
    let amplitude = init.float("amplitude", &mut errs).unwrap_or(0.0);
    let modes = init.count("modes", &mut errs).unwrap_or(2);
    let datum = init.choice(
        "datum",
        "none, constant-map, equator-map, random-map, constant-spinor, random-spinor",
        &mut errs,
        DatumPreset::parse,
    );
    let datum_amplitude = init.float("datum_amplitude", &mut errs).unwrap_or(0.0);
    let spin = init
        .typed("spin", "an array of two booleans", &mut errs, |v| {
            let a = v.as_array()?;
            let b: Option<Vec<bool>> = a.iter().map(Value::as_bool).collect();
            b.filter(|b| b.len() == 2).map(|b| SpinStructure { x: b[0], y: b[1] })
        })
        .unwrap_or_default();
    init.finish(&mut errs);
    if !(amplitude.is_finite() && datum_amplitude.is_finite()) {
        errs.push("initial: amplitudes must be finite".into());
    }

    let mut flow = Section::new(&root, "flow", &mut errs);
    let paired = flow.choice("paired", "hrf, spinor", &mut errs, |s| match s {
        "hrf" => Some(FlowKind::Hrf),
        "spinor" => Some(FlowKind::Spinor),
        _ => None,
    });
    let alpha = flow.float("alpha", &mut errs).unwrap_or(1.0);
    let signs = flow
        .choice("signs", "standard, reversed", &mut errs, |s| match s {
            "standard" => Some(Signs::Standard),
            "reversed" => Some(Signs::Reversed),
            _ => None,
        })
        .unwrap_or_default();
    let rho = flow
        .choice("rho", "direct, half-trace, curvature-weighted", &mut errs, |s| match s {
            "direct" => Some(SpinorRho::Direct),
            "half-trace" => Some(SpinorRho::Assembled(RhoAssembly::HalfTrace)),
            "curvature-weighted" => Some(SpinorRho::Assembled(RhoAssembly::CurvatureWeighted)),
            _ => None,
        })
        .unwrap_or_default();
    let curvature_tol = flow.float("curvature_tol", &mut errs).unwrap_or(1e-6);
    let paired_tol = flow.float("paired_tol", &mut errs).unwrap_or(1e-3);
    flow.finish(&mut errs);
    if !(alpha > 0.0) {
        errs.push(format!("flow.alpha: {alpha} must be positive"));
    }
    if !(curvature_tol > 0.0) {
        errs.push(format!("flow.curvature_tol: {curvature_tol} must be positive"));
    }
    if !(paired_tol > 0.0) {
        errs.push(format!("flow.paired_tol: {paired_tol} must be positive"));
    }

    let mut mon = Section::new(&root, "monitor", &mut errs);
    let monitor = MonitorConfig {
        epsilon: mon.float("epsilon", &mut errs).unwrap_or(crate::monitors::DEFAULT_EPSILON),
        q: mon.float("q", &mut errs).unwrap_or(crate::monitors::DEFAULT_Q),
    };
    mon.finish(&mut errs);
    if let Err(Error::Config(e)) = monitor.validate() {
        errs.extend(e.into_iter().map(|m| format!("monitor: {m}")));
    }

    let mut st = Section::new(&root, "step", &mut errs);
    let d = StepControl::default();
    let step = StepControl {
        cfl: st.float("cfl", &mut errs).unwrap_or(d.cfl),
        diffusion: st.float("diffusion", &mut errs).unwrap_or(d.diffusion),
        fixed_dt: st.float("dt", &mut errs),
        max_steps: st.count("max_steps", &mut errs).unwrap_or(d.max_steps),
        final_time: st.float("final_time", &mut errs).unwrap_or(d.final_time),
        stationary_tol: st.float("stationary_tol", &mut errs).unwrap_or(d.stationary_tol),
    };
    st.finish(&mut errs);
    if !(step.cfl > 0.0 && step.cfl <= 1.0) {
        errs.push(format!("step.cfl: {} must lie in (0, 1]", step.cfl));
    }
    if !(step.diffusion > 0.0) {
        errs.push(format!("step.diffusion: {} must be positive", step.diffusion));
    }
    if let Some(dt) = step.fixed_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            errs.push(format!("step.dt: {dt} must be positive"));
        }
    }
    if !(step.final_time >= 0.0) {
        errs.push(format!("step.final_time: {} must be non-negative", step.final_time));
    }
    if !(step.stationary_tol >= 0.0) {
        errs.push(format!("step.stationary_tol: {} must be non-negative", step.stationary_tol));
    }

    let mut th = Section::new(&root, "thresholds", &mut errs);
    let td = Thresholds::default();
    let thresholds = Thresholds {
        vol_max: th.float("vol_max", &mut errs).unwrap_or(td.vol_max),
        curvature_l2_max: th.float("curvature_l2_max", &mut errs).unwrap_or(td.curvature_l2_max),
        hrf_integral_max: th.float("hrf_integral_max", &mut errs).unwrap_or(td.hrf_integral_max),
        spinor_hess_lq_max: th.float("spinor_hess_lq_max", &mut errs).unwrap_or(td.spinor_hess_lq_max),
        spinor_hess_sup_max: th.float("spinor_hess_sup_max", &mut errs).unwrap_or(td.spinor_hess_sup_max),
        inj_min: th.float("inj_min", &mut errs).unwrap_or(td.inj_min),
        window: th.float("window", &mut errs),
    };
    th.finish(&mut errs);
    if let Some(w) = thresholds.window {
        if !(w > 0.0) {
            errs.push(format!("thresholds.window: {w} must be positive"));
        }
    }

    // Cross-field checks.
    let kind = kind.map(|k| match k {
        RunKind::Paired(_) => RunKind::Paired(paired.unwrap_or(FlowKind::Hrf)),
        other => other,
    });
    if paired.is_some() && !matches!(kind, Some(RunKind::Paired(_))) {
        errs.push("flow.paired: only meaningful with run.flow = \"paired-consistency\"".into());
    }
    let initial = match snapshot {
        Some(p) => {
            if factor.is_some() || datum.is_some() {
                errs.push("initial: give either snapshot or presets, not both".into());
            }
            InitialSource::Snapshot(p)
        }
        None => {
            let datum = datum.unwrap_or(DatumPreset::None);
            if let Some(k) = kind {
                let flow = k.flow();
                let ok = match flow {
                    FlowKind::Ricci => datum == DatumPreset::None,
                    FlowKind::Hrf | FlowKind::HrfSplit => datum.is_map(),
                    FlowKind::Spinor | FlowKind::SpinorSplit => datum.is_spinor(),
                };
                if !ok {
                    errs.push(format!("initial.datum: \"{}\" does not fit flow \"{}\"", datum.name(), flow.name()));
                }
            }
            if datum == DatumPreset::ConstantSpinor && (spin.x || spin.y) {
                errs.push("initial.datum: constant spinors need spin = [false, false]".into());
            }
            InitialSource::Preset {
                factor: factor.unwrap_or(FactorPreset::Flat),
                amplitude,
                modes,
                datum,
                datum_amplitude,
            }
        }
    };

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let kind = kind.expect("checked above");
    let mut params = FlowParams::new(kind.flow());
    params.alpha = alpha;
    params.signs = signs;
    params.rho = rho;
    Ok(RunConfig {
        kind,
        n: n.expect("checked above"),
        seed,
        output,
        monitor_every,
        snapshot_every,
        metric: base.expect("checked above"),
        initial,
        spin,
        params,
        curvature_tol,
        paired_tol,
        monitor,
        step,
        thresholds,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_ricci_config() {
        let c = parse_config("[run]\nflow = \"ricci\"\nn = 64\n[initial]\npreset = \"sine-bump\"\namplitude = 0.3\n").unwrap();
        assert_eq!(c.kind, RunKind::Flow(FlowKind::Ricci));
        assert_eq!(c.n, 64);
        assert!(c.warnings.is_empty());
        assert!(matches!(c.initial, InitialSource::Preset { factor: FactorPreset::SineBump, .. }));
    }

    #[test]
    fn small_q_is_rejected() {
        let e = errors("[run]\nflow = \"ricci\"\nn = 64\n[monitor]\nq = 3\n");
        assert_eq!(e.len(), 1);
        assert!(e[0].contains("q > 4"), "{e:?}");
    }

    #[test]
    fn non_unit_determinant_is_renormalized() {
        let c = parse_config("[run]\nflow = \"ricci\"\nn = 16\n[metric]\ng = [2.0, 0.0, 1.0]\n").unwrap();
        let m = c.metric.matrix();
        assert!((m.xx - 2f64.sqrt()).abs() < 1e-15 && (m.yy - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn all_errors_are_collected() {
        let e = errors(
            "[run]\nn = 12\nflaw = 1\n[monitor]\nepsilon = -1\nq = \"six\"\n[step]\ncfl = 2.0\n[extra]\nx = 1\n",
        );
        let joined = e.join("\n");
        for needle in ["run.flow: missing", "power of two", "run.flaw: unknown key", "epsilon", "monitor.q: expected a number", "step.cfl", "\"extra\""] {
            assert!(joined.contains(needle), "missing {needle:?} in\n{joined}");
        }
    }

    #[test]
    fn paired_and_datum_checks() {
        let c = parse_config(
            "[run]\nflow = \"paired-consistency\"\nn = 32\n[flow]\npaired = \"spinor\"\n[initial]\ndatum = \"random-spinor\"\n",
        )
        .unwrap();
        assert_eq!(c.kind, RunKind::Paired(FlowKind::Spinor));
        let e = errors("[run]\nflow = \"hrf\"\nn = 32\n[initial]\ndatum = \"random-spinor\"\n");
        assert!(e[0].contains("does not fit"));
    }
}
