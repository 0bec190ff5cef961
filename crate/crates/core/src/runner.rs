//! Trajectory driver: steps a flow, emits monitor reports, persists
//! snapshots and renders the final verdict.
//!
//! A trajectory directory holds
//!
//! - `config.toml`: copy of the configuration text;
//! - `snapshots/snap_<step>.bin`: ordered state snapshots;
//! - `timeseries.csv`: `#`-prefixed config echo, a header row, one row per report;
//! - `verdict.json`: termination and per-criterion outcomes;
//! - `paired.csv`: invariant curves of a paired run, instead of the above series.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{InitialSource, RunConfig, RunKind};
use crate::error::{Error, Result};
use crate::flows::{
    split_rate, step, unsplit_rate, Datum, FlowKind, FlowParams, FlowState, Kinematics, Rk4State, SplitState, StepControl,
    UnsplitState,
};
use crate::grid::TorusGrid;
use crate::metric::ConformalMetric;
use crate::monitors::{blowup_report, verdict, MonitorConfig, MonitorReport, Thresholds, VerdictRecord, REPORT_COLUMNS};
use crate::presets;
use crate::snapshot;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Termination {
    FinalTime,
    /// `‖R‖_∞` fell below the configured tolerance.
    Converged { curvature_sup: f64 },
    /// The first rate was below the stationarity tolerance.
    Stationary,
    MaxSteps,
    /// A monitored quantity became non-finite.
    BlowUp { t: f64 },
    Aborted { t: f64, reason: String },
}

impl Termination {
    pub fn is_abort(&self) -> bool {
        matches!(self, Termination::Aborted { .. } | Termination::BlowUp { .. })
    }
}

/// Everything a run produced.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub flow: FlowKind,
    pub steps: usize,
    pub final_time: f64,
    pub termination: Termination,
    pub reports: Vec<MonitorReport>,
    /// Times of the persisted snapshots.
    pub snapshot_times: Vec<f64>,
    pub verdict: Option<VerdictRecord>,
    pub verdict_line: String,
    #[serde(skip)]
    pub final_state: Option<FlowState>,
}

/// Output sink of a run; `None` keeps everything in memory.
struct Sink {
    dir: Option<PathBuf>,
    csv: Option<fs::File>,
}

impl Sink {
    fn open(dir: Option<&Path>, config_text: &str, monitor: &MonitorConfig, thresholds: &Thresholds) -> Result<Self> {
        let Some(dir) = dir else { return Ok(Sink { dir: None, csv: None }) };
        fs::create_dir_all(dir.join("snapshots"))?;
        fs::write(dir.join("config.toml"), config_text)?;
        let mut csv = fs::File::create(dir.join("timeseries.csv"))?;
        writeln!(csv, "# epsilon = {:e}, q = {:e}", monitor.epsilon, monitor.q)?;
        writeln!(csv, "# thresholds = {}", serde_json::to_string(thresholds).expect("thresholds serialize"))?;
        writeln!(csv, "{}", REPORT_COLUMNS.join(","))?;
        Ok(Sink { dir: Some(dir.to_path_buf()), csv: Some(csv) })
    }

    fn report(&mut self, r: &MonitorReport, steps: usize, dt: f64) -> Result<()> {
        if let Some(f) = &mut self.csv {
            writeln!(f, "{}", r.csv_row(steps, dt))?;
            f.flush()?;
        }
        Ok(())
    }

    fn snapshot(&mut self, grid: &TorusGrid, state: &FlowState, steps: usize) -> Result<()> {
        if let Some(dir) = &self.dir {
            snapshot::write(&dir.join("snapshots").join(format!("snap_{steps:08}.bin")), grid, state)?;
        }
        Ok(())
    }

    fn verdict(&mut self, traj: &Trajectory) -> Result<()> {
        if let Some(dir) = &self.dir {
            let tmp = dir.join("verdict.json.tmp");
            fs::write(&tmp, serde_json::to_string_pretty(traj).expect("trajectory serializes"))?;
            fs::rename(tmp, dir.join("verdict.json"))?;
        }
        Ok(())
    }
}

/// Grid, conformal metric and datum of a preset configuration.
pub fn preset_data(cfg: &RunConfig) -> Result<(TorusGrid, ConformalMetric, Datum)> {
    let InitialSource::Preset { factor, amplitude, modes, datum, datum_amplitude } = &cfg.initial else {
        return Err(Error::Invalid("configuration reads its initial data from a snapshot".into()));
    };
    let grid = TorusGrid::new(cfg.n)?;
    let u = presets::conformal_factor(&grid, *factor, *amplitude, cfg.seed, *modes);
    let d = presets::datum(&grid, *datum, *datum_amplitude, cfg.seed, *modes, cfg.spin)?;
    Ok((grid, ConformalMetric::new(cfg.metric, u), d))
}

/// Initial state of a run from presets or a snapshot.
pub fn initial_state(cfg: &RunConfig) -> Result<(TorusGrid, FlowState)> {
    let split = cfg.kind.flow().is_split() && matches!(cfg.kind, RunKind::Flow(_));
    match &cfg.initial {
        InitialSource::Preset { .. } => {
            let (grid, cm, d) = preset_data(cfg)?;
            let state = if split {
                FlowState::Split(SplitState::new(&grid, cm, d))
            } else {
                FlowState::Unsplit(UnsplitState::from_conformal(&cm, d))
            };
            Ok((grid, state))
        }
        InitialSource::Snapshot(path) => {
            let (grid, state) = snapshot::read(path)?;
            if grid.n() != cfg.n {
                return Err(Error::Invalid(format!("snapshot has n = {}, config has n = {}", grid.n(), cfg.n)));
            }
            let state = match (state, split) {
                (FlowState::Split(s), false) => {
                    let mut u = UnsplitState::from_conformal(&s.conformal(), s.datum);
                    u.t = s.t;
                    FlowState::Unsplit(u)
                }
                (FlowState::Unsplit(_), true) => {
                    return Err(Error::Invalid("a split run needs a split snapshot".into()));
                }
                (s, _) => s,
            };
            Ok((grid, state))
        }
    }
}

trait Driven: Rk4State + Clone {
    fn flow_state(&self) -> FlowState;
    fn kinematics(rate: &Self::Rate) -> &Kinematics;
    fn rate(grid: &TorusGrid, params: &FlowParams, s: &Self) -> Result<Self::Rate>;
}

impl Driven for UnsplitState {
    fn flow_state(&self) -> FlowState {
        FlowState::Unsplit(self.clone())
    }
    fn kinematics(rate: &Self::Rate) -> &Kinematics {
        &rate.kinematics
    }
    fn rate(grid: &TorusGrid, params: &FlowParams, s: &Self) -> Result<Self::Rate> {
        unsplit_rate(grid, params, s)
    }
}

impl Driven for SplitState {
    fn flow_state(&self) -> FlowState {
        FlowState::Split(self.clone())
    }
    fn kinematics(rate: &Self::Rate) -> &Kinematics {
        &rate.kinematics
    }
    fn rate(grid: &TorusGrid, params: &FlowParams, s: &Self) -> Result<Self::Rate> {
        split_rate(grid, params, s)
    }
}

struct Driver<'a> {
    grid: &'a TorusGrid,
    cfg: &'a RunConfig,
    sink: Sink,
    reports: Vec<MonitorReport>,
    snapshot_times: Vec<f64>,
}

impl Driver<'_> {
    fn emit(&mut self, state: &FlowState, kin: Option<&Kinematics>, unit: f64, moduli: f64, steps: usize, dt: f64) -> Result<bool> {
        let r = blowup_report(self.grid, state, kin, &self.cfg.monitor, unit, moduli);
        self.sink.report(&r, steps, dt)?;
        let bad = r.has_non_finite();
        self.reports.push(r);
        Ok(bad)
    }

    fn snap(&mut self, state: &FlowState, steps: usize) -> Result<()> {
        if self.snapshot_times.last() == Some(&state.t()) {
            return Ok(());
        }
        self.sink.snapshot(self.grid, state, steps)?;
        self.snapshot_times.push(state.t());
        Ok(())
    }

    fn drive<S: Driven>(&mut self, mut state: S) -> Result<(usize, Termination, FlowState)> {
        let params = self.cfg.params;
        let ctrl = &self.cfg.step;
        let ricci = params.kind == FlowKind::Ricci;
        let (mut unit, mut moduli, mut dt) = (0.0, 0.0, 0.0);
        let mut steps = 0;
        self.snap(&state.flow_state(), 0)?;
        let termination = loop {
            if ricci {
                let sup = state.flow_state().geometry(self.grid)?.scalar_curvature().max_abs();
                if sup < self.cfg.curvature_tol {
                    break Termination::Converged { curvature_sup: sup };
                }
            }
            if state.time() >= ctrl.final_time {
                break Termination::FinalTime;
            }
            if steps >= ctrl.max_steps {
                break Termination::MaxSteps;
            }
            let out = match step(self.grid, &state, &mut |s: &S| S::rate(self.grid, &params, s), ctrl) {
                Ok(o) => o,
                Err(Error::Abort { t, reason }) => break Termination::Aborted { t, reason },
                Err(e) => return Err(e),
            };
            if steps == 0 && S::rate_size(&out.rate) < ctrl.stationary_tol {
                self.emit(&state.flow_state(), Some(S::kinematics(&out.rate)), unit, moduli, steps, 0.0)?;
                return Ok((steps, Termination::Stationary, state.flow_state()));
            }
            if steps % self.cfg.monitor_every == 0
                && self.emit(&state.flow_state(), Some(S::kinematics(&out.rate)), unit, moduli, steps, dt)?
            {
                break Termination::BlowUp { t: state.time() };
            }
            state = out.state;
            dt = out.dt;
            unit = out.renormalization.datum;
            moduli = out.renormalization.moduli;
            steps += 1;
            if self.cfg.snapshot_every > 0 && steps % self.cfg.snapshot_every == 0 {
                self.snap(&state.flow_state(), steps)?;
            }
        };
        let fs = state.flow_state();
        if !matches!(termination, Termination::BlowUp { .. }) {
            let kin = S::rate(self.grid, &params, &state).ok();
            if self.emit(&fs, kin.as_ref().map(S::kinematics), unit, moduli, steps, dt)? && !termination.is_abort() {
                let t = fs.t();
                self.snap(&fs, steps)?;
                return Ok((steps, Termination::BlowUp { t }, fs));
            }
        }
        self.snap(&fs, steps)?;
        Ok((steps, termination, fs))
    }
}

/// Runs a (non-paired) flow from `initial`, writing to `out` when given.
pub fn run_flow(
    grid: &TorusGrid,
    cfg: &RunConfig,
    initial: FlowState,
    config_text: &str,
    out: Option<&Path>,
) -> Result<Trajectory> {
    let sink = Sink::open(out, config_text, &cfg.monitor, &cfg.thresholds)?;
    let mut d = Driver { grid, cfg, sink, reports: Vec::new(), snapshot_times: Vec::new() };
    let (steps, termination, last) = match initial {
        FlowState::Unsplit(s) => d.drive(s)?,
        FlowState::Split(s) => d.drive(s)?,
    };
    let v = verdict(&d.reports, &cfg.thresholds, &cfg.monitor)?;
    let verdict_line = match &termination {
        Termination::Converged { curvature_sup } => {
            format!("converged, ‖R‖_∞ = {curvature_sup:.3e} < {:e}", cfg.curvature_tol)
        }
        Termination::Aborted { t, reason } => format!("aborted at t = {t:e}: {reason}"),
        Termination::BlowUp { t } => format!("blow-up signal at t = {t:e}; {}", v.summary()),
        Termination::Stationary => format!("stationary; {}", v.summary()),
        Termination::FinalTime | Termination::MaxSteps => v.summary(),
    };
    let traj = Trajectory {
        flow: cfg.params.kind,
        steps,
        final_time: last.t(),
        termination,
        reports: d.reports,
        snapshot_times: d.snapshot_times,
        verdict: Some(v),
        verdict_line,
        final_state: Some(last),
    };
    d.sink.verdict(&traj)?;
    Ok(traj)
}

/// `(Vol, ∫R², E(datum))`: invariants of the metric and datum under
/// diffeomorphisms.
pub fn invariants(grid: &TorusGrid, state: &FlowState) -> Result<[f64; 3]> {
    let geo = state.geometry(grid)?;
    let r2: Vec<f64> = geo.scalar_curvature().iter().map(|v| v * v).collect();
    Ok([geo.volume(), geo.integrate(&r2), state.datum().energy(&geo).unwrap_or(0.0)])
}

#[derive(Clone, Debug, Serialize)]
pub struct PairedPoint {
    pub t: f64,
    pub unsplit: [f64; 3],
    pub split: [f64; 3],
    pub rel: [f64; 3],
}

/// Outcome of a paired split/unsplit experiment.
#[derive(Clone, Debug, Serialize)]
pub struct PairedReport {
    pub flow: FlowKind,
    pub tolerance: f64,
    pub points: Vec<PairedPoint>,
    /// Largest relative deviation of `(Vol, ∫R², E)`.
    pub max_rel: [f64; 3],
    pub passed: bool,
    pub steps_unsplit: usize,
    pub steps_split: usize,
    /// Set when a leg aborted.
    pub aborted: Option<String>,
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Advances `state` to exactly `target`.
fn advance_to<S: Driven>(grid: &TorusGrid, params: &FlowParams, state: &mut S, ctrl: &StepControl, target: f64) -> Result<usize> {
    let ctrl = StepControl { final_time: target, ..ctrl.clone() };
    let mut n = 0;
    while state.time() < target {
        if n >= ctrl.max_steps {
            return Err(Error::Abort { t: state.time(), reason: "step budget exhausted".into() });
        }
        let out = step(grid, state, &mut |s: &S| S::rate(grid, params, s), &ctrl)?;
        *state = out.state;
        n += 1;
    }
    Ok(n)
}

/// Evolves the unsplit and the split form of `params.kind` from the same
/// conformal data and compares their invariant curves at `checkpoints`
/// equally spaced times. With `stop_early`, the run ends at the first
/// checkpoint whose deviation exceeds `tol`.
pub fn paired_run(
    grid: &TorusGrid,
    cm: &ConformalMetric,
    datum: Datum,
    params: &FlowParams,
    ctrl: &StepControl,
    checkpoints: usize,
    tol: f64,
    stop_early: bool,
) -> Result<PairedReport> {
    let mut a = UnsplitState::from_conformal(cm, datum.clone());
    let mut b = SplitState::new(grid, cm.clone(), datum);
    let tf = ctrl.final_time;
    let k = checkpoints.max(1);
    let mut points = Vec::with_capacity(k + 1);
    let mut max_rel = [0.0f64; 3];
    let (mut sa, mut sb) = (0, 0);
    let mut aborted = None;
    let mut record = |ia: [f64; 3], ib: [f64; 3], t: f64, max_rel: &mut [f64; 3]| {
        let r = [rel(ia[0], ib[0]), rel(ia[1], ib[1]), rel(ia[2], ib[2])];
        for i in 0..3 {
            max_rel[i] = max_rel[i].max(if r[i].is_nan() { f64::INFINITY } else { r[i] });
        }
        points.push(PairedPoint { t, unsplit: ia, split: ib, rel: r });
    };
    record(invariants(grid, &a.flow_state())?, invariants(grid, &b.flow_state())?, 0.0, &mut max_rel);
    for j in 1..=k {
        let target = tf * j as f64 / k as f64;
        let legs = advance_to(grid, params, &mut a, ctrl, target)
            .and_then(|na| advance_to(grid, params, &mut b, ctrl, target).map(|nb| (na, nb)));
        match legs {
            Ok((na, nb)) => {
                sa += na;
                sb += nb;
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
        record(invariants(grid, &a.flow_state())?, invariants(grid, &b.flow_state())?, target, &mut max_rel);
        if stop_early && max_rel.iter().any(|&r| r > tol) {
            break;
        }
    }
    let passed = aborted.is_none() && max_rel.iter().all(|&r| r <= tol);
    Ok(PairedReport {
        flow: params.kind,
        tolerance: tol,
        points,
        max_rel,
        passed,
        steps_unsplit: sa,
        steps_split: sb,
        aborted,
    })
}

/// Paired experiment driven by a config, with `paired.csv` and `verdict.json`.
pub fn run_paired(cfg: &RunConfig, config_text: &str, out: Option<&Path>) -> Result<PairedReport> {
    let (grid, cm, datum) = preset_data(cfg)?;
    let report = paired_run(&grid, &cm, datum, &cfg.params, &cfg.step, 20, cfg.paired_tol, false)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), config_text)?;
        let mut csv = String::from("t,vol_unsplit,r2_unsplit,energy_unsplit,vol_split,r2_split,energy_split,rel_vol,rel_r2,rel_energy\n");
        for p in &report.points {
            let cells: Vec<String> = std::iter::once(p.t)
                .chain(p.unsplit)
                .chain(p.split)
                .chain(p.rel)
                .map(|v| format!("{v:e}"))
                .collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
        fs::write(dir.join("paired.csv"), csv)?;
        fs::write(dir.join("verdict.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(report)
}

/// Reads `timeseries.csv` back into reports.
pub fn parse_timeseries(text: &str) -> Result<Vec<MonitorReport>> {
    let bad = |m: String| Error::Invalid(format!("timeseries: {m}"));
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').collect();
    if header != REPORT_COLUMNS {
        return Err(bad("unexpected columns".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != REPORT_COLUMNS.len() {
                return Err(bad(format!("row {} has {} cells", i + 1, cells.len())));
            }
            let v: Vec<Option<f64>> = cells
                .iter()
                .map(|c| if c.is_empty() { Ok(None) } else { c.parse::<f64>().map(Some) })
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            let req = |k: usize| v[k].ok_or_else(|| bad(format!("row {}: empty {}", i + 1, REPORT_COLUMNS[k])));
            Ok(MonitorReport {
                t: req(0)?,
                vol: req(1)?,
                curvature_l2_sq: req(2)?,
                curvature_lp: req(3)?,
                map_energy_lp: v[4],
                spinor_hess_lq: v[5],
                spinor_hess_sup: v[6],
                spinor_curvature_gap: v[7],
                datum_energy: v[8],
                inj_lower_bound: req(9)?,
                inj_flat: v[10],
                diameter_est: req(11)?,
                u_c0: v[12],
                u_h2: v[13],
                velocity_l2: v[14],
                horizontal_l2: v[15],
                horizontal_c0: v[16],
                velocity_ratio: v[17],
                gauge_residual: v[18],
                rho_constant: v[19],
                x_constant: v[20],
                calderon_ratio: v[21],
                curvature_potential_sup: v[22],
                dissipation: v[23],
                bianchi_residual: v[24],
                unit_drift: req(25)?,
                moduli_drift: req(26)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn constant_spinor_run_is_stationary() {
        let text = "[run]\nflow = \"spinor\"\nn = 16\n[initial]\ndatum = \"constant-spinor\"\n";
        let cfg = parse_config(text).unwrap();
        let (grid, s0) = initial_state(&cfg).unwrap();
        let traj = run_flow(&grid, &cfg, s0, text, None).unwrap();
        assert_eq!(traj.termination, Termination::Stationary);
        assert_eq!(traj.reports.len(), 1);
        assert_eq!(traj.snapshot_times, vec![0.0]);
        assert!(traj.verdict.unwrap().all_hold());
    }

    #[test]
    fn timeseries_round_trips() {
        let text = "[run]\nflow = \"hrf-split\"\nn = 16\nmonitor_every = 2\n[initial]\npreset = \"random\"\namplitude = 0.1\ndatum = \"random-map\"\ndatum_amplitude = 0.2\n[step]\nmax_steps = 5\n";
        let cfg = parse_config(text).unwrap();
        let (grid, s0) = initial_state(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let traj = run_flow(&grid, &cfg, s0, text, Some(dir.path())).unwrap();
        assert_eq!(traj.termination, Termination::MaxSteps);
        let csv = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
        let back = parse_timeseries(&csv).unwrap();
        assert_eq!(back.len(), traj.reports.len());
        assert_eq!(back.len(), 4); // steps 0, 2, 4 and the final state
        for (a, b) in back.iter().zip(&traj.reports) {
            assert_eq!(a, b);
        }
    }
}
