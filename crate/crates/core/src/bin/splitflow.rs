//! Command-line driver.
//!
//! Exit codes: 0 success, 1 numerical abort, 2 configuration or input
//! error, 3 acceptance or paired-comparison failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splitflow::acceptance::{self, Mutation};
use splitflow::config::{parse_config, RunConfig, RunKind};
use splitflow::flows::{uniformize, FlowKind};
use splitflow::monitors::{verdict, MonitorConfig, Thresholds};
use splitflow::runner::{self, parse_timeseries};
use splitflow::Error;

const OUTPUT_ROOT_VAR: &str = "SPLITFLOW_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "splitflow", version, about = "Split-flow simulation of geometric flows on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow described by a TOML configuration.
    Run { config: PathBuf },
    /// Uniformize a conformal metric by normalized Ricci flow.
    Uniformize { config: PathBuf },
    /// Run the acceptance suite.
    Check {
        /// Inject a known defect; the suite must then fail.
        #[arg(long, value_parser = ["trace-sign"])]
        mutation: Option<String>,
    },
    /// Summarize a trajectory directory.
    Report { dir: PathBuf },
}

enum Failure {
    Abort(String),
    Input(String),
    Rejected(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Abort { .. } | Error::NonFinite(_) | Error::Gauge(_) | Error::NonUnit { .. } => {
                Failure::Abort(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => run(&config),
        Command::Uniformize { config } => uniformize_cmd(&config),
        Command::Check { mutation } => check(mutation.as_deref().and_then(Mutation::parse)),
        Command::Report { dir } => report(&dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Abort(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Rejected(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
    }
}

fn load(path: &Path) -> Result<(RunConfig, String), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok((cfg, text))
}

fn output_dir(cfg: &RunConfig, default: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from);
    match &cfg.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(format!("{default}-n{}-seed{}", cfg.n, cfg.seed)),
    }
}

fn run(path: &Path) -> Result<(), Failure> {
    let (cfg, text) = load(path)?;
    match cfg.kind {
        RunKind::Paired(kind) => {
            let dir = output_dir(&cfg, &format!("paired-{}", kind.name()));
            let rep = runner::run_paired(&cfg, &text, Some(&dir))?;
            println!("output: {}", dir.display());
            for p in &rep.points {
                println!("t = {:.4}  rel(Vol, ∫R², E) = {:.2e} {:.2e} {:.2e}", p.t, p.rel[0], p.rel[1], p.rel[2]);
            }
            if let Some(reason) = &rep.aborted {
                return Err(Failure::Abort(reason.clone()));
            }
            if rep.passed {
                println!("paired runs agree within {:e}", rep.tolerance);
                Ok(())
            } else {
                Err(Failure::Rejected(format!(
                    "paired runs disagree: max rel (Vol, ∫R², E) = {:?} > {:e}",
                    rep.max_rel, rep.tolerance
                )))
            }
        }
        RunKind::Flow(kind) => {
            let dir = output_dir(&cfg, kind.name());
            let (grid, state) = runner::initial_state(&cfg)?;
            let traj = runner::run_flow(&grid, &cfg, state, &text, Some(&dir))?;
            println!("output: {}", dir.display());
            println!("{} steps to t = {:.6}, {:?}", traj.steps, traj.final_time, traj.termination);
            println!("{}", traj.verdict_line);
            if traj.termination.is_abort() {
                Err(Failure::Abort(format!("{:?}", traj.termination)))
            } else {
                Ok(())
            }
        }
    }
}

fn uniformize_cmd(path: &Path) -> Result<(), Failure> {
    let (cfg, _) = load(path)?;
    if cfg.kind != RunKind::Flow(FlowKind::Ricci) {
        return Err(Failure::Input("uniformize needs flow = \"ricci\"".into()));
    }
    let (grid, cm, _) = runner::preset_data(&cfg)?;
    let out = uniformize(&grid, &cm, cfg.curvature_tol, &cfg.step)?;
    let dir = output_dir(&cfg, "uniformize");
    fs::create_dir_all(&dir).map_err(|e| Failure::Input(e.to_string()))?;
    let g = out.flat.matrix();
    let record = serde_json::json!({
        "report": out.report,
        "flat_metric": [g.xx, g.xy, g.yy],
        "w_min": out.w.iter().cloned().fold(f64::INFINITY, f64::min),
        "w_max": out.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    });
    fs::write(dir.join("uniformize.json"), serde_json::to_string_pretty(&record).expect("json"))
        .map_err(|e| Failure::Input(e.to_string()))?;
    let r = &out.report;
    println!("output: {}", dir.display());
    println!("{} steps to t = {:.6}, ‖R‖_∞ = {:.3e}", r.steps, r.final_time, r.final_curvature_sup);
    println!("flat representative ĝ = [{:.12}, {:.12}, {:.12}]", g.xx, g.xy, g.yy);
    if r.converged {
        Ok(())
    } else {
        Err(Failure::Abort(format!("not converged to {:e} within {} steps", cfg.curvature_tol, r.steps)))
    }
}

fn check(mutation: Option<Mutation>) -> Result<(), Failure> {
    if let Some(m) = mutation {
        println!("mutation: {m:?}");
    }
    let rep = acceptance::run_with(mutation, |r| println!("{r}"));
    let failed = rep.results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} criteria passed", rep.results.len());
        Ok(())
    } else {
        Err(Failure::Rejected(format!("{failed} of {} criteria failed", rep.results.len())))
    }
}

fn report(dir: &Path) -> Result<(), Failure> {
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| Failure::Input(format!("{name}: {e}")));
    if dir.join("paired.csv").exists() {
        let json: serde_json::Value =
            serde_json::from_str(&read("verdict.json")?).map_err(|e| Failure::Input(e.to_string()))?;
        println!("paired run of {}", json["flow"]);
        println!("max rel (Vol, ∫R², E) = {}", json["max_rel"]);
        println!("passed: {}", json["passed"]);
        return Ok(());
    }
    let text = read("timeseries.csv")?;
    let reports = parse_timeseries(&text)?;
    let (mut monitor, mut thresholds) = (MonitorConfig::default(), Thresholds::default());
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(json) = line.strip_prefix("# thresholds = ") {
            thresholds = serde_json::from_str(json).map_err(|e| Failure::Input(format!("thresholds: {e}")))?;
        } else if let Some(rest) = line.strip_prefix("# epsilon = ") {
            let (eps, q) = rest.split_once(", q = ").ok_or_else(|| Failure::Input("bad exponent line".into()))?;
            monitor.epsilon = eps.parse().map_err(|_| Failure::Input("bad epsilon".into()))?;
            monitor.q = q.parse().map_err(|_| Failure::Input("bad q".into()))?;
        }
    }
    let (Some(first), Some(last)) = (reports.first(), reports.last()) else {
        return Err(Failure::Input("timeseries has no reports".into()));
    };
    println!("{} reports, t ∈ [{:.6}, {:.6}]", reports.len(), first.t, last.t);
    println!("vol            {:.6e} -> {:.6e}", first.vol, last.vol);
    println!("∫R²            {:.6e} -> {:.6e}", first.curvature_l2_sq, last.curvature_l2_sq);
    println!("inj lower bnd  {:.6e} -> {:.6e}", first.inj_lower_bound, last.inj_lower_bound);
    if let (Some(a), Some(b)) = (first.datum_energy, last.datum_energy) {
        println!("datum energy   {a:.6e} -> {b:.6e}");
    }
    let v = verdict(&reports, &thresholds, &monitor)?;
    println!("{}", v.summary());
    Ok(())
}
