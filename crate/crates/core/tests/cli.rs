//! End-to-end checks of the command-line driver.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use splitflow::runner::parse_timeseries;

const BIN: &str = env!("CARGO_BIN_EXE_splitflow");

const SPINOR: &str = r#"
[run]
flow = "spinor-split"
n = 16
seed = 21
monitor_every = 3
snapshot_every = 5
output = "spinor"
[metric]
g = [1.2, 0.2, 0.8666666666666667]
[initial]
preset = "random"
amplitude = 0.2
datum = "random-spinor"
datum_amplitude = 0.3
spin = [true, false]
[step]
final_time = 0.004
"#;

fn splitflow(root: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SPLITFLOW_OUTPUT_ROOT", root).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = write(tmp.path(), "spinor.toml", SPINOR);
    for root in [&a, &b] {
        let out = splitflow(root, &["run", &cfg]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ta = fs::read(a.join("spinor/timeseries.csv")).unwrap();
    let tb = fs::read(b.join("spinor/timeseries.csv")).unwrap();
    assert_eq!(ta, tb);
    let reports = parse_timeseries(&String::from_utf8(ta).unwrap()).unwrap();
    assert!(reports.len() >= 3);
    assert!(reports.iter().all(|r| r.horizontal_l2.is_some() && r.spinor_hess_sup.is_some()));

    let mut snaps: Vec<_> = fs::read_dir(a.join("spinor/snapshots")).unwrap().map(|e| e.unwrap().file_name()).collect();
    snaps.sort();
    assert!(snaps.len() >= 2);
    for s in &snaps {
        assert_eq!(fs::read(a.join("spinor/snapshots").join(s)).unwrap(), fs::read(b.join("spinor/snapshots").join(s)).unwrap());
    }

    let rep = splitflow(&a, &["report", a.join("spinor").to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0));
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("spinor-pointwise: extendable"), "{text}");
}

#[test]
fn huge_step_aborts_and_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "abort.toml", &SPINOR.replace("final_time = 0.004", "final_time = 1.0\ndt = 5.0"));
    let out = splitflow(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("spinor");
    let reports = parse_timeseries(&fs::read_to_string(dir.join("timeseries.csv")).unwrap()).unwrap();
    assert!(!reports.is_empty());
    let verdict = fs::read_to_string(dir.join("verdict.json")).unwrap();
    assert!(verdict.contains("Aborted"), "{verdict}");
}

#[test]
fn bad_config_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[run]\nflow = \"spinor\"\nn = 16\nspeed = 2\n[monitor]\nq = 3\n");
    let out = splitflow(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.speed: unknown key") && err.contains("q = 3 must exceed 4"), "{err}");
    let missing = splitflow(tmp.path(), &["run", "/nonexistent.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn reversed_signs_fail_the_paired_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[run]
flow = "paired-consistency"
n = 16
seed = 4
output = "paired"
[initial]
preset = "random"
amplitude = 0.2
datum = "random-map"
datum_amplitude = 0.3
[flow]
paired = "hrf"
signs = "reversed"
[step]
final_time = 0.004
"#;
    let cfg = write(tmp.path(), "paired.toml", text);
    let out = splitflow(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("paired/paired.csv").exists());

    let cfg = write(tmp.path(), "standard.toml", &text.replace("reversed", "standard"));
    let out = splitflow(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn uniformize_writes_result() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "u.toml",
        "[run]\nflow = \"ricci\"\nn = 16\noutput = \"u\"\n[metric]\ng = [4.0, 0.0, 0.25]\n[initial]\npreset = \"sine-bump\"\namplitude = 0.2\n",
    );
    let out = splitflow(tmp.path(), &["uniformize", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("u/uniformize.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["converged"], true);
    let g = json["flat_metric"].as_array().unwrap();
    assert!((g[0].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = splitflow::config::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(cfg.warnings.iter().all(|w| w.contains("determinant")), "{}: {:?}", path.display(), cfg.warnings);
        count += 1;
    }
    assert_eq!(count, 5);
}
