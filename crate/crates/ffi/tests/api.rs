use std::ffi::{CStr, CString};
use std::ptr;

use splitflow_ffi::*;

const HRF: &str = r#"
[run]
flow = "hrf-split"
n = 16
seed = 5
monitor_every = 4
[initial]
preset = "random"
amplitude = 0.2
datum = "random-map"
datum_amplitude = 0.3
[step]
final_time = 0.005
"#;

fn parse(text: &str) -> (SfStatus, *mut SfConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { sf_config_parse(c.as_ptr(), &mut cfg) };
    (st, cfg)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sf_last_error()) }.to_str().unwrap().to_owned()
}

#[test]
fn run_report_and_snapshot_round_trip() {
    let (st, cfg) = parse(HRF);
    assert_eq!(st, SfStatus::Ok);
    assert_eq!(unsafe { sf_config_n(cfg) }, 16);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("run").to_str().unwrap()).unwrap();
    let mut traj = ptr::null_mut();
    assert_eq!(unsafe { sf_run(cfg, out.as_ptr(), &mut traj) }, SfStatus::Ok);
    unsafe {
        assert!(sf_trajectory_steps(traj) > 0);
        assert!((sf_trajectory_final_time(traj) - 0.005).abs() < 1e-15);
        assert!(!sf_trajectory_aborted(traj));
        let count = sf_trajectory_report_count(traj);
        assert!(count >= 2);
        let mut rep = SfReport::default();
        assert_eq!(sf_trajectory_report(traj, count - 1, &mut rep), SfStatus::Ok);
        assert!(rep.vol > 0.0 && rep.horizontal_l2.is_finite() && rep.spinor_hess_sup.is_nan());
        assert_eq!(sf_trajectory_report(traj, count, &mut rep), SfStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut buf = [0 as std::ffi::c_char; 8];
        let len = sf_trajectory_verdict(traj, buf.as_mut_ptr(), buf.len());
        assert!(len > 7);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 7);

        let mut state = ptr::null_mut();
        assert_eq!(sf_trajectory_final_state(traj, &mut state), SfStatus::Ok);
        let mut a = [0.0; 3];
        assert_eq!(sf_state_invariants(state, a.as_mut_ptr()), SfStatus::Ok);
        let path = CString::new(dir.path().join("s.bin").to_str().unwrap()).unwrap();
        assert_eq!(sf_snapshot_write(state, path.as_ptr()), SfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sf_snapshot_read(path.as_ptr(), &mut back), SfStatus::Ok);
        let mut b = [0.0; 3];
        assert_eq!(sf_state_invariants(back, b.as_mut_ptr()), SfStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(sf_state_n(back), 16);
        assert_eq!(sf_state_time(back), sf_state_time(state));

        sf_state_free(back);
        sf_state_free(state);
        sf_trajectory_free(traj);
        sf_config_free(cfg);
    }
    assert!(dir.path().join("run/timeseries.csv").exists());
}

#[test]
fn errors_carry_status_and_message() {
    let (st, cfg) = parse("[run]\nflow = \"hrf\"\nn = 12\n");
    assert_eq!(st, SfStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("power of two"));

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sf_run(ptr::null(), ptr::null(), &mut out) }, SfStatus::NullPointer);
    assert_eq!(unsafe { sf_config_parse(ptr::null(), &mut out as *mut _ as *mut _) }, SfStatus::NullPointer);

    let missing = CString::new("/nonexistent/snap.bin").unwrap();
    let mut state = ptr::null_mut();
    assert_eq!(unsafe { sf_snapshot_read(missing.as_ptr(), &mut state) }, SfStatus::Io);
    assert!(state.is_null());

    // null handles are tolerated by the free functions and getters
    unsafe {
        sf_config_free(ptr::null_mut());
        sf_trajectory_free(ptr::null_mut());
        sf_state_free(ptr::null_mut());
        assert_eq!(sf_trajectory_steps(ptr::null()), 0);
    }
}

#[test]
fn huge_step_aborts_with_partial_trajectory() {
    let text = HRF.replace("final_time = 0.005", "final_time = 1.0\ndt = 10.0");
    let (st, cfg) = parse(&text);
    assert_eq!(st, SfStatus::Ok, "{}", last_error());
    let mut traj = ptr::null_mut();
    unsafe {
        assert_eq!(sf_run(cfg, ptr::null(), &mut traj), SfStatus::Ok);
        assert!(sf_trajectory_aborted(traj));
        assert!(sf_trajectory_report_count(traj) >= 1);
        sf_trajectory_free(traj);
        sf_config_free(cfg);
    }
}

#[test]
fn uniformize_recovers_flat_metric() {
    let (st, cfg) = parse("[run]\nflow = \"ricci\"\nn = 16\n[metric]\ng = [2.0, 0.5, 0.625]\n[initial]\npreset = \"sine-bump\"\namplitude = 0.2\n");
    assert_eq!(st, SfStatus::Ok);
    let mut res = SfUniformization::default();
    unsafe {
        assert_eq!(sf_uniformize(cfg, &mut res), SfStatus::Ok);
        sf_config_free(cfg);
    }
    assert!(res.converged);
    for (a, b) in res.flat_metric.iter().zip([2.0, 0.5, 0.625]) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(res.w_max > 0.15 && res.w_min < -0.15);

    let (_, hrf) = parse(HRF);
    unsafe {
        assert_eq!(sf_uniformize(hrf, &mut res), SfStatus::InvalidArgument);
        sf_config_free(hrf);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(sf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
