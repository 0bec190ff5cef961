//! Property tests of structural invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use splitflow::config::parse_config;
use splitflow::flows::{Datum, FlowState, SplitState};
use splitflow::gauge::solve_rho;
use splitflow::grid::{ScalarField, Sym2, SymTensorField, TorusGrid};
use splitflow::metric::{integrate, scalar_curvature, ConformalMetric, FlatMetric, Geometry};
use splitflow::presets::{self, DatumPreset};
use splitflow::snapshot;
use splitflow::spinor::SpinStructure;

const N: usize = 16;

fn field(grid: &TorusGrid, seed: u64, amp: f64) -> ScalarField {
    presets::random_band_limited(grid, &mut ChaCha8Rng::seed_from_u64(seed), 2, amp)
}

fn metric() -> impl Strategy<Value = FlatMetric> {
    (0.6f64..1.6, -0.3f64..0.3, 0.6f64..1.6)
        .prop_map(|(a, b, c)| FlatMetric::normalized(Sym2::new(a, b, c)).unwrap().0)
}

fn sym(grid: &TorusGrid, seed: u64) -> SymTensorField {
    SymTensorField { xx: field(grid, seed, 1.0), xy: field(grid, seed + 1, 1.0), yy: field(grid, seed + 2, 1.0) }
}

fn l2(f: &[f64]) -> f64 {
    f.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn total_curvature_vanishes(g in metric(), seed in 0u64..1000, amp in 0.0f64..0.5) {
        let grid = TorusGrid::new(N).unwrap();
        let cm = ConformalMetric::new(g, field(&grid, seed, amp));
        let r = scalar_curvature(&grid, &cm);
        let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        let total = integrate(&grid, &r, &cm);
        prop_assert!(total.abs() <= 1e-9 * (1.0 + integrate(&grid, &abs, &cm)));
    }

    #[test]
    fn laplacian_is_self_adjoint_and_nonnegative(g in metric(), seed in 0u64..1000) {
        let grid = TorusGrid::new(N).unwrap();
        let cm = ConformalMetric::new(g, field(&grid, seed, 0.3));
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let (a, b) = (field(&grid, seed + 7, 1.0), field(&grid, seed + 9, 1.0));
        let la = geo.laplacian(&a);
        let lb = geo.laplacian(&b);
        let ab: Vec<f64> = la.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let ba: Vec<f64> = lb.iter().zip(a.iter()).map(|(x, y)| x * y).collect();
        let aa: Vec<f64> = la.iter().zip(a.iter()).map(|(x, y)| x * y).collect();
        let (i1, i2) = (geo.integrate(&ab), geo.integrate(&ba));
        prop_assert!((i1 - i2).abs() < 1e-9 * (1.0 + i1.abs()));
        prop_assert!(geo.integrate(&aa) > -1e-9);
    }

    #[test]
    fn trace_free_part_is_idempotent(g in metric(), seed in 0u64..1000) {
        let grid = TorusGrid::new(N).unwrap();
        let geo = Geometry::conformal(&grid, &ConformalMetric::new(g, field(&grid, seed, 0.3))).unwrap();
        let h = sym(&grid, seed);
        let once = geo.trace_free(&h);
        let twice = geo.trace_free(&once);
        prop_assert!(once.add_scaled(&twice, -1.0).max_abs() < 1e-12);
        prop_assert!(geo.trace(&once).max_abs() < 1e-12);
    }

    #[test]
    fn curvature_scales_under_constant_shift(g in metric(), seed in 0u64..1000, c in -1.0f64..1.0) {
        let grid = TorusGrid::new(N).unwrap();
        let u = field(&grid, seed, 0.3);
        let r0 = scalar_curvature(&grid, &ConformalMetric::new(g, u.clone()));
        let r1 = scalar_curvature(&grid, &ConformalMetric::new(g, u.map(|v| v + c)));
        let want = r0.scaled((-2.0 * c).exp());
        prop_assert!(r1.add_scaled(&want, -1.0).max_abs() <= 1e-10 * (1.0 + want.max_abs()));
    }

    #[test]
    fn rho_solve_is_linear(g in metric(), seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let grid = TorusGrid::new(N).unwrap();
        let u = field(&grid, seed, 0.3);
        let geo = Geometry::conformal(&grid, &ConformalMetric::new(g, u.clone())).unwrap();
        let q1 = geo.trace_free(&sym(&grid, seed + 11));
        let q2 = geo.trace_free(&sym(&grid, seed + 23));
        let r1 = solve_rho(&grid, &q1, &g, &u).unwrap();
        let r2 = solve_rho(&grid, &q2, &g, &u).unwrap();
        let r = solve_rho(&grid, &q1.scaled(a).add_scaled(&q2, b), &g, &u).unwrap();
        let want = r1.scaled(a).add_scaled(&r2, b);
        prop_assert!(l2(&r.add_scaled(&want, -1.0)) <= 1e-10 * (1.0 + l2(&want)));
    }

    #[test]
    fn snapshot_round_trips(g in metric(), seed in 0u64..1000, sx: bool, sy: bool, t in 0.0f64..1.0) {
        let grid = TorusGrid::new(8).unwrap();
        let spin = SpinStructure { x: sx, y: sy };
        let datum = presets::datum(&grid, DatumPreset::RandomSpinor, 0.3, seed, 2, spin).unwrap();
        let mut s = SplitState::new(&grid, ConformalMetric::new(g, field(&grid, seed, 0.3)), datum);
        s.t = t;
        let state = FlowState::Split(s);
        let bytes = snapshot::encode(&grid, &state);
        let (g2, back) = snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(g2.n(), 8);
        prop_assert_eq!(snapshot::encode(&g2, &back), bytes);
        prop_assert_eq!(back.datum(), state.datum());
    }

    #[test]
    fn unknown_config_keys_are_rejected(key in "[a-z]{3,12}", section in prop::sample::select(vec!["run", "step", "flow", "monitor"])) {
        let known = [
            "flow", "n", "seed", "output", "monitor_every", "snapshot_every", "paired", "alpha", "signs", "rho",
            "curvature_tol", "paired_tol", "epsilon", "q", "cfl", "diffusion", "dt", "max_steps", "final_time",
            "stationary_tol",
        ];
        prop_assume!(!known.contains(&key.as_str()));
        let mut text = String::from("[run]\nflow = \"ricci\"\nn = 16\n");
        if section == "run" {
            text.push_str(&format!("{key} = 1\n"));
        } else {
            text.push_str(&format!("[{section}]\n{key} = 1\n"));
        }
        let err = parse_config(&text).unwrap_err().to_string();
        let expected = format!("{section}.{key}: unknown key");
        prop_assert!(err.contains(&expected), "{}", err);
    }
}

#[test]
fn none_datum_snapshot_round_trips() {
    let grid = TorusGrid::new(8).unwrap();
    let s = FlowState::Split(SplitState::new(&grid, ConformalMetric::flat(&grid, FlatMetric::IDENTITY), Datum::None));
    let (_, back) = snapshot::decode(&snapshot::encode(&grid, &s)).unwrap();
    assert_eq!(back.datum(), &Datum::None);
}
