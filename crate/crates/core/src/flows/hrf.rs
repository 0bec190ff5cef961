//! Harmonic Ricci flow: metric coupled to a map into the unit sphere.

use super::{DatumRate, Kinematics, MapField, Signs, SplitRate, SplitState};
use crate::error::Result;
use crate::gauge::{gauge_data, horizontal_projection, solve_gauge};
use crate::grid::{ScalarField, Sym2, SymTensorField, TorusGrid};
use crate::metric::Geometry;

/// `dφ` of every component, `|dφ|²_g` and `dφ ⊗ dφ`.
struct MapDerivatives {
    d: [[ScalarField; 2]; 3],
    density: ScalarField,
    outer: SymTensorField,
}

fn map_derivatives(geo: &Geometry, phi: &MapField) -> MapDerivatives {
    let grid = geo.grid();
    let d = [0, 1, 2].map(|c| grid.gradient(&phi.c[c]));
    let outer = SymTensorField::from_fn(geo.len(), |k| {
        let e = |i: usize, j: usize| (0..3).map(|c| d[c][i][k] * d[c][j][k]).sum::<f64>();
        Sym2::new(e(0, 0), e(0, 1), e(1, 1))
    });
    let density = ScalarField((0..geo.len()).map(|k| geo.ginv(k).contract(&outer.at(k))).collect());
    MapDerivatives { d, density, outer }
}

/// Dirichlet energy `½ ∫ |dφ|²_g vol_g`.
pub fn map_energy(geo: &Geometry, phi: &MapField) -> f64 {
    0.5 * geo.integrate(&map_derivatives(geo, phi).density)
}

/// Tension field `τ = −Δ_g φ + |dφ|² φ` for the unit-sphere target.
fn tension(geo: &Geometry, phi: &MapField, md: &MapDerivatives) -> MapField {
    MapField {
        c: [0, 1, 2].map(|c| {
            let lap = geo.laplacian(&phi.c[c]);
            ScalarField((0..geo.len()).map(|k| -lap[k] + md.density[k] * phi.c[c][k]).collect())
        }),
    }
}

/// Metric and map velocities of the harmonic Ricci flow with their averages.
#[derive(Clone, Debug)]
pub struct HrfRates {
    /// `T = −R g + 2α dφ⊗dφ + (r − α Ē) g`, with `Ē = ⨍ |dφ|²`.
    pub metric: SymTensorField,
    pub map: MapField,
    pub r_mean: f64,
    pub energy_mean: f64,
}

/// `(T(φ, g), τ_g(φ))`; the map must be unit-norm.
pub fn hrf_rhs(geo: &Geometry, phi: &MapField, alpha: f64) -> Result<HrfRates> {
    phi.check_unit()?;
    Ok(hrf_unchecked(geo, phi, alpha))
}

pub(crate) fn hrf_unchecked(geo: &Geometry, phi: &MapField, alpha: f64) -> HrfRates {
    let md = map_derivatives(geo, phi);
    let vol = geo.volume();
    let r = geo.scalar_curvature();
    let r_mean = geo.integrate(r) / vol;
    let energy_mean = geo.integrate(&md.density) / vol;
    let c = r_mean - alpha * energy_mean;
    let metric = SymTensorField::from_fn(geo.len(), |k| {
        geo.g(k).scaled(c - r[k]).add(&md.outer.at(k).scaled(2.0 * alpha))
    });
    HrfRates { metric, map: tension(geo, phi, &md), r_mean, energy_mean }
}

/// Unsplit rate with kinematics attached.
pub(crate) fn hrf_unsplit_rate(geo: &Geometry, phi: &MapField, alpha: f64) -> (SymTensorField, DatumRate, Kinematics) {
    let rates = hrf_unchecked(geo, phi, alpha);
    let velocity_l2 = geo.lp(&geo.norm_sym(&rates.metric), 2.0);
    let kin = Kinematics { velocity_l2, r_mean: rates.r_mean, ..Default::default() };
    (rates.metric, DatumRate::Map(rates.map), kin)
}

/// Split harmonic Ricci flow:
/// `∂_t ḡ = P(e^{−2u} T̊)`, `∂_t u = ¼ tr_g T ± (X(u) − ½ρ)`,
/// `∂_t φ = τ ± dφ(X)`, with the sign chosen by `signs`.
pub fn hrf_split_rhs(grid: &TorusGrid, state: &SplitState, alpha: f64, signs: Signs) -> Result<SplitRate> {
    let phi = match &state.datum {
        super::Datum::Map(m) => m,
        _ => return Err(crate::error::Error::Invalid("harmonic Ricci flow needs a map datum".into())),
    };
    let geo = state.geometry(grid)?;
    let md = map_derivatives(&geo, phi);
    let rates = hrf_unchecked(&geo, phi, alpha);
    let q_ring = geo.trace_free(&rates.metric);
    let gauge = solve_gauge(grid, &q_ring, &state.gbar, &state.u)?;
    let gbar_rate = horizontal_projection(grid, &gauge_data(&q_ring, &state.u), &state.gbar);
    let tr = geo.trace(&rates.metric);
    let s = match signs {
        Signs::Standard => 1.0,
        Signs::Reversed => -1.0,
    };
    let [ux, uy] = grid.gradient(&state.u);
    let du = ScalarField(
        (0..grid.len())
            .map(|k| 0.25 * tr[k] + s * (gauge.x.x[k] * ux[k] + gauge.x.y[k] * uy[k] - 0.5 * gauge.rho[k]))
            .collect(),
    );
    let map = MapField {
        c: [0, 1, 2].map(|c| {
            ScalarField(
                (0..grid.len())
                    .map(|k| {
                        let dx = gauge.x.x[k] * md.d[c][0][k] + gauge.x.y[k] * md.d[c][1][k];
                        rates.map.c[c][k] + s * dx
                    })
                    .collect(),
            )
        }),
    };
    let kin = Kinematics {
        velocity_l2: geo.lp(&geo.norm_sym(&rates.metric), 2.0),
        horizontal_l2: Some(gbar_rate.l2_norm()),
        horizontal_c0: Some(gbar_rate.c0_norm(&state.gbar)),
        gauge: Some(gauge.diagnostics.clone()),
        r_mean: rates.r_mean,
        ..Default::default()
    };
    Ok(SplitRate { gbar: gbar_rate, u: du, datum: DatumRate::Map(map), gauge, kinematics: kin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::HorizontalTensor;
    use crate::metric::{ConformalMetric, FlatMetric};
    use crate::flows::Datum;
    use std::f64::consts::PI;

    #[test]
    fn constant_map_on_flat_torus_is_fixed() {
        let grid = TorusGrid::new(16).unwrap();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let phi = MapField::constant(&grid, [0.0, 0.6, 0.8]);
        let r = hrf_rhs(&geo, &phi, 1.0).unwrap();
        assert!(r.metric.max_abs() < 1e-14);
        assert!(r.map.max_abs() < 1e-14);
    }

    #[test]
    fn equator_map_is_harmonic() {
        let grid = TorusGrid::new(32).unwrap();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let phi = MapField::equator(&grid);
        let r = hrf_rhs(&geo, &phi, 1.0).unwrap();
        assert!(r.map.max_abs() < 1e-9);
        assert!((r.energy_mean - 4.0 * PI * PI).abs() < 1e-9);
        assert!((map_energy(&geo, &phi) - 2.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn non_unit_map_is_rejected() {
        let grid = TorusGrid::new(16).unwrap();
        let geo = Geometry::flat(&grid, &FlatMetric::IDENTITY);
        let phi = MapField::constant(&grid, [0.0, 0.0, 1.1]);
        assert!(hrf_rhs(&geo, &phi, 1.0).is_err());
    }

    #[test]
    fn map_velocity_is_tangent() {
        let grid = TorusGrid::new(64).unwrap();
        let cm = ConformalMetric::new(
            FlatMetric::IDENTITY,
            grid.sample(|x, y| 0.1 * (2.0 * PI * (x - y)).cos()),
        );
        let geo = Geometry::conformal(&grid, &cm).unwrap();
        let mut phi = MapField {
            c: [
                grid.sample(|x, _| (2.0 * PI * x).cos()),
                grid.sample(|x, y| (2.0 * PI * x).sin() + 0.2 * (2.0 * PI * y).sin()),
                grid.sample(|_, y| 0.3 * (2.0 * PI * y).cos()),
            ],
        };
        phi.normalize();
        let r = hrf_rhs(&geo, &phi, 0.5).unwrap();
        let dot = (0..grid.len())
            .map(|k| (0..3).map(|c| r.map.c[c][k] * phi.c[c][k]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert!(dot < 1e-9, "{dot}");
        // T preserves volume: ∫ tr_g T = 0
        assert!(geo.integrate(&geo.trace(&r.metric)).abs() < 1e-9);
    }

    #[test]
    fn equator_split_moves_the_flat_factor() {
        let grid = TorusGrid::new(32).unwrap();
        let cm = ConformalMetric::flat(&grid, FlatMetric::IDENTITY);
        let state = SplitState::new(&grid, cm, Datum::Map(MapField::equator(&grid)));
        let alpha = 1.0;
        let rate = hrf_split_rhs(&grid, &state, alpha, Signs::Standard).unwrap();
        // dφ⊗dφ = (2π)² dx², trace-free part (2π)²/2 diag(1, −1), times 2α
        let expected = HorizontalTensor::from_constant(
            &FlatMetric::IDENTITY,
            &Sym2::new(1.0, 0.0, -1.0).scaled(alpha * 4.0 * PI * PI),
        );
        assert!((rate.gbar.to_sym().sub(&expected.to_sym())).max_abs() < 1e-9);
        assert!(rate.gauge.x.max_abs() < 1e-9);
        assert!(rate.gauge.rho.max_abs() < 1e-9);
        assert!(rate.u.max_abs() < 1e-9);
    }

    #[test]
    fn constant_map_split_reduces_to_ricci() {
        let grid = TorusGrid::new(32).unwrap();
        let u = grid.sample(|x, y| 0.1 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let cm = ConformalMetric::new(FlatMetric::IDENTITY, u.clone());
        let state = SplitState::new(&grid, cm, Datum::Map(MapField::constant(&grid, [1.0, 0.0, 0.0])));
        let rate = hrf_split_rhs(&grid, &state, 1.0, Signs::Standard).unwrap();
        let (ricci, _) = crate::flows::ricci_normalized_rhs(&grid, &u, &FlatMetric::IDENTITY);
        assert!(rate.u.add_scaled(&ricci, -1.0).max_abs() < 1e-10);
        assert!(rate.gbar.l2_norm() < 1e-12);
        assert!(rate.gauge.rho.max_abs() < 1e-12);
    }
}
