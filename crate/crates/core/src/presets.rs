//! Named, seed-pinned initial data. The acceptance suite draws all of its
//! inputs from here.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{Datum, MapField};
use crate::grid::{ScalarField, TorusGrid};
use crate::spinor::{SpinStructure, SpinorField};

/// Conformal factor presets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FactorPreset {
    Flat,
    /// `amplitude · sin 2πx · sin 2πy`
    SineBump,
    /// Random band-limited field with sup norm `amplitude`.
    Random,
}

impl FactorPreset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "flat" => Some(Self::Flat),
            "sine-bump" => Some(Self::SineBump),
            "random" => Some(Self::Random),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::SineBump => "sine-bump",
            Self::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DatumPreset {
    None,
    ConstantMap,
    EquatorMap,
    /// Equator map bent by a random band-limited perturbation.
    RandomMap,
    ConstantSpinor,
    /// Constant spinor plus a random band-limited perturbation.
    RandomSpinor,
}

impl DatumPreset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "constant-map" => Some(Self::ConstantMap),
            "equator-map" => Some(Self::EquatorMap),
            "random-map" => Some(Self::RandomMap),
            "constant-spinor" => Some(Self::ConstantSpinor),
            "random-spinor" => Some(Self::RandomSpinor),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ConstantMap => "constant-map",
            Self::EquatorMap => "equator-map",
            Self::RandomMap => "random-map",
            Self::ConstantSpinor => "constant-spinor",
            Self::RandomSpinor => "random-spinor",
        }
    }

    pub fn is_map(&self) -> bool {
        matches!(self, Self::ConstantMap | Self::EquatorMap | Self::RandomMap)
    }

    pub fn is_spinor(&self) -> bool {
        matches!(self, Self::ConstantSpinor | Self::RandomSpinor)
    }
}

/// Real band-limited field: Fourier modes `0 < |k|_∞ ≤ modes` with
/// coefficients decaying like `1/(1 + |k|²)`, rescaled to sup norm
/// `amplitude`. Zero modes give the zero field.
pub fn random_band_limited(grid: &TorusGrid, rng: &mut ChaCha8Rng, modes: usize, amplitude: f64) -> ScalarField {
    let m = modes as i64;
    let mut terms = Vec::new();
    for kx in -m..=m {
        for ky in 0..=m {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let w = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            let a: f64 = rng.gen_range(-1.0..1.0) * w;
            let b: f64 = rng.gen_range(-1.0..1.0) * w;
            terms.push((kx as f64, ky as f64, a, b));
        }
    }
    let f = grid.sample(|x, y| {
        terms
            .iter()
            .map(|&(kx, ky, a, b)| {
                let t = 2.0 * PI * (kx * x + ky * y);
                a * t.cos() + b * t.sin()
            })
            .sum()
    });
    let s = f.max_abs();
    if s == 0.0 {
        return f;
    }
    f.scaled(amplitude / s)
}

pub fn conformal_factor(grid: &TorusGrid, preset: FactorPreset, amplitude: f64, seed: u64, modes: usize) -> ScalarField {
    match preset {
        FactorPreset::Flat => grid.zeros(),
        FactorPreset::SineBump => grid.sample(|x, y| amplitude * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()),
        FactorPreset::Random => random_band_limited(grid, &mut ChaCha8Rng::seed_from_u64(seed), modes, amplitude),
    }
}

/// Datum presets. Random data use a stream independent of the conformal
/// factor's (`seed + 1`), perturbation size `amplitude`.
pub fn datum(
    grid: &TorusGrid,
    preset: DatumPreset,
    amplitude: f64,
    seed: u64,
    modes: usize,
    spin: SpinStructure,
) -> Result<Datum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    Ok(match preset {
        DatumPreset::None => Datum::None,
        DatumPreset::ConstantMap => Datum::Map(MapField::constant(grid, [0.0, 0.0, 1.0])),
        DatumPreset::EquatorMap => Datum::Map(MapField::equator(grid)),
        DatumPreset::RandomMap => {
            let mut m = MapField::equator(grid);
            for c in 0..3 {
                let p = random_band_limited(grid, &mut rng, modes, amplitude);
                m.c[c] = m.c[c].add_scaled(&p, 1.0);
            }
            if (0..grid.len()).any(|k| m.at(k).iter().map(|v| v * v).sum::<f64>() < 1e-12) {
                return Err(Error::Invalid("random map perturbation hit the origin".into()));
            }
            m.normalize();
            Datum::Map(m)
        }
        DatumPreset::ConstantSpinor => {
            if spin.x || spin.y {
                return Err(Error::Invalid("constant spinors need the periodic spin structure".into()));
            }
            Datum::Spinor(SpinorField::constant(grid, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], spin))
        }
        DatumPreset::RandomSpinor => {
            let parts: Vec<ScalarField> = (0..4).map(|_| random_band_limited(grid, &mut rng, modes, amplitude)).collect();
            let sx = if spin.x { 0.5 } else { 0.0 };
            let sy = if spin.y { 0.5 } else { 0.0 };
            let mut phi = SpinorField::from_fn(grid, spin, |_, _| [Complex64::new(0.0, 0.0); 2]);
            for k in 0..grid.len() {
                let (x, y) = grid.coords(k);
                let phase = Complex64::from_polar(1.0, 2.0 * PI * (sx * x + sy * y));
                phi.data[k] = [
                    phase * Complex64::new(1.0 + parts[0][k], parts[1][k]),
                    phase * Complex64::new(parts[2][k], parts[3][k]),
                ];
            }
            phi.normalize();
            Datum::Spinor(phi)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_fields_are_seeded_and_scaled() {
        let grid = TorusGrid::new(16).unwrap();
        let a = conformal_factor(&grid, FactorPreset::Random, 0.2, 7, 3);
        let b = conformal_factor(&grid, FactorPreset::Random, 0.2, 7, 3);
        let c = conformal_factor(&grid, FactorPreset::Random, 0.2, 8, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.max_abs() - 0.2).abs() < 1e-15);
        assert!(grid.mean(&a).abs() < 1e-12);
    }

    #[test]
    fn data_are_unit_norm() {
        let grid = TorusGrid::new(16).unwrap();
        let spin = SpinStructure { x: true, y: false };
        match datum(&grid, DatumPreset::RandomSpinor, 0.3, 1, 2, spin).unwrap() {
            Datum::Spinor(s) => assert!(s.unit_deviation() < 1e-14),
            _ => unreachable!(),
        }
        match datum(&grid, DatumPreset::RandomMap, 0.3, 1, 2, SpinStructure::default()).unwrap() {
            Datum::Map(m) => assert!(m.unit_deviation() < 1e-14),
            _ => unreachable!(),
        }
        assert!(datum(&grid, DatumPreset::ConstantSpinor, 0.0, 0, 0, spin).is_err());
    }
}
