//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `TFLOWSNP` |
//! | 4     | format version (`u32`) |
//! | 4     | `n` (`u32`) |
//! | 24    | `G` as `(g11, g12, g22)` (`f64`) |
//! | 8     | `t` (`f64`) |
//! | 1     | layout: 0 split `(ḡ, u)`, 1 unsplit metric field |
//! | 1     | datum: 0 none, 1 map, 2 spinor |
//! | 2     | spin-structure bits `(x, y)` |
//!
//! followed by row-major `f64` arrays of `n²` values: `u` (split) or
//! `g11, g12, g22` (unsplit); then the three map components, or the spinor
//! as interleaved `(re₀, im₀, re₁, im₁)` per node.
//!
//! `G` is `ḡ` for split states and the reference flat metric for unsplit ones.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flows::{Datum, FlowState, MapField, SplitState, UnsplitState};
use crate::grid::{ScalarField, Sym2, SymTensorField, TorusGrid};
use crate::metric::{FlatMetric, MetricField};
use crate::spinor::{SpinStructure, SpinorField};

pub const MAGIC: &[u8; 8] = b"TFLOWSNP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 24 + 8 + 4;

pub fn encode(grid: &TorusGrid, state: &FlowState) -> Vec<u8> {
    let (g, layout) = match state {
        FlowState::Split(s) => (s.gbar.matrix(), 0u8),
        FlowState::Unsplit(s) => (s.reference.matrix(), 1u8),
    };
    let (dkind, spin) = match state.datum() {
        Datum::None => (0u8, SpinStructure::default()),
        Datum::Map(_) => (1, SpinStructure::default()),
        Datum::Spinor(s) => (2, s.structure),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len() * 7);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    for v in [g.xx, g.xy, g.yy, state.t()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[layout, dkind]);
    out.extend_from_slice(&spin.bits());

    let mut put = |f: &[f64]| f.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    match state {
        FlowState::Split(s) => put(&s.u),
        FlowState::Unsplit(s) => {
            put(&s.metric.g.xx);
            put(&s.metric.g.xy);
            put(&s.metric.g.yy);
        }
    }
    match state.datum() {
        Datum::None => {}
        Datum::Map(m) => m.c.iter().for_each(|c| put(c)),
        Datum::Spinor(s) => {
            let flat: Vec<f64> = s.data.iter().flat_map(|p| [p[0].re, p[0].im, p[1].re, p[1].im]).collect();
            put(&flat);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or("truncated")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn field(&mut self, len: usize) -> std::result::Result<ScalarField, String> {
        let raw = self.take(8 * len)?;
        Ok(ScalarField(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()))
    }
}

fn decode_inner(bytes: &[u8]) -> std::result::Result<(TorusGrid, FlowState), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let grid = TorusGrid::new(r.u32()? as usize).map_err(|e| e.to_string())?;
    let g = Sym2::new(r.f64()?, r.f64()?, r.f64()?);
    let t = r.f64()?;
    let head = r.take(4)?;
    let (layout, dkind) = (head[0], head[1]);
    let spin = SpinStructure { x: head[2] != 0, y: head[3] != 0 };
    let base = FlatMetric::from_sym(g).map_err(|e| e.to_string())?;
    let len = grid.len();

    enum Metric {
        Split(ScalarField),
        Unsplit(MetricField),
    }
    let metric = match layout {
        0 => Metric::Split(r.field(len)?),
        1 => Metric::Unsplit(MetricField { g: SymTensorField { xx: r.field(len)?, xy: r.field(len)?, yy: r.field(len)? } }),
        other => return Err(format!("unknown layout {other}")),
    };
    let datum = match dkind {
        0 => Datum::None,
        1 => Datum::Map(MapField { c: [r.field(len)?, r.field(len)?, r.field(len)?] }),
        2 => {
            let flat = r.field(4 * len)?;
            let data = flat
                .chunks_exact(4)
                .map(|c| [Complex64::new(c[0], c[1]), Complex64::new(c[2], c[3])])
                .collect();
            Datum::Spinor(SpinorField { data, structure: spin })
        }
        other => return Err(format!("unknown datum kind {other}")),
    };
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let state = match metric {
        Metric::Split(u) => {
            let mut s = SplitState::new(&grid, crate::metric::ConformalMetric::new(base, u), datum);
            s.t = t;
            FlowState::Split(s)
        }
        Metric::Unsplit(metric) => FlowState::Unsplit(UnsplitState { t, reference: base, metric, datum }),
    };
    Ok((grid, state))
}

pub fn decode(bytes: &[u8]) -> Result<(TorusGrid, FlowState)> {
    decode_inner(bytes).map_err(|reason| Error::Snapshot { path: Default::default(), reason })
}

/// Writes atomically: the bytes go to a sibling temporary file that is
/// synced and then renamed over `path`.
pub fn write(path: &Path, grid: &TorusGrid, state: &FlowState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(grid, state))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(TorusGrid, FlowState)> {
    let bytes = fs::read(path)?;
    decode_inner(&bytes).map_err(|reason| Error::Snapshot { path: path.to_path_buf(), reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ConformalMetric;

    fn same(a: &FlowState, b: &FlowState) -> bool {
        a.t() == b.t() && a.datum() == b.datum() && a.metric_field() == b.metric_field() && a.reference() == b.reference()
    }

    #[test]
    fn split_and_unsplit_round_trip() {
        let grid = TorusGrid::new(8).unwrap();
        let cm = ConformalMetric::new(FlatMetric::new(2.0, 0.5, 0.625).unwrap(), grid.sample(|x, y| x * y));
        let phi = SpinorField::from_fn(&grid, SpinStructure { x: true, y: false }, |x, y| {
            [Complex64::new(x, y), Complex64::new(-y, 0.25)]
        });
        let mut split = SplitState::new(&grid, cm.clone(), Datum::Spinor(phi));
        split.t = 0.125;
        let states = [
            FlowState::Split(split),
            FlowState::Unsplit(UnsplitState::from_conformal(&cm, Datum::Map(MapField::equator(&grid)))),
            FlowState::Unsplit(UnsplitState::from_conformal(&cm, Datum::None)),
        ];
        for s in &states {
            let (g2, back) = decode(&encode(&grid, s)).unwrap();
            assert_eq!(g2.n(), 8);
            assert!(same(s, &back));
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let grid = TorusGrid::new(8).unwrap();
        let s = FlowState::Split(SplitState::new(&grid, ConformalMetric::flat(&grid, FlatMetric::IDENTITY), Datum::None));
        let bytes = encode(&grid, &s);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        bad = bytes;
        bad.push(0);
        assert!(decode(&bad).is_err());
    }
}
