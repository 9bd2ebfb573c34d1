//! Good/bad classification of `j`-cubes and the cover constructions built on it:
//! Vitali covers `A_j`, naughty-cube covers `B_{j,k}`, `B_j` with the barrier
//! property, and refined covers `C_j`.

mod barrier;
mod classify;
mod naughty;
mod refined;
mod vitali;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packets::{cube_side, periodic_delta, Cube, Region};

pub use barrier::{
    barrier_search, barrier_with_retries, brute_force_clear, geometric_interval, surface_meets,
    BarrierOutcome, BarrierResult, Interval, BARRIER_RADIUS,
};
pub use classify::{bad_cubes, classify, classify_series, goodness_threshold, GoodnessRecord, Verdict};
pub use naughty::{naughty_cover, NaughtyCover, NaughtyLevel, DEFAULT_ETA};
pub use refined::{refined_cover, refined_k_range, theta};
pub use vitali::{vitali_cover, VitaliCover};

/// Where a cover came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum Provenance {
    A,
    Bjk(i32),
    B,
    C,
}

/// A finite family of same-level cubes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverFamily {
    pub level: i32,
    pub epsilon: f64,
    pub provenance: Provenance,
    pub cubes: Vec<Cube>,
    /// The growth law the cardinality is compared against (without constant).
    pub cardinality_budget: f64,
    /// `#cubes / cardinality_budget`.
    pub measured_constant: f64,
}

impl CoverFamily {
    pub fn new(level: i32, epsilon: f64, provenance: Provenance, cubes: Vec<Cube>, budget: f64) -> Self {
        let measured_constant = if budget > 0.0 {
            cubes.len() as f64 / budget
        } else {
            0.0
        };
        Self {
            level,
            epsilon,
            provenance,
            cubes,
            cardinality_budget: budget,
            measured_constant,
        }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn regions(&self) -> Vec<Region> {
        self.cubes.iter().map(Cube::region).collect()
    }

    /// Whether `p` lies in some (open) cube of the family.
    pub fn contains(&self, p: [f64; 3], period: f64) -> bool {
        self.cubes.iter().any(|c| c.region().contains(p, period))
    }
}

/// Covers keyed by level.
pub type CoverMap = BTreeMap<i32, Vec<Cube>>;

/// Exponent `5 - 4 alpha + eps` of the bad-cube budget.
pub fn bad_exponent(alpha: f64, epsilon: f64) -> f64 {
    5.0 - 4.0 * alpha + epsilon
}

/// Axis-aligned lattice of `j`-cubes covering the torus: `m = ceil(period / side)`
/// cubes per axis, centered at `(i + 1/2) period / m`. Neighbours overlap when the
/// side does not divide the period.
pub fn lattice(j: i32, epsilon: f64, period: f64) -> Vec<Cube> {
    let side = cube_side(j, epsilon);
    let m = lattice_size(side, period);
    let mut out = Vec::with_capacity(m * m * m);
    for x in 0..m {
        for y in 0..m {
            for z in 0..m {
                let c = [x, y, z].map(|i| (i as f64 + 0.5) * period / m as f64);
                out.push(Cube { center: c, j, epsilon });
            }
        }
    }
    out
}

pub(crate) fn lattice_size(side: f64, period: f64) -> usize {
    ((period / side) - 1e-12).ceil().max(1.0) as usize
}

/// Wrap a point into `[0, period)^3`.
pub(crate) fn wrap(p: [f64; 3], period: f64) -> [f64; 3] {
    p.map(|x| x.rem_euclid(period))
}

/// Tile `region` (concentric, larger) with `per_axis^3` `j`-cubes, evenly spaced so
/// that the outermost tiles touch the region's faces.
pub fn tile(region: &Region, j: i32, epsilon: f64, per_axis: usize, period: f64) -> Vec<Cube> {
    let s = cube_side(j, epsilon);
    let offsets: Vec<f64> = if per_axis <= 1 {
        vec![0.0]
    } else {
        let span = (region.side - s).max(0.0);
        (0..per_axis)
            .map(|i| -0.5 * span + span * i as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let mut out = Vec::with_capacity(per_axis.pow(3));
    for &ox in &offsets {
        for &oy in &offsets {
            for &oz in &offsets {
                let c = [
                    region.center[0] + ox,
                    region.center[1] + oy,
                    region.center[2] + oz,
                ];
                out.push(Cube {
                    center: wrap(c, period),
                    j,
                    epsilon,
                });
            }
        }
    }
    out
}

/// Remove duplicate cubes (same level, centers equal to 1e-12).
pub(crate) fn dedup(mut cubes: Vec<Cube>, period: f64) -> Vec<Cube> {
    let key = |c: &Cube| c.center.map(|x| (x.rem_euclid(period) * 1e12).round() as i64);
    cubes.sort_by_key(|c| (c.j, key(c)));
    cubes.dedup_by(|a, b| a.j == b.j && key(a) == key(b));
    cubes
}

pub(crate) fn check_level(cubes: &[Cube], j: i32) -> Result<()> {
    if let Some(c) = cubes.iter().find(|c| c.j != j) {
        return Err(Error::Domain(format!("expected {j}-cubes, found a {}-cube", c.j)));
    }
    Ok(())
}

/// Sample points of the closed cube `c`, pulled inside by a relative margin, on a
/// `per_axis^3` lattice. Used as a membership oracle.
pub fn sample_points(c: &Region, per_axis: usize, period: f64) -> Vec<[f64; 3]> {
    let h = 0.5 * c.side * (1.0 - 1e-9);
    let t: Vec<f64> = (0..per_axis)
        .map(|i| {
            if per_axis == 1 {
                0.0
            } else {
                -h + 2.0 * h * i as f64 / (per_axis - 1) as f64
            }
        })
        .collect();
    let mut out = Vec::with_capacity(per_axis.pow(3));
    for &a in &t {
        for &b in &t {
            for &d in &t {
                out.push(wrap([c.center[0] + a, c.center[1] + b, c.center[2] + d], period));
            }
        }
    }
    out
}

/// Whether every sample point of `inner` lies in some cube of `cover`.
pub fn covered_by(inner: &Region, cover: &[Region], per_axis: usize, period: f64) -> bool {
    let near: Vec<&Region> = cover
        .iter()
        .filter(|r| r.intersects(inner, period))
        .collect();
    sample_points(inner, per_axis, period)
        .into_iter()
        .all(|p| near.iter().any(|r| r.contains(p, period)))
}

/// `max_i |periodic delta_i|`.
pub(crate) fn sup_distance(a: [f64; 3], b: [f64; 3], period: f64) -> f64 {
    (0..3)
        .map(|i| periodic_delta(a[i], b[i], period).abs())
        .fold(0.0, f64::max)
}
