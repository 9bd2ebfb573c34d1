//! Box counting, slope fitting and the closed-form dimension bounds.

use std::collections::HashSet;
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packets::Region;

/// `5 - 4 alpha`.
pub fn bound_hausdorff(alpha: f64) -> f64 {
    5.0 - 4.0 * alpha
}

/// `(-16 alpha^2 + 16 alpha + 5) / 3`.
pub fn bound_refined(alpha: f64) -> f64 {
    (-16.0 * alpha * alpha + 16.0 * alpha + 5.0) / 3.0
}

/// `(-64 alpha^3 + 96 alpha^2 - 48 alpha + 35) / 9`.
pub fn bound_naive(alpha: f64) -> f64 {
    (-64.0 * alpha.powi(3) + 96.0 * alpha * alpha - 48.0 * alpha + 35.0) / 9.0
}

pub fn bound_refined_exact(alpha: Ratio<i64>) -> Ratio<i64> {
    let a = alpha;
    (Ratio::from(-16) * a * a + Ratio::from(16) * a + Ratio::from(5)) / Ratio::from(3)
}

pub fn bound_naive_exact(alpha: Ratio<i64>) -> Ratio<i64> {
    let a = alpha;
    (Ratio::from(-64) * a * a * a + Ratio::from(96) * a * a - Ratio::from(48) * a + Ratio::from(35))
        / Ratio::from(9)
}

/// Growth exponent of `#C_j`: `(-16 a^2 + 16 a (1 + e) + 5 - 17 e - 4 e^2) / 3`.
pub fn refined_cover_exponent(alpha: f64, epsilon: f64) -> f64 {
    let (a, e) = (alpha, epsilon);
    (-16.0 * a * a + 16.0 * a * (1.0 + e) + 5.0 - 17.0 * e - 4.0 * e * e) / 3.0
}

/// A finite set to be box-counted, inside `[0, extent)^3`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum CountableSet {
    Points(Vec<[f64; 3]>),
    /// Union of open axis-aligned cubes.
    Cubes(Vec<Region>),
}

impl CountableSet {
    pub fn is_empty(&self) -> bool {
        match self {
            CountableSet::Points(p) => p.is_empty(),
            CountableSet::Cubes(c) => c.is_empty(),
        }
    }
}

/// Number of grid-anchored boxes of side `r` meeting the set (an upper bound for
/// the minimal count). Boundaries within `1e-9 r` are treated as touching only.
pub fn box_count(set: &CountableSet, r: f64, extent: f64) -> Result<usize> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("box size must be positive, got {r}")));
    }
    if set.is_empty() {
        return Ok(0);
    }
    if r >= extent {
        return Ok(1);
    }
    let cells_per_axis = (extent / r - 1e-9).ceil() as i64;
    let tol = 1e-9 * r;
    let cell = |x: f64| ((x / r).floor() as i64).clamp(0, cells_per_axis - 1);
    let mut seen: HashSet<[i64; 3]> = HashSet::new();
    match set {
        CountableSet::Points(pts) => {
            for p in pts {
                seen.insert([cell(p[0]), cell(p[1]), cell(p[2])]);
            }
        }
        CountableSet::Cubes(cubes) => {
            for c in cubes {
                let h = 0.5 * c.side;
                let lo: [i64; 3] = std::array::from_fn(|a| cell(c.center[a] - h + tol));
                let hi: [i64; 3] = std::array::from_fn(|a| cell(c.center[a] + h - tol));
                for x in lo[0]..=hi[0] {
                    for y in lo[1]..=hi[1] {
                        for z in lo[2]..=hi[2] {
                            seen.insert([x, y, z]);
                        }
                    }
                }
            }
        }
    }
    Ok(seen.len())
}

/// Ordinary least squares `y = slope x + intercept`; returns `(slope, intercept, rms residual)`.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map_or(0.0, |p| p.1), 0.0);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Slope of `log N` against `-log r`.
pub fn fit_dimension(counts: &[(f64, usize)]) -> Result<DimensionFit> {
    if counts.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 scales, got {}", counts.len())));
    }
    if counts.iter().any(|&(r, n)| !(r > 0.0) || n == 0) {
        return Err(Error::Domain("scales must be positive with nonzero counts".into()));
    }
    let rmin = counts.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let rmax = counts.iter().map(|c| c.0).fold(0.0, f64::max);
    if rmax / rmin < 4.0 {
        return Err(Error::Domain(format!(
            "scales span only {:.2} octaves, need 2",
            (rmax / rmin).log2()
        )));
    }
    let pts: Vec<(f64, f64)> = counts.iter().map(|&(r, n)| (-r.ln(), (n as f64).ln())).collect();
    let (slope, intercept, residual) = least_squares(&pts);
    Ok(DimensionFit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub provenance: String,
    pub scales: Vec<(f64, usize)>,
    pub fit: Option<DimensionFit>,
    pub alpha: f64,
    pub bound_naive: f64,
    pub bound_refined: f64,
    pub bound_hausdorff: f64,
}

impl DimensionEstimate {
    pub fn new(provenance: &str, scales: Vec<(f64, usize)>, alpha: f64) -> Self {
        let fit = fit_dimension(&scales).ok();
        Self {
            provenance: provenance.to_string(),
            scales,
            fit,
            alpha,
            bound_naive: bound_naive(alpha),
            bound_refined: bound_refined(alpha),
            bound_hausdorff: bound_hausdorff(alpha),
        }
    }

    /// `r,N,provenance`
    pub fn csv(&self) -> String {
        let mut out = String::from("r,N,provenance\n");
        for (r, n) in &self.scales {
            let _ = writeln!(out, "{r:.9e},{n},{}", self.provenance);
        }
        out
    }
}

/// Level-`levels` cubes of the middle-thirds Cantor dust in `[0, 1]^3`.
pub fn cantor_dust(levels: u32) -> Vec<Region> {
    let mut corners = vec![[0.0f64; 3]];
    let mut side = 1.0;
    for _ in 0..levels {
        side /= 3.0;
        let mut next = Vec::with_capacity(corners.len() * 8);
        for c in &corners {
            for m in 0..8 {
                next.push(std::array::from_fn(|a| {
                    c[a] + if m >> a & 1 == 1 { 2.0 * side } else { 0.0 }
                }));
            }
        }
        corners = next;
    }
    corners
        .into_iter()
        .map(|c| Region::new(std::array::from_fn(|a| c[a] + 0.5 * side), side))
        .collect()
}

/// Counts at `r = 3^-m` for `m = 1..=levels`.
pub fn cantor_counts(levels: u32) -> Result<Vec<(f64, usize)>> {
    let set = CountableSet::Cubes(cantor_dust(levels));
    (1..=levels)
        .map(|m| {
            let r = 3f64.powi(-(m as i32));
            Ok((r, box_count(&set, r, 1.0)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_at_special_points() {
        assert_eq!(bound_refined_exact(Ratio::from(1)), Ratio::new(5, 3));
        assert_eq!(bound_refined_exact(Ratio::new(5, 4)), Ratio::from(0));
        assert_eq!(bound_naive_exact(Ratio::new(5, 4)), Ratio::from(0));
        assert_eq!(bound_naive_exact(Ratio::from(1)), Ratio::new(19, 9));
        assert!((bound_hausdorff(1.125) - 0.5).abs() < 1e-15);
        assert!((refined_cover_exponent(1.1, 0.0) - bound_refined(1.1)).abs() < 1e-14);
    }

    #[test]
    fn point_and_full_domain_counts() {
        let pt = CountableSet::Points(vec![[0.3, 0.7, 0.1]]);
        for r in [0.5, 0.1, 0.01] {
            assert_eq!(box_count(&pt, r, 1.0).unwrap(), 1);
        }
        let full = CountableSet::Cubes(vec![Region::new([0.5; 3], 1.0)]);
        for r in [0.5, 0.3, 0.1] {
            let m = (1.0f64 / r).ceil() as usize;
            assert_eq!(box_count(&full, r, 1.0).unwrap(), m * m * m);
        }
        assert_eq!(box_count(&full, 2.0, 1.0).unwrap(), 1);
        assert!(box_count(&full, 0.0, 1.0).is_err());
    }

    #[test]
    fn cantor_three_levels() {
        let set = CountableSet::Cubes(cantor_dust(3));
        assert_eq!(box_count(&set, 1.0 / 27.0, 1.0).unwrap(), 512);
    }

    #[test]
    fn fit_rejects_degenerate_scales() {
        assert!(fit_dimension(&[(0.5, 1), (0.4, 1)]).is_err());
        assert!(fit_dimension(&[(0.5, 1), (0.4, 1), (0.3, 1)]).is_err());
        let fit = fit_dimension(&[(0.5, 1), (0.25, 1), (0.125, 1)]).unwrap();
        assert_eq!(fit.slope, 0.0);
    }
}
