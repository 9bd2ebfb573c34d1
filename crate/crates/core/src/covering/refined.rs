use std::collections::BTreeMap;

use super::{dedup, tile, CoverFamily, Provenance};
use crate::dimension::refined_cover_exponent;
use crate::packets::cube_side;

/// `theta = 2 (2 alpha - 1 - eps) / 3`.
pub fn theta(alpha: f64, epsilon: f64) -> f64 {
    2.0 * (2.0 * alpha - 1.0 - epsilon) / 3.0
}

/// Levels `k` from `floor(theta j - 10)` to `j`, clipped to the available levels.
/// Returns `(lo, hi, clipped)`; `None` when nothing is available.
pub fn refined_k_range(j: i32, theta: f64, available: &[i32]) -> Option<(i32, i32, bool)> {
    let want = (theta * j as f64 - 10.0).floor() as i32;
    let lo_avail = available.iter().copied().filter(|&k| k <= j).min()?;
    let lo = want.max(lo_avail);
    Some((lo, j, lo != want))
}

/// `C_j`: every element of `B_k`, `k` in range, tiled by `ceil(s_k / s_j)^3` `j`-cubes.
pub fn refined_cover(
    covers: &BTreeMap<i32, CoverFamily>,
    j: i32,
    theta: f64,
    alpha: f64,
    epsilon: f64,
    period: f64,
) -> CoverFamily {
    let budget = (j as f64 * refined_cover_exponent(alpha, epsilon)).exp2();
    let levels: Vec<i32> = covers.keys().copied().collect();
    let Some((lo, hi, _)) = refined_k_range(j, theta, &levels) else {
        return CoverFamily::new(j, epsilon, Provenance::C, Vec::new(), budget);
    };
    let sj = cube_side(j, epsilon);
    let mut cubes = Vec::new();
    for (&k, fam) in covers.range(lo..=hi) {
        let per = ((cube_side(k, epsilon) / sj) - 1e-9).ceil().max(1.0) as usize;
        for c in &fam.cubes {
            cubes.extend(tile(&c.region(), j, epsilon, per, period));
        }
    }
    CoverFamily::new(j, epsilon, Provenance::C, dedup(cubes, period), budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::covered_by;
    use crate::packets::Cube;

    #[test]
    fn empty_inputs() {
        let c = refined_cover(&BTreeMap::new(), 4, 0.1, 1.1, 0.05, 1.0);
        assert!(c.is_empty());
        let mut m = BTreeMap::new();
        m.insert(2, CoverFamily::new(2, 0.05, Provenance::B, vec![], 1.0));
        assert!(refined_cover(&m, 4, 0.1, 1.1, 0.05, 1.0).is_empty());
    }

    #[test]
    fn range_is_clipped() {
        assert_eq!(refined_k_range(5, 0.1, &[1, 2, 3, 4, 5]), Some((1, 5, true)));
        assert_eq!(refined_k_range(200, 0.1, &[1, 15]), Some((10, 200, false)));
        assert_eq!(refined_k_range(3, 0.1, &[4]), None);
    }

    #[test]
    fn coarse_cubes_are_retiled() {
        let eps = 0.05;
        let q = Cube::new([0.4, 0.2, 0.9], 1, eps).unwrap();
        let mut m = BTreeMap::new();
        m.insert(1, CoverFamily::new(1, eps, Provenance::B, vec![q], 1.0));
        let c = refined_cover(&m, 3, 0.1, 1.1, eps, 1.0);
        let per = (cube_side(1, eps) / cube_side(3, eps)).ceil() as usize;
        assert_eq!(c.len(), per.pow(3));
        assert!(c.cubes.iter().all(|x| x.j == 3));
        assert!(covered_by(&q.region(), &c.regions(), 15, 1.0));
    }
}
