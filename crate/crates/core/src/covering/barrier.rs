use serde::{Deserialize, Serialize};

use super::{naughty_cover, sup_distance, CoverMap};
use crate::error::{Error, Result};
use crate::packets::{cube_side, periodic_delta, Region};

/// Barrier radii are searched in `(0, BARRIER_RADIUS)`.
pub const BARRIER_RADIUS: f64 = 1.0 / 1024.0;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, r: f64) -> bool {
        self.lo <= r && r <= self.hi
    }
}

/// For `outer = Q(y)` with side `2a` and `inner = Q'(x)` with side `2b`: the
/// interval `[r_{Q'} - b/a, r_{Q'} + b/a]` (clipped at 0) outside of which
/// `d(rQ)` cannot meet `Q'`. Here `x` lies on `d(r_{Q'} Q)`; concentric cubes get
/// `r_{Q'} = 0`.
pub fn geometric_interval(outer: &Region, inner: &Region, period: f64) -> Interval {
    let a = 0.5 * outer.side;
    let b = 0.5 * inner.side;
    let r = sup_distance(outer.center, inner.center, period) / a;
    Interval {
        lo: (r - b / a).max(0.0),
        hi: r + b / a,
    }
}

/// Exact test: does the surface `d(r Q)` meet the open cube `inner`?
///
/// Over the open box `inner`, `|p - y|_inf` ranges over the open interval
/// `(max_i max(0, |d_i| - b), max_i (|d_i| + b))`.
pub fn surface_meets(outer: &Region, r: f64, inner: &Region, period: f64) -> bool {
    let a = 0.5 * outer.side;
    let b = 0.5 * inner.side;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    for i in 0..3 {
        let d = periodic_delta(outer.center[i], inner.center[i], period).abs();
        lo = lo.max((d - b).max(0.0));
        hi = hi.max(d + b);
    }
    let ra = r * a;
    ra > 0.0 && lo < ra && ra < hi
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarrierResult {
    pub center: [f64; 3],
    pub j1: i32,
    pub epsilon: f64,
    pub r: f64,
    /// Step function `f`: `(r_start, value)` pieces on `[0, BARRIER_RADIUS)`.
    pub f_total: Vec<(f64, usize)>,
    pub f_l1: f64,
    pub verified: bool,
}

impl BarrierResult {
    /// The barrier cube `r Q_{j1}(x)`.
    pub fn region(&self) -> Region {
        Region::new(self.center, self.r * cube_side(self.j1, self.epsilon))
    }
}

/// Find `r in (0, 2^-10)` such that `d(r Q_{j1}(x))` meets no cube of `covers[k]`
/// for `k >= j1`, by an exact sweep over the interval endpoints of `f`.
pub fn barrier_search(
    x: [f64; 3],
    j1: i32,
    epsilon: f64,
    covers: &CoverMap,
    period: f64,
) -> Result<BarrierResult> {
    let outer = Region::new(x, cube_side(j1, epsilon));
    let mut intervals: Vec<Interval> = Vec::new();
    for (_, cubes) in covers.range(j1..) {
        for c in cubes {
            let iv = geometric_interval(&outer, &c.region(), period);
            if iv.lo < BARRIER_RADIUS {
                intervals.push(Interval {
                    lo: iv.lo,
                    hi: iv.hi.min(BARRIER_RADIUS),
                });
            }
        }
    }
    let f_l1: f64 = intervals.iter().map(|iv| iv.hi - iv.lo).sum();
    // sweep: +1 at lo, -1 after hi (closed intervals)
    let mut events: Vec<(f64, i64)> = intervals
        .iter()
        .flat_map(|iv| [(iv.lo, 1), (iv.hi, -1)])
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0).then(q.1.cmp(&p.1)));
    let mut f_total = Vec::new();
    let mut count: i64 = 0;
    let mut cursor = 0.0;
    let mut found: Option<f64> = None;
    let mut i = 0;
    while i < events.len() {
        let at = events[i].0;
        if count == 0 && at > cursor && found.is_none() {
            // (cursor, at) is free; the left end is free only if it is not a closed endpoint
            found = Some(0.5 * (cursor + at));
        }
        while i < events.len() && events[i].0 == at {
            count += events[i].1;
            i += 1;
        }
        f_total.push((at, count.max(0) as usize));
        cursor = at;
    }
    if found.is_none() && count == 0 && cursor < BARRIER_RADIUS {
        found = Some(0.5 * (cursor + BARRIER_RADIUS));
    }
    if f_total.first().is_none_or(|p| p.0 > 0.0) {
        f_total.insert(0, (0.0, 0));
    }
    let Some(r) = found else {
        return Err(Error::BarrierNotFound { l1_mass: f_l1 });
    };
    let verified = brute_force_clear(x, j1, epsilon, r, covers, period);
    Ok(BarrierResult {
        center: x,
        j1,
        epsilon,
        r,
        f_total,
        f_l1,
        verified,
    })
}

/// Independent check: the surface `d(r Q_{j1}(x))` meets no cube in `covers[k >= j1]`.
pub fn brute_force_clear(
    x: [f64; 3],
    j1: i32,
    epsilon: f64,
    r: f64,
    covers: &CoverMap,
    period: f64,
) -> bool {
    if !(r > 0.0 && r < BARRIER_RADIUS) {
        return false;
    }
    let outer = Region::new(x, cube_side(j1, epsilon));
    covers
        .range(j1..)
        .flat_map(|(_, cubes)| cubes.iter())
        .all(|c| !surface_meets(&outer, r, &c.region(), period))
}

/// Outcome of a barrier search that may shrink `eta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum BarrierOutcome {
    Found { barrier: BarrierResult, eta: f64 },
    /// `x` fell inside `B_j` once `eta` was reduced; no barrier is required.
    Covered { eta: f64 },
}

/// Barrier search for a point outside `B_j(eta)`; on failure halve `eta`, rebuild
/// `B_j`, and retry (at most `retries` times).
#[allow(clippy::too_many_arguments)]
pub fn barrier_with_retries(
    x: [f64; 3],
    j: i32,
    alpha: f64,
    epsilon: f64,
    bad: &CoverMap,
    mut eta: f64,
    retries: usize,
    period: f64,
) -> Result<BarrierOutcome> {
    let mut last = Error::BarrierNotFound { l1_mass: f64::NAN };
    for attempt in 0..=retries {
        if attempt > 0 {
            eta *= 0.5;
            let b = naughty_cover(bad, j, alpha, epsilon, eta, period)?;
            if b.cover.contains(x, period) {
                return Ok(BarrierOutcome::Covered { eta });
            }
        }
        match barrier_search(x, j, epsilon, bad, period) {
            Ok(barrier) => return Ok(BarrierOutcome::Found { barrier, eta }),
            Err(e @ Error::BarrierNotFound { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packets::Cube;

    const L: f64 = f64::INFINITY;

    fn reg(c: [f64; 3], side: f64) -> Region {
        Region::new(c, side)
    }

    #[test]
    fn concentric_interval() {
        let q = reg([0.5; 3], 0.2);
        let qp = reg([0.5; 3], 0.05);
        let iv = geometric_interval(&q, &qp, 1.0);
        assert_eq!(iv.lo, 0.0);
        assert!((iv.hi - 0.25).abs() < 1e-15);
    }

    #[test]
    fn center_on_boundary_case() {
        // y on the boundary of Q': r_{Q'} = b/a, meets iff r < 2b/a
        let (a, b) = (0.1, 0.02);
        let q = reg([0.5; 3], 2.0 * a);
        let qp = reg([0.5 + b, 0.5, 0.5], 2.0 * b);
        let iv = geometric_interval(&q, &qp, 1.0);
        assert!((iv.lo - 0.0).abs() < 1e-12 && (iv.hi - 2.0 * b / a).abs() < 1e-12);
        assert!(surface_meets(&q, 2.0 * b / a * 0.999, &qp, 1.0));
        assert!(!surface_meets(&q, 2.0 * b / a * 1.001, &qp, 1.0));
    }

    #[test]
    fn exact_test_implies_interval() {
        let q = reg([0.3, 0.4, 0.5], 0.2);
        let qp = reg([0.45, 0.41, 0.52], 0.03);
        let iv = geometric_interval(&q, &qp, 1.0);
        for i in 0..2000 {
            let r = i as f64 * 1e-3;
            if surface_meets(&q, r, &qp, 1.0) {
                assert!(iv.contains(r));
            }
        }
        let _ = L;
    }

    #[test]
    fn no_cubes_gives_midpoint() {
        let b = barrier_search([0.5; 3], 3, 0.01, &CoverMap::new(), 1.0).unwrap();
        assert_eq!(b.r, BARRIER_RADIUS / 2.0);
        assert!(b.verified);
        assert_eq!(b.f_l1, 0.0);
    }

    #[test]
    fn single_plateau_is_avoided() {
        let eps = 0.01;
        let j1 = 2;
        let a = 0.5 * cube_side(j1, eps);
        // a small 20-cube whose interval is [0.3, 0.7] * 2^-10
        let k = 20;
        let b = 0.5 * cube_side(k, eps);
        let rq = 0.5 * BARRIER_RADIUS;
        let gamma = b / a;
        let c = Cube::new([0.5 + rq * a, 0.5, 0.5], k, eps).unwrap();
        let mut covers = CoverMap::new();
        covers.insert(k, vec![c]);
        let res = barrier_search([0.5; 3], j1, eps, &covers, 1.0).unwrap();
        assert!(res.verified);
        assert!(res.r < rq - gamma || res.r > rq + gamma);
        assert!((res.f_l1 - 2.0 * gamma).abs() < 1e-12 * BARRIER_RADIUS);
        assert!(res.f_total.iter().any(|&(_, v)| v == 1));
    }

    #[test]
    fn blocked_range_reports_mass() {
        let eps = 0.01;
        // a cube of the same level centred at x blocks (0, 2^-10) entirely
        let mut covers = CoverMap::new();
        covers.insert(3, vec![Cube::new([0.5; 3], 3, eps).unwrap()]);
        match barrier_search([0.5; 3], 3, eps, &covers, 1.0) {
            Err(Error::BarrierNotFound { l1_mass }) => assert!((l1_mass - BARRIER_RADIUS).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }
}
