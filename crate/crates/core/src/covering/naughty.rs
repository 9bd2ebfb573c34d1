use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{bad_exponent, dedup, lattice_size, tile, CoverFamily, CoverMap, Provenance};
use crate::error::{Error, Result};
use crate::packets::{cube_side, periodic_delta, Cube, Region};

/// Default naughtiness constant `eta = 2^-12`.
pub const DEFAULT_ETA: f64 = 1.0 / 4096.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NaughtyLevel {
    pub k: i32,
    /// Naughtiness threshold `eta 2^{(k-j)(5 - 4 alpha + 2 eps)}`.
    pub threshold: f64,
    pub naughty: usize,
    /// Greedy selection, pairwise `3Q`-separated.
    pub kernel: Vec<Cube>,
    /// `#A_k / threshold`.
    pub kernel_bound: f64,
    /// `B_{j,k}`: each `3Q^(l)` tiled by `4^3` `j`-cubes.
    pub family: CoverFamily,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NaughtyCover {
    pub j: i32,
    pub eta: f64,
    pub levels: BTreeMap<i32, NaughtyLevel>,
    /// `B_j` after replacing every tile `T` by `3T`; the union of the `3T` over
    /// the tiles of one `3Q^(l)` is exactly `5Q^(l)`, stored as `6^3` `j`-cubes.
    pub cover: CoverFamily,
}

/// Lattice index of the `j`-cube lattice closest to coordinate `x`.
fn nearest(x: f64, m: usize, period: f64) -> i64 {
    ((x.rem_euclid(period) / period * m as f64 - 0.5).round() as i64).rem_euclid(m as i64)
}

/// Lattice indices along one axis whose open interval meets `(c - h, c + h)`.
fn axis_hits(c: f64, h: f64, side: f64, m: usize, period: f64) -> Vec<usize> {
    let step = period / m as f64;
    let reach = ((h + 0.5 * side) / step).ceil() as i64 + 1;
    let base = nearest(c, m, period);
    let mut out: Vec<usize> = (-reach..=reach)
        .map(|o| (base + o).rem_euclid(m as i64) as usize)
        .filter(|&i| {
            let ci = (i as f64 + 0.5) * step;
            periodic_delta(c, ci, period).abs() < h + 0.5 * side
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Build `B_j` from the bad covers `A_k`, `k >= j`. Candidate `j`-cubes are the
/// torus lattice of `j`-cubes.
pub fn naughty_cover(
    bad: &CoverMap,
    j: i32,
    alpha: f64,
    epsilon: f64,
    eta: f64,
    period: f64,
) -> Result<NaughtyCover> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    let side = cube_side(j, epsilon);
    let m = lattice_size(side, period);
    let step = period / m as f64;
    let center = |ix: [usize; 3]| ix.map(|i| (i as f64 + 0.5) * step);
    let mut levels = BTreeMap::new();
    let mut all = Vec::new();
    let base_budget = (j as f64 * bad_exponent(alpha, epsilon)).exp2() / eta;
    for (&k, cubes) in bad.range(j..) {
        if cubes.is_empty() {
            continue;
        }
        let threshold = eta * ((k - j) as f64 * (5.0 - 4.0 * alpha + 2.0 * epsilon)).exp2();
        let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
        for c in cubes {
            let h = 0.5 * c.side();
            let ax: Vec<Vec<usize>> = (0..3)
                .map(|a| axis_hits(c.center[a], h, side, m, period))
                .collect();
            for &x in &ax[0] {
                for &y in &ax[1] {
                    for &z in &ax[2] {
                        *counts.entry([x, y, z]).or_default() += 1;
                    }
                }
            }
        }
        let mut naughty: Vec<[usize; 3]> = counts
            .into_iter()
            .filter(|&(_, n)| n as f64 > threshold)
            .map(|(ix, _)| ix)
            .collect();
        naughty.sort_unstable();
        // greedy: keep a cube iff it misses every selected 3Q
        let reach = (2.0 * side / step).ceil() as i64 + 1;
        let mut selected: HashSet<[usize; 3]> = HashSet::new();
        let mut kernel = Vec::new();
        for ix in &naughty {
            let r = Region::new(center(*ix), side);
            let mut clear = true;
            'scan: for dx in -reach..=reach {
                for dy in -reach..=reach {
                    for dz in -reach..=reach {
                        let nb = [dx, dy, dz]
                            .iter()
                            .zip(ix)
                            .map(|(d, &i)| (i as i64 + d).rem_euclid(m as i64) as usize)
                            .collect::<Vec<_>>();
                        let nb = [nb[0], nb[1], nb[2]];
                        if selected.contains(&nb)
                            && Region::new(center(nb), side).dilate(3.0).intersects(&r, period)
                        {
                            clear = false;
                            break 'scan;
                        }
                    }
                }
            }
            if clear {
                selected.insert(*ix);
                kernel.push(Cube { center: center(*ix), j, epsilon });
            }
        }
        let tiles: Vec<Cube> = kernel
            .iter()
            .flat_map(|q| tile(&q.dilate(3.0), j, epsilon, 4, period))
            .collect();
        let budget = base_budget * (epsilon * (j - k) as f64).exp2();
        all.extend(kernel.iter().flat_map(|q| tile(&q.dilate(5.0), j, epsilon, 6, period)));
        levels.insert(
            k,
            NaughtyLevel {
                k,
                threshold,
                naughty: naughty.len(),
                kernel_bound: cubes.len() as f64 / threshold,
                kernel,
                family: CoverFamily::new(j, epsilon, Provenance::Bjk(k), tiles, budget),
            },
        );
    }
    Ok(NaughtyCover {
        j,
        eta,
        levels,
        cover: CoverFamily::new(j, epsilon, Provenance::B, dedup(all, period), base_budget),
    })
}
