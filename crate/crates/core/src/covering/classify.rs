use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bad_exponent, lattice};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lp::BandSelector;
use crate::packets::{check_epsilon, periodic_delta, BandSamples, Cube, Region};
use crate::solver::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Bad,
}

impl Verdict {
    /// Good iff `integral <= threshold`.
    pub fn of(integral: f64, threshold: f64) -> Self {
        if integral <= threshold {
            Verdict::Good
        } else {
            Verdict::Bad
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoodnessRecord {
    pub cube: Cube,
    pub integral: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub window: (f64, f64),
    /// The band sum `k >= j` stops here (the top lattice band).
    pub band_cap: i32,
}

/// `2^{-j(5 - 4 alpha + eps)}`.
pub fn goodness_threshold(j: i32, alpha: f64, epsilon: f64) -> f64 {
    (-(j as f64) * bad_exponent(alpha, epsilon)).exp2()
}

/// Grid indices along one axis strictly inside `(c - s/2, c + s/2)`.
fn axis_indices(grid: &Grid, c: f64, side: f64) -> Vec<usize> {
    let n = grid.n();
    if side >= grid.period() {
        return (0..n).collect();
    }
    (0..n)
        .filter(|&i| periodic_delta(c, i as f64 * grid.spacing(), grid.period()).abs() < 0.5 * side)
        .collect()
}

/// Quadrature of `density` over the open region.
pub(crate) fn region_integral(grid: &Grid, region: &Region, density: &[f64]) -> f64 {
    let ax: Vec<Vec<usize>> = (0..3)
        .map(|a| axis_indices(grid, region.center[a], region.side))
        .collect();
    let mut s = 0.0;
    for &x in &ax[0] {
        for &y in &ax[1] {
            for &z in &ax[2] {
                s += density[grid.index(x, y, z)];
            }
        }
    }
    s * grid.cell_volume()
}

/// Classify every cube of the torus lattice of `j`-cubes by the space-time integral
/// of `sum_{k >= j} 2^{2 alpha k} |P_k u|^2` over the snapshots in `window`.
pub fn classify(
    traj: &Trajectory,
    j: i32,
    epsilon: f64,
    window: (f64, f64),
) -> Result<Vec<GoodnessRecord>> {
    Ok(classify_series(traj, &[j], epsilon, window)?
        .remove(&j)
        .unwrap_or_default())
}

/// [`classify`] for several levels at once, sharing the band densities.
pub fn classify_series(
    traj: &Trajectory,
    levels: &[i32],
    epsilon: f64,
    window: (f64, f64),
) -> Result<BTreeMap<i32, Vec<GoodnessRecord>>> {
    let alpha = traj.alpha;
    check_epsilon(alpha, epsilon)?;
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::Domain(format!("empty analysis window [{t0}, {t1}]")));
    }
    let snaps: Vec<_> = traj
        .snapshots
        .iter()
        .filter(|(t, _)| *t >= t0 - 1e-12 && *t <= t1 + 1e-12)
        .collect();
    if snaps.len() < 2 {
        return Err(Error::Domain(format!(
            "window [{t0}, {t1}] holds {} snapshot(s), need 2",
            snaps.len()
        )));
    }
    let grid = *snaps[0].1.grid();
    let top = *grid.lattice_bands().end();
    let lo = *grid.lattice_bands().start();
    for &j in levels {
        if j < lo.max(1) || j > top {
            return Err(Error::BandRange { band: j, min: lo.max(1), max: top });
        }
    }
    // per-band weighted densities per snapshot: dens[s][k - lo]
    let dens: Vec<Vec<Vec<f64>>> = snaps
        .iter()
        .map(|(_, u)| {
            (lo..=top)
                .map(|k| {
                    let w = (2.0 * alpha * k as f64).exp2();
                    BandSamples::unchecked(u, BandSelector::Single(k))
                        .density()
                        .iter()
                        .map(|d| w * d)
                        .collect()
                })
                .collect()
        })
        .collect();
    let times: Vec<f64> = snaps.iter().map(|(t, _)| *t).collect();
    let mut out = BTreeMap::new();
    for &j in levels {
        // time-integrated density of the tail k >= j
        let mut tail = vec![0.0; grid.len()];
        for s in 0..times.len() - 1 {
            let h = 0.5 * (times[s + 1] - times[s]);
            for k in j..=top {
                let (a, b) = (&dens[s][(k - lo) as usize], &dens[s + 1][(k - lo) as usize]);
                for (i, t) in tail.iter_mut().enumerate() {
                    *t += h * (a[i] + b[i]);
                }
            }
        }
        let threshold = goodness_threshold(j, alpha, epsilon);
        let records: Vec<GoodnessRecord> = lattice(j, epsilon, grid.period())
            .into_par_iter()
            .map(|cube| {
                let integral = region_integral(&grid, &cube.region(), &tail);
                GoodnessRecord {
                    cube,
                    integral,
                    threshold,
                    verdict: Verdict::of(integral, threshold),
                    window: (times[0], *times.last().unwrap()),
                    band_cap: top,
                }
            })
            .collect();
        out.insert(j, records);
    }
    Ok(out)
}

/// The bad cubes of a classification.
pub fn bad_cubes(records: &[GoodnessRecord]) -> Vec<Cube> {
    records
        .iter()
        .filter(|r| r.verdict == Verdict::Bad)
        .map(|r| r.cube)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpectralField;

    fn still(u: SpectralField, alpha: f64) -> Trajectory {
        Trajectory {
            alpha,
            snapshots: vec![(0.0, u.clone()), (1.0, u)],
            energy_series: vec![],
            sup_series: vec![],
            max_divergence: 0.0,
        }
    }

    #[test]
    fn threshold_arithmetic() {
        let t = goodness_threshold(4, 1.125, 0.01);
        assert!((t - (-2.04f64).exp2()).abs() < 1e-15);
    }

    #[test]
    fn zero_field_is_good_everywhere() {
        let g = Grid::unit(32).unwrap();
        let recs = classify(&still(SpectralField::zeros(g), 1.1), 2, 0.01, (0.0, 1.0)).unwrap();
        assert!(!recs.is_empty());
        assert!(recs.iter().all(|r| r.verdict == Verdict::Good && r.integral == 0.0));
    }

    #[test]
    fn verdict_is_threshold_exact() {
        let t = 0.37;
        assert_eq!(Verdict::of(t, t), Verdict::Good);
        assert_eq!(Verdict::of(f64::from_bits(t.to_bits() + 1), t), Verdict::Bad);
    }

    #[test]
    fn empty_window_is_rejected() {
        let g = Grid::unit(32).unwrap();
        let tr = still(SpectralField::zeros(g), 1.1);
        assert!(classify(&tr, 2, 0.01, (0.5, 0.5)).is_err());
        assert!(classify(&tr, 2, 0.01, (0.2, 0.8)).is_err());
    }

    #[test]
    fn region_integral_of_constant() {
        let g = Grid::unit(32).unwrap();
        let ones = vec![1.0; g.len()];
        // side 0.25 = 8 cells, centered between grid points: exactly 8^3 points
        let r = Region::new([0.5 + 0.5 / 32.0; 3], 0.25);
        assert!((region_integral(&g, &r, &ones) - 0.25f64.powi(3)).abs() < 1e-14);
        let all = Region::new([0.5; 3], 1.0);
        assert!((region_integral(&g, &all, &ones) - 1.0).abs() < 1e-14);
    }
}
