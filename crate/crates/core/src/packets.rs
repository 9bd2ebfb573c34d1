//! Cubes, smooth cutoffs and localized energy packets `u_{Q,j} = ||phi_Q P_j u||`.

use std::fmt::Write as _;

use once_cell::sync::Lazy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PhysicalField, SpectralField, Spectrum};
use crate::grid::Grid;
use crate::lp::{self, smooth_step, BandSelector};

/// Smallest cutoff sidelength, in grid cells.
pub const MIN_CELLS: f64 = 8.0;

/// Signed minimal-image difference `b - a` on a circle of length `period`.
#[inline]
pub fn periodic_delta(a: f64, b: f64, period: f64) -> f64 {
    let d = (b - a).rem_euclid(period);
    if d > 0.5 * period {
        d - period
    } else {
        d
    }
}

/// Axis-aligned open cube on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: [f64; 3],
    pub side: f64,
}

impl Region {
    pub fn new(center: [f64; 3], side: f64) -> Self {
        Self { center, side }
    }

    pub fn dilate(&self, a: f64) -> Region {
        Region {
            center: self.center,
            side: self.side * a,
        }
    }

    /// Membership in the open cube, periodically wrapped.
    pub fn contains(&self, p: [f64; 3], period: f64) -> bool {
        self.side >= period
            || (0..3).all(|i| periodic_delta(self.center[i], p[i], period).abs() < 0.5 * self.side)
    }

    /// Whether two open cubes overlap on the torus.
    pub fn intersects(&self, other: &Region, period: f64) -> bool {
        let reach = 0.5 * (self.side + other.side);
        (0..3).all(|i| {
            let d = periodic_delta(self.center[i], other.center[i], period).abs();
            d < reach || reach > 0.5 * period
        })
    }

    /// Whether `self` lies inside the closure of `other`.
    pub fn inside(&self, other: &Region, period: f64) -> bool {
        if other.side >= period {
            return true;
        }
        (0..3).all(|i| {
            periodic_delta(other.center[i], self.center[i], period).abs() + 0.5 * self.side
                <= 0.5 * other.side * (1.0 + 1e-12)
        })
    }
}

/// A `j`-cube: sidelength `2^{-j(1-eps)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: [f64; 3],
    pub j: i32,
    pub epsilon: f64,
}

/// Sidelength of a `j`-cube.
pub fn cube_side(j: i32, epsilon: f64) -> f64 {
    (-(j as f64) * (1.0 - epsilon)).exp2()
}

impl Cube {
    pub fn new(center: [f64; 3], j: i32, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { center, j, epsilon })
    }

    pub fn side(&self) -> f64 {
        cube_side(self.j, self.epsilon)
    }

    pub fn region(&self) -> Region {
        Region::new(self.center, self.side())
    }

    /// `aQ`.
    pub fn dilate(&self, a: f64) -> Region {
        self.region().dilate(a)
    }

    /// `Q_k = 2^{(j-k)(1-eps)} Q`, the concentric `k`-cube.
    pub fn ancestor(&self, k: i32) -> Cube {
        Cube { j: k, ..*self }
    }
}

/// Largest `epsilon` admissible for a given `alpha`: `min((4 alpha - 4)/3, 1/20)`.
pub fn epsilon_cap(alpha: f64) -> f64 {
    ((4.0 * alpha - 4.0) / 3.0).min(0.05)
}

pub fn check_epsilon(alpha: f64, epsilon: f64) -> Result<()> {
    let cap = epsilon_cap(alpha);
    if epsilon > 0.0 && epsilon < cap {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "epsilon must lie in (0, {cap:.6}) for alpha = {alpha}, got {epsilon}"
        )))
    }
}

/// One-dimensional profile: 1 for `s <= d/2`, 0 for `s >= 7d/12`.
#[inline]
pub fn axis_profile(s: f64, d: f64) -> f64 {
    smooth_step(1.0 + 12.0 * (s.abs() - 0.5 * d) / d)
}

/// Sup norms of the first three derivatives of `axis_profile(., d)` times `d^k`;
/// independent of `d`.
pub static DERIVATIVE_CONSTANTS: Lazy<[f64; 3]> = Lazy::new(|| {
    // derivatives of h on the transition [1, 2], scaled by 12^k
    let hstep: f64 = 2e-3;
    let mut c = [0.0f64; 3];
    let steps = (1.0 / hstep) as usize;
    for i in 0..=steps {
        let x = 1.0 + i as f64 * hstep;
        let f = |t: f64| smooth_step(t);
        let d1 = (f(x + hstep) - f(x - hstep)) / (2.0 * hstep);
        let d2 = (f(x + hstep) - 2.0 * f(x) + f(x - hstep)) / (hstep * hstep);
        let d3 = (f(x + 2.0 * hstep) - 2.0 * f(x + hstep) + 2.0 * f(x - hstep) - f(x - 2.0 * hstep))
            / (2.0 * hstep.powi(3));
        c[0] = c[0].max(d1.abs());
        c[1] = c[1].max(d2.abs());
        c[2] = c[2].max(d3.abs());
    }
    [12.0 * c[0], 144.0 * c[1], 1728.0 * c[2]]
});

/// Tensor-product cutoff `phi_Q` sampled on a grid: 1 on `Q`, supported in `7Q/6`.
#[derive(Clone, Debug)]
pub struct Cutoff {
    grid: Grid,
    region: Region,
    axes: [Vec<f64>; 3],
}

impl Cutoff {
    pub fn new(grid: Grid, region: Region) -> Result<Self> {
        let d = region.side;
        if !(d > 0.0) {
            return Err(Error::Domain(format!("cube side must be positive, got {d}")));
        }
        if d < MIN_CELLS * grid.spacing() {
            return Err(Error::Resolution(format!(
                "cube side {d:.4} is below {MIN_CELLS} cells of {:.4}",
                grid.spacing()
            )));
        }
        let l = grid.period();
        // once 7Q/6 wraps onto itself the cutoff saturates to 1
        let saturated = 7.0 * d / 6.0 >= l;
        let axes: [Vec<f64>; 3] = std::array::from_fn(|a| {
            (0..grid.n())
                .map(|i| {
                    if saturated {
                        1.0
                    } else {
                        let x = i as f64 * grid.spacing();
                        axis_profile(periodic_delta(region.center[a], x, l), d)
                    }
                })
                .collect()
        });
        let c = Self { grid, region, axes };
        c.verify_gradient()?;
        Ok(c)
    }

    pub fn for_cube(grid: Grid, cube: &Cube) -> Result<Self> {
        Self::new(grid, cube.region())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Per-axis profile samples.
    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        let [x, y, z] = self.grid.coords(idx);
        self.axes[0][x] * self.axes[1][y] * self.axes[2][z]
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.value(i)).collect()
    }

    /// Largest one-sided difference quotient along any axis, times `d`.
    pub fn measured_gradient_constant(&self) -> f64 {
        let h = self.grid.spacing();
        let mut worst: f64 = 0.0;
        for ax in &self.axes {
            for i in 0..ax.len() {
                let next = ax[(i + 1) % ax.len()];
                worst = worst.max((next - ax[i]).abs() / h);
            }
        }
        worst * self.region.side
    }

    fn verify_gradient(&self) -> Result<()> {
        // difference quotients are bounded by the derivative sup norm
        let c1 = DERIVATIVE_CONSTANTS[0] * (1.0 + 1e-3);
        let m = self.measured_gradient_constant();
        if m > c1 {
            return Err(Error::Resolution(format!(
                "cutoff gradient constant {m:.4} exceeds {c1:.4}"
            )));
        }
        Ok(())
    }

    /// `sum_x phi(x)^2 w(x)` with the grid quadrature weight.
    fn weighted_sq_sum(&self, values: &[f64]) -> f64 {
        let n = self.grid.n();
        let mut acc = 0.0;
        for (ix, &ax) in self.axes[0].iter().enumerate() {
            if ax == 0.0 {
                continue;
            }
            for (iy, &ay) in self.axes[1].iter().enumerate() {
                let axy = ax * ay;
                if axy == 0.0 {
                    continue;
                }
                let base = (ix * n + iy) * n;
                for (iz, &az) in self.axes[2].iter().enumerate() {
                    if az == 0.0 {
                        continue;
                    }
                    let w = axy * az;
                    acc += w * w * values[base + iz];
                }
            }
        }
        acc * self.grid.cell_volume()
    }
}

/// Pointwise `|v|^2` of a physical vector field.
fn magnitude_sq(p: &PhysicalField) -> Vec<f64> {
    let c = p.comps();
    (0..p.grid().len())
        .map(|i| c[0][i] * c[0][i] + c[1][i] * c[1][i] + c[2][i] * c[2][i])
        .collect()
}

/// `P_j u` sampled on the grid, reusable across many cutoffs.
#[derive(Clone, Debug)]
pub struct BandSamples {
    pub band: BandSelector,
    energy_density: Vec<f64>,
    total: f64,
}

impl BandSamples {
    pub fn new(u: &SpectralField, band: BandSelector) -> Result<Self> {
        let pj = lp::project(u, band)?;
        Ok(Self::from_projection(&pj, band))
    }

    pub(crate) fn unchecked(u: &SpectralField, band: BandSelector) -> Self {
        Self::from_projection(&lp::project_unchecked(u, band), band)
    }

    fn from_projection(pj: &SpectralField, band: BandSelector) -> Self {
        Self {
            band,
            energy_density: magnitude_sq(&pj.to_physical_unchecked()),
            total: pj.norm(),
        }
    }

    /// `||phi P u||`.
    pub fn packet(&self, cutoff: &Cutoff) -> f64 {
        cutoff.weighted_sq_sum(&self.energy_density).max(0.0).sqrt()
    }

    /// `||P u||` over the whole torus.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `|P u|^2` at every grid point.
    pub(crate) fn density(&self) -> &[f64] {
        &self.energy_density
    }
}

/// `u_{Q,j} = ||phi_Q P_j u||`.
pub fn packet_norm(u: &SpectralField, region: &Region, j: i32) -> Result<f64> {
    let cutoff = Cutoff::new(*u.grid(), *region)?;
    Ok(BandSamples::new(u, BandSelector::Single(j))?.packet(&cutoff))
}

/// `||phi_Q P u||` for an arbitrary band selector.
pub fn packet_norm_band(u: &SpectralField, region: &Region, band: BandSelector) -> Result<f64> {
    let cutoff = Cutoff::new(*u.grid(), *region)?;
    Ok(BandSamples::new(u, band)?.packet(&cutoff))
}

/// Time series of one packet.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PacketSeries {
    pub cube_id: usize,
    pub region: Region,
    pub j: i32,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Packets for every `(region, band)` pair along a list of snapshots.
pub fn packet_series(
    snapshots: &[(f64, SpectralField)],
    regions: &[Region],
    bands: &[i32],
) -> Result<Vec<PacketSeries>> {
    let Some((_, first)) = snapshots.first() else {
        return Ok(Vec::new());
    };
    let g = *first.grid();
    let cutoffs = regions
        .iter()
        .map(|r| Cutoff::new(g, *r))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<PacketSeries> = Vec::new();
    for (id, r) in regions.iter().enumerate() {
        for &j in bands {
            out.push(PacketSeries {
                cube_id: id,
                region: *r,
                j,
                times: Vec::with_capacity(snapshots.len()),
                values: Vec::with_capacity(snapshots.len()),
            });
        }
    }
    for (t, u) in snapshots {
        for (bi, &j) in bands.iter().enumerate() {
            let bs = BandSamples::new(u, BandSelector::Single(j))?;
            for (ci, c) in cutoffs.iter().enumerate() {
                let s = &mut out[ci * bands.len() + bi];
                s.times.push(*t);
                s.values.push(bs.packet(c));
            }
        }
    }
    Ok(out)
}

/// `time,j,cube_id,center_x,center_y,center_z,u_Qj`
pub fn packets_csv(series: &[PacketSeries]) -> String {
    let mut out = String::from("time,j,cube_id,center_x,center_y,center_z,u_Qj\n");
    for s in series {
        for (t, v) in s.times.iter().zip(&s.values) {
            let c = s.region.center;
            let _ = writeln!(
                out,
                "{t:.9},{},{},{:.6},{:.6},{:.6},{v:.15e}",
                s.j, s.cube_id, c[0], c[1], c[2]
            );
        }
    }
    out
}

/// Radial cutoff: 1 within `plateau` of `center`, 0 beyond `radius` (periodic distance).
pub fn radial_cutoff(grid: &Grid, center: [f64; 3], plateau: f64, radius: f64) -> Vec<f64> {
    let l = grid.period();
    (0..grid.len())
        .map(|i| {
            let p = grid.position(i);
            let r2: f64 = (0..3).map(|a| periodic_delta(center[a], p[a], l).powi(2)).sum();
            smooth_step(1.0 + (r2.sqrt() - plateau) / (radius - plateau))
        })
        .collect()
}

fn l2(grid: &Grid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `||phi1 P_j (phi2 f)|| / ||f||` for scalar samples.
pub fn moving_bump_error(grid: &Grid, f: &[f64], phi1: &[f64], phi2: &[f64], j: i32) -> Result<f64> {
    grid.check_band(j)?;
    moving_bump_impl(grid, f, phi1, phi2, j)
}

fn moving_bump_impl(grid: &Grid, f: &[f64], phi1: &[f64], phi2: &[f64], j: i32) -> Result<f64> {
    let nf = l2(grid, f);
    if nf == 0.0 {
        return Ok(0.0);
    }
    let s = Spectrum::from_physical(*grid, &mul(phi2, f))?;
    let p = lp::project_scalar_unchecked(&s, BandSelector::Single(j)).to_physical()?;
    Ok(l2(grid, &mul(phi1, &p)) / nf)
}

/// `||(1 - P~_j)(phi P_j f)|| / ||f||`.
pub fn moving_projection_error(grid: &Grid, f: &Spectrum, phi: &[f64], j: i32) -> Result<f64> {
    grid.check_band(j)?;
    moving_projection_impl(grid, f, phi, j)
}

fn moving_projection_impl(grid: &Grid, f: &Spectrum, phi: &[f64], j: i32) -> Result<f64> {
    let nf = f.norm();
    if nf == 0.0 {
        return Ok(0.0);
    }
    let pj = lp::project_scalar_unchecked(f, BandSelector::Single(j)).to_physical()?;
    let s = Spectrum::from_physical(*grid, &mul(phi, &pj))?;
    let tilde = lp::project_scalar_unchecked(&s, BandSelector::Tilde(j));
    Ok(s.sub(&tilde).norm() / nf)
}

/// `||P_j (phi (1 - P_{j +- 2}) f)|| / ||f||`.
pub fn inside_projection_error(grid: &Grid, f: &Spectrum, phi: &[f64], j: i32) -> Result<f64> {
    grid.check_band(j)?;
    inside_projection_impl(grid, f, phi, j)
}

fn inside_projection_impl(grid: &Grid, f: &Spectrum, phi: &[f64], j: i32) -> Result<f64> {
    let nf = f.norm();
    if nf == 0.0 {
        return Ok(0.0);
    }
    let rest = f.sub(&lp::project_scalar_unchecked(f, BandSelector::Tilde(j)));
    let s = Spectrum::from_physical(*grid, &mul(phi, &rest.to_physical()?))?;
    Ok(lp::project_scalar_unchecked(&s, BandSelector::Single(j)).norm() / nf)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpMoveConfig {
    pub n: usize,
    pub bands: Vec<i32>,
    /// Separation between the supports of the two cutoffs.
    pub separation: f64,
    pub seed: u64,
}

impl Default for BumpMoveConfig {
    fn default() -> Self {
        Self {
            n: 128,
            bands: vec![3, 4, 5, 6],
            separation: 0.25,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpMoveRow {
    pub j: i32,
    pub separated: f64,
    pub moved_projection: f64,
    pub inside_projection: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpMoveReport {
    pub rows: Vec<BumpMoveRow>,
    pub slope_separated: f64,
    pub slope_moved_projection: f64,
    pub slope_inside_projection: f64,
    pub required_slope: f64,
    /// Requested bands beyond the resolved range (evaluated on the lattice anyway).
    pub unresolved: Vec<i32>,
}

impl BumpMoveReport {
    pub fn passes(&self) -> bool {
        self.slope_separated <= self.required_slope && self.slope_moved_projection <= self.required_slope
    }
}

/// Least-squares slope of `log2 y` against `x`.
pub fn log2_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (x, y.max(f64::MIN_POSITIVE).log2()))
        .collect();
    crate::dimension::least_squares(&pts).0
}

/// Decay of the bump-moving errors across bands, on a random scalar field.
///
/// The two cutoffs are radial bumps centered at antipodal points of the
/// diagonal with radius chosen so that their supports are exactly
/// `separation` apart; the single-cutoff errors use the first bump.
pub fn bump_move_error(cfg: &BumpMoveConfig) -> Result<BumpMoveReport> {
    let grid = Grid::unit(cfg.n)?;
    let j_min = *cfg.bands.iter().min().ok_or_else(|| Error::Domain("no bands".into()))?;
    if !(cfg.separation > (-(j_min as f64)).exp2()) {
        return Err(Error::Precondition(format!(
            "separation {} must exceed 2^-{j_min}",
            cfg.separation
        )));
    }
    let c1 = [0.25, 0.25, 0.25];
    let c2 = [0.75, 0.75, 0.75];
    let dist = 0.75f64.sqrt();
    let radius = 0.5 * (dist - cfg.separation);
    if radius <= 4.0 * grid.spacing() {
        return Err(Error::Resolution("separation leaves no room for the cutoffs".into()));
    }
    let phi1 = radial_cutoff(&grid, c1, 0.5 * radius, radius);
    let phi2 = radial_cutoff(&grid, c2, 0.5 * radius, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = Spectrum::random(grid, &mut rng);
    let fp = f.to_physical()?;
    let mut rows = Vec::new();
    let mut unresolved = Vec::new();
    for &j in &cfg.bands {
        if !grid.lattice_bands().contains(&j) {
            return Err(Error::BandRange {
                band: j,
                min: *grid.lattice_bands().start(),
                max: *grid.lattice_bands().end(),
            });
        }
        if grid.check_band(j).is_err() {
            unresolved.push(j);
        }
        rows.push(BumpMoveRow {
            j,
            separated: moving_bump_impl(&grid, &fp, &phi1, &phi2, j)?,
            moved_projection: moving_projection_impl(&grid, &f, &phi1, j)?,
            inside_projection: inside_projection_impl(&grid, &f, &phi1, j)?,
        });
    }
    let slope = |sel: fn(&BumpMoveRow) -> f64| {
        log2_slope(&rows.iter().map(|r| (r.j as f64, sel(r))).collect::<Vec<_>>())
    };
    Ok(BumpMoveReport {
        slope_separated: slope(|r| r.separated),
        slope_moved_projection: slope(|r| r.moved_projection),
        slope_inside_projection: slope(|r| r.inside_projection),
        required_slope: -6.0,
        unresolved,
        rows,
    })
}

/// `||phi_Q P_j u||_inf / (2^{3j/2} u_{Q,j} + ||(1 - P~_j)(phi_Q P_j u)||_inf)`, with `0/0 = 0`.
pub fn localized_bernstein_ratio(u: &SpectralField, region: &Region, j: i32) -> Result<f64> {
    if !(region.side > (-(j as f64)).exp2()) {
        return Err(Error::Precondition(format!(
            "cube side {} must exceed 2^-{j}",
            region.side
        )));
    }
    let g = *u.grid();
    let cutoff = Cutoff::new(g, *region)?;
    let pj = lp::project(u, BandSelector::Single(j))?.to_physical()?;
    let phi = cutoff.samples();
    let comps: [Vec<f64>; 3] = std::array::from_fn(|d| mul(&phi, pj.component(d)));
    let v = PhysicalField::new(g, comps)?;
    let sup = v.sup_norm();
    let packet = v.norm_l2();
    let vs = SpectralField::from_physical(&v);
    let tail = vs.sub(&lp::project_unchecked(&vs, BandSelector::Tilde(j)));
    let err = tail.to_physical_unchecked().sup_norm();
    let denom = (1.5 * j as f64).exp2() * packet + err;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(sup / denom)
}
