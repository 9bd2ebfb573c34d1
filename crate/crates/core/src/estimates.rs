//! Packet-energy flux identity and the terms of the main local estimate.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::covering::{surface_meets, BarrierResult};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lp::{self, BandSelector};
use crate::packets::{check_epsilon, cube_side, BandSamples, Cube, Cutoff, Region};
use crate::solver::Solver;

pub use crate::covering::theta;

/// `(I, J)` for one cube and band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flux {
    /// Dissipative part `-<(-Delta)^alpha u, P_j(phi^2 P_j u)>`.
    pub i: f64,
    /// Nonlinear part `<N(u), P_j(phi^2 P_j u)>`.
    pub j: f64,
}

impl Flux {
    /// `d/dt u_{Q,j}^2 = 2 (I + J)`.
    pub fn rate(&self) -> f64 {
        2.0 * (self.i + self.j)
    }
}

/// Right-hand side pieces of one state, shared across cubes.
pub struct FluxContext {
    pj: [Vec<f64>; 3],
    band: i32,
    dissipation: SpectralField,
    nonlinear: SpectralField,
}

impl FluxContext {
    pub fn new(solver: &Solver, u: &SpectralField, j: i32) -> Result<Self> {
        solver.grid().ensure_same(u.grid())?;
        u.check_hermitian()?;
        let pj = lp::project(u, BandSelector::Single(j))?;
        let lam = solver.lambda();
        Ok(Self {
            pj: pj.to_physical_unchecked().into_comps(),
            band: j,
            dissipation: u.with_symbol(|i| -lam[i]),
            nonlinear: solver.nonlinear(u)?,
        })
    }

    /// `P_j(phi^2 P_j u)` from the grid samples of `phi^2 P_j u`.
    fn weight(&self, cutoff: &Cutoff) -> Result<SpectralField> {
        let g = *cutoff.grid();
        let phi2: Vec<f64> = cutoff.samples().iter().map(|p| p * p).collect();
        let comps: [Vec<f64>; 3] = std::array::from_fn(|a| {
            self.pj[a].iter().zip(&phi2).map(|(v, w)| v * w).collect()
        });
        let w = SpectralField::from_physical(&crate::field::PhysicalField::new(g, comps)?);
        Ok(lp::project_unchecked(&w, BandSelector::Single(self.band)))
    }

    pub fn flux(&self, cutoff: &Cutoff) -> Result<Flux> {
        let w = self.weight(cutoff)?;
        Ok(Flux {
            i: self.dissipation.inner(&w),
            j: self.nonlinear.inner(&w),
        })
    }
}

/// `(I, J)` of `u_{Q,j}^2` under the solver's semi-discrete dynamics.
pub fn flux_identity(solver: &Solver, u: &SpectralField, cube: &Cube, j: i32) -> Result<Flux> {
    let cutoff = Cutoff::for_cube(*u.grid(), cube)?;
    FluxContext::new(solver, u, j)?.flux(&cutoff)
}

/// Probe step used for the finite-difference packet rate in band `j`.
pub fn probe_step(solver: &Solver, j: i32) -> f64 {
    let l = solver.grid().period();
    let xi = (j as f64 + 1.0).exp2() / l;
    let lam = (2.0 * std::f64::consts::PI * xi).powf(2.0 * solver.alpha());
    0.02 / lam
}

/// Band-`j` samples of the states at `t - 2h, t - h, t + h, t + 2h`.
pub struct Probes {
    pub h: f64,
    samples: [BandSamples; 4],
}

impl Probes {
    pub fn new(solver: &Solver, u: &SpectralField, j: i32, h: f64) -> Result<Self> {
        let at = |s: f64| -> Result<BandSamples> {
            BandSamples::new(&solver.advance(u, s * h)?, BandSelector::Single(j))
        };
        Ok(Self {
            h,
            samples: [at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?],
        })
    }

    /// Richardson-extrapolated centered difference of `u_{Q,j}^2`.
    pub fn rate(&self, cutoff: &Cutoff) -> f64 {
        let e: Vec<f64> = self.samples.iter().map(|s| s.packet(cutoff).powi(2)).collect();
        let h = self.h;
        let d1 = (e[2] - e[1]) / (2.0 * h);
        let d2 = (e[3] - e[0]) / (4.0 * h);
        (4.0 * d1 - d2) / 3.0
    }
}

/// One flux-identity comparison.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FluxCheck {
    pub time: f64,
    pub cube_id: usize,
    pub j: i32,
    pub lhs_rate: f64,
    pub flux: Flux,
    pub defect: f64,
    pub tolerance: f64,
}

impl FluxCheck {
    pub fn passes(&self) -> bool {
        self.defect <= self.tolerance
    }
}

/// Compare the finite-difference packet rate with `2 (I + J)` for several cubes.
/// The tolerance is `rel * max(|2(I+J)|, floor)`.
pub fn flux_checks(
    solver: &Solver,
    time: f64,
    u: &SpectralField,
    cubes: &[Cube],
    j: i32,
    rel: f64,
    floor: f64,
) -> Result<Vec<FluxCheck>> {
    let ctx = FluxContext::new(solver, u, j)?;
    let probes = Probes::new(solver, u, j, probe_step(solver, j))?;
    cubes
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let cutoff = Cutoff::for_cube(*u.grid(), c)?;
            let flux = ctx.flux(&cutoff)?;
            let lhs = probes.rate(&cutoff);
            Ok(FluxCheck {
                time,
                cube_id: id,
                j,
                lhs_rate: lhs,
                flux,
                defect: (lhs - flux.rate()).abs(),
                tolerance: rel * flux.rate().abs().max(floor),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub alpha: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateTerms {
    pub time: f64,
    pub cube_id: usize,
    pub j: i32,
    pub i_flux: f64,
    pub j_flux: f64,
    pub g_diss: f64,
    pub g_low_loc: f64,
    pub g_loc: f64,
    pub g_hh: f64,
    pub e_diss: f64,
    pub e_vl: f64,
    pub theta: f64,
    pub lhs_rate: Option<f64>,
    /// `-I / G_diss`.
    pub ratio_diss: f64,
    /// `J / (G_low_loc + G_loc + G_hh)`.
    pub ratio_nonlinear: f64,
    /// The low window `theta j <= k <= j - 5` lost bands below the lattice.
    pub clipped_low: bool,
    /// The high sum `k >= j + 1` was cut at the top resolved band.
    pub clipped_high: bool,
    /// `2^{eps j} < 16`.
    pub small_j: bool,
}

/// Cache of band samples for one state.
struct Bands<'a> {
    u: &'a SpectralField,
    cache: HashMap<BandSelector, BandSamples>,
}

impl<'a> Bands<'a> {
    fn packet(&mut self, band: BandSelector, region: &Region) -> Result<f64> {
        if !self.cache.contains_key(&band) {
            self.cache.insert(band, BandSamples::new(self.u, band)?);
        }
        let cutoff = Cutoff::new(*self.u.grid(), *region)?;
        Ok(self.cache[&band].packet(&cutoff))
    }
}

fn safe_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(a)
        }
    } else {
        a / b
    }
}

/// All terms of the local estimate for the cubes of one state and band.
pub fn estimate_terms(
    solver: &Solver,
    time: f64,
    u: &SpectralField,
    cubes: &[Cube],
    j: i32,
    cfg: EstimateConfig,
) -> Result<Vec<EstimateTerms>> {
    check_epsilon(cfg.alpha, cfg.epsilon)?;
    let g = *u.grid();
    g.check_band(j)?;
    let top = *g.resolved_bands().end();
    let bottom = *g.resolved_bands().start();
    let th = theta(cfg.alpha, cfg.epsilon);
    let low_lo = (th * j as f64).ceil() as i32;
    let low_hi = j - 5;
    let ctx = FluxContext::new(solver, u, j)?;
    let mut bands = Bands { u, cache: HashMap::new() };
    let two = |x: f64| x.exp2();
    let a = cfg.alpha;
    let jf = j as f64;
    cubes
        .iter()
        .enumerate()
        .map(|(id, cube)| {
            let q = cube.region();
            let q32 = cube.dilate(1.5);
            let flux = ctx.flux(&Cutoff::new(g, q)?)?;
            let u_q = bands.packet(BandSelector::Single(j), &q)?;
            let u_t2 = bands.packet(BandSelector::Tilde(j), &q32)?;
            let u_t4 = bands.packet(BandSelector::Range(j - 4, j + 4), &q32)?;
            let mut low = 0.0;
            for k in low_lo.max(bottom)..=low_hi {
                let qk = cube.ancestor(k).region();
                low += two(jf + 1.5 * k as f64) * bands.packet(BandSelector::Single(k), &qk)?;
            }
            let mut hh = 0.0;
            for k in j + 1..=top {
                hh += two(1.5 * jf + k as f64) * bands.packet(BandSelector::Single(k), &q32)?.powi(2);
            }
            let g_diss = two(2.0 * a * jf) * u_q * u_q;
            let g_low_loc = u_q * u_t2 * low;
            let g_loc = two(2.5 * jf) * u_q * u_t4 * u_t4;
            let g_hh = u_q * hh;
            let d = cube_side(j, cfg.epsilon);
            Ok(EstimateTerms {
                time,
                cube_id: id,
                j,
                i_flux: flux.i,
                j_flux: flux.j,
                g_diss,
                g_low_loc,
                g_loc,
                g_hh,
                e_diss: two(2.0 * a * jf) / (d * two(jf)) * u_t2 * u_t2,
                e_vl: two(2.0 * a * jf - cfg.epsilon * jf) * u_t2 * u_t2,
                theta: th,
                lhs_rate: None,
                ratio_diss: safe_ratio(-flux.i, g_diss),
                ratio_nonlinear: safe_ratio(flux.j, g_low_loc + g_loc + g_hh),
                clipped_low: low_lo <= low_hi && low_lo < bottom,
                clipped_high: true,
                small_j: two(cfg.epsilon * jf) < 16.0,
            })
        })
        .collect()
}

/// `estimates.csv`.
pub fn estimates_csv(rows: &[EstimateTerms]) -> String {
    let mut out = String::from(
        "time,cube_id,j,I,J,G_diss,G_low_loc,G_loc,G_hh,e_diss,e_vl,theta,lhs_rate,ratio_diss,ratio_nonlinear,clipped_low,clipped_high,small_j\n",
    );
    for r in rows {
        let lhs = r.lhs_rate.map_or(String::new(), |v| format!("{v:.12e}"));
        let _ = writeln!(
            out,
            "{:.9e},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12},{},{:.6e},{:.6e},{},{},{}",
            r.time,
            r.cube_id,
            r.j,
            r.i_flux,
            r.j_flux,
            r.g_diss,
            r.g_low_loc,
            r.g_loc,
            r.g_hh,
            r.e_diss,
            r.e_vl,
            r.theta,
            lhs,
            r.ratio_diss,
            r.ratio_nonlinear,
            r.clipped_low,
            r.clipped_high,
            r.small_j
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityWeights {
    pub cube: Cube,
    pub delta: u32,
    pub rho: f64,
    /// `delta <= 10`: the cube sits closer to the barrier than the regularity
    /// argument assumes.
    pub near_barrier: bool,
}

/// `5 - 4 alpha + min(10, eps delta / 10)`.
pub fn rho(alpha: f64, epsilon: f64, delta: u32) -> f64 {
    5.0 - 4.0 * alpha + (epsilon * delta as f64 / 10.0).min(10.0)
}

/// `delta(Q)`: smallest `k >= 0` such that `Q_{j-k}` meets the barrier surface.
pub fn regularity_weights(cube: &Cube, alpha: f64, barrier: &BarrierResult, period: f64) -> Result<RegularityWeights> {
    let outer = Region::new(barrier.center, cube_side(barrier.j1, barrier.epsilon));
    if !barrier.region().contains(cube.center, period) {
        return Err(Error::Domain(format!(
            "cube at {:?} lies outside the barrier region",
            cube.center
        )));
    }
    const MAX_STEPS: u32 = 100_000;
    for k in 0..MAX_STEPS {
        let qk = cube.ancestor(cube.j - k as i32);
        if surface_meets(&outer, barrier.r, &qk.region(), period) {
            return Ok(RegularityWeights {
                cube: *cube,
                delta: k,
                rho: rho(alpha, cube.epsilon, k),
                near_barrier: k <= 10,
            });
        }
    }
    Err(Error::Domain("ancestor chain never met the barrier surface".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::solver::{shear_mode, Dealias, Scheme};

    #[test]
    fn theta_identity() {
        for &(a, e) in &[(1.1, 0.01), (1.2, 0.04), (1.125, 0.02)] {
            assert!((1.5 * theta(a, e) - (2.0 * a - 1.0 - e)).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_values() {
        assert!((rho(1.125, 0.01, 50) - 0.55).abs() < 1e-12);
        let e = 0.02;
        assert!((rho(1.1, e, (100.0 / e) as u32) - (15.0 - 4.4)).abs() < 1e-12);
        assert!((rho(1.1, e, 1_000_000) - (15.0 - 4.4)).abs() < 1e-12);
        assert!(rho(1.1, e, 0) == 5.0 - 4.4);
    }

    #[test]
    fn zero_state_has_zero_flux_and_terms() {
        let g = Grid::unit(32).unwrap();
        let s = Solver::new(g, 1.1, 1e-3, Scheme::IfRk4, Dealias::TwoThirds).unwrap();
        let u = SpectralField::zeros(g);
        let c = Cube::new([0.5; 3], 1, 0.01).unwrap();
        let f = flux_identity(&s, &u, &c, 1).unwrap();
        assert_eq!((f.i, f.j), (0.0, 0.0));
        let t = estimate_terms(&s, 0.0, &u, &[c], 1, EstimateConfig { alpha: 1.1, epsilon: 0.01 }).unwrap();
        let t = &t[0];
        for v in [t.g_diss, t.g_low_loc, t.g_loc, t.g_hh, t.e_diss, t.e_vl, t.ratio_diss, t.ratio_nonlinear] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn shear_mode_dissipation_flux() {
        // u = A sin(2 pi m z) e_x with phi = 1: J = 0, I = -lambda |u|^2 band-weighted
        let g = Grid::unit(32).unwrap();
        let alpha = 1.1;
        let s = Solver::new(g, alpha, 1e-3, Scheme::IfRk4, Dealias::TwoThirds).unwrap();
        let m = 4;
        let u = shear_mode(g, m, 1.0);
        let whole = Cube::new([0.5; 3], -1, 0.01).unwrap();
        let f = flux_identity(&s, &u, &whole, 2).unwrap();
        let p = lp::band_symbol(2, m as f64);
        let lam = (2.0 * std::f64::consts::PI * m as f64).powf(2.0 * alpha);
        let e = u.norm_sq();
        assert!(f.j.abs() < 1e-12 * lam * e);
        assert!((f.i + lam * p * p * e).abs() < 1e-10 * lam * e);
    }

    #[test]
    fn single_band_state_has_empty_windows() {
        let g = Grid::unit(64).unwrap();
        let s = Solver::new(g, 1.1, 1e-3, Scheme::IfRk4, Dealias::TwoThirds).unwrap();
        // |k| = 8 lies in band 3 only
        let u = shear_mode(g, 8, 1.0);
        let cfg = EstimateConfig { alpha: 1.1, epsilon: 0.01 };
        let c = Cube::new([0.3, 0.4, 0.5], 3, 0.01).unwrap();
        let t = estimate_terms(&s, 0.0, &u, &[c], 3, cfg).unwrap();
        assert_eq!(t[0].g_low_loc, 0.0);
        assert_eq!(t[0].g_hh, 0.0);
        assert!(t[0].g_diss > 0.0 && t[0].g_loc > 0.0);
        // 4-cubes are below the cutoff resolution at N = 64
        let c4 = Cube::new([0.3, 0.4, 0.5], 4, 0.01).unwrap();
        assert!(estimate_terms(&s, 0.0, &u, &[c4], 4, cfg).is_err());
    }
}
