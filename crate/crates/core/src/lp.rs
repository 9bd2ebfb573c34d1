//! Littlewood-Paley projections on the periodic lattice.
//!
//! `h` is a C-infinity step equal to 1 on `(-inf, 1]` and 0 on `[2, inf)`;
//! `p(xi) = h(|xi|) - h(2|xi|)` and `p_j(xi) = p(2^-j xi)` with `xi = k / period`.
//! The zero mode belongs to no band.

use std::fmt;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{self, PhysicalField, SpectralField, Spectrum};
use crate::grid::Grid;

#[inline]
fn glue(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step `h`: 1 for `x <= 1`, 0 for `x >= 2`, monotone in between.
pub fn smooth_step(x: f64) -> f64 {
    let a = glue(2.0 - x);
    let b = glue(x - 1.0);
    a / (a + b)
}

/// Radial annulus profile `p(xi) = h(|xi|) - h(2|xi|)`.
pub fn annulus(xi: f64) -> f64 {
    let r = xi.abs();
    smooth_step(r) - smooth_step(2.0 * r)
}

/// `p_j(xi)`.
pub fn band_symbol(j: i32, xi: f64) -> f64 {
    annulus(xi * (-j as f64).exp2())
}

/// Which Littlewood-Paley combination to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BandSelector {
    /// `P_j`
    Single(i32),
    /// `P_{j-2} + ... + P_{j+2}`
    Tilde(i32),
    /// `P_lo + ... + P_hi`
    Range(i32, i32),
    /// `P_{<= j}`
    Leq(i32),
    /// `P_{>= j}`
    Geq(i32),
}

impl fmt::Display for BandSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandSelector::Single(j) => write!(f, "P_{j}"),
            BandSelector::Tilde(j) => write!(f, "P_{j}±2"),
            BandSelector::Range(a, b) => write!(f, "P_[{a},{b}]"),
            BandSelector::Leq(j) => write!(f, "P_<={j}"),
            BandSelector::Geq(j) => write!(f, "P_>={j}"),
        }
    }
}

impl BandSelector {
    /// Symbol at frequency magnitude `xi`; zero at `xi = 0`.
    pub fn symbol(&self, xi: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        match *self {
            BandSelector::Single(j) => band_symbol(j, xi),
            BandSelector::Tilde(j) => range_symbol(j - 2, j + 2, xi),
            BandSelector::Range(a, b) => range_symbol(a, b, xi),
            BandSelector::Leq(j) => smooth_step(xi * (-j as f64).exp2()),
            BandSelector::Geq(j) => 1.0 - smooth_step(xi * (1.0 - j as f64).exp2()),
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        match *self {
            BandSelector::Single(j)
            | BandSelector::Tilde(j)
            | BandSelector::Leq(j)
            | BandSelector::Geq(j) => grid.check_band(j),
            BandSelector::Range(a, b) => {
                if a > b {
                    return Err(Error::Domain(format!("empty band range [{a}, {b}]")));
                }
                let r = grid.resolved_bands();
                if b < *r.start() || a > *r.end() {
                    return Err(Error::BandRange {
                        band: if b < *r.start() { b } else { a },
                        min: *r.start(),
                        max: *r.end(),
                    });
                }
                Ok(())
            }
        }
    }
}

fn range_symbol(a: i32, b: i32, xi: f64) -> f64 {
    (a..=b).map(|k| band_symbol(k, xi)).sum()
}

/// Apply a band selector to a vector field. The anchor band must be resolved.
pub fn project(f: &SpectralField, band: BandSelector) -> Result<SpectralField> {
    let g = *f.grid();
    band.validate(&g)?;
    Ok(project_unchecked(f, band))
}

pub(crate) fn project_unchecked(f: &SpectralField, band: BandSelector) -> SpectralField {
    let g = *f.grid();
    let table = symbol_table(&g, band);
    f.with_symbol(|i| table[i])
}

pub fn project_scalar(f: &Spectrum, band: BandSelector) -> Result<Spectrum> {
    let g = *f.grid();
    band.validate(&g)?;
    Ok(project_scalar_unchecked(f, band))
}

pub(crate) fn project_scalar_unchecked(f: &Spectrum, band: BandSelector) -> Spectrum {
    let g = *f.grid();
    f.with_symbol(|i| band.symbol(g.xi(i)))
}

/// Symbol sampled on every lattice index.
pub fn symbol_table(g: &Grid, band: BandSelector) -> Vec<f64> {
    (0..g.len()).map(|i| band.symbol(g.xi(i))).collect()
}

/// CSV rows `j,xi,p_j` for plotting, `samples` points per band on `(0, xi_max]`.
pub fn symbol_table_csv(bands: std::ops::RangeInclusive<i32>, xi_max: f64, samples: usize) -> String {
    let mut out = String::from("j,xi,p_j\n");
    for j in bands {
        for s in 1..=samples {
            let xi = xi_max * s as f64 / samples as f64;
            let _ = writeln!(out, "{j},{xi:.6},{:.15e}", band_symbol(j, xi));
        }
    }
    out
}

/// Band pieces `P_k f`, `P_k g` of two mean-free scalar fields, sampled on a
/// padded grid so that quadratic products are alias-free on the resolved bands.
pub struct Paraproduct {
    source: Grid,
    padded: Grid,
    first_band: i32,
    f_bands: Vec<Vec<f64>>,
    g_bands: Vec<Vec<f64>>,
}

/// The four paraproduct terms of `P_j(f g)` on the padded grid.
#[derive(Clone, Debug)]
pub struct ParaproductTerms {
    pub j: i32,
    pub loc_low: Spectrum,
    pub low_loc: Spectrum,
    pub loc: Spectrum,
    pub hh: Spectrum,
}

impl ParaproductTerms {
    pub fn sum(&self) -> Spectrum {
        let mut s = self.loc_low.clone();
        s.add_assign(&self.low_loc);
        s.add_assign(&self.loc);
        s.add_assign(&self.hh);
        s
    }
}

/// Grid size used for alias-free products of fields on an `n` grid.
pub fn padded_size(n: usize) -> usize {
    let m = (3 * n).div_ceil(2);
    m + m % 2
}

impl Paraproduct {
    pub fn new(f: &Spectrum, g: &Spectrum) -> Result<Self> {
        let source = *f.grid();
        source.ensure_same(g.grid())?;
        for s in [f, g] {
            s.check_hermitian()?;
            let mean = s.coeffs()[0].norm();
            if mean > field::TOL_DIV * s.max_abs_coeff().max(f64::MIN_POSITIVE) {
                return Err(Error::Precondition(
                    "paraproduct inputs must have zero mean".into(),
                ));
            }
        }
        let m = padded_size(source.n());
        let padded = Grid::new(m, source.period())?;
        let bands = source.lattice_bands();
        let first_band = *bands.start();
        let mut f_bands = Vec::new();
        let mut g_bands = Vec::new();
        for k in bands {
            let fk = project_scalar_unchecked(f, BandSelector::Single(k)).pad(m)?;
            let gk = project_scalar_unchecked(g, BandSelector::Single(k)).pad(m)?;
            let (a, b) = field::inverse_pair(&fk, &gk);
            f_bands.push(a);
            g_bands.push(b);
        }
        Ok(Self {
            source,
            padded,
            first_band,
            f_bands,
            g_bands,
        })
    }

    pub fn padded_grid(&self) -> &Grid {
        &self.padded
    }

    fn last_band(&self) -> i32 {
        self.first_band + self.f_bands.len() as i32 - 1
    }

    fn partial(&self, pieces: &[Vec<f64>], lo: i32, hi: i32) -> Vec<f64> {
        let mut out = vec![0.0; self.padded.len()];
        let lo = lo.max(self.first_band);
        let hi = hi.min(self.last_band());
        for k in lo..=hi {
            let piece = &pieces[(k - self.first_band) as usize];
            for (o, v) in out.iter_mut().zip(piece) {
                *o += v;
            }
        }
        out
    }

    /// Split `P_j(fg)` into `K_loc,low + K_low,loc + K_loc + K_hh`, each returned
    /// unprojected on the padded grid.
    pub fn split(&self, j: i32) -> Result<ParaproductTerms> {
        self.source.check_band(j)?;
        let low = i32::MIN / 2;
        let f_loc = self.partial(&self.f_bands, j - 2, j + 2);
        let g_loc = self.partial(&self.g_bands, j - 2, j + 2);
        let f_low = self.partial(&self.f_bands, low, j - 5);
        let g_low = self.partial(&self.g_bands, low, j - 5);
        let loc_low: Vec<f64> = f_loc.iter().zip(&g_low).map(|(a, b)| a * b).collect();
        let low_loc: Vec<f64> = f_low.iter().zip(&g_loc).map(|(a, b)| a * b).collect();

        let f_mid = self.partial(&self.f_bands, j - 4, j + 2);
        let g_wide = self.partial(&self.g_bands, j - 4, j + 4);
        let loc: Vec<f64> = f_mid.iter().zip(&g_wide).map(|(a, b)| a * b).collect();

        let mut hh = vec![0.0; self.padded.len()];
        for k in (j + 3)..=self.last_band() {
            let fk = &self.f_bands[(k - self.first_band) as usize];
            let gk = self.partial(&self.g_bands, k - 2, k + 2);
            for ((o, a), b) in hh.iter_mut().zip(fk).zip(&gk) {
                *o += a * b;
            }
        }
        let mut spectra = field::forward_many(&self.padded, &[loc_low, low_loc, loc, hh]).into_iter();
        Ok(ParaproductTerms {
            j,
            loc_low: spectra.next().expect("four spectra"),
            low_loc: spectra.next().expect("four spectra"),
            loc: spectra.next().expect("four spectra"),
            hh: spectra.next().expect("four spectra"),
        })
    }
}

/// `paraproduct_split` for a single band.
pub fn paraproduct_split(f: &Spectrum, g: &Spectrum, j: i32) -> Result<ParaproductTerms> {
    Paraproduct::new(f, g)?.split(j)
}

/// Alias-free product `f g` on the padded grid (used as the direct reference).
pub fn padded_product(f: &Spectrum, g: &Spectrum) -> Result<Spectrum> {
    let m = padded_size(f.grid().n());
    let fp = f.pad(m)?;
    let gp = g.pad(m)?;
    let (a, b) = field::inverse_pair(&fp, &gp);
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    Spectrum::from_physical(*fp.grid(), &prod)
}

/// `L^q` norm of grid samples of a vector field; `q = inf` gives the sup norm.
pub fn lq_norm(p: &PhysicalField, q: f64) -> f64 {
    let mag = p.magnitude();
    if q.is_infinite() {
        return mag.into_iter().fold(0.0, f64::max);
    }
    let s: f64 = mag.iter().map(|v| v.powf(q)).sum();
    (s * p.grid().cell_volume()).powf(1.0 / q)
}

/// Evaluation options for norm ratios that involve sup norms.
#[derive(Clone, Copy, Debug)]
pub struct NormOptions {
    /// Spectral oversampling factor for evaluating norms (1 = native grid).
    pub oversample: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { oversample: 1 }
    }
}

pub(crate) fn physical_for_norms(f: &SpectralField, opts: NormOptions) -> Result<PhysicalField> {
    if opts.oversample > 1 {
        Ok(f.pad(f.grid().n() * opts.oversample)?.to_physical_unchecked())
    } else {
        Ok(f.to_physical_unchecked())
    }
}

/// `||P_j f||_q / (2^{3j(1/p - 1/q)} ||P_j f||_p)`; zero for a vanishing projection.
pub fn bernstein_ratio(f: &SpectralField, j: i32, p: f64, q: f64, opts: NormOptions) -> Result<f64> {
    if !(p >= 1.0) || q.is_nan() {
        return Err(Error::Domain(format!("need 1 <= p, got p = {p}")));
    }
    if p > q {
        return Err(Error::Domain(format!("need p <= q, got p = {p}, q = {q}")));
    }
    f.check_hermitian()?;
    let pj = project(f, BandSelector::Single(j))?;
    let phys = physical_for_norms(&pj, opts)?;
    let np = lq_norm(&phys, p);
    if np == 0.0 {
        return Ok(0.0);
    }
    let nq = lq_norm(&phys, q);
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let scale = (3.0 * j as f64 * (1.0 / p - inv_q)).exp2();
    Ok(nq / (scale * np))
}

/// Field whose Fourier coefficients are `amp(k) p_j(k) exp(-2 pi i k.x0)`, i.e.
/// a band-`j` packet concentrated at `x0` (the extremal shape for Bernstein
/// inequalities). Only the `x` component is populated.
pub fn band_packet(
    grid: Grid,
    j: i32,
    center: [f64; 3],
    amplitude: impl Fn([i64; 3]) -> f64,
) -> SpectralField {
    let mut s = Spectrum::zeros(grid);
    let l = grid.period();
    for i in 0..grid.len() {
        if grid.is_nyquist(i) {
            continue;
        }
        let k = grid.wavevector(i);
        let w = band_symbol(j, grid.xi(i));
        if w == 0.0 {
            continue;
        }
        let phase = -2.0 * std::f64::consts::PI
            * (k[0] as f64 * center[0] + k[1] as f64 * center[1] + k[2] as f64 * center[2])
            / l;
        s.coeffs_mut()[i] = Complex64::from_polar(w * amplitude(k), phase);
    }
    let mut c = s.coeffs().to_vec();
    field::symmetrize(&grid, &mut c);
    let s = Spectrum::from_coeffs(grid, c).expect("same grid");
    SpectralField::from_components([s, Spectrum::zeros(grid), Spectrum::zeros(grid)])
        .expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_plateaus_and_midpoint() {
        assert_eq!(smooth_step(0.5), 1.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert_eq!(smooth_step(3.0), 0.0);
        assert_eq!(smooth_step(2.0), 0.0);
        let g = |t: f64| (-1.0 / t).exp();
        let expected = g(2.0 - 1.5) / (g(2.0 - 1.5) + g(1.5 - 1.0));
        assert!((smooth_step(1.5) - expected).abs() < 1e-15);
        assert!((smooth_step(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn step_is_monotone_on_transition() {
        let mut prev = 1.0;
        for i in 0..=1000 {
            let x = 1.0 + i as f64 / 1000.0;
            let v = smooth_step(x);
            assert!(v <= prev + 1e-15);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn band_support_and_partition() {
        for j in -2..8 {
            let lo = (j as f64 - 1.0).exp2();
            let hi = (j as f64 + 1.0).exp2();
            assert_eq!(band_symbol(j, lo), 0.0);
            assert_eq!(band_symbol(j, hi), 0.0);
            assert_eq!(band_symbol(j, lo * 0.99), 0.0);
            assert_eq!(band_symbol(j, hi * 1.01), 0.0);
        }
        // partition of unity on lattice magnitudes
        let g = Grid::unit(64).unwrap();
        for i in 1..g.len() {
            let xi = g.xi(i);
            let s: f64 = g.lattice_bands().map(|j| band_symbol(j, xi)).sum();
            assert!((s - 1.0).abs() <= 1e-12, "xi = {xi}: {s}");
        }
    }

    #[test]
    fn separated_bands_have_disjoint_support() {
        let g = Grid::unit(64).unwrap();
        for i in 1..g.len() {
            let xi = g.xi(i);
            for j in 0..7 {
                for k in (j + 2)..9 {
                    assert_eq!(band_symbol(j, xi) * band_symbol(k, xi), 0.0);
                }
            }
        }
    }

    #[test]
    fn leq_plus_geq_is_identity_off_zero() {
        for j in 1..5 {
            for s in 1..2000 {
                let xi = s as f64 * 0.05;
                let t = BandSelector::Leq(j).symbol(xi) + BandSelector::Geq(j + 1).symbol(xi);
                assert!((t - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn project_checks_band_range() {
        let g = Grid::unit(32).unwrap();
        let f = SpectralField::zeros(g);
        assert!(project(&f, BandSelector::Single(0)).is_err());
        assert!(project(&f, BandSelector::Single(4)).is_err());
        assert!(project(&f, BandSelector::Single(3)).is_ok());
    }

    #[test]
    fn single_mode_projection() {
        let g = Grid::unit(64).unwrap();
        let mut s = Spectrum::zeros(g);
        s.set_coeff([8, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
        s.set_coeff([-8, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
        let f = SpectralField::from_components([s, Spectrum::zeros(g), Spectrum::zeros(g)]).unwrap();
        let p3 = project(&f, BandSelector::Single(3)).unwrap();
        let w = band_symbol(3, 8.0);
        assert!(w > 0.0 && w <= 1.0);
        assert!((p3.coeff_at([8, 0, 0])[0].re - 0.5 * w).abs() < 1e-15);
        let p6 = project_unchecked(&f, BandSelector::Single(6));
        assert_eq!(p6.max_abs_coeff(), 0.0);
    }

    #[test]
    fn resolved_bands_sum_to_identity_on_their_range() {
        let g = Grid::unit(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = g.resolved_bands();
        let (lo, hi) = ((*r.start() as f64).exp2(), (*r.end() as f64).exp2());
        let f = SpectralField::random(g, &mut rng).with_symbol(|i| {
            let xi = g.xi(i);
            if xi >= lo && xi <= hi {
                1.0
            } else {
                0.0
            }
        });
        let mut sum = SpectralField::zeros(g);
        for j in r {
            sum.add_assign(&project(&f, BandSelector::Single(j)).unwrap());
        }
        assert!(sum.sub(&f).max_abs_coeff() <= 1e-12 * f.max_abs_coeff());
    }

    #[test]
    fn bernstein_ratio_edge_cases() {
        let g = Grid::unit(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = SpectralField::random(g, &mut rng);
        let r = bernstein_ratio(&f, 2, 2.0, 2.0, NormOptions::default()).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        assert!(bernstein_ratio(&f, 2, 3.0, 2.0, NormOptions::default()).is_err());
        assert!(bernstein_ratio(&f, 2, 0.5, 2.0, NormOptions::default()).is_err());
    }

    #[test]
    fn bernstein_ratio_of_pure_cosine() {
        // ||cos||_inf / ||cos||_2 = sqrt(2) on the unit torus
        for (n, j) in [(32, 2), (32, 3), (64, 4)] {
            let g = Grid::unit(n).unwrap();
            let k = 1i64 << j;
            let mut s = Spectrum::zeros(g);
            s.set_coeff([k, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
            s.set_coeff([-k, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
            let f = SpectralField::from_components([s, Spectrum::zeros(g), Spectrum::zeros(g)])
                .unwrap();
            let r = bernstein_ratio(&f, j, 2.0, f64::INFINITY, NormOptions::default()).unwrap();
            let expected = 2f64.sqrt() * (-1.5 * j as f64).exp2();
            assert!((r - expected).abs() < 1e-12 * expected, "{r} vs {expected}");
        }
    }

    #[test]
    fn paraproduct_support_cases() {
        let g = Grid::unit(64).unwrap();
        let j = 4;
        // f at |xi| = 16 (band 4), g at |xi| = 1 (band 0 = j - 4 ... low)
        let mut f = Spectrum::zeros(g);
        f.set_coeff([16, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
        f.set_coeff([-16, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
        let mut h = Spectrum::zeros(g);
        h.set_coeff([0, 0, 1], Complex64::new(0.0, 0.5)).unwrap();
        h.set_coeff([0, 0, -1], Complex64::new(0.0, -0.5)).unwrap();
        // j - 7 = -3 has no lattice content; use the lowest lattice band instead
        let terms = paraproduct_split(&f, &h, j).unwrap();
        let pj = |s: &Spectrum| project_scalar_unchecked(s, BandSelector::Single(j));
        let total = pj(&padded_product(&f, &h).unwrap());
        assert!(pj(&terms.low_loc).max_abs_coeff() < 1e-15);
        assert!(pj(&terms.hh).max_abs_coeff() < 1e-15);
        let diff = pj(&terms.sum()).sub(&total).max_abs_coeff();
        assert!(diff < 1e-14);
    }

    #[test]
    fn paraproduct_reconstructs_random_products() {
        let g = Grid::unit(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = Spectrum::random(g, &mut rng);
        let h = Spectrum::random(g, &mut rng);
        let pp = Paraproduct::new(&f, &h).unwrap();
        let direct = padded_product(&f, &h).unwrap();
        for j in g.resolved_bands() {
            let t = pp.split(j).unwrap();
            let a = project_scalar_unchecked(&direct, BandSelector::Single(j));
            let b = project_scalar_unchecked(&t.sum(), BandSelector::Single(j));
            let err = a.sub(&b).norm();
            assert!(err <= 1e-10 * f.norm() * h.norm(), "j={j}: {err}");
        }
        let _ = rng.random::<u8>();
    }

    #[test]
    fn paraproduct_rejects_means_and_bad_bands() {
        let g = Grid::unit(32).unwrap();
        let mut f = Spectrum::zeros(g);
        f.coeffs_mut()[0] = Complex64::new(1.0, 0.0);
        assert!(Paraproduct::new(&f, &f).is_err());
        let z = Spectrum::zeros(g);
        let pp = Paraproduct::new(&z, &z).unwrap();
        assert!(pp.split(7).is_err());
    }

    #[test]
    fn symbol_csv_has_header_and_rows() {
        let csv = symbol_table_csv(1..=2, 8.0, 4);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "j,xi,p_j");
        assert_eq!(lines.len(), 9);
    }
}
