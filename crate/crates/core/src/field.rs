//! Spectral and physical representations of periodic fields.
//!
//! Coefficients follow the Fourier-series convention
//! `f(x) = sum_k c_k exp(2 pi i k.x / period)`, so the forward transform carries
//! the `1/N^3` factor and `||f||^2_{L^2} = period^3 * sum_k |c_k|^2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid;

/// Relative tolerance for Hermitian symmetry and divergence checks.
pub const TOL_DIV: f64 = 1e-12;

/// Scalar periodic field stored by its Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at integer wavevector `k`, zero if not on the lattice.
    pub fn coeff_at(&self, k: [i64; 3]) -> Complex64 {
        match lattice_index(&self.grid, k) {
            Some(i) => self.coeffs[i],
            None => Complex64::default(),
        }
    }

    pub fn set_coeff(&mut self, k: [i64; 3], value: Complex64) -> Result<()> {
        let i = lattice_index(&self.grid, k)
            .ok_or_else(|| Error::Domain(format!("wavevector {k:?} not on the lattice")))?;
        self.coeffs[i] = value;
        Ok(())
    }

    /// Largest `|c(-k) - conj(c(k))|` relative to the largest coefficient.
    pub fn hermitian_violation(&self) -> f64 {
        hermitian_violation(&self.grid, &self.coeffs)
    }

    pub fn check_hermitian(&self) -> Result<()> {
        let v = self.hermitian_violation();
        if v > TOL_DIV {
            return Err(Error::SymmetryViolation {
                violation: v,
                tolerance: TOL_DIV,
            });
        }
        Ok(())
    }

    /// Grid samples. Fails on non-Hermitian input.
    pub fn to_physical(&self) -> Result<Vec<f64>> {
        self.check_hermitian()?;
        Ok(self.to_physical_unchecked())
    }

    pub(crate) fn to_physical_unchecked(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        fft::plan(self.grid.n()).inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    pub fn from_physical(grid: Grid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::plan(grid.n()).forward(&mut buf);
        let scale = 1.0 / grid.len() as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
        symmetrize(&grid, &mut buf);
        Ok(Self { grid, coeffs: buf })
    }

    /// Multiply every coefficient by a real symbol evaluated per lattice index.
    pub fn apply_symbol(&mut self, symbol: impl Fn(usize) -> f64) {
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            *c *= symbol(i);
        }
    }

    pub fn with_symbol(&self, symbol: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        out.apply_symbol(symbol);
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `L^2` inner product of the real fields.
    pub fn inner(&self, other: &Spectrum) -> f64 {
        self.grid.volume()
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a * b.conj()).re)
                .sum::<f64>()
    }

    pub fn add_assign(&mut self, other: &Spectrum) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Spectrum) -> Spectrum {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Spectrum {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in self.coeffs.iter_mut() {
            *c *= s;
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Random real field with independent Gaussian modes, zero mean and zero
    /// Nyquist planes.
    pub fn random<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> Self {
        let mut coeffs: Vec<Complex64> = (0..grid.len())
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        symmetrize(&grid, &mut coeffs);
        let mut s = Self { grid, coeffs };
        s.coeffs[0] = Complex64::default();
        s.zero_nyquist();
        s
    }

    pub fn zero_nyquist(&mut self) {
        zero_nyquist(&self.grid, &mut self.coeffs);
    }

    /// Zero-pad onto a finer grid with the same period.
    pub fn pad(&self, m: usize) -> Result<Spectrum> {
        resample(&self.grid, &self.coeffs, m).map(|(grid, coeffs)| Spectrum { grid, coeffs })
    }

    /// Restrict onto a coarser (or equal) grid, dropping the target's Nyquist planes.
    pub fn truncate(&self, m: usize) -> Result<Spectrum> {
        resample(&self.grid, &self.coeffs, m).map(|(grid, coeffs)| Spectrum { grid, coeffs })
    }
}

/// Divergence-free (or general) real vector field stored in Fourier space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    comps: [Spectrum; 3],
}

/// Grid samples of a real vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

impl PhysicalField {
    pub fn new(grid: Grid, comps: [Vec<f64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch(format!(
                "each component needs {} samples",
                grid.len()
            )));
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: Grid) -> Self {
        let z = vec![0.0; grid.len()];
        Self {
            grid,
            comps: [z.clone(), z.clone(), z],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comps(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn component(&self, d: usize) -> &[f64] {
        &self.comps[d]
    }

    pub fn into_comps(self) -> [Vec<f64>; 3] {
        self.comps
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                (self.comps[0][i].powi(2) + self.comps[1][i].powi(2) + self.comps[2][i].powi(2))
                    .sqrt()
            })
            .collect()
    }

    /// Grid-quadrature `L^2` norm: `sqrt(cell_volume * sum |u|^2)`.
    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self
            .comps
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            comps: [Spectrum::zeros(grid), Spectrum::zeros(grid), Spectrum::zeros(grid)],
        }
    }

    pub fn from_components(comps: [Spectrum; 3]) -> Result<Self> {
        comps[0].grid.ensure_same(&comps[1].grid)?;
        comps[0].grid.ensure_same(&comps[2].grid)?;
        Ok(Self { comps })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.comps[0].grid
    }

    #[inline]
    pub fn component(&self, d: usize) -> &Spectrum {
        &self.comps[d]
    }

    #[inline]
    pub fn component_mut(&mut self, d: usize) -> &mut Spectrum {
        &mut self.comps[d]
    }

    pub fn components(&self) -> &[Spectrum; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Spectrum; 3] {
        self.comps
    }

    /// Vector coefficient at integer wavevector `k`.
    pub fn coeff_at(&self, k: [i64; 3]) -> [Complex64; 3] {
        [
            self.comps[0].coeff_at(k),
            self.comps[1].coeff_at(k),
            self.comps[2].coeff_at(k),
        ]
    }

    pub fn hermitian_violation(&self) -> f64 {
        self.comps
            .iter()
            .map(Spectrum::hermitian_violation)
            .fold(0.0, f64::max)
    }

    pub fn check_hermitian(&self) -> Result<()> {
        for c in &self.comps {
            c.check_hermitian()?;
        }
        Ok(())
    }

    pub fn apply_symbol(&mut self, symbol: impl Fn(usize) -> f64 + Copy) {
        for c in self.comps.iter_mut() {
            c.apply_symbol(symbol);
        }
    }

    pub fn with_symbol(&self, symbol: impl Fn(usize) -> f64 + Copy) -> Self {
        let mut out = self.clone();
        out.apply_symbol(symbol);
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.comps.iter().map(Spectrum::norm_sq).sum()
    }

    /// `L^2(torus)` norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn add_assign(&mut self, other: &SpectralField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.add_assign(b);
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        SpectralField {
            comps: [
                self.comps[0].sub(&other.comps[0]),
                self.comps[1].sub(&other.comps[1]),
                self.comps[2].sub(&other.comps[2]),
            ],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in self.comps.iter_mut() {
            c.scale(s);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.comps
            .iter()
            .map(Spectrum::max_abs_coeff)
            .fold(0.0, f64::max)
    }

    pub fn zero_nyquist(&mut self) {
        for c in self.comps.iter_mut() {
            c.zero_nyquist();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Inverse transform to grid samples. Fails on non-Hermitian input.
    pub fn to_physical(&self) -> Result<PhysicalField> {
        self.check_hermitian()?;
        Ok(self.to_physical_unchecked())
    }

    pub(crate) fn to_physical_unchecked(&self) -> PhysicalField {
        let (x, y) = inverse_pair(&self.comps[0], &self.comps[1]);
        let z = self.comps[2].to_physical_unchecked();
        PhysicalField {
            grid: *self.grid(),
            comps: [x, y, z],
        }
    }

    /// Forward transform with the `1/N^3` normalization.
    pub fn from_physical(p: &PhysicalField) -> Self {
        let (x, y) = forward_pair(&p.grid, &p.comps[0], &p.comps[1]);
        let z = Spectrum::from_physical(p.grid, &p.comps[2]).expect("sizes checked at construction");
        Self { comps: [x, y, z] }
    }

    /// `(-Delta)^alpha`: multiply by `(2 pi |k| / period)^(2 alpha)`.
    pub fn fractional_laplacian(&self, alpha: f64) -> Result<Self> {
        let g = *self.grid();
        let sym = fractional_symbol(&g, alpha)?;
        Ok(self.with_symbol(sym))
    }

    /// Leray projection `I - k k^T / |k|^2` applied mode by mode.
    pub fn leray_project(&self) -> Self {
        let mut out = self.clone();
        out.leray_project_in_place();
        out
    }

    pub fn leray_project_in_place(&mut self) {
        let g = *self.grid();
        for i in 0..g.len() {
            let k = g.derivative_wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                continue;
            }
            let c = [
                self.comps[0].coeffs[i],
                self.comps[1].coeffs[i],
                self.comps[2].coeffs[i],
            ];
            let kc = (c[0] * k[0] + c[1] * k[1] + c[2] * k[2]) / k2;
            for d in 0..3 {
                self.comps[d].coeffs[i] = c[d] - kc * k[d];
            }
        }
    }

    /// Largest `|k . c(k)| / (|k| |c(k)|)` over nonzero modes with nonzero coefficient,
    /// relative to the largest coefficient magnitude.
    pub fn divergence_violation(&self) -> f64 {
        let g = *self.grid();
        let cmax = self.max_abs_coeff();
        if cmax == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let k = g.derivative_wavevector(i);
            let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
            if kn == 0.0 {
                continue;
            }
            let c = [
                self.comps[0].coeffs[i],
                self.comps[1].coeffs[i],
                self.comps[2].coeffs[i],
            ];
            let cn = (c[0].norm_sqr() + c[1].norm_sqr() + c[2].norm_sqr()).sqrt();
            if cn <= cmax * 1e-300 {
                continue;
            }
            let div = (c[0] * k[0] + c[1] * k[1] + c[2] * k[2]).norm() / kn;
            worst = worst.max(div / cn.max(cmax * TOL_DIV));
        }
        worst
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_violation() <= TOL_DIV
    }

    /// Random mean-free real vector field (not projected).
    pub fn random<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> Self {
        Self {
            comps: [
                Spectrum::random(grid, rng),
                Spectrum::random(grid, rng),
                Spectrum::random(grid, rng),
            ],
        }
    }

    /// `grad p` of a scalar potential.
    pub fn gradient(pot: &Spectrum) -> Self {
        let g = *pot.grid();
        let comps: [Spectrum; 3] = std::array::from_fn(|d| {
            let mut c = pot.clone();
            for (i, z) in c.coeffs_mut().iter_mut().enumerate() {
                *z *= Complex64::new(0.0, g.derivative_wavevector(i)[d]);
            }
            c
        });
        Self { comps }
    }

    /// Random divergence-free field.
    pub fn random_solenoidal<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> Self {
        Self::random(grid, rng).leray_project()
    }

    pub fn pad(&self, m: usize) -> Result<Self> {
        Ok(Self {
            comps: [
                self.comps[0].pad(m)?,
                self.comps[1].pad(m)?,
                self.comps[2].pad(m)?,
            ],
        })
    }

    pub fn truncate(&self, m: usize) -> Result<Self> {
        Ok(Self {
            comps: [
                self.comps[0].truncate(m)?,
                self.comps[1].truncate(m)?,
                self.comps[2].truncate(m)?,
            ],
        })
    }

    /// Zero every mode outside the 2/3 box `|k_i| < n/3`.
    pub fn dealias_two_thirds(&mut self) {
        let g = *self.grid();
        let mask = two_thirds_mask(&g);
        for c in self.comps.iter_mut() {
            for (z, keep) in c.coeffs.iter_mut().zip(&mask) {
                if !keep {
                    *z = Complex64::default();
                }
            }
        }
    }

    /// `sup |u|` evaluated on the grid, or on a grid refined by `oversample`
    /// through spectral interpolation.
    pub fn sup_norm(&self, oversample: usize) -> Result<f64> {
        let field = if oversample > 1 {
            self.pad(self.grid().n() * oversample)?
        } else {
            self.clone()
        };
        Ok(field.to_physical()?.sup_norm())
    }
}

pub(crate) fn two_thirds_mask(g: &Grid) -> Vec<bool> {
    let cut = g.n() as f64 / 3.0;
    (0..g.len())
        .map(|i| g.wavevector(i).iter().all(|&k| (k.abs() as f64) < cut) && !g.is_nyquist(i))
        .collect()
}

/// Symbol of `(-Delta)^alpha`.
pub fn fractional_symbol(g: &Grid, alpha: f64) -> Result<impl Fn(usize) -> f64 + Copy + '_> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "fractional Laplacian needs alpha >= 0, got {alpha}"
        )));
    }
    Ok(move |i: usize| {
        if alpha == 0.0 {
            return 1.0;
        }
        let xi = g.xi(i);
        if xi == 0.0 {
            0.0
        } else {
            (2.0 * PI * xi).powf(2.0 * alpha)
        }
    })
}

fn lattice_index(g: &Grid, k: [i64; 3]) -> Option<usize> {
    Some(g.index(g.axis_index(k[0])?, g.axis_index(k[1])?, g.axis_index(k[2])?))
}

fn hermitian_violation(g: &Grid, coeffs: &[Complex64]) -> f64 {
    let cmax = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if cmax == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let m = g.mirror(i);
        worst = worst.max((coeffs[m] - coeffs[i].conj()).norm());
    }
    worst / cmax
}

/// Replace `c` by its Hermitian part `(c(k) + conj(c(-k))) / 2`.
pub(crate) fn symmetrize(g: &Grid, coeffs: &mut [Complex64]) {
    for i in 0..g.len() {
        let m = g.mirror(i);
        if m < i {
            continue;
        }
        let a = coeffs[i];
        let b = coeffs[m];
        let h = (a + b.conj()) * 0.5;
        coeffs[i] = h;
        coeffs[m] = h.conj();
    }
}

fn zero_nyquist(g: &Grid, coeffs: &mut [Complex64]) {
    for (i, c) in coeffs.iter_mut().enumerate() {
        if g.is_nyquist(i) {
            *c = Complex64::default();
        }
    }
}

fn resample(g: &Grid, coeffs: &[Complex64], m: usize) -> Result<(Grid, Vec<Complex64>)> {
    let target = Grid::new(m, g.period())?;
    let mut out = vec![Complex64::default(); target.len()];
    for (i, c) in coeffs.iter().enumerate() {
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        // Nyquist modes of either grid are ambiguous and dropped.
        if g.is_nyquist(i) {
            continue;
        }
        let k = g.wavevector(i);
        if let Some(j) = lattice_index(&target, k) {
            if !target.is_nyquist(j) {
                out[j] = *c;
            }
        }
    }
    Ok((target, out))
}

/// Inverse transform of two Hermitian spectra with one complex FFT.
pub(crate) fn inverse_pair(a: &Spectrum, b: &Spectrum) -> (Vec<f64>, Vec<f64>) {
    let mut buf: Vec<Complex64> = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| Complex64::new(x.re - y.im, x.im + y.re))
        .collect();
    fft::plan(a.grid.n()).inverse(&mut buf);
    buf.into_iter().map(|z| (z.re, z.im)).unzip()
}

/// Forward transform of two real sample arrays with one complex FFT.
pub(crate) fn forward_pair(g: &Grid, a: &[f64], b: &[f64]) -> (Spectrum, Spectrum) {
    let mut buf: Vec<Complex64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| Complex64::new(x, y))
        .collect();
    fft::plan(g.n()).forward(&mut buf);
    let scale = 0.5 / g.len() as f64;
    let mut ca = vec![Complex64::default(); g.len()];
    let mut cb = vec![Complex64::default(); g.len()];
    for i in 0..g.len() {
        let z = buf[i];
        let zm = buf[g.mirror(i)].conj();
        ca[i] = (z + zm) * scale;
        // (z - zm) / (2i)
        let d = z - zm;
        cb[i] = Complex64::new(d.im, -d.re) * scale;
    }
    (
        Spectrum {
            grid: *g,
            coeffs: ca,
        },
        Spectrum {
            grid: *g,
            coeffs: cb,
        },
    )
}

/// Pointwise products of grid samples, transformed back two at a time.
pub(crate) fn forward_many(g: &Grid, fields: &[Vec<f64>]) -> Vec<Spectrum> {
    let mut out = Vec::with_capacity(fields.len());
    let mut it = fields.chunks(2);
    for pair in &mut it {
        if pair.len() == 2 {
            let (a, b) = forward_pair(g, &pair[0], &pair[1]);
            out.push(a);
            out.push(b);
        } else {
            out.push(Spectrum::from_physical(*g, &pair[0]).expect("sizes match"));
        }
    }
    out
}
