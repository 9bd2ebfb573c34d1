//! Periodic lattice geometry: index layout, wavevectors and dyadic band ranges.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible resolution per axis.
pub const MIN_N: usize = 16;

/// Cubic periodic grid `[0, period)^3` with `n` points per axis.
///
/// Arrays are stored row-major with `z` fastest: `idx = (ix * n + iy) * n + iz`.
/// Index `i` along an axis corresponds to wavenumber `i` for `i <= n/2` and
/// `i - n` otherwise, so wavenumbers lie in `(-n/2, n/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    period: f64,
}

impl Grid {
    pub fn new(n: usize, period: f64) -> Result<Self> {
        if n < MIN_N || !n.is_multiple_of(2) {
            return Err(Error::Grid(format!(
                "n_per_axis must be even and >= {MIN_N}, got {n}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Grid(format!("period must be positive, got {period}")));
        }
        Ok(Self { n, period })
    }

    /// Unit-period grid.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn period(&self) -> f64 {
        self.period
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(3)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Axis index holding wavenumber `k`, if representable.
    pub fn axis_index(&self, k: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if k > half || k <= -half {
            return None;
        }
        Some(if k >= 0 { k as usize } else { (k + self.n as i64) as usize })
    }

    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let [a, b, c] = self.coords(idx);
        [self.wavenumber(a), self.wavenumber(b), self.wavenumber(c)]
    }

    #[inline]
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = self.n / 2;
        self.coords(idx).contains(&h)
    }

    /// Index of the wavevector `-k` (reflection through the origin, modulo `n`).
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        let n = self.n;
        let [a, b, c] = self.coords(idx);
        self.index((n - a) % n, (n - b) % n, (n - c) % n)
    }

    /// Frequency magnitude `|xi| = |k| / period` (cycles per unit length).
    #[inline]
    pub fn xi(&self, idx: usize) -> f64 {
        let [a, b, c] = self.wavevector(idx);
        ((a * a + b * b + c * c) as f64).sqrt() / self.period
    }

    /// Angular wavevector `2 pi k / period` used for derivatives, with
    /// Nyquist components set to zero so that differentiation maps real
    /// fields to real fields.
    #[inline]
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 3] {
        let h = self.n / 2;
        let scale = 2.0 * PI / self.period;
        let coords = self.coords(idx);
        let mut out = [0.0; 3];
        for d in 0..3 {
            if coords[d] != h {
                out[d] = scale * self.wavenumber(coords[d]) as f64;
            }
        }
        out
    }

    /// Physical coordinates of grid point `idx`.
    #[inline]
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let [a, b, c] = self.coords(idx);
        [a as f64 * h, b as f64 * h, c as f64 * h]
    }

    /// Largest `|xi|` on the lattice.
    pub fn max_xi(&self) -> f64 {
        (3.0f64).sqrt() * (self.n / 2) as f64 / self.period
    }

    /// Bands whose annulus fits strictly inside the Nyquist ball:
    /// `1 ..= floor(log2(n / (2 period))) - 1`.
    pub fn resolved_bands(&self) -> RangeInclusive<i32> {
        let nyq = self.n as f64 / (2.0 * self.period);
        1..=(nyq.log2().floor() as i32 - 1)
    }

    /// Every band whose symbol is nonzero somewhere on the lattice. Summing
    /// these projections reproduces any mean-free field exactly.
    pub fn lattice_bands(&self) -> RangeInclusive<i32> {
        let lo = (1.0 / self.period).log2();
        let hi = self.max_xi().log2();
        let first = (lo - 1.0).floor() as i32 + 1;
        let last = (hi + 1.0).ceil() as i32 - 1;
        first..=last
    }

    pub fn check_band(&self, band: i32) -> Result<()> {
        let r = self.resolved_bands();
        if r.contains(&band) {
            Ok(())
        } else {
            Err(Error::BandRange {
                band,
                min: *r.start(),
                max: *r.end(),
            })
        }
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "n={} period={} vs n={} period={}",
                self.n, self.period, other.n, other.period
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_small_grids() {
        assert!(Grid::unit(15).is_err());
        assert!(Grid::unit(8).is_err());
        assert!(Grid::unit(17).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        assert!(Grid::unit(16).is_ok());
    }

    #[test]
    fn wavenumber_layout() {
        let g = Grid::unit(16).unwrap();
        assert_eq!(g.wavenumber(0), 0);
        assert_eq!(g.wavenumber(8), 8);
        assert_eq!(g.wavenumber(9), -7);
        assert_eq!(g.wavenumber(15), -1);
        for i in 0..16 {
            assert_eq!(g.axis_index(g.wavenumber(i)), Some(i));
        }
        let idx = g.index(1, 15, 8);
        assert_eq!(g.wavevector(idx), [1, -1, 8]);
        assert!(g.is_nyquist(idx));
        assert_eq!(g.wavevector(g.mirror(idx)), [-1, 1, 8]);
    }

    #[test]
    fn band_ranges() {
        let g = Grid::unit(64).unwrap();
        assert_eq!(g.resolved_bands(), 1..=4);
        assert_eq!(g.lattice_bands(), 0..=6);
        let g = Grid::unit(128).unwrap();
        assert_eq!(g.resolved_bands(), 1..=5);
        assert!(g.check_band(6).is_err());
    }
}
