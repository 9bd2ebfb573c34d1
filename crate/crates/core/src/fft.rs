//! Three-dimensional complex FFT on cubic arrays, built from 1D `rustfft` plans.
//!
//! Transforms are unnormalized; normalization lives in [`crate::field`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

static PLANS: Lazy<Mutex<HashMap<usize, Arc<Fft3>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared plan for an `n x n x n` transform.
pub fn plan(n: usize) -> Arc<Fft3> {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(Fft3::new(n)))
        .clone()
}

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-place forward transform, `sum_x f(x) exp(-2 pi i k.x / n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// In-place inverse transform, `sum_k c(k) exp(+2 pi i k.x / n)`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let plane = n * n;
        assert_eq!(data.len(), n * plane, "array is not n^3");

        // z lines are contiguous
        data.par_chunks_mut(plane).for_each(|chunk| {
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(chunk, &mut scratch);
        });

        // y lines: transpose each x-plane, transform, transpose back
        data.par_chunks_mut(plane).for_each(|chunk| {
            let mut buf = vec![Complex64::default(); plane];
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            transpose(chunk, &mut buf, n, n);
            fft.process_with_scratch(&mut buf, &mut scratch);
            transpose(&buf, chunk, n, n);
        });

        // x lines: gather per y-row, all z at once
        let mut buf = vec![Complex64::default(); n * plane];
        buf.par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(iy, rows)| {
                // rows laid out as [iz][ix]
                for ix in 0..n {
                    let src = &data[ix * plane + iy * n..ix * plane + iy * n + n];
                    for (iz, v) in src.iter().enumerate() {
                        rows[iz * n + ix] = *v;
                    }
                }
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(rows, &mut scratch);
            });
        data.par_chunks_mut(plane).enumerate().for_each(|(ix, chunk)| {
            for iy in 0..n {
                let rows = &buf[iy * plane..(iy + 1) * plane];
                let dst = &mut chunk[iy * n..iy * n + n];
                for (iz, v) in dst.iter_mut().enumerate() {
                    *v = rows[iz * n + ix];
                }
            }
        });
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Direct O(n^6) DFT.
    fn naive(data: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); data.len()];
        for k in 0..data.len() {
            let (ka, kb, kc) = (k / (n * n), (k / n) % n, k % n);
            let mut acc = Complex64::default();
            for x in 0..data.len() {
                let (a, b, c) = (x / (n * n), (x / n) % n, x % n);
                let phase = sign * 2.0 * PI * ((ka * a + kb * b + kc * c) % n) as f64 / n as f64;
                acc += data[x] * Complex64::from_polar(1.0, phase);
            }
            out[k] = acc;
        }
        out
    }

    #[test]
    fn matches_direct_summation() {
        let n = 6;
        let data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let p = Fft3::new(n);
        let mut fwd = data.clone();
        p.forward(&mut fwd);
        let oracle = naive(&data, n, -1.0);
        for (a, b) in fwd.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-10);
        }
        let mut inv = data.clone();
        p.inverse(&mut inv);
        let oracle = naive(&data, n, 1.0);
        for (a, b) in inv.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
