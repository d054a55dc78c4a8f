//! Thin FFT helpers over `rustfft`: single-vector plans with owned scratch,
//! row-batched spectral multipliers and square/rectangular transposes.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft as FftPlan, FftPlanner};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Forward/inverse plan pair of one length. The inverse is unnormalized;
/// callers fold `1/n` into their spectral multipliers.
#[derive(Clone)]
pub struct Fft {
    n: usize,
    forward: Arc<dyn FftPlan<f64>>,
    inverse: Arc<dyn FftPlan<f64>>,
    scratch: Vec<C64>,
}

impl std::fmt::Debug for Fft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft").field("n", &self.n).finish()
    }
}

impl Fft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self { n, forward, inverse, scratch: vec![ZERO; len] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&mut self, buf: &mut [C64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    pub fn inverse(&mut self, buf: &mut [C64]) {
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }

    /// `buf <- IFFT(mult * FFT(buf))`; `mult` must include the `1/n`.
    pub fn convolve(&mut self, buf: &mut [C64], mult: &[C64]) {
        self.forward(buf);
        for (b, m) in buf.iter_mut().zip(mult) {
            *b *= m;
        }
        self.inverse(buf);
    }

    /// Apply a spectral multiplier independently to every row of a row-major
    /// matrix with rows of length `n`. Rows are processed in parallel; each
    /// row's arithmetic is independent of the worker count.
    pub fn convolve_rows(&self, data: &mut [C64], mult: &[C64]) {
        let n = self.n;
        let scratch_len = self.scratch.len();
        data.par_chunks_mut(n).for_each_init(
            || vec![ZERO; scratch_len],
            |scratch, row| {
                self.forward.process_with_scratch(row, scratch);
                for (b, m) in row.iter_mut().zip(mult) {
                    *b *= m;
                }
                self.inverse.process_with_scratch(row, scratch);
            },
        );
    }

    /// Like [`Fft::convolve_rows`] but with a multiplier that depends on the
    /// row index: `mult(row, buf)` is applied in the spectral domain.
    pub fn convolve_rows_with<F>(&self, data: &mut [C64], mult: F)
    where
        F: Fn(usize, &mut [C64]) + Sync,
    {
        let n = self.n;
        let scratch_len = self.scratch.len();
        data.par_chunks_mut(n).enumerate().for_each_init(
            || vec![ZERO; scratch_len],
            |scratch, (r, row)| {
                self.forward.process_with_scratch(row, scratch);
                mult(r, row);
                self.inverse.process_with_scratch(row, scratch);
            },
        );
    }
}

/// In-place transpose of a square `n x n` row-major matrix, optionally conjugating.
pub(crate) fn transpose_square(data: &mut [C64], n: usize, conjugate: bool) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i } else { bj };
                for j in j0..(bj + B).min(n) {
                    if i == j {
                        if conjugate {
                            data[i * n + i] = data[i * n + i].conj();
                        }
                        continue;
                    }
                    let a = data[i * n + j];
                    let b = data[j * n + i];
                    if conjugate {
                        data[i * n + j] = b.conj();
                        data[j * n + i] = a.conj();
                    } else {
                        data[i * n + j] = b;
                        data[j * n + i] = a;
                    }
                }
            }
        }
    }
}

/// Out-of-place transpose of a `rows x cols` row-major matrix into `out`
/// (`cols x rows`).
pub(crate) fn transpose_into<T: Copy>(src: &[T], rows: usize, cols: usize, out: &mut [T]) {
    const B: usize = 32;
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for bi in (0..rows).step_by(B) {
        for bj in (0..cols).step_by(B) {
            for i in bi..(bi + B).min(rows) {
                for j in bj..(bj + B).min(cols) {
                    out[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolve_with_identity_round_trips() {
        let n = 64;
        let mut fft = Fft::new(n);
        let orig: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (0.3 * i as f64).cos())).collect();
        let mut v = orig.clone();
        let mult = vec![C64::new(1.0 / n as f64, 0.0); n];
        fft.convolve(&mut v, &mult);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn transposes() {
        let n = 70;
        let m: Vec<C64> = (0..n * n).map(|i| C64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut t = m.clone();
        transpose_square(&mut t, n, false);
        let mut h = m.clone();
        transpose_square(&mut h, n, true);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(t[i * n + j], m[j * n + i]);
                assert_eq!(h[i * n + j], m[j * n + i].conj());
            }
        }
        let (r, c) = (5, 37);
        let a: Vec<f64> = (0..r * c).map(|i| i as f64).collect();
        let mut out = vec![0.0; r * c];
        transpose_into(&a, r, c, &mut out);
        assert_eq!(out[3 * r + 4], a[4 * c + 3]);
    }
}
