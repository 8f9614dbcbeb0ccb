//! Two-dimensional DFT on row-major real planes.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    /// Unnormalized forward transform: `X(k) = sum x(n) e^{-2 pi i k n / N}`.
    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform scaled by `1/N`, keeping the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, true);
        let scale = 1.0 / (self.width * self.height) as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (w, h) = (self.width, self.height);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        let mut t = transpose(buf, w, h);
        col.process(&mut t);
        buf.copy_from_slice(&transpose(&t, h, w));
    }
}

fn transpose(src: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = src[y * w + x];
        }
    }
    out
}

/// Signed frequency of DFT bin `k` of an `n`-point transform, in cycles/sample.
#[inline]
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft_and_inverts() {
        let (w, h) = (6, 4);
        let x: Vec<f64> = (0..w * h).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        let fft = Fft2::new(w, h);
        let spec = fft.forward(&x);
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * ((kx * xx) as f64 / w as f64 + (ky * y) as f64 / h as f64);
                        acc += x[y * w + xx] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - spec[ky * w + kx]).norm() < 1e-12);
            }
        }
        let back = fft.inverse_real(spec);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn bin_frequencies_wrap_at_half() {
        assert_eq!(bin_frequency(0, 8), 0.0);
        assert_eq!(bin_frequency(3, 8), 0.375);
        assert_eq!(bin_frequency(4, 8), -0.5);
        assert_eq!(bin_frequency(7, 8), -0.125);
    }
}
