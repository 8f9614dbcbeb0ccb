//! Isotropic dyadic filter bank forming a Parseval frame.

use super::fft::bin_frequency;

/// Number of analysed bands: three band-pass filters and the final low-pass.
pub const BANDS: usize = 4;

/// White-noise band MSVs of the continuous-frequency bank (B1, B2, B3, L4).
pub const CONTINUOUS_REFERENCE: [f64; BANDS] =
    [0.1829113769, 0.0383796491, 0.0092141282, 0.0030389843];

fn h00(f: f64) -> f64 {
    if f <= 0.5 {
        (std::f64::consts::PI * f).sin()
    } else {
        1.0
    }
}

/// Radial responses `[H00, B1, B2, B3, L4]` at radial frequency `f`
/// (cycles/sample).
///
/// `H0k(f) = H00(2^k f)` below `2^-(k+1)` and 1 above, `L0k = sqrt(1 - H0k^2)`,
/// `B_k = L_k H0k`, `L_{k+1} = L_k L0k` with `L_0 = 1`.
pub fn radial_profile(f: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    let mut low = 1.0;
    for k in 0..BANDS {
        let scale = (1u32 << k) as f64;
        let h = if f <= 0.5 / scale { h00(scale * f) } else { 1.0 };
        let l = (1.0 - h * h).max(0.0).sqrt();
        out[k] = low * h;
        low *= l;
    }
    out[BANDS] = low;
    out
}

/// Frequency responses of the bank sampled on a DFT grid.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub width: usize,
    pub height: usize,
    /// Complementary high-pass `H00`.
    pub highpass: Vec<f64>,
    /// `B1, B2, B3, L4`.
    pub bands: [Vec<f64>; BANDS],
    /// Squared responses of `bands`.
    pub weights: [Vec<f64>; BANDS],
}

impl FilterBank {
    /// Builds the bank for a `width x height` DFT grid with
    /// `f = sqrt(fx^2 + fy^2)`, `fx, fy` in `[-0.5, 0.5)`.
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        let mut highpass = vec![0.0; n];
        let mut bands: [Vec<f64>; BANDS] = std::array::from_fn(|_| vec![0.0; n]);
        for ky in 0..height {
            let fy = bin_frequency(ky, height);
            for kx in 0..width {
                let fx = bin_frequency(kx, width);
                let r = radial_profile((fx * fx + fy * fy).sqrt());
                let i = ky * width + kx;
                highpass[i] = r[0];
                for b in 0..BANDS {
                    bands[b][i] = r[b + 1];
                }
            }
        }
        let weights = std::array::from_fn(|b| bands[b].iter().map(|v| v * v).collect());
        FilterBank {
            width,
            height,
            highpass,
            bands,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest deviation of `H00^2 + sum band^2` from 1 over the grid.
    pub fn tightness_error(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let s = self.highpass[i] * self.highpass[i]
                    + self.weights.iter().map(|w| w[i]).sum::<f64>();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Expected band MSVs of zero-mean, unit-MSV white noise on this grid:
    /// the band weights averaged over all non-DC bins.
    pub fn grid_reference(&self) -> [f64; BANDS] {
        let n = self.len() as f64;
        std::array::from_fn(|b| (self.weights[b].iter().sum::<f64>() - self.weights[b][0]) / (n - 1.0))
    }
}
