//! Zero-phase equivalent kernels and their interchange format.

use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bank::{FilterBank, BANDS};
use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};

/// Fraction of the kernel energy the spatial crop must keep.
pub const RETAINED_ENERGY: f64 = 1.0 - 1e-4;
/// Largest spatial support (odd edge length).
pub const MAX_SUPPORT: usize = 63;

/// Linear, zero-phase filter realizing a spectral transfer.
///
/// When built from band times the frequency response is
/// `exp(sum_b |H_b|^2 t_b - t_L4)`, which has unit gain at DC, and can be
/// re-evaluated exactly on any grid. Kernels read from a file carry only the
/// spatial array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalentKernel {
    pub band_times: Option<[f64; BANDS]>,
    /// Odd edge length of `spatial`.
    pub support: usize,
    /// Centered, row-major `support x support` array.
    pub spatial: Vec<f64>,
    /// Share of the full kernel energy inside `spatial`.
    pub retained_energy: f64,
    #[serde(skip)]
    grid: Option<(usize, usize)>,
    #[serde(skip)]
    response: Vec<f64>,
}

fn log_gain(bank: &FilterBank, times: &[f64; BANDS], i: usize) -> f64 {
    (0..BANDS).map(|b| bank.weights[b][i] * times[b]).sum::<f64>() - times[BANDS - 1]
}

impl EquivalentKernel {
    /// The discrete delta.
    pub fn identity() -> Self {
        EquivalentKernel {
            band_times: Some([0.0; BANDS]),
            support: 1,
            spatial: vec![1.0],
            retained_energy: 1.0,
            grid: None,
            response: Vec::new(),
        }
    }

    pub fn from_band_times(bank: &FilterBank, times: [f64; BANDS]) -> Self {
        let response: Vec<f64> = (0..bank.len()).map(|i| log_gain(bank, &times, i).exp()).collect();
        let full = Fft2::new(bank.width, bank.height)
            .inverse_real(response.iter().map(|&v| Complex64::new(v, 0.0)).collect());
        let (support, spatial, retained_energy) = crop_centered(&full, bank.width, bank.height);
        if retained_energy < RETAINED_ENERGY {
            log::warn!(
                "kernel support capped at {support}x{support}; {:.6} of its energy kept",
                retained_energy
            );
        }
        EquivalentKernel {
            band_times: Some(times),
            support,
            spatial,
            retained_energy,
            grid: Some((bank.width, bank.height)),
            response,
        }
    }

    /// Builds a kernel from a spatial array alone.
    pub fn from_spatial(support: usize, spatial: Vec<f64>) -> Result<Self> {
        if support % 2 == 0 || spatial.len() != support * support {
            return Err(Error::DimensionMismatch {
                expected: "odd square kernel".into(),
                got: format!("support {support} with {} values", spatial.len()),
            });
        }
        Ok(EquivalentKernel {
            band_times: None,
            support,
            spatial,
            retained_energy: 1.0,
            grid: None,
            response: Vec::new(),
        })
    }

    /// Frequency response on a `width x height` DFT grid.
    pub fn response_on(&self, width: usize, height: usize) -> Result<Vec<f64>> {
        if self.grid == Some((width, height)) {
            return Ok(self.response.clone());
        }
        if let Some(times) = &self.band_times {
            let bank = FilterBank::new(width, height);
            return Ok((0..bank.len()).map(|i| log_gain(&bank, times, i).exp()).collect());
        }
        if self.support > width || self.support > height {
            return Err(Error::DimensionMismatch {
                expected: format!("image at least {0}x{0}", self.support),
                got: format!("{width}x{height}"),
            });
        }
        let r = (self.support / 2) as isize;
        let mut full = vec![0.0; width * height];
        for dy in -r..=r {
            for dx in -r..=r {
                let x = dx.rem_euclid(width as isize) as usize;
                let y = dy.rem_euclid(height as isize) as usize;
                full[y * width + x] += self.spatial[((dy + r) as usize) * self.support + (dx + r) as usize];
            }
        }
        Ok(Fft2::new(width, height).forward(&full).into_iter().map(|c| c.re).collect())
    }

    /// Sum of the spatial taps.
    pub fn dc_gain(&self) -> f64 {
        self.spatial.iter().sum()
    }

    /// Interchange text: `width height` on the first line, then one row of
    /// reals per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.support, self.support);
        for row in self.spatial.chunks(self.support) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty kernel file".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hl,
                message: format!("bad header: {e}"),
            })?;
        let [w, h] = dims[..] else {
            return Err(Error::Parse {
                line: hl,
                message: "header must be `width height`".into(),
            });
        };
        let mut values = Vec::with_capacity(w * h);
        for (ln, line) in lines {
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: ln,
                    message: format!("bad value `{tok}`: {e}"),
                })?);
            }
        }
        if values.len() != w * h {
            return Err(Error::SizeMismatch {
                expected: w * h,
                found: values.len(),
            });
        }
        if w != h {
            return Err(Error::UnsupportedFormat(format!("non-square kernel {w}x{h}")));
        }
        Self::from_spatial(w, values)
    }
}

/// Smallest odd centered square (up to [`MAX_SUPPORT`]) holding
/// [`RETAINED_ENERGY`] of a wrap-around kernel centered at index 0.
fn crop_centered(full: &[f64], width: usize, height: usize) -> (usize, Vec<f64>, f64) {
    let at = |dx: isize, dy: isize| {
        let x = dx.rem_euclid(width as isize) as usize;
        let y = dy.rem_euclid(height as isize) as usize;
        full[y * width + x]
    };
    let total: f64 = full.iter().map(|v| v * v).sum();
    let r_max = ((MAX_SUPPORT - 1) / 2)
        .min((width - 1) / 2)
        .min((height - 1) / 2) as isize;
    let mut inside = at(0, 0).powi(2);
    let mut r = 0isize;
    while r < r_max && inside < RETAINED_ENERGY * total {
        r += 1;
        for d in -r..=r {
            inside += at(d, -r).powi(2) + at(d, r).powi(2);
            if d != -r && d != r {
                inside += at(-r, d).powi(2) + at(r, d).powi(2);
            }
        }
    }
    let support = (2 * r + 1) as usize;
    let mut spatial = Vec::with_capacity(support * support);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push(at(dx, dy));
        }
    }
    (support, spatial, if total > 0.0 { inside / total } else { 1.0 })
}

/// Convolves a plane with the kernel's zero-phase response (circular).
pub fn apply_kernel(x: &Plane, kernel: &EquivalentKernel) -> Result<Plane> {
    let response = kernel.response_on(x.width, x.height)?;
    let fft = Fft2::new(x.width, x.height);
    let spec: Vec<Complex64> = fft
        .forward(&x.data)
        .into_iter()
        .zip(&response)
        .map(|(c, g)| c * g)
        .collect();
    Ok(Plane {
        width: x.width,
        height: x.height,
        data: fft.inverse_real(spec),
    })
}

/// Convolves each channel of a linear image.
pub fn apply_kernel_rgb(img: &RgbImage, kernel: &EquivalentKernel) -> Result<RgbImage> {
    let response = kernel.response_on(img.width, img.height)?;
    let fft = Fft2::new(img.width, img.height);
    let planes = std::array::from_fn(|c| {
        let spec: Vec<Complex64> = fft
            .forward(&img.planes[c])
            .into_iter()
            .zip(&response)
            .map(|(v, g)| v * g)
            .collect();
        fft.inverse_real(spec)
    });
    RgbImage::new(img.width, img.height, planes, img.encoding)
}

/// Per-band RMS gain of a response, weighted by a power spectrum:
/// `sqrt(sum w_b |H|^2 P / sum w_b P)`.
pub fn band_gains(response: &[f64], bank: &FilterBank, power: &[f64]) -> [f64; BANDS] {
    std::array::from_fn(|b| {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((w, h), p) in bank.weights[b].iter().zip(response).zip(power) {
            num += w * h * h * p;
            den += w * p;
        }
        (num / den).sqrt()
    })
}
