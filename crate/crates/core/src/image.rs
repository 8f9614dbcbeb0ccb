//! In-memory image planes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rec. 709 luminance weights for linear RGB.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Display values, `linear^(1/2.2)`.
    Gamma,
    Linear,
    /// IPT opponent coordinates.
    Opponent,
}

/// One real-valued plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height} = {} values", width * height),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Three planes sharing one geometry and one encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<f64>; 3],
    pub encoding: Encoding,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3], encoding: Encoding) -> Result<Self> {
        let n = width * height;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height} = {n} values per plane"),
                got: format!("{} values", p.len()),
            });
        }
        Ok(RgbImage {
            width,
            height,
            planes,
            encoding,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        encoding: Encoding,
        f: impl Fn(usize, usize) -> [f64; 3],
    ) -> Self {
        let n = width * height;
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                let i = y * width + x;
                for c in 0..3 {
                    planes[c][i] = v[c];
                }
            }
        }
        RgbImage {
            width,
            height,
            planes,
            encoding,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel(&self, i: usize) -> [f64; 3] {
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.planes[c].clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.planes.iter().flatten().all(|v| v.is_finite())
    }

    /// Applies `f` to every pixel in parallel.
    pub fn map_pixels(&self, encoding: Encoding, f: impl Fn([f64; 3]) -> [f64; 3] + Sync) -> RgbImage {
        let n = self.len();
        let out: Vec<[f64; 3]> = (0..n).into_par_iter().map(|i| f(self.pixel(i))).collect();
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, v) in out.into_iter().enumerate() {
            for c in 0..3 {
                planes[c][i] = v[c];
            }
        }
        RgbImage {
            width: self.width,
            height: self.height,
            planes,
            encoding,
        }
    }

    /// Rec. 709 luminance; meaningful on linear images.
    pub fn luminance(&self) -> Plane {
        let [r, g, b] = &self.planes;
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
            .collect();
        Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &RgbImage) -> f64 {
        self.planes
            .iter()
            .zip(&other.planes)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }

    /// Peak signal-to-noise ratio in dB for a peak of 1.
    pub fn psnr(&self, other: &RgbImage) -> f64 {
        let n = (3 * self.len()) as f64;
        let mse = self
            .planes
            .iter()
            .zip(&other.planes)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)))
            .sum::<f64>()
            / n;
        -10.0 * mse.log10()
    }
}
