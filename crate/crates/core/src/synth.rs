//! Deterministic synthetic images for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::image::{Encoding, Plane, RgbImage};
use crate::spectral::{bin_frequency, Fft2};

/// iid standard-normal plane.
pub fn white_noise(width: usize, height: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.sample(StandardNormal)).collect();
    Plane {
        width,
        height,
        data,
    }
}

/// Zero-mean, unit-variance noise with a `1/f^alpha` amplitude spectrum.
pub fn pink_noise(width: usize, height: usize, alpha: f64, seed: u64) -> Plane {
    let white = white_noise(width, height, seed);
    let fft = Fft2::new(width, height);
    let spec: Vec<Complex64> = fft
        .forward(&white.data)
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let fx = bin_frequency(i % width, width);
            let fy = bin_frequency(i / width, height);
            let f = (fx * fx + fy * fy).sqrt();
            if f == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                c * f.powf(-alpha)
            }
        })
        .collect();
    let mut data = fft.inverse_real(spec);
    let n = data.len() as f64;
    let sd = (data.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    data.iter_mut().for_each(|v| *v /= sd);
    Plane {
        width,
        height,
        data,
    }
}

/// Frequency response of a Gaussian PSF of standard deviation `sigma`
/// pixels: `exp(-2 pi^2 sigma^2 f^2)`.
pub fn gaussian_response(width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let c = 2.0 * std::f64::consts::PI.powi(2) * sigma * sigma;
    (0..width * height)
        .map(|i| {
            let fx = bin_frequency(i % width, width);
            let fy = bin_frequency(i / width, height);
            (-c * (fx * fx + fy * fy)).exp()
        })
        .collect()
}

/// Circular convolution with a Gaussian PSF.
pub fn gaussian_blur(x: &Plane, sigma: f64) -> Plane {
    let fft = Fft2::new(x.width, x.height);
    let g = gaussian_response(x.width, x.height, sigma);
    let spec = fft.forward(&x.data).into_iter().zip(&g).map(|(c, h)| c * h).collect();
    Plane {
        width: x.width,
        height: x.height,
        data: fft.inverse_real(spec),
    }
}

/// Photograph-like gamma-encoded image with values in `[0, 1]`: a lit
/// gradient backdrop, a few soft-edged objects, `1/f` texture and a
/// seed-dependent color cast.
pub fn photo(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let texture = pink_noise(width, height, 1.0, seed);
    let grain = pink_noise(width, height, 0.3, seed.wrapping_add(17));
    let cast: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.75..1.2));
    let light = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let objects: Vec<(f64, f64, f64, [f64; 3])> = (0..rng.random_range(10..24))
        .map(|_| {
            (
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.03..0.15),
                {
                    let level: f64 = rng.random_range(0.03..0.95);
                    std::array::from_fn(|_| level * (1.0 + rng.random_range(-0.35..0.35)))
                },
            )
        })
        .collect();
    let contrast = rng.random_range(0.1..0.25);
    RgbImage::from_fn(width, height, Encoding::Gamma, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let d = ((u - light.0).powi(2) + (v - light.1).powi(2)).sqrt();
        let base = 0.05 + 0.85 * (-3.0 * d * d).exp();
        let mut rgb = [base * 0.9, base, base * 1.05];
        for &(cx, cy, r, col) in &objects {
            let dist = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
            let a = 1.0 / (1.0 + ((dist - r) / 0.01).exp());
            for c in 0..3 {
                rgb[c] = rgb[c] * (1.0 - a) + col[c] * a;
            }
        }
        let i = y * width + x;
        let t = contrast * texture.data[i] + 0.02 * grain.data[i];
        std::array::from_fn(|c| (rgb[c] * cast[c] * (1.0 + t)).clamp(0.0, 1.0))
    })
}
