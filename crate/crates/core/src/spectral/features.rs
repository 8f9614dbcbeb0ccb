//! Band-MSV descriptor, its decoupled form, and the exponential Fourier flow
//! that normalizes and de-normalizes it.
//!
//! Along the gradient of a band MSV the spectrum evolves as
//! `Y(xi, t) = Y(xi, 0) exp(|H(xi)|^2 t)`, so any combination of band flows is
//! a zero-phase filter `exp(sum_b w_b(xi) t_b)` with `w_b = |H_b|^2`. Times are
//! reported in this dimensionless form (the `2/N` factor of the gradient is
//! absorbed into `t`).
//!
//! With the spectrum normalized to unit total power `p`, the band MSVs after a
//! flow `u = 2 t` are the expectations of `w` under `q ∝ p exp(w . u)`. They
//! are the gradient of the convex function `log sum p exp(w . u)`, so matching
//! a target vector `v` is the unconstrained minimization of
//! `log sum p exp(w . u) - v . u`, solved here by damped Newton iterations.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bank::{FilterBank, BANDS};
use super::fft::Fft2;
use super::kernel::EquivalentKernel;
use crate::error::{Error, Result};
use crate::image::Plane;

const FIT_TOL: f64 = 1e-13;
/// Residual (max abs) accepted when Newton stalls.
const FIT_ACCEPT: f64 = 1e-9;
const FIT_MAX_ITER: usize = 200;
const FIT_MAX_TIME: f64 = 500.0;

/// Mean, MSV and the four band MSVs (B1, B2, B3, L4) of a luminance plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralFeatures {
    pub mean: f64,
    /// Mean square of the raw plane, or the variance for decoupled features.
    pub msv: f64,
    pub bands: [f64; BANDS],
    /// Flow times fitted by normalization, when produced by it.
    pub times: Option<[f64; BANDS]>,
}

fn check_dims(x: &Plane, bank: &FilterBank) -> Result<()> {
    if x.dims() != (bank.width, bank.height) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", bank.width, bank.height),
            got: format!("{}x{}", x.width, x.height),
        });
    }
    Ok(())
}

/// Original (coupled) features: mean, mean square and band MSVs of `x` as
/// given, DC included. The DC bin contributes only to `L4`.
pub fn spectral_features(x: &Plane, bank: &FilterBank) -> Result<SpectralFeatures> {
    check_dims(x, bank)?;
    let n = x.len() as f64;
    let spec = Fft2::new(x.width, x.height).forward(&x.data);
    let norm = 1.0 / (n * n);
    let bands = std::array::from_fn(|b| {
        spec.iter()
            .zip(&bank.weights[b])
            .map(|(c, w)| w * c.norm_sqr())
            .sum::<f64>()
            * norm
    });
    Ok(SpectralFeatures {
        mean: x.data.iter().sum::<f64>() / n,
        msv: x.data.iter().map(|v| v * v).sum::<f64>() / n,
        bands,
        times: None,
    })
}

/// Mean-free spectrum of a plane and its power normalized to unit sum.
pub(crate) struct Analysed {
    pub spec: Vec<Complex64>,
    pub mean: f64,
    pub variance: f64,
    pub power: Vec<f64>,
}

pub(crate) fn analyse(x: &Plane, fft: &Fft2) -> Result<Analysed> {
    let n = x.len() as f64;
    let mean = x.data.iter().sum::<f64>() / n;
    let mut spec = fft.forward(&x.data);
    spec[0] = Complex64::new(0.0, 0.0);
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let variance = total / (n * n);
    let mean_sq = x.data.iter().map(|v| v * v).sum::<f64>() / n;
    if !(variance > crate::moments::EPS_VAR * mean_sq) {
        return Err(Error::DegenerateSample { variance });
    }
    let power = spec.iter().map(|c| c.norm_sqr() / total).collect();
    Ok(Analysed {
        spec,
        mean,
        variance,
        power,
    })
}

/// Compact per-bin data for the fit: power and band weights of every bin
/// carrying energy.
struct FitData {
    p: Vec<f64>,
    w: Vec<[f64; BANDS]>,
}

impl FitData {
    fn new(power: &[f64], bank: &FilterBank) -> Self {
        let mut p = Vec::new();
        let mut w = Vec::new();
        for (i, &pi) in power.iter().enumerate() {
            if pi > 0.0 {
                p.push(pi);
                w.push(std::array::from_fn(|b| bank.weights[b][i]));
            }
        }
        FitData { p, w }
    }

    /// `(log Z, E_q[w], Cov_q[w])` restricted to `active`, for power
    /// exponents `u` on the active bands. The covariance is accumulated in a
    /// second, centered pass.
    fn moments(&self, active: &[usize], u: &[f64], want_cov: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let k = active.len();
        let expo = |w: &[f64; BANDS]| active.iter().zip(u).map(|(&b, ui)| w[b] * ui).sum::<f64>();
        let shift = self.w.iter().map(expo).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self.p.iter().zip(&self.w).map(|(pi, wi)| pi * (expo(wi) - shift).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut m1 = vec![0.0; k];
        for (s, wi) in weights.iter().zip(&self.w) {
            for a in 0..k {
                m1[a] += s * wi[active[a]];
            }
        }
        m1.iter_mut().for_each(|v| *v /= z);
        let mut m2 = vec![0.0; k * k];
        if want_cov {
            let mut d = vec![0.0; k];
            for (s, wi) in weights.iter().zip(&self.w) {
                for a in 0..k {
                    d[a] = wi[active[a]] - m1[a];
                }
                for a in 0..k {
                    for c in 0..=a {
                        m2[a * k + c] += s * d[a] * d[c];
                    }
                }
            }
            for a in 0..k {
                for c in 0..=a {
                    let v = m2[a * k + c] / z;
                    m2[a * k + c] = v;
                    m2[c * k + a] = v;
                }
            }
        }
        (z.ln() + shift, m1, m2)
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (k x k, row-major).
fn solve_spd(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut acc = a[i * k + j];
            for m in 0..j {
                acc -= l[i * k + m] * l[j * k + m];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[i * k + i] = acc.sqrt();
            } else {
                l[i * k + j] = acc / l[j * k + j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut acc = b[i];
        for m in 0..i {
            acc -= l[i * k + m] * y[m];
        }
        y[i] = acc / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = y[i];
        for m in i + 1..k {
            acc -= l[m * k + i] * x[m];
        }
        x[i] = acc / l[i * k + i];
    }
    Some(x)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Amplitude flow times on `active` bands taking normalized power `power` to
/// band MSVs `targets`.
pub(crate) fn fit_band_times(
    power: &[f64],
    bank: &FilterBank,
    active: &[usize],
    targets: &[f64],
) -> Result<Vec<f64>> {
    let data = FitData::new(power, bank);
    let k = active.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut u = vec![0.0; k];
    let mut residual = f64::INFINITY;
    'outer: for iter in 0..FIT_MAX_ITER {
        let (lz, mean, cov) = data.moments(active, &u, true);
        let g: Vec<f64> = mean.iter().zip(targets).map(|(m, v)| m - v).collect();
        residual = max_abs_diff(&mean, targets);
        if residual <= FIT_TOL {
            log::debug!("band fit converged after {iter} iterations");
            return Ok(u.iter().map(|v| 0.5 * v).collect());
        }
        let f0 = lz - dot(&u, targets);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let trace: f64 = (0..k).map(|i| cov[i * k + i]).sum::<f64>().max(f64::MIN_POSITIVE);
        // Escalating ridge: pure Newton first, drifting toward gradient descent.
        for ridge in [1e-14, 1e-9, 1e-6, 1e-3, 1.0, 1e3] {
            let mut h = cov.clone();
            for i in 0..k {
                h[i * k + i] += ridge * trace;
            }
            let Some(d) = solve_spd(&h, &neg_g) else {
                continue;
            };
            let slope = dot(&g, &d);
            let mut alpha = 1.0;
            for _ in 0..50 {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                if trial.iter().any(|v| !v.is_finite() || v.abs() > 2.0 * FIT_MAX_TIME) {
                    alpha *= 0.5;
                    continue;
                }
                let (lz1, m1, _) = data.moments(active, &trial, false);
                let f1 = lz1 - dot(&trial, targets);
                let armijo = f1 <= f0 + 1e-4 * alpha * slope;
                let roundoff = f1 <= f0 + 1e-14 * f0.abs().max(1.0);
                if trial != u && (armijo || (roundoff && max_abs_diff(&m1, targets) < residual)) {
                    u = trial;
                    continue 'outer;
                }
                alpha *= 0.5;
            }
        }
        break;
    }
    let (_, mean, _) = data.moments(active, &u, false);
    residual = residual.min(max_abs_diff(&mean, targets));
    if residual <= FIT_ACCEPT && u.iter().all(|v| v.is_finite()) {
        log::warn!("band fit stalled at residual {residual:e}");
        return Ok(u.iter().map(|v| 0.5 * v).collect());
    }
    Err(Error::FitDivergence {
        residual,
        iterations: FIT_MAX_ITER,
    })
}

/// Applies amplitude times on `active` bands to normalized power.
fn flow_power(power: &[f64], bank: &FilterBank, active: &[usize], times: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = power
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let e: f64 = active.iter().zip(times).map(|(&b, t)| bank.weights[b][i] * t).sum();
            p * (2.0 * e).exp()
        })
        .collect();
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= z);
    q
}

fn band_msv(power: &[f64], bank: &FilterBank, b: usize) -> f64 {
    power.iter().zip(&bank.weights[b]).map(|(p, w)| p * w).sum()
}

/// Decoupled features: mean, variance, the B1 MSV of the standardized
/// plane, and each further band MSV measured after the preceding bands were
/// normalized to `reference`.
pub fn decoupled_features(
    x: &Plane,
    bank: &FilterBank,
    reference: &[f64; BANDS],
) -> Result<SpectralFeatures> {
    check_dims(x, bank)?;
    let a = analyse(x, &Fft2::new(x.width, x.height))?;
    let mut bands = [0.0; BANDS];
    bands[0] = band_msv(&a.power, bank, 0);
    for k in 1..BANDS {
        let active: Vec<usize> = (0..k).collect();
        let t = fit_band_times(&a.power, bank, &active, &reference[..k])?;
        let q = flow_power(&a.power, bank, &active, &t);
        bands[k] = band_msv(&q, bank, k);
    }
    Ok(SpectralFeatures {
        mean: a.mean,
        msv: a.variance,
        bands,
        times: None,
    })
}

/// Takes `x` to zero mean, unit MSV and band MSVs equal to `reference`.
pub fn spectral_normalize(
    x: &Plane,
    bank: &FilterBank,
    reference: &[f64; BANDS],
) -> Result<(Plane, SpectralFeatures, [f64; BANDS])> {
    check_dims(x, bank)?;
    let fft = Fft2::new(x.width, x.height);
    let a = analyse(x, &fft)?;
    let all: Vec<usize> = (0..BANDS).collect();
    let t = fit_band_times(&a.power, bank, &all, reference)?;
    let times: [f64; BANDS] = std::array::from_fn(|b| t[b]);
    let log_gain: Vec<f64> = (0..x.len())
        .map(|i| (0..BANDS).map(|b| bank.weights[b][i] * times[b]).sum())
        .collect();
    let out = shaped(&a, &log_gain, &fft, 1.0, 0.0);
    let mut features = decoupled_features(x, bank, reference)?;
    features.times = Some(times);
    Ok((
        Plane {
            width: x.width,
            height: x.height,
            data: out,
        },
        features,
        times,
    ))
}

/// `scale * IDFT(X1 exp(log_gain)) / rms + offset`.
fn shaped(a: &Analysed, log_gain: &[f64], fft: &Fft2, scale: f64, offset: f64) -> Vec<f64> {
    let n = a.spec.len() as f64;
    let spec: Vec<Complex64> = a.spec.iter().zip(log_gain).map(|(c, g)| c * g.exp()).collect();
    let msv = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n);
    let gain = scale / msv.sqrt();
    fft.inverse_real(spec)
        .into_iter()
        .map(|v| gain * v + offset)
        .collect()
}

/// Total band times of normalizing `power` to `reference` and then
/// de-normalizing to the decoupled `target` bands, innermost band last.
pub(crate) fn transfer_times(
    power: &[f64],
    bank: &FilterBank,
    reference: &[f64; BANDS],
    target: &[f64; BANDS],
) -> Result<[f64; BANDS]> {
    let all: Vec<usize> = (0..BANDS).collect();
    let mut total = [0.0; BANDS];
    let t = fit_band_times(power, bank, &all, reference)?;
    let mut q = flow_power(power, bank, &all, &t);
    for b in 0..BANDS {
        total[b] += t[b];
    }
    for k in (1..=BANDS).rev() {
        let active: Vec<usize> = (0..k).collect();
        let mut goals = reference[..k].to_vec();
        goals[k - 1] = target[k - 1];
        let t = fit_band_times(&q, bank, &active, &goals)?;
        q = flow_power(&q, bank, &active, &t);
        for b in 0..k {
            total[b] += t[b];
        }
    }
    Ok(total)
}

/// Imposes the target's decoupled spectral features on `src`.
///
/// The result is `sqrt(var_tgt) * IDFT(X1 H) / rms + mean_tgt`, where `H` is
/// the zero-phase filter composed of the normalization and de-normalization
/// flows; `H` scaled to unit DC gain is returned as the equivalent kernel.
pub fn spectral_transfer(
    src: &Plane,
    target: &SpectralFeatures,
    bank: &FilterBank,
    reference: &[f64; BANDS],
) -> Result<(Plane, EquivalentKernel)> {
    check_dims(src, bank)?;
    let fft = Fft2::new(src.width, src.height);
    let a = analyse(src, &fft)?;
    let times = transfer_times(&a.power, bank, reference, &target.bands)?;
    let log_gain: Vec<f64> = (0..src.len())
        .map(|i| (0..BANDS).map(|b| bank.weights[b][i] * times[b]).sum())
        .collect();
    let out = shaped(&a, &log_gain, &fft, target.msv.sqrt(), target.mean);
    let kernel = EquivalentKernel::from_band_times(bank, times);
    Ok((
        Plane {
            width: src.width,
            height: src.height,
            data: out,
        },
        kernel,
    ))
}
