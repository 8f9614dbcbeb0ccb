//! Closed-form skewness adjustment.
//!
//! Following the gradient of the third raw moment on a zero-mean sample gives
//! the scalar ODE `x' = x^2`, solved by `x / (1 - t x)`. The time `t` that
//! sets the skewness to a target is found numerically inside the interval
//! where no sample value meets the pole.

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-12;
const POLE_MARGIN: f64 = 1e-9;
const MAX_ITER: usize = 200;

/// Skewness of `x / (1 - t x)` and its derivative with respect to `t`.
pub(crate) fn skew_and_slope(x: &[f64], t: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &v in x {
        let y = v / (1.0 - t * v);
        s1 += y;
        s2 += y * y;
    }
    let mean = s1 / n;
    let mean_sq = s2 / n;
    let (mut m2, mut m3, mut a, mut b) = (0.0, 0.0, 0.0, 0.0);
    for &v in x {
        let y = v / (1.0 - t * v);
        let c = y - mean;
        let c2 = c * c;
        let y2 = y * y;
        m2 += c2;
        m3 += c2 * c;
        a += c * y2;
        b += c2 * y2;
    }
    m2 /= n;
    m3 /= n;
    a /= n;
    b /= n;
    // dy/dt = y^2
    let dm2 = 2.0 * a;
    let dm3 = 3.0 * (b - m2 * mean_sq);
    let sd3 = m2 * m2.sqrt();
    let skew = m3 / sd3;
    let slope = dm3 / sd3 - 1.5 * m3 * dm2 / (sd3 * m2);
    (skew, slope)
}

/// Open interval of `t` on which `1 - t x > 0` for every value, shrunk by a
/// relative margin at both ends.
pub(crate) fn pole_free_interval(x: &[f64]) -> Option<(f64, f64)> {
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(min < 0.0 && max > 0.0) {
        return None;
    }
    let (lo, hi) = (1.0 / min, 1.0 / max);
    let margin = POLE_MARGIN * (hi - lo);
    Some((lo + margin, hi - margin))
}

/// Riccati time taking a standardized sample to the requested skewness.
///
/// `x` must have zero mean and unit variance. Skewness is increasing in `t`
/// (positive values are stretched, negative ones compressed), so the root is
/// bracketed by the ends of the pole-free interval and refined by Newton
/// steps that fall back to bisection whenever they leave the bracket.
pub fn riccati_time(x: &[f64], target_skew: f64) -> Result<f64> {
    let (a, b) = pole_free_interval(x).ok_or(Error::DegenerateSample { variance: 0.0 })?;

    let (s0, d0) = skew_and_slope(x, 0.0);
    if (s0 - target_skew).abs() <= RESIDUAL_TOL {
        return Ok(0.0);
    }

    let (fa, _) = skew_and_slope(x, a);
    let (fb, _) = skew_and_slope(x, b);
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::PoleCollision {
            t: if fa.is_finite() { b } else { a },
        });
    }
    if target_skew <= fa || target_skew >= fb {
        return Err(Error::TargetUnreachable {
            what: "skewness",
            target: target_skew,
            reason: format!("achievable range for this sample is ({fa:.6}, {fb:.6})"),
        });
    }

    if cfg!(debug_assertions) {
        check_monotone(x, a, b);
    }

    let (mut lo, mut hi) = (a, b);
    let (mut t, mut f, mut df) = (0.0, s0 - target_skew, d0);
    let mut best = (t, f.abs());
    for _ in 0..MAX_ITER {
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f / df;
        let next = if df > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == t || hi - lo <= 4.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        t = next;
        let (s, d) = skew_and_slope(x, t);
        if !s.is_finite() {
            return Err(Error::PoleCollision { t });
        }
        f = s - target_skew;
        df = d;
        if f.abs() < best.1 {
            best = (t, f.abs());
        }
        if f.abs() <= RESIDUAL_TOL {
            return Ok(t);
        }
    }
    // Bracket collapsed to machine precision; the best iterate is as good as
    // this sample allows.
    Ok(best.0)
}

fn check_monotone(x: &[f64], a: f64, b: f64) {
    const POINTS: usize = 9;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..POINTS {
        let t = a + (b - a) * i as f64 / (POINTS - 1) as f64;
        let (s, _) = skew_and_slope(x, t);
        if s < prev {
            log::warn!("skewness not monotone in Riccati time near t = {t:.6e}");
            return;
        }
        prev = s;
    }
}
