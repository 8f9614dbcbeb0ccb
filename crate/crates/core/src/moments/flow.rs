//! Narrow-path flow of the fourth moment inside the zero-mean, unit-variance,
//! zero-skewness manifold.
//!
//! The velocity is the fourth-moment gradient with its components along
//! `1`, `y` and `y^2` removed, which keeps the first three moments fixed to
//! first order. The flow is parameterized by the fourth moment itself, so
//! integrating over `target - current` lands on the target up to
//! integration error; a few short corrector steps absorb that error.

use super::ops::{dopri, eval_poly, FlowStep, PointOp, StagePoly};
use super::{normalize_to_r3_ops, raw_moment};
use crate::error::{Error, Result};

const RTOL: f64 = 1e-8;
const ATOL: f64 = 1e-10;
const MAX_STEPS: usize = 20_000;
/// Fraction of the remaining distance a single step may cover; keeps the
/// approach one-sided so the fourth moment is monotone along the path.
const APPROACH: f64 = 1.0 - 1e-4;
const FOURTH_MOMENT_TOL: f64 = 1e-11;
/// Stall threshold on the mean squared projected gradient.
const STALL: f64 = 1e-14;
const RANK_TOL: f64 = 1e-10;

/// Coefficients `[c0, c1, c2]` of the least-squares projection of `y^3` onto
/// `span{1, y, y^2}`, and the mean square of the residual.
///
/// The basis is orthogonalized by Gram–Schmidt carried out on the Gram matrix
/// of sample moments (a Cholesky factorization).
pub(crate) fn cubic_projection(y: &[f64]) -> Result<([f64; 3], f64)> {
    let n = y.len() as f64;
    let mut s = [0.0f64; 6];
    for &v in y {
        let v2 = v * v;
        let v3 = v2 * v;
        s[0] += v;
        s[1] += v2;
        s[2] += v3;
        s[3] += v2 * v2;
        s[4] += v3 * v2;
        s[5] += v3 * v3;
    }
    let m = |k: usize| if k == 0 { 1.0 } else { s[k - 1] / n };
    let gram = [
        [m(0), m(1), m(2)],
        [m(1), m(2), m(3)],
        [m(2), m(3), m(4)],
    ];
    let rhs = [m(3), m(4), m(5)];

    // Cholesky: gram = L L^T.
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut acc = gram[i][j];
            for k in 0..j {
                acc -= l[i][k] * l[j][k];
            }
            if i == j {
                if acc <= RANK_TOL * gram[i][i].abs().max(1.0) {
                    return Err(Error::RankDeficient { pivot: acc });
                }
                l[i][i] = acc.sqrt();
            } else {
                l[i][j] = acc / l[j][j];
            }
        }
    }
    let mut w = [0.0; 3];
    for i in 0..3 {
        let mut acc = rhs[i];
        for k in 0..i {
            acc -= l[i][k] * w[k];
        }
        w[i] = acc / l[i][i];
    }
    let mut c = [0.0; 3];
    for i in (0..3).rev() {
        let mut acc = w[i];
        for k in i + 1..3 {
            acc -= l[k][i] * c[k];
        }
        c[i] = acc / l[i][i];
    }

    let mut r2 = 0.0;
    for &v in y {
        let r = v * v * v - c[0] - c[1] * v - c[2] * v * v;
        r2 += r * r;
    }
    Ok((c, r2 / n))
}

/// Gradient of the fourth raw moment at `y`, projected orthogonally to the
/// gradients of the first three moments.
///
/// `y` is expected on the normalized manifold (mean 0, variance 1, skewness
/// 0), where `span{1, y, y^2}` is exactly the span of those gradients.
/// For `N = 3` the span exhausts the space and the result is the zero vector.
pub fn projected_kurtosis_gradient(y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len() as f64;
    match cubic_projection(y) {
        Ok((c, _)) => Ok(y
            .iter()
            .map(|&v| 4.0 / n * (v * v * v - c[0] - c[1] * v - c[2] * v * v))
            .collect()),
        Err(e) => Err(e),
    }
}

/// Velocity polynomial with the fourth moment as the flow parameter.
fn stage_poly(y: &[f64]) -> Result<StagePoly> {
    let (c, r2) = cubic_projection(y)?;
    let scale = raw_moment(y, 6).max(1.0);
    if r2 <= STALL * scale {
        return Err(Error::TargetUnreachable {
            what: "ortho-kurtosis",
            target: f64::NAN,
            reason: format!("projected gradient vanished (mean square {r2:e})"),
        });
    }
    // d mu4 / ds = (4/N) <y^3, alpha r> = 4 alpha mean(r^2) = 1
    let alpha = 1.0 / (4.0 * r2);
    Ok([-alpha * c[0], -alpha * c[1], -alpha * c[2], alpha])
}

struct Trial {
    step: FlowStep,
    next: Vec<f64>,
    err: f64,
}

fn try_step(y: &[f64], h: f64) -> Result<Trial> {
    let n = y.len();
    let mut k = vec![[0.0f64; 7]; n];
    let mut stages = [[0.0; 4]; 6];
    let mut buf = vec![0.0; n];
    for i in 0..7 {
        for (b, (&p, kp)) in buf.iter_mut().zip(y.iter().zip(&k)) {
            *b = dopri::stage_point(p, kp, i, h);
        }
        let poly = stage_poly(&buf)?;
        if i < 6 {
            stages[i] = poly;
        }
        for (kp, &b) in k.iter_mut().zip(&buf) {
            kp[i] = eval_poly(&poly, b);
        }
    }
    // Stage 7 needs the advanced state; the loop above evaluated it at the
    // stage-7 input, which equals the advanced point for this tableau.
    let mut next = vec![0.0; n];
    let mut err_sq = 0.0;
    for ((out, &p), kp) in next.iter_mut().zip(y).zip(&k) {
        *out = dopri::advance(p, kp, h);
        let mut e = 0.0;
        for j in 0..7 {
            e += dopri::E[j] * kp[j];
        }
        let sc = ATOL + RTOL * p.abs().max(out.abs());
        err_sq += (h * e / sc).powi(2);
    }
    let (lo, hi) = min_max(y);
    Ok(Trial {
        step: FlowStep { h, stages, lo, hi },
        next,
        err: (err_sq / n as f64).sqrt(),
    })
}

pub(crate) fn min_max(y: &[f64]) -> (f64, f64) {
    y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Record of a completed flow: the point-wise maps applied (steps
/// interleaved with re-normalizations) and the fourth moment after each
/// accepted step.
#[derive(Debug, Clone, Default)]
pub struct FlowTrace {
    pub ops: Vec<PointOp>,
    pub fourth_moments: Vec<f64>,
}

/// Integrates the projected fourth-moment gradient from `y` (on the
/// normalized manifold) until its fourth moment equals `target`.
///
/// After every accepted step the sample is re-normalized (mean, Riccati
/// skewness correction, mean, scale) to remove drift off the manifold.
pub fn flow_to_orthokurtosis(y: &[f64], target: f64) -> Result<(Vec<f64>, FlowTrace)> {
    let mut cur = y.to_vec();
    let mut trace = FlowTrace::default();
    let mut mu4 = raw_moment(&cur, 4);
    let tol = FOURTH_MOMENT_TOL * target.abs().max(1.0);
    let start = target - mu4;
    if start.abs() <= tol {
        return Ok((cur, trace));
    }
    let dir = start.signum();
    let mut h_ctrl = start.abs() / 8.0;

    let mut steps = 0;
    loop {
        let remaining = target - mu4;
        if remaining.abs() <= tol {
            break;
        }
        if remaining.signum() != dir {
            // Integration error carried the path past the target.
            return Err(Error::StepFailure(format!(
                "overshot target fourth moment {target} (at {mu4})"
            )));
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepFailure(format!(
                "no convergence after {MAX_STEPS} steps (fourth moment {mu4}, target {target})"
            )));
        }
        let h_mag = h_ctrl.min(remaining.abs() * APPROACH);
        if h_mag <= 1e-14 * start.abs() && remaining.abs() > 1e3 * tol {
            return Err(Error::StepFailure(format!("step size underflow ({h_mag:e})")));
        }
        let trial = match try_step(&cur, dir * h_mag) {
            Ok(t) => t,
            Err(Error::TargetUnreachable { reason, .. }) => {
                return Err(Error::TargetUnreachable {
                    what: "ortho-kurtosis",
                    target,
                    reason: format!("flow stalled at {mu4}: {reason}"),
                })
            }
            Err(e) => return Err(e),
        };
        let factor = if trial.err == 0.0 {
            5.0
        } else {
            (0.9 * trial.err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if !(trial.err <= 1.0) {
            h_ctrl = h_mag * factor.min(0.9);
            continue;
        }
        h_ctrl = h_mag * factor;

        let mut next = trial.next;
        trace.ops.push(PointOp::Flow(trial.step));
        let renorm = normalize_to_r3_ops(&next)?;
        for op in &renorm.ops {
            op.apply_slice(&mut next);
        }
        trace.ops.extend(renorm.ops);
        let next_mu4 = raw_moment(&next, 4);
        if (next_mu4 - mu4) * dir < 0.0 {
            log::warn!("fourth moment moved against the flow ({mu4} -> {next_mu4})");
        }
        mu4 = next_mu4;
        trace.fourth_moments.push(mu4);
        cur = next;
    }
    Ok((cur, trace))
}
