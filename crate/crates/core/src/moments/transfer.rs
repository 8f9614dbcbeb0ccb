use serde::{Deserialize, Serialize};

use super::flow::{flow_to_orthokurtosis, min_max};
use super::ops::PointOp;
use super::riccati::riccati_time;
use super::{
    is_degenerate, normalize_to_r3_ops, raw_moment, standardize_ops, MomentFeatures, Sample,
    ORTHO_KURTOSIS_CEIL_FRACTION, ORTHO_KURTOSIS_FLOOR,
};
use crate::error::{Error, Result};

/// Report of a target that was moved into the achievable range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClampReport {
    pub requested: f64,
    pub used: f64,
}

/// Frozen moment transfer: the point-wise maps that took the source sample
/// to the target moments, plus the scalars that determined them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentRecipe {
    pub source: MomentFeatures,
    pub target: MomentFeatures,
    /// Number of moments actually imposed.
    pub order: u8,
    /// Riccati time of the skewness normalization (order 4 only).
    pub t0: Option<f64>,
    /// Riccati time of the skewness de-normalization (orders 3 and 4).
    pub ts: Option<f64>,
    pub ops: Vec<PointOp>,
    pub flow_steps: usize,
    pub ortho_kurtosis_clamp: Option<ClampReport>,
    /// The source was flat: only its mean was matched.
    pub mean_only: bool,
}

impl MomentRecipe {
    /// A recipe that maps every value to itself.
    pub fn identity(features: MomentFeatures) -> Self {
        MomentRecipe {
            source: features,
            target: features,
            order: 0,
            t0: None,
            ts: None,
            ops: Vec::new(),
            flow_steps: 0,
            ortho_kurtosis_clamp: None,
            mean_only: false,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        super::ops::replay(&self.ops, x)
    }

    pub fn apply_slice(&self, xs: &mut [f64]) {
        for op in &self.ops {
            op.apply_slice(xs);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > 4 {
            return Err(Error::RecipeIncomplete(format!("order {}", self.order)));
        }
        if let Some(bad) = self.ops.iter().position(|op| !op.is_finite()) {
            return Err(Error::RecipeIncomplete(format!(
                "non-finite scalar in map {bad}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransferOptions {
    /// Amplitude of uniform noise added to the normalized source when the
    /// fourth-moment flow starts on a stationary point. Off by default.
    pub saddle_perturbation: Option<f64>,
}

/// Checks that `orders` is `{1..k}` and returns `k`.
pub fn order_prefix(orders: &[u8]) -> Result<u8> {
    let mut sorted = orders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let k = sorted.len();
    if k > 4 || sorted.iter().enumerate().any(|(i, &o)| o as usize != i + 1) {
        return Err(Error::OrderGap(orders.to_vec()));
    }
    Ok(k as u8)
}

/// Imposes the target's decoupled moments of the orders in `orders` (which
/// must be `{1..k}`) on `src`. Passengers follow the same point-wise maps.
pub fn transfer_moments(
    src: &Sample,
    tgt: &MomentFeatures,
    orders: &[u8],
) -> Result<(Sample, MomentRecipe)> {
    let k = order_prefix(orders)?;
    transfer_moments_with(src, tgt, k, &TransferOptions::default())
}

pub fn transfer_moments_with(
    src: &Sample,
    tgt: &MomentFeatures,
    order: u8,
    opts: &TransferOptions,
) -> Result<(Sample, MomentRecipe)> {
    src.validate(if order >= 4 { 3 } else { 1 })?;
    if order as usize > 4 {
        return Err(Error::OrderGap((1..=order).collect()));
    }
    let mut k = order;
    if tgt.degenerate && k > 2 {
        log::warn!("target is flat; matching mean and variance only");
        k = 2;
    }
    if (k >= 2 && tgt.order < 2)
        || (k >= 3 && tgt.skewness.is_none())
        || (k >= 4 && tgt.ortho_kurtosis.is_none())
    {
        return Err(Error::InvalidConfig(format!(
            "target features of order {} cannot drive an order-{k} transfer",
            tgt.order
        )));
    }

    let x = &src.values;
    let m1 = raw_moment(x, 1);
    let var = x.iter().map(|v| (v - m1) * (v - m1)).sum::<f64>() / x.len() as f64;
    let mut recipe = MomentRecipe::identity(MomentFeatures {
        mean: m1,
        variance: var,
        skewness: None,
        ortho_kurtosis: None,
        order: 2,
        degenerate: false,
    });
    recipe.target = *tgt;
    recipe.order = k;

    if k == 0 {
        return Ok((src.clone(), recipe));
    }
    if k == 1 || (k >= 2 && is_degenerate(var, raw_moment(x, 2))) {
        if k >= 2 {
            log::warn!("source is flat (variance {var:e}); matching the mean only");
            recipe.mean_only = true;
            recipe.source.degenerate = true;
        }
        recipe.ops = vec![PointOp::Shift { by: tgt.mean - m1 }];
        return Ok((src.mapped(&recipe.ops), recipe));
    }
    if k == 2 {
        recipe.ops = vec![
            PointOp::Shift { by: -m1 },
            PointOp::Scale {
                by: (tgt.variance / var).sqrt(),
            },
            PointOp::Shift { by: tgt.mean },
        ];
        return Ok((src.mapped(&recipe.ops), recipe));
    }

    let mut ops: Vec<PointOp>;
    let mut y: Vec<f64>;
    if k == 3 {
        // Normalize to zero mean and unit variance only.
        let (std_ops, _, _) = standardize_ops(x)?;
        ops = std_ops;
        y = x.clone();
        for op in &ops {
            op.apply_slice(&mut y);
        }
        recipe.source.skewness = Some(raw_moment(&y, 3));
        recipe.source.order = 3;
    } else {
        let norm = normalize_to_r3_ops(x)?;
        ops = norm.ops;
        y = x.clone();
        for op in &ops {
            op.apply_slice(&mut y);
        }
        recipe.source.skewness = Some(norm.skewness);
        recipe.source.ortho_kurtosis = Some(raw_moment(&y, 4));
        recipe.source.order = 4;
        recipe.t0 = Some(norm.t0);

        let requested = tgt.ortho_kurtosis.expect("checked above");
        let ceil = ORTHO_KURTOSIS_CEIL_FRACTION * x.len() as f64;
        let used = requested.clamp(ORTHO_KURTOSIS_FLOOR, ceil.max(ORTHO_KURTOSIS_FLOOR));
        if used != requested {
            log::warn!("ortho-kurtosis target {requested} clamped to {used}");
            recipe.ortho_kurtosis_clamp = Some(ClampReport { requested, used });
        }

        let flowed = match flow_to_orthokurtosis(&y, used) {
            Err(Error::TargetUnreachable { .. }) if opts.saddle_perturbation.is_some() => {
                let amp = opts.saddle_perturbation.unwrap_or(0.0);
                log::warn!("fourth-moment flow stalled; retrying with perturbation {amp:e}");
                perturb(&mut y, amp);
                let renorm = normalize_to_r3_ops(&y)?;
                for op in &renorm.ops {
                    op.apply_slice(&mut y);
                }
                ops.extend(renorm.ops);
                flow_to_orthokurtosis(&y, used)?
            }
            other => other?,
        };
        y = flowed.0;
        recipe.flow_steps = flowed
            .1
            .ops
            .iter()
            .filter(|op| matches!(op, PointOp::Flow(_)))
            .count();
        ops.extend(flowed.1.ops);
    }

    // Skewness, then variance and mean.
    let target_skew = tgt.skewness.expect("checked above");
    let ts = riccati_time(&y, target_skew)?;
    let (lo, hi) = min_max(&y);
    let ric = PointOp::Riccati { t: ts, lo, hi };
    ric.apply_slice(&mut y);
    ops.push(ric);
    recipe.ts = Some(ts);

    let (post, _, _) = standardize_ops(&y)?;
    ops.extend(post);
    ops.push(PointOp::Scale {
        by: tgt.variance.sqrt(),
    });
    ops.push(PointOp::Shift { by: tgt.mean });

    recipe.ops = ops;
    Ok((src.mapped(&recipe.ops), recipe))
}

/// Deterministic uniform noise in `[-amp, amp]` (xorshift, fixed seed).
fn perturb(y: &mut [f64], amp: f64) {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    for v in y.iter_mut() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        *v += amp * (2.0 * u - 1.0);
    }
}
