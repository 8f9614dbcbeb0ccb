//! Point-wise maps recorded while a sample is normalized or transferred.
//!
//! Every statistic-driven stage of a moment transfer reduces, once its
//! scalars are known, to a function of a single value. Recording those
//! functions lets the exact same map be replayed on values that took no part
//! in the statistics (crop complements, LUT lattice nodes, video frames).
//!
//! The non-linear maps are only defined by the statistics inside the range
//! the sample occupied when they were computed. Values outside `[lo, hi]`
//! are continued linearly from the nearest end of that range.

use serde::{Deserialize, Serialize};

/// Dormand–Prince 5(4) tableau.
pub(crate) mod dopri {
    pub const A: [[f64; 6]; 7] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];

    /// Fifth-order weights (stage 7 has weight zero).
    pub const B: [f64; 6] = A[6];

    /// Difference between the fifth- and fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    /// Input of stage `i` for a point starting at `p` with stage slopes `k`.
    #[inline]
    pub fn stage_point(p: f64, k: &[f64; 7], i: usize, h: f64) -> f64 {
        let a = &A[i];
        let mut acc = 0.0;
        for j in 0..i {
            acc += a[j] * k[j];
        }
        p + h * acc
    }

    #[inline]
    pub fn advance(p: f64, k: &[f64; 7], h: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..6 {
            acc += B[j] * k[j];
        }
        p + h * acc
    }
}

/// Cubic velocity `a0 + a1 p + a2 p^2 + a3 p^3` of one Runge–Kutta stage.
pub type StagePoly = [f64; 4];

#[inline]
pub(crate) fn eval_poly(c: &StagePoly, p: f64) -> f64 {
    ((c[3] * p + c[2]) * p + c[1]) * p + c[0]
}

#[inline]
fn eval_poly_deriv(c: &StagePoly, p: f64) -> f64 {
    (3.0 * c[3] * p + 2.0 * c[2]) * p + c[1]
}

/// One accepted Runge–Kutta step of the ortho-kurtosis flow.
///
/// `stages[i]` is the velocity polynomial frozen from the sample at stage
/// `i`; the sample's own update is reproduced exactly by [`FlowStep::apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub h: f64,
    pub stages: [StagePoly; 6],
    pub lo: f64,
    pub hi: f64,
}

impl FlowStep {
    fn interior(&self, p: f64) -> f64 {
        let mut k = [0.0; 7];
        for i in 0..6 {
            let pi = dopri::stage_point(p, &k, i, self.h);
            k[i] = eval_poly(&self.stages[i], pi);
        }
        dopri::advance(p, &k, self.h)
    }

    /// Value and derivative of the step map at `p`.
    fn interior_with_slope(&self, p: f64) -> (f64, f64) {
        let mut k = [0.0; 7];
        let mut dk = [0.0; 7];
        for i in 0..6 {
            let pi = dopri::stage_point(p, &k, i, self.h);
            let dpi = dopri::stage_point(1.0, &dk, i, self.h);
            k[i] = eval_poly(&self.stages[i], pi);
            dk[i] = eval_poly_deriv(&self.stages[i], pi) * dpi;
        }
        (dopri::advance(p, &k, self.h), dopri::advance(1.0, &dk, self.h))
    }

    pub fn apply(&self, p: f64) -> f64 {
        if p < self.lo {
            let (v, d) = self.interior_with_slope(self.lo);
            v + d * (p - self.lo)
        } else if p > self.hi {
            let (v, d) = self.interior_with_slope(self.hi);
            v + d * (p - self.hi)
        } else {
            self.interior(p)
        }
    }
}

/// A frozen point-wise map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointOp {
    Shift { by: f64 },
    Scale { by: f64 },
    /// `x / (1 - t x)`, the closed-form flow along the third-moment gradient.
    Riccati { t: f64, lo: f64, hi: f64 },
    Flow(FlowStep),
}

impl PointOp {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            PointOp::Shift { by } => x + by,
            PointOp::Scale { by } => x * by,
            PointOp::Riccati { t, lo, hi } => {
                if x < *lo {
                    riccati_continued(*t, *lo, x)
                } else if x > *hi {
                    riccati_continued(*t, *hi, x)
                } else {
                    x / (1.0 - t * x)
                }
            }
            PointOp::Flow(step) => step.apply(x),
        }
    }

    pub fn apply_slice(&self, xs: &mut [f64]) {
        match self {
            PointOp::Shift { by } => xs.iter_mut().for_each(|x| *x += by),
            PointOp::Scale { by } => xs.iter_mut().for_each(|x| *x *= by),
            _ => xs.iter_mut().for_each(|x| *x = self.apply(*x)),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            PointOp::Shift { by } | PointOp::Scale { by } => by.is_finite(),
            PointOp::Riccati { t, lo, hi } => t.is_finite() && lo.is_finite() && hi.is_finite(),
            PointOp::Flow(s) => {
                s.h.is_finite()
                    && s.lo.is_finite()
                    && s.hi.is_finite()
                    && s.stages.iter().flatten().all(|c| c.is_finite())
            }
        }
    }
}

fn riccati_continued(t: f64, edge: f64, x: f64) -> f64 {
    let d = 1.0 - t * edge;
    edge / d + (x - edge) / (d * d)
}

/// Applies a sequence of maps to one value.
#[inline]
pub fn replay(ops: &[PointOp], mut x: f64) -> f64 {
    for op in ops {
        x = op.apply(x);
    }
    x
}
