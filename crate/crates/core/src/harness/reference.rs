//! The one-dimensional reference example and an independent scalar
//! implementation of its iteration.
//!
//! `E = F = R`, `C = [0, 1]`, `A x = -2x`, `M1 = 2x`, `M2 = 3y`,
//! `lambda_n = mu_n = 1/4`, `e_n = 1/n`, `gamma = 0.1`, all maps the identity.
//! With `s = x_n + 1/n` the step reduces to
//!
//! ```text
//! u = x_n,  z = 2s/3,  w = -16s/21,  y = P_[0,1](116s/210)
//! C_n: z <= 16s/42,   D_n: z <= 5s/6,   Q_n: (x_1 - x_n) z <= (x_1 - x_n) x_n
//! ```
//!
//! and `x_{n+1}` is `x_1` clamped to the interval cut out by these.

use nalgebra::DMatrix;

use crate::banach_space::{SpaceGeometry, Vector};
use crate::convex_sets::ConvexSet;
use crate::error::{Error, Result};
use crate::monotone::MonotoneOp;
use crate::solver::{ErrorRule, ParameterSchedules, ProblemInstance, ProblemSpec, ScalarRule};
use crate::wmapping::{NonexpansiveMap, WFamily, DEFAULT_DEPTH};

/// The reference example started from `x1 ∈ [0, 1]`.
pub fn reference_instance(x1: f64) -> Result<ProblemInstance> {
    let g = SpaceGeometry::euclidean(1)?;
    ProblemInstance::new(ProblemSpec {
        ge: g,
        gf: g,
        a: DMatrix::from_element(1, 1, -2.0),
        m1: MonotoneOp::scaling(2.0)?,
        m2: MonotoneOp::scaling(3.0)?,
        c: ConvexSet::boxed(Vector::from_element(1, 0.0), Vector::from_element(1, 1.0))?,
        s: NonexpansiveMap::Identity,
        family: WFamily::identity(DEFAULT_DEPTH)?,
        schedules: ParameterSchedules {
            lambda: ScalarRule::Constant(0.25),
            mu: ScalarRule::Constant(0.25),
            error: ErrorRule::Reciprocal {
                direction: Vector::from_element(1, 1.0),
            },
            ..Default::default()
        },
        gamma: 0.1,
        c_const: None,
        x1: Vector::from_element(1, x1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceStep {
    pub n: usize,
    pub x: f64,
    pub u: f64,
    pub z: f64,
    pub w: f64,
    pub y: f64,
    /// Upper bounds of the `C_n` and `D_n` cuts.
    pub c_bound: f64,
    pub d_bound: f64,
    pub x_next: f64,
}

/// One step of the scalar recurrence.
pub fn reference_step(n: usize, x: f64, x1: f64) -> Result<ReferenceStep> {
    let s = x + 1.0 / n as f64;
    let c_bound = 16.0 / 42.0 * s;
    let d_bound = 5.0 / 6.0 * s;
    let (mut lo, mut hi) = (0.0f64, 1.0f64.min(c_bound).min(d_bound));
    if x1 > x {
        hi = hi.min(x);
    } else if x1 < x {
        lo = lo.max(x);
    }
    if lo > hi {
        return Err(Error::EmptySet(format!("reference step {n}: [{lo}, {hi}]")));
    }
    Ok(ReferenceStep {
        n,
        x,
        u: x,
        z: 2.0 / 3.0 * s,
        w: -16.0 / 21.0 * s,
        y: (116.0 / 210.0 * s).clamp(0.0, 1.0),
        c_bound,
        d_bound,
        x_next: x1.clamp(lo, hi),
    })
}

/// The first `steps` steps from `x1`.
pub fn reference_trajectory(x1: f64, steps: usize) -> Result<Vec<ReferenceStep>> {
    let mut out = Vec::with_capacity(steps);
    let mut x = x1;
    for n in 1..=steps {
        let st = reference_step(n, x, x1)?;
        x = st.x_next;
        out.push(st);
    }
    Ok(out)
}

/// First `n` with `|x_n| < threshold` along the recurrence, if within `max_n`.
pub fn first_index_below(x1: f64, threshold: f64, max_n: usize) -> Result<Option<usize>> {
    let mut x = x1;
    for n in 1..=max_n {
        if x.abs() < threshold {
            return Ok(Some(n));
        }
        x = reference_step(n, x, x1)?.x_next;
    }
    Ok(None)
}

pub const COMPONENTS: [&str; 8] = ["x", "u", "z", "w", "y", "C_n bound", "D_n bound", "x_next"];

/// Largest per-component deviation between the solver and the recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub x1: f64,
    pub steps: usize,
    pub max_deviation: [f64; 8],
}

impl Comparison {
    pub fn worst(&self) -> f64 {
        self.max_deviation.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the general solver and the recurrence side by side, each along its
/// own trajectory.
pub fn compare_with_reference(x1: f64, steps: usize) -> Result<Comparison> {
    let inst = reference_instance(x1)?;
    let reference = reference_trajectory(x1, steps)?;
    let mut x = inst.x1().clone();
    let mut max_deviation = [0.0f64; 8];
    for r in &reference {
        let st = inst.step(r.n, &x)?;
        let bound = |k: usize| st.cuts[k].offset() / st.cuts[k].normal()[0];
        let got = [
            st.x[0],
            st.u[0],
            st.z[0],
            st.w[0],
            st.y[0],
            bound(0),
            bound(1),
            st.x_next[0],
        ];
        let want = [r.x, r.u, r.z, r.w, r.y, r.c_bound, r.d_bound, r.x_next];
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            let d = (g - w).abs();
            // NaN must not hide behind max
            max_deviation[k] = if d.is_nan() {
                f64::INFINITY
            } else {
                max_deviation[k].max(d)
            };
        }
        x = st.x_next;
    }
    Ok(Comparison {
        x1,
        steps,
        max_deviation,
    })
}
