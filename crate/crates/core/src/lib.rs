//! Hybrid projection solver for the split common null point problem in
//! finite-dimensional `l_p` spaces.
//!
//! Given spaces `E = l_p^n` and `F = l_p^m`, a linear map `A: E -> F`, maximal
//! monotone operators `M1` on `E` and `M2` on `F`, and a family of nonexpansive
//! maps, the solver searches for a point `z` with `0 ∈ M1 z`, `0 ∈ M2 (A z)`
//! that is also a common fixed point of the family. Each step re-projects the
//! starting point onto the intersection of three halfspace cuts that contain
//! the solution set, which gives strong convergence to the generalized
//! projection of the start onto that set.
//!
//! The building blocks are usable on their own:
//!
//! - [`banach_space`]: norms, the normalized duality mapping and the Lyapunov
//!   functional `phi(x, y) = |x|^2 - 2<x, Jy> + |y|^2`.
//! - [`convex_sets`]: declarative convex sets with Euclidean and generalized
//!   (phi-minimizing) projections.
//! - [`monotone`]: maximal monotone operators and their generalized resolvents.
//! - [`wmapping`]: the nested `W_n` averaging of a family of nonexpansive maps.
//! - [`solver`]: the hybrid iteration itself.
//! - [`harness`]: problem files, CSV traces, the scalar reference recurrence and
//!   the property battery driven by the `scnp` binary.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod banach_space;
pub mod convex_sets;
mod error;
pub mod harness;
pub mod monotone;
mod newton;
pub mod solver;
pub mod wmapping;

pub use banach_space::{SpaceGeometry, Vector, DEFAULT_TOL};
pub use error::{Error, Result};
