//! The `W_n` mapping of a family of nonexpansive maps `T_1, T_2, ...` with
//! weights `lambda_1, lambda_2, ...`:
//!
//! ```text
//! U_{n,n+1} = I
//! U_{n,k}   = lambda_k T_k U_{n,k+1} + (1 - lambda_k) I      k = n, ..., 1
//! W_n       = U_{n,1}
//! ```
//!
//! Each level mixes with the original point, not the previous level. With
//! `0 < lambda_i <= b < 1`, `W_n x` converges uniformly on bounded sets as
//! `n -> inf`; the family here is a finite prefix of the infinite one.

use nalgebra::DMatrix;

use crate::banach_space::{lp_norm, SpaceGeometry, Vector};
use crate::convex_sets::{euclidean_projection, ConvexSet};
use crate::error::{Error, Result};

/// Default truncation depth of the family.
pub const DEFAULT_DEPTH: usize = 50;
/// Default weight, also used as the bound `b`.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum NonexpansiveMap {
    Identity,
    /// Euclidean projection onto a set; nonexpansive only for `p = 2`.
    SetProjection(ConvexSet),
    /// `x -> Q x + b` with operator norm of `Q` at most one.
    AffineContraction {
        matrix: DMatrix<f64>,
        offset: Vector,
    },
}

impl NonexpansiveMap {
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        match self {
            Self::Identity => Ok(x.clone()),
            Self::SetProjection(set) => euclidean_projection(x, set, 1e-12),
            Self::AffineContraction { matrix, offset } => {
                if matrix.ncols() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: matrix.ncols(),
                        found: x.len(),
                    });
                }
                Ok(matrix * x + offset)
            }
        }
    }

    /// Checks that the map is nonexpansive in the norm of `g`.
    ///
    /// For `p != 2` the induced norm of `Q` is bounded through Riesz-Thorin,
    /// `|Q|_p <= |Q|_1^{1/p} |Q|_inf^{1 - 1/p}`, which is sufficient but not
    /// necessary.
    pub fn validate(&self, g: &SpaceGeometry) -> Result<()> {
        match self {
            Self::Identity => Ok(()),
            Self::SetProjection(set) => {
                if set.dim() != g.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: g.dim(),
                        found: set.dim(),
                    });
                }
                if !g.is_hilbert() && g.dim() > 1 {
                    return Err(Error::InvalidParameter(
                        "set projections are only nonexpansive for p = 2".into(),
                    ));
                }
                Ok(())
            }
            Self::AffineContraction { matrix, offset } => {
                if matrix.nrows() != g.dim() || matrix.ncols() != g.dim() || offset.len() != g.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: g.dim(),
                        found: matrix.nrows(),
                    });
                }
                if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("affine map"));
                }
                let bound = operator_norm_bound(matrix, g.p());
                if bound > 1.0 + 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "affine map has operator norm bound {bound} > 1"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Spectral norm for `p = 2`, otherwise the Riesz-Thorin interpolation bound.
pub(crate) fn operator_norm_bound(m: &DMatrix<f64>, p: f64) -> f64 {
    if p == 2.0 {
        return m.clone().svd(false, false).singular_values.max();
    }
    let one = (0..m.ncols()).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max);
    let inf = (0..m.nrows()).map(|i| m.row(i).abs().sum()).fold(0.0, f64::max);
    one.powf(1.0 / p) * inf.powf(1.0 - 1.0 / p)
}

/// Finite prefix `T_1..T_N` with weights `lambda_1..lambda_N` in `(0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WFamily {
    maps: Vec<NonexpansiveMap>,
    lambdas: Vec<f64>,
    bound: f64,
}

/// Result of approximating the limit map `W x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WLimit {
    pub value: Vector,
    pub n_used: usize,
    /// The Cauchy criterion was never met within the family's depth.
    pub truncated: bool,
}

impl WFamily {
    pub fn new(maps: Vec<NonexpansiveMap>, lambdas: Vec<f64>, bound: f64) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidParameter("W-family needs at least one map".into()));
        }
        if maps.len() != lambdas.len() {
            return Err(Error::InvalidParameter(format!(
                "{} maps but {} weights",
                maps.len(),
                lambdas.len()
            )));
        }
        if !(bound > 0.0 && bound < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weight bound must lie in (0, 1), got {bound}"
            )));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && **l <= bound)) {
            return Err(Error::InvalidParameter(format!("weight {l} outside (0, {bound}]")));
        }
        Ok(Self { maps, lambdas, bound })
    }

    /// The same weight for every map.
    pub fn uniform(maps: Vec<NonexpansiveMap>, lambda: f64) -> Result<Self> {
        let n = maps.len();
        Self::new(maps, vec![lambda; n], lambda)
    }

    /// `depth` identity maps with the default weights.
    pub fn identity(depth: usize) -> Result<Self> {
        Self::uniform(vec![NonexpansiveMap::Identity; depth], DEFAULT_LAMBDA)
    }

    pub fn depth(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[NonexpansiveMap] {
        &self.maps
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn validate(&self, g: &SpaceGeometry) -> Result<()> {
        self.maps.iter().try_for_each(|m| m.validate(g))
    }

    /// `W_n x` for `1 <= n <= depth`.
    pub fn apply_wn(&self, n: usize, x: &Vector) -> Result<Vector> {
        if n == 0 || n > self.depth() {
            return Err(Error::InvalidParameter(format!(
                "W_n index {n} outside 1..={}",
                self.depth()
            )));
        }
        let mut u = x.clone();
        for k in (0..n).rev() {
            let lambda = self.lambdas[k];
            u = self.maps[k].apply(&u)? * lambda + x * (1.0 - lambda);
        }
        Ok(u)
    }

    /// `W_n x` for the smallest `n` with `|W_{n+1} x - W_n x| <= eps` (in the
    /// norm of exponent `p`), or `W_depth x` flagged as truncated.
    pub fn apply_w_limit(&self, x: &Vector, eps: f64, p: f64) -> Result<WLimit> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
        }
        let mut current = self.apply_wn(1, x)?;
        for n in 1..self.depth() {
            let next = self.apply_wn(n + 1, x)?;
            if lp_norm(&(&next - &current), p) <= eps {
                return Ok(WLimit {
                    value: current,
                    n_used: n,
                    truncated: false,
                });
            }
            current = next;
        }
        Ok(WLimit {
            value: current,
            n_used: self.depth(),
            truncated: true,
        })
    }
}
