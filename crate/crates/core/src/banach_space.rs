//! Finite-dimensional `l_p` geometry.
//!
//! Vectors are plain coordinate arrays. Whether a vector lives in the primal
//! space or its dual is a convention of the caller; both share coordinates and
//! only the norm exponent differs (`p` for the primal, `q = p / (p - 1)` for the
//! dual). The duality mapping implemented here is the normalized one,
//!
//! ```text
//! (J x)_i = |x|_p^(2 - p) * |x_i|^(p - 1) * sign(x_i),
//! ```
//!
//! which satisfies `<x, Jx> = |x|_p^2` and `|Jx|_q = |x|_p`. Its inverse is the
//! duality mapping of the dual space.
//!
//! Any `1 < p < inf` is accepted. Convergence of the hybrid solver is only
//! claimed for `1 < p <= 2`, where `l_p` is 2-uniformly convex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense coordinate vector, primal or dual depending on context.
pub type Vector = DVector<f64>;

/// Absolute tolerance used for comparisons unless the caller passes its own.
pub const DEFAULT_TOL: f64 = 1e-10;

/// `l_p^n`: dimension plus norm exponent, with the dual exponent cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGeometry {
    dim: usize,
    p: f64,
    q: f64,
}

impl SpaceGeometry {
    pub fn new(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "norm exponent must satisfy 1 < p < inf, got {p}"
            )));
        }
        let q = if p == 2.0 { 2.0 } else { p / (p - 1.0) };
        Ok(Self { dim, p, q })
    }

    /// Euclidean space of the given dimension.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(dim, 2.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_hilbert(&self) -> bool {
        self.p == 2.0
    }

    /// The dual space `l_q^n`.
    pub fn dual(&self) -> Self {
        Self {
            dim: self.dim,
            p: self.q,
            q: self.p,
        }
    }

    /// Rejects vectors of the wrong length or with non-finite entries.
    pub fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(())
    }

    pub fn zeros(&self) -> Vector {
        Vector::zeros(self.dim)
    }
}

/// `(sum |x_i|^p)^(1/p)`, scaled by the largest entry to avoid overflow.
pub(crate) fn lp_norm(x: &Vector, p: f64) -> f64 {
    if p == 2.0 {
        return x.norm();
    }
    let scale = x.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = x.iter().map(|v| (v.abs() / scale).powf(p)).sum();
    scale * sum.powf(1.0 / p)
}

/// Normalized duality mapping for exponent `p`, without dimension checks.
pub(crate) fn duality_map_unchecked(x: &Vector, p: f64) -> Vector {
    if p == 2.0 || x.len() == 1 {
        return x.clone();
    }
    let s = lp_norm(x, p);
    if s == 0.0 {
        return Vector::zeros(x.len());
    }
    // s^(2-p) |x_i|^(p-1) = s (|x_i| / s)^(p-1)
    x.map(|v| {
        if v == 0.0 {
            0.0
        } else {
            s * (v.abs() / s).powf(p - 1.0) * v.signum()
        }
    })
}

/// Jacobian of the duality mapping (Hessian of `|x|_p^2 / 2`).
///
/// `J` is homogeneous of degree one, so the Jacobian only depends on the
/// normalized coordinates `t_i = |x_i| / |x|_p`:
///
/// ```text
/// DJ(x) = (p - 1) diag(t_i^(p - 2)) + (2 - p) tau tau^T,   tau_i = sign(x_i) t_i^(p - 1)
/// ```
///
/// For `p < 2` the diagonal blows up at zero coordinates; `t_i` is floored at
/// `floor` there. At `x = 0` (where `J` is not differentiable unless `p = 2`)
/// the identity is returned.
pub(crate) fn duality_jacobian(x: &Vector, p: f64, floor: f64) -> DMatrix<f64> {
    let n = x.len();
    if p == 2.0 || n == 1 {
        return DMatrix::identity(n, n);
    }
    let s = lp_norm(x, p);
    if s == 0.0 {
        return DMatrix::identity(n, n);
    }
    let t = x.map(|v| (v.abs() / s).max(floor));
    let tau = Vector::from_iterator(
        n,
        x.iter()
            .zip(t.iter())
            .map(|(v, ti)| if *v == 0.0 { 0.0 } else { v.signum() * ti.powf(p - 1.0) }),
    );
    let mut jac = &tau * tau.transpose() * (2.0 - p);
    for i in 0..n {
        jac[(i, i)] += (p - 1.0) * t[i].powf(p - 2.0);
    }
    jac
}

/// `|x|_p` in the geometry `g`.
pub fn norm(x: &Vector, g: &SpaceGeometry) -> Result<f64> {
    g.check(x)?;
    Ok(lp_norm(x, g.p))
}

/// Norm of a dual element, `|x*|_q`.
pub fn dual_norm(x_star: &Vector, g: &SpaceGeometry) -> Result<f64> {
    g.check(x_star)?;
    Ok(lp_norm(x_star, g.q))
}

/// Normalized duality mapping `J: E -> E*`. `J0 = 0`.
pub fn duality_map(x: &Vector, g: &SpaceGeometry) -> Result<Vector> {
    g.check(x)?;
    Ok(duality_map_unchecked(x, g.p))
}

/// `J^{-1}: E* -> E`, which is the duality mapping of the dual space.
pub fn inverse_duality_map(x_star: &Vector, g: &SpaceGeometry) -> Result<Vector> {
    g.check(x_star)?;
    Ok(duality_map_unchecked(x_star, g.q))
}

/// Lyapunov functional `phi(x, y) = |x|^2 - 2 <x, Jy> + |y|^2`.
///
/// Nonnegative, zero iff `x = y`, and equal to `|x - y|^2` when `p = 2`.
pub fn phi(x: &Vector, y: &Vector, g: &SpaceGeometry) -> Result<f64> {
    g.check(x)?;
    g.check(y)?;
    Ok(phi_unchecked(x, y, g.p))
}

pub(crate) fn phi_unchecked(x: &Vector, y: &Vector, p: f64) -> f64 {
    if p == 2.0 {
        return (x - y).norm_squared();
    }
    let nx = lp_norm(x, p);
    let ny = lp_norm(y, p);
    let jy = duality_map_unchecked(y, p);
    // Rounding can push the exact-zero case slightly negative.
    (nx * nx - 2.0 * x.dot(&jy) + ny * ny).max(0.0)
}

/// `J^{-1}(sum_k w_k J x_k)`: the convex combination taken in the dual space.
pub fn dual_combination(terms: &[(f64, &Vector)], g: &SpaceGeometry) -> Result<Vector> {
    let mut acc = g.zeros();
    for (w, x) in terms {
        acc += duality_map(x, g)? * *w;
    }
    inverse_duality_map(&acc, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(SpaceGeometry::new(0, 2.0).is_err());
        assert!(SpaceGeometry::new(2, 1.0).is_err());
        assert!(SpaceGeometry::new(2, f64::INFINITY).is_err());
        let g = SpaceGeometry::new(3, 3.0).unwrap();
        assert_close!(1.0 / g.p() + 1.0 / g.q(), 1.0, 1e-15);
    }

    #[test]
    fn norm_examples() {
        let g2 = SpaceGeometry::euclidean(2).unwrap();
        assert_eq!(norm(&v(&[3.0, 4.0]), &g2).unwrap(), 5.0);
        let g4 = SpaceGeometry::new(2, 4.0).unwrap();
        assert_eq!(norm(&v(&[0.0, 0.0]), &g4).unwrap(), 0.0);
        assert_close!(norm(&v(&[1.0, 1.0]), &g4).unwrap(), 2f64.powf(0.25), 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = SpaceGeometry::euclidean(2).unwrap();
        assert_eq!(
            norm(&v(&[1.0]), &g),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        );
        assert!(phi(&v(&[1.0, 2.0]), &v(&[1.0]), &g).is_err());
        assert!(duality_map(&v(&[f64::NAN, 0.0]), &g).is_err());
    }

    #[test]
    fn duality_map_examples() {
        let g2 = SpaceGeometry::euclidean(2).unwrap();
        assert_eq!(duality_map(&v(&[1.0, -2.0]), &g2).unwrap(), v(&[1.0, -2.0]));

        for p in [1.3, 2.0, 3.5] {
            let g1 = SpaceGeometry::new(1, p).unwrap();
            assert_eq!(duality_map(&v(&[-3.0]), &g1).unwrap(), v(&[-3.0]));
        }

        let g4 = SpaceGeometry::new(2, 4.0).unwrap();
        let x = v(&[1.0, 1.0]);
        let jx = duality_map(&x, &g4).unwrap();
        let h = 0.5f64.sqrt();
        assert_close!(jx[0], h, 1e-15);
        assert_close!(jx[1], h, 1e-15);
        let nx = norm(&x, &g4).unwrap();
        assert_close!(x.dot(&jx), nx * nx, 1e-14);
        assert_close!(dual_norm(&jx, &g4).unwrap(), nx, 1e-14);

        let back = inverse_duality_map(&jx, &g4).unwrap();
        assert_close!(back[0], 1.0, 1e-14);
        assert_close!(back[1], 1.0, 1e-14);
    }

    #[test]
    fn duality_map_of_zero_is_zero() {
        for p in [1.5, 3.0, 4.0] {
            let g = SpaceGeometry::new(3, p).unwrap();
            assert_eq!(duality_map(&g.zeros(), &g).unwrap(), g.zeros());
        }
    }

    #[test]
    fn round_trip_p_one_and_half() {
        let g = SpaceGeometry::new(2, 1.5).unwrap();
        let x = v(&[0.3, -0.7]);
        let back = inverse_duality_map(&duality_map(&x, &g).unwrap(), &g).unwrap();
        assert!((back - x).amax() <= 1e-12);
    }

    #[test]
    fn phi_examples() {
        let g4 = SpaceGeometry::new(2, 4.0).unwrap();
        let x = v(&[0.7, -1.2]);
        assert_eq!(phi(&x, &x, &g4).unwrap(), 0.0);

        let g1 = SpaceGeometry::euclidean(1).unwrap();
        assert_eq!(phi(&v(&[3.0]), &v(&[1.0]), &g1).unwrap(), 4.0);

        // p = 4, x = (1, 0), y = (1, 1), term by term:
        // |x|^2 = 1, <x, Jy> = 2^{-1/2}, |y|^2 = 2^{1/2}
        let expected = 1.0 - 2.0 * 0.5f64.sqrt() + 2f64.sqrt();
        assert_close!(phi(&v(&[1.0, 0.0]), &v(&[1.0, 1.0]), &g4).unwrap(), expected, 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for p in [1.5, 3.0, 4.0] {
            let x = v(&[0.4, -1.1, 0.8]);
            let jac = duality_jacobian(&x, p, 1e-12);
            let h = 1e-6;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (duality_map_unchecked(&xp, p) - duality_map_unchecked(&xm, p)) / (2.0 * h);
                for i in 0..3 {
                    assert_close!(jac[(i, j)], col[i], 1e-7);
                }
            }
        }
    }

    #[test]
    fn dual_combination_is_plain_average_in_hilbert_space() {
        let g = SpaceGeometry::euclidean(2).unwrap();
        let a = v(&[1.0, 0.0]);
        let b = v(&[0.0, 1.0]);
        let c = dual_combination(&[(0.25, &a), (0.75, &b)], &g).unwrap();
        assert_eq!(c, v(&[0.25, 0.75]));
    }
}
