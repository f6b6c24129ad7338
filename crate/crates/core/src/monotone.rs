//! Maximal monotone operators `M: E -> 2^{E*}` and their generalized
//! resolvents `J_r^M = (J + rM)^{-1} J`.
//!
//! The resolvent of `x` is the unique `u` with `Jx ∈ Ju + r Mu`. For the
//! subdifferential of an indicator function this is exactly the generalized
//! projection onto the set.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::banach_space::{duality_map_unchecked, lp_norm, phi_unchecked, SpaceGeometry, Vector};
use crate::convex_sets::{generalized_projection, ConvexSet};
use crate::error::{Error, Result};
use crate::newton::{descend, solve_in_dual, LpObjective, MAX_NEWTON_ITERS};

/// Tolerated negative eigenvalue of a "positive semidefinite" matrix.
const PSD_EIGEN_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneOp {
    /// `Mx = {a x}` with `a >= 0`.
    Scaling(f64),
    /// `Mx = {B x}` with `B` symmetric positive semidefinite.
    LinearPsd(DMatrix<f64>),
    /// `M = ∂i_C`, the normal cone of `C`.
    IndicatorSubdifferential(ConvexSet),
}

impl MonotoneOp {
    pub fn scaling(a: f64) -> Result<Self> {
        let op = Self::Scaling(a);
        op.validate()?;
        Ok(op)
    }

    pub fn linear_psd(b: DMatrix<f64>) -> Result<Self> {
        let op = Self::LinearPsd(b);
        op.validate()?;
        Ok(op)
    }

    pub fn indicator(set: ConvexSet) -> Self {
        Self::IndicatorSubdifferential(set)
    }

    /// Checks the variant's parameters (`a >= 0`, `B = B^T` and PSD).
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Scaling(a) => {
                if !a.is_finite() || *a < 0.0 {
                    return Err(Error::InvalidParameter(format!("scaling must be >= 0, got {a}")));
                }
            }
            Self::LinearPsd(b) => {
                if !b.is_square() {
                    return Err(Error::InvalidParameter("PSD operator must be square".into()));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("PSD operator"));
                }
                let asym = (b - b.transpose()).amax();
                if asym > 1e-12 * b.amax().max(1.0) {
                    return Err(Error::InvalidParameter(format!("operator is not symmetric ({asym:e})")));
                }
                let eig = SymmetricEigen::new(b.clone());
                let min = eig.eigenvalues.min();
                if min < PSD_EIGEN_FLOOR {
                    return Err(Error::InvalidParameter(format!(
                        "operator has negative eigenvalue {min:e}"
                    )));
                }
            }
            Self::IndicatorSubdifferential(_) => {}
        }
        Ok(())
    }

    /// Dimension the operator is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Scaling(_) => None,
            Self::LinearPsd(b) => Some(b.nrows()),
            Self::IndicatorSubdifferential(set) => Some(set.dim()),
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        match self.dim() {
            Some(d) if d != x.len() => Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            }),
            _ => Ok(()),
        }
    }

    /// The unique element of `Mx` for the single-valued variants.
    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        match self {
            Self::Scaling(a) => Ok(x * *a),
            Self::LinearPsd(b) => Ok(b * x),
            Self::IndicatorSubdifferential(_) => Err(Error::NotSingleValued("subdifferential of an indicator")),
        }
    }

    /// `rM` as a matrix, for the single-valued variants.
    fn scaled_matrix(&self, r: f64, n: usize) -> Option<DMatrix<f64>> {
        match self {
            Self::Scaling(a) => Some(DMatrix::identity(n, n) * (r * a)),
            Self::LinearPsd(b) => Some(b * r),
            Self::IndicatorSubdifferential(_) => None,
        }
    }
}

/// Free-function form of [`MonotoneOp::eval`].
pub fn eval(op: &MonotoneOp, x: &Vector) -> Result<Vector> {
    op.eval(x)
}

/// `J_r^M x`: the `u` solving `Jx ∈ Ju + r Mu`.
///
/// Closed forms for `p = 2` (and in dimension one, where `J` is the
/// identity); otherwise damped Newton on `Ju + rMu - Jx = 0` from `u = x`, in
/// the dual variable `Ju` when `p < 2`.
/// The indicator variant delegates to the generalized projection.
pub fn generalized_resolvent(op: &MonotoneOp, r: f64, x: &Vector, g: &SpaceGeometry, tol: f64) -> Result<Vector> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "resolvent parameter must be > 0, got {r}"
        )));
    }
    g.check(x)?;
    op.check_dim(x)?;
    let linear = g.is_hilbert() || g.dim() == 1;
    match op {
        MonotoneOp::IndicatorSubdifferential(set) => generalized_projection(x, set, g, tol),
        MonotoneOp::Scaling(a) if linear => Ok(x / (1.0 + r * a)),
        MonotoneOp::LinearPsd(b) if linear => {
            let n = x.len();
            let system = DMatrix::identity(n, n) + b * r;
            system
                .cholesky()
                .map(|ch| ch.solve(x))
                .ok_or_else(|| Error::InvalidParameter("I + rB is not positive definite".into()))
        }
        _ => {
            let n = x.len();
            let jx = duality_map_unchecked(x, g.p());
            let q = op.scaled_matrix(r, n).expect("single-valued variant");
            if g.p() < 2.0 {
                let u = solve_in_dual(&jx, &q, g.p(), 0.1 * tol)?;
                let residual = resolvent_residual(op, r, x, &u, g)?;
                if residual > tol {
                    return Err(Error::NoConvergence {
                        solver: "resolvent dual newton",
                        iterations: MAX_NEWTON_ITERS,
                        residual,
                    });
                }
                return Ok(u);
            }
            let objective = LpObjective::new(g.p(), jx).with_quadratic(q);
            let out = descend(
                &objective,
                x.clone(),
                &DMatrix::zeros(0, n),
                &[],
                0.1 * tol,
                MAX_NEWTON_ITERS,
            )?;
            let residual = resolvent_residual(op, r, x, &out.x, g)?;
            if residual > tol {
                return Err(Error::NoConvergence {
                    solver: "resolvent newton",
                    iterations: out.iterations,
                    residual,
                });
            }
            Ok(out.x)
        }
    }
}

/// `|Ju + rMu - Jx|_q` for a candidate resolvent value `u`.
pub fn resolvent_residual(op: &MonotoneOp, r: f64, x: &Vector, u: &Vector, g: &SpaceGeometry) -> Result<f64> {
    g.check(x)?;
    g.check(u)?;
    let mu = op.eval(u)?;
    let res = duality_map_unchecked(u, g.p()) + mu * r - duality_map_unchecked(x, g.p());
    Ok(lp_norm(&res, g.q()))
}

/// `phi(y, J_r x) + phi(J_r x, x) <= phi(y, x)` (within `1e-8`) for a null
/// point `y` of `M`. The caller is responsible for `0 ∈ M y`.
pub fn check_resolvent_inequality(
    op: &MonotoneOp,
    r: f64,
    x: &Vector,
    y_zero: &Vector,
    g: &SpaceGeometry,
) -> Result<bool> {
    g.check(y_zero)?;
    let u = generalized_resolvent(op, r, x, g, 1e-12)?;
    let p = g.p();
    let lhs = phi_unchecked(y_zero, &u, p) + phi_unchecked(&u, x, p);
    Ok(lhs <= phi_unchecked(y_zero, x, p) + 1e-8)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(MonotoneOp::scaling(2.0).unwrap().eval(&v(&[0.5])).unwrap(), v(&[1.0]));
        assert_eq!(
            MonotoneOp::scaling(0.0).unwrap().eval(&v(&[7.0, -1.0])).unwrap(),
            v(&[0.0, 0.0])
        );
        let id = MonotoneOp::linear_psd(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.eval(&v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
        let ind = MonotoneOp::indicator(ConvexSet::full_space(1));
        assert_eq!(
            ind.eval(&v(&[1.0])),
            Err(Error::NotSingleValued("subdifferential of an indicator"))
        );
    }

    #[test]
    fn constructors_validate() {
        assert!(MonotoneOp::scaling(-1.0).is_err());
        assert!(MonotoneOp::linear_psd(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
        assert!(MonotoneOp::linear_psd(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }

    #[test]
    fn scalar_example_resolvents() {
        let g = SpaceGeometry::euclidean(1).unwrap();
        let x = v(&[0.9]);
        let z = generalized_resolvent(&MonotoneOp::Scaling(2.0), 0.25, &x, &g, 1e-12).unwrap();
        assert_close!(z[0], 2.0 / 3.0 * 0.9, 1e-15);
        let w = generalized_resolvent(&MonotoneOp::Scaling(3.0), 0.25, &x, &g, 1e-12).unwrap();
        assert_close!(w[0], 4.0 / 7.0 * 0.9, 1e-15);
        // (1 + 0.75) w = x
        assert_close!(1.75 * w[0], x[0], 1e-15);

        let ind = MonotoneOp::indicator(ConvexSet::boxed(v(&[0.0]), v(&[1.0])).unwrap());
        for r in [0.1, 1.0, 10.0] {
            assert_eq!(
                generalized_resolvent(&ind, r, &v(&[2.0]), &g, 1e-12).unwrap(),
                v(&[1.0])
            );
        }
    }

    #[test]
    fn rejects_nonpositive_parameter() {
        let g = SpaceGeometry::euclidean(1).unwrap();
        assert!(matches!(
            generalized_resolvent(&MonotoneOp::Scaling(1.0), 0.0, &v(&[1.0]), &g, 1e-12),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn resolvent_inequality_examples() {
        let g = SpaceGeometry::euclidean(1).unwrap();
        // phi(0, 2/3) + phi(2/3, 1) = 4/9 + 1/9 <= 1
        assert!(check_resolvent_inequality(&MonotoneOp::Scaling(2.0), 0.25, &v(&[1.0]), &v(&[0.0]), &g).unwrap());
        let g3 = SpaceGeometry::new(2, 3.0).unwrap();
        let zero = v(&[0.0, 0.0]);
        assert!(check_resolvent_inequality(&MonotoneOp::Scaling(1.5), 0.7, &zero, &zero, &g3).unwrap());
    }

    #[test]
    fn resolvent_fixes_null_points() {
        // kernel of B = diag(1, 0, 2) is the second axis
        let b = DMatrix::from_diagonal(&v(&[1.0, 0.0, 2.0]));
        let op = MonotoneOp::linear_psd(b).unwrap();
        for p in [1.5, 2.0, 4.0] {
            let g = SpaceGeometry::new(3, p).unwrap();
            let y = v(&[0.0, -1.3, 0.0]);
            let u = generalized_resolvent(&op, 0.8, &y, &g, 1e-12).unwrap();
            assert!((u - &y).amax() < 1e-10, "p = {p}");
        }
    }

    fn psd(entries: &[f64], n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_row_slice(n, n, entries);
        &m * m.transpose()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn monotone_pairs(
            xs in prop::collection::vec(-2.0..2.0f64, 3),
            ys in prop::collection::vec(-2.0..2.0f64, 3),
            entries in prop::collection::vec(-1.0..1.0f64, 9),
            a in 0.0..5.0f64,
        ) {
            let x = Vector::from_vec(xs);
            let y = Vector::from_vec(ys);
            for op in [MonotoneOp::Scaling(a), MonotoneOp::LinearPsd(psd(&entries, 3))] {
                let d = (&x - &y).dot(&(op.eval(&x).unwrap() - op.eval(&y).unwrap()));
                prop_assert!(d >= -1e-10);
            }
        }

        #[test]
        fn newton_resolvent_residual(
            xs in prop::collection::vec(-2.0..2.0f64, 3),
            entries in prop::collection::vec(-1.0..1.0f64, 9),
            r in 0.05..4.0f64,
            pi in 0usize..3,
        ) {
            let p = [1.5, 3.0, 4.0][pi];
            let g = SpaceGeometry::new(3, p).unwrap();
            let x = Vector::from_vec(xs);
            let op = MonotoneOp::LinearPsd(psd(&entries, 3));
            let u = generalized_resolvent(&op, r, &x, &g, 1e-10).unwrap();
            prop_assert!(resolvent_residual(&op, r, &x, &u, &g).unwrap() <= 1e-10);
            prop_assert!(check_resolvent_inequality(&MonotoneOp::Scaling(1.0), r, &x, &g.zeros(), &g).unwrap());
        }

        #[test]
        fn obtuse_angle_in_hilbert_space(
            xs in prop::collection::vec(-2.0..2.0f64, 2),
            r in 0.05..4.0f64,
        ) {
            // M = diag(1, 0): null points are the second axis
            let g = SpaceGeometry::euclidean(2).unwrap();
            let op = MonotoneOp::LinearPsd(DMatrix::from_diagonal(&v(&[1.0, 0.0])));
            let x = Vector::from_vec(xs);
            let u = generalized_resolvent(&op, r, &x, &g, 1e-12).unwrap();
            for t in [-2.0, -0.1, 0.0, 1.5] {
                let y = v(&[0.0, t]);
                prop_assert!((&u - &y).dot(&(&x - &u)) >= -1e-8);
            }
        }
    }
}
