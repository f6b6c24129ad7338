//! Damped Newton descent for the smooth strictly convex objectives that show up
//! in resolvents and generalized projections:
//!
//! ```text
//! f(y) = |y|_p^2 / 2 + y^T Q y / 2 - <y, v> + (t / 2) |y - c|_r^2
//! ```
//!
//! The gradient of `f` is `Jy + Qy - v + t J_r(y - c)`, so a stationary point
//! solves the corresponding duality-map equation. Linear equality constraints
//! are handled through the KKT system, and inequality rows outside the working
//! set can block a step (used by the active-set projection).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::banach_space::{duality_jacobian, duality_map_unchecked, lp_norm, Vector};
use crate::error::{Error, Result};

/// Condition number above which the analytic Jacobian of `J` is replaced by a
/// central-difference one.
const JACOBIAN_COND_LIMIT: f64 = 1e12;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
pub(crate) const MAX_NEWTON_ITERS: usize = 200;

#[derive(Debug, Clone)]
pub(crate) struct LpObjective {
    p: f64,
    target: Vector,
    quadratic: Option<DMatrix<f64>>,
    anchor: Option<(f64, Vector, f64)>,
}

impl LpObjective {
    /// `|y|^2 / 2 - <y, v>`, minimized at `y = J^{-1} v`.
    pub(crate) fn new(p: f64, target: Vector) -> Self {
        Self {
            p,
            target,
            quadratic: None,
            anchor: None,
        }
    }

    pub(crate) fn with_quadratic(mut self, q: DMatrix<f64>) -> Self {
        self.quadratic = Some(q);
        self
    }

    /// Adds `(weight / 2) |y - center|_r^2` with norm exponent `r`.
    pub(crate) fn with_anchor(mut self, weight: f64, center: Vector, r: f64) -> Self {
        self.anchor = Some((weight, center, r));
        self
    }

    pub(crate) fn value(&self, y: &Vector) -> f64 {
        let s = lp_norm(y, self.p);
        let mut f = 0.5 * s * s - y.dot(&self.target);
        if let Some(q) = &self.quadratic {
            f += 0.5 * y.dot(&(q * y));
        }
        if let Some((t, c, r)) = &self.anchor {
            let d = lp_norm(&(y - c), *r);
            f += 0.5 * t * d * d;
        }
        f
    }

    pub(crate) fn gradient(&self, y: &Vector) -> Vector {
        let mut g = duality_map_unchecked(y, self.p) - &self.target;
        if let Some(q) = &self.quadratic {
            g += q * y;
        }
        if let Some((t, c, r)) = &self.anchor {
            g += duality_map_unchecked(&(y - c), *r) * *t;
        }
        g
    }

    pub(crate) fn hessian(&self, y: &Vector) -> DMatrix<f64> {
        let mut h = stable_duality_jacobian(y, self.p);
        if let Some(q) = &self.quadratic {
            h += q;
        }
        if let Some((t, c, r)) = &self.anchor {
            h += stable_duality_jacobian(&(y - c), *r) * *t;
        }
        h
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Analytic Jacobian of `J`, or a central-difference one when the analytic
/// matrix is too ill-conditioned to be trusted.
pub(crate) fn stable_duality_jacobian(y: &Vector, p: f64) -> DMatrix<f64> {
    let jac = duality_jacobian(y, p, 1e-8);
    if p == 2.0 || y.len() == 1 || condition_number(&jac) <= JACOBIAN_COND_LIMIT {
        return jac;
    }
    let n = y.len();
    let h = 1e-6 * lp_norm(y, p).max(1e-8);
    let mut fd = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += h;
        ym[j] -= h;
        let col = (duality_map_unchecked(&yp, p) - duality_map_unchecked(&ym, p)) / (2.0 * h);
        fd.set_column(j, &col);
    }
    // Symmetrize; the true Jacobian is a Hessian.
    (&fd + fd.transpose()) * 0.5
}

/// A linear inequality `<a, y> <= b` that may stop a step.
#[derive(Debug, Clone)]
pub(crate) struct Blocker<'a> {
    pub a: &'a Vector,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub x: Vector,
    pub iterations: usize,
    /// Index into the blocker list of the inequality that stopped the last step.
    pub blocked: Option<usize>,
}

/// Gradient with the components along the working-set normals removed.
pub(crate) fn reduced_gradient(g: &Vector, working: &DMatrix<f64>) -> Vector {
    if working.nrows() == 0 {
        return g.clone();
    }
    // orthonormal basis of the row space; the Gram matrix would square the
    // conditioning of nearly parallel rows
    let svd = working.transpose().svd(true, false);
    let Some(u) = svd.u else {
        return g.clone();
    };
    let cutoff = 1e-12 * svd.singular_values.amax();
    let mut r = g.clone();
    for (j, sv) in svd.singular_values.iter().enumerate() {
        if *sv > cutoff {
            let col = u.column(j);
            r -= col * col.dot(g);
        }
    }
    r
}

fn newton_direction(h: &DMatrix<f64>, g: &Vector, working: &DMatrix<f64>) -> Option<Vector> {
    let n = g.len();
    let k = working.nrows();
    let scale = h.diagonal().amax().max(1.0);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            kkt[(i, i)] += reg;
        }
        if k > 0 {
            kkt.view_mut((n, 0), (k, n)).copy_from(working);
            kkt.view_mut((0, n), (n, k)).copy_from(&working.transpose());
        }
        let mut rhs = Vector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-g));
        if let Some(sol) = kkt.lu().solve(&rhs) {
            let d: Vector = sol.rows(0, n).into_owned();
            if d.iter().all(|v| v.is_finite()) && d.dot(g) < 0.0 {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-10 * scale } else { reg * 100.0 };
    }
    None
}

/// Damped Newton from a point satisfying the working-set equalities and all
/// blockers. Stops at reduced-gradient norm `tol`, at a blocking inequality,
/// or with `NoConvergence` after `max_iter` steps.
pub(crate) fn descend(
    obj: &LpObjective,
    x0: Vector,
    working: &DMatrix<f64>,
    blockers: &[Blocker<'_>],
    tol: f64,
    max_iter: usize,
) -> Result<Descent> {
    let mut x = x0;
    let mut g = obj.gradient(&x);
    let mut residual = reduced_gradient(&g, working).norm();
    for iter in 0..max_iter {
        if residual <= tol {
            return Ok(Descent {
                x,
                iterations: iter,
                blocked: None,
            });
        }
        let h = obj.hessian(&x);
        let d = newton_direction(&h, &g, working).unwrap_or_else(|| -reduced_gradient(&g, working));
        let slope = g.dot(&d);
        if slope >= 0.0 {
            break;
        }

        // Longest step keeping every blocker satisfied.
        let mut step_max = f64::INFINITY;
        let mut blocking = None;
        for (i, blk) in blockers.iter().enumerate() {
            let rate = blk.a.dot(&d);
            if rate > 1e-14 * blk.a.norm() * d.norm() {
                // slack at rounding level counts as active
                let ax = blk.a.dot(&x);
                let mut room = (blk.b - ax).max(0.0);
                if room <= 1e-13 * (blk.b.abs() + ax.abs()).max(1.0) {
                    room = 0.0;
                }
                let s = room / rate;
                if s < step_max {
                    step_max = s;
                    blocking = Some(i);
                }
            }
        }
        let mut alpha = step_max.min(1.0);
        let hit_blocker = step_max <= 1.0;

        let f0 = obj.value(&x);
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &d * alpha;
            let f1 = obj.value(&trial);
            let g1 = obj.gradient(&trial);
            let r1 = reduced_gradient(&g1, working).norm();
            let moved = trial != x;
            if alpha == 0.0 || moved && (f1 <= f0 + ARMIJO * alpha * slope || r1 <= (1.0 - ARMIJO * alpha) * residual) {
                let stopped_at_blocker = hit_blocker && alpha == step_max;
                x = trial;
                g = g1;
                residual = r1;
                accepted = true;
                if stopped_at_blocker {
                    return Ok(Descent {
                        x,
                        iterations: iter + 1,
                        blocked: blocking,
                    });
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // A stall with a residual at rounding level is as good as it gets.
    let stall_tol = 1e-8 * (1.0 + obj.target.norm());
    if residual <= tol.max(stall_tol) {
        return Ok(Descent {
            x,
            iterations: max_iter,
            blocked: None,
        });
    }
    Err(Error::NoConvergence {
        solver: "newton",
        iterations: max_iter,
        residual,
    })
}

/// Solves `Ju + K u = v` for `p < 2` in the dual variable `xi = Ju`, where
/// `u = J^{-1} xi` is smooth (exponent `q > 2`) and Newton does not
/// oscillate around coordinates near zero. `K` must be positive semidefinite.
pub(crate) fn solve_in_dual(v: &Vector, k: &DMatrix<f64>, p: f64, tol: f64) -> Result<Vector> {
    let q = p / (p - 1.0);
    let n = v.len();
    let residual = |xi: &Vector| -> Vector { xi + k * duality_map_unchecked(xi, q) - v };
    let mut xi = v.clone();
    let mut f = residual(&xi);
    for _ in 0..MAX_NEWTON_ITERS {
        let norm = f.norm();
        if lp_norm(&f, q) <= tol {
            return Ok(duality_map_unchecked(&xi, q));
        }
        // I + K DJ_q is nonsingular: K DJ_q has real nonnegative spectrum.
        let jac = DMatrix::identity(n, n) + k * stable_duality_jacobian(&xi, q);
        let Some(d) = jac.lu().solve(&(-&f)) else { break };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &xi + &d * alpha;
            let ft = residual(&trial);
            if ft.norm() <= (1.0 - ARMIJO * alpha) * norm {
                xi = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let res = lp_norm(&f, q);
    if res <= tol.max(1e-8 * (1.0 + v.norm())) {
        return Ok(duality_map_unchecked(&xi, q));
    }
    Err(Error::NoConvergence {
        solver: "dual newton",
        iterations: MAX_NEWTON_ITERS,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banach_space::duality_map_unchecked;

    #[test]
    fn unconstrained_minimizer_inverts_duality_map() {
        for p in [1.5, 3.0, 4.0] {
            let x = Vector::from_row_slice(&[0.3, -1.2, 0.9]);
            let v = duality_map_unchecked(&x, p);
            let obj = LpObjective::new(p, v);
            let out = descend(
                &obj,
                Vector::zeros(3).add_scalar(0.1),
                &DMatrix::zeros(0, 3),
                &[],
                1e-12,
                200,
            )
            .unwrap();
            assert!((out.x - x).amax() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn equality_constraint_is_preserved() {
        let p = 1.5;
        let target = Vector::from_row_slice(&[1.0, 1.0, 1.0]);
        let obj = LpObjective::new(p, target);
        let working = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let x0 = Vector::from_row_slice(&[1.0, 0.0, 0.0]);
        let out = descend(&obj, x0, &working, &[], 1e-12, 200).unwrap();
        assert!((out.x.sum() - 1.0).abs() < 1e-12);
        // symmetric problem: minimizer is the barycenter
        assert!((out.x[0] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn blocker_stops_the_step() {
        let obj = LpObjective::new(2.0, Vector::from_row_slice(&[2.0, 0.0]));
        let a = Vector::from_row_slice(&[1.0, 0.0]);
        let blockers = [Blocker { a: &a, b: 1.0 }];
        let out = descend(&obj, Vector::zeros(2), &DMatrix::zeros(0, 2), &blockers, 1e-12, 200).unwrap();
        assert_eq!(out.blocked, Some(0));
        assert!((out.x[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fd_fallback_kicks_in_for_degenerate_points() {
        // p = 4 at a point with a zero coordinate: analytic Jacobian is singular.
        let y = Vector::from_row_slice(&[1.0, 0.0]);
        let jac = stable_duality_jacobian(&y, 4.0);
        assert!(jac.iter().all(|v| v.is_finite()));
    }
}
