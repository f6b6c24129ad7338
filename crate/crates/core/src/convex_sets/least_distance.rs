//! Exact Euclidean projection onto a polyhedron,
//!
//! ```text
//! min |z - x|^2 / 2   s.t.   <e_i, z> = f_i,   <a_j, z> <= b_j,
//! ```
//!
//! by the dual active-set method of Goldfarb and Idnani specialized to an
//! identity Hessian. The iteration starts at the unconstrained minimizer `x`
//! and adds one violated constraint at a time, dropping constraints whose
//! multipliers would turn negative. Active normals stay linearly independent,
//! the method terminates finitely, and an empty feasible set shows up as a
//! violated constraint that no multiplier step can repair.

use nalgebra::DMatrix;

use crate::banach_space::Vector;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Active {
    a: Vector,
    mult: f64,
    equality: bool,
}

fn violation_tol(a: &Vector, b: f64, z: &Vector) -> f64 {
    1e-13 * (1.0 + b.abs() + a.norm() * z.norm())
}

/// `r = (N N^T)^{-1} N a` and `w = a - N^T r` for the active normals `N`.
fn split(active: &[Active], a: &Vector) -> (Vector, Vector) {
    let k = active.len();
    if k == 0 {
        return (Vector::zeros(0), a.clone());
    }
    let n = a.len();
    let mut normals = DMatrix::zeros(k, n);
    for (i, act) in active.iter().enumerate() {
        normals.set_row(i, &act.a.transpose());
    }
    let gram = &normals * normals.transpose();
    let rhs = &normals * a;
    let r = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .pseudo_inverse(1e-14)
            .map(|pinv| pinv * &rhs)
            .unwrap_or_else(|_| Vector::zeros(k)),
    };
    let w = a - normals.transpose() * &r;
    (r, w)
}

/// Drives constraint `(a, b)` to activity. Returns `Ok(false)` when it is a
/// consistent linear combination of equality constraints already active.
fn add_constraint(
    z: &mut Vector,
    active: &mut Vec<Active>,
    a: Vector,
    b: f64,
    equality: bool,
    budget: &mut usize,
) -> Result<bool> {
    let mut mult_new = 0.0;
    loop {
        if *budget == 0 {
            return Err(Error::NoConvergence {
                solver: "least-distance",
                iterations: 0,
                residual: a.dot(z) - b,
            });
        }
        *budget -= 1;

        let slack = a.dot(z) - b;
        let (r, w) = split(active, &a);
        let w2 = w.norm_squared();
        let full_step = if w2 > 1e-20 * a.norm_squared() {
            slack / w2
        } else {
            f64::INFINITY
        };
        let mut partial_step = f64::INFINITY;
        let mut drop = None;
        for (j, act) in active.iter().enumerate() {
            if !act.equality && r[j] > 1e-14 {
                let t = act.mult / r[j];
                if t < partial_step {
                    partial_step = t;
                    drop = Some(j);
                }
            }
        }
        if full_step.is_infinite() && partial_step.is_infinite() {
            if slack <= violation_tol(&a, b, z) {
                return Ok(false);
            }
            return Err(Error::EmptySet(format!(
                "constraint with violation {slack:e} cannot be satisfied"
            )));
        }
        let t = full_step.min(partial_step);
        if full_step.is_finite() {
            *z -= &w * t;
        }
        for (j, act) in active.iter_mut().enumerate() {
            act.mult -= t * r[j];
        }
        mult_new += t;
        if full_step <= partial_step {
            active.push(Active {
                a,
                mult: mult_new,
                equality,
            });
            return Ok(true);
        }
        if let Some(j) = drop {
            active.remove(j);
        }
    }
}

/// Euclidean projection of `x` onto `{z : E z = f, A z <= b}`.
pub(crate) fn least_distance(x: &Vector, eq: &[(Vector, f64)], ineq: &[(Vector, f64)]) -> Result<Vector> {
    let n = x.len();
    let mut z = x.clone();
    let mut active: Vec<Active> = Vec::new();
    let mut budget = 20 * (n + eq.len() + ineq.len()) + 100;

    for (a, b) in eq {
        let slack = a.dot(&z) - b;
        let (a, b) = if slack < 0.0 { (-a, -b) } else { (a.clone(), *b) };
        if a.iter().all(|v| *v == 0.0) {
            if b.abs() > violation_tol(&a, b, &z) {
                return Err(Error::EmptySet(format!("equality 0 = {b}")));
            }
            continue;
        }
        add_constraint(&mut z, &mut active, a, b, true, &mut budget)?;
    }

    loop {
        let mut worst: Option<(usize, f64)> = None;
        for (i, (a, b)) in ineq.iter().enumerate() {
            let v = a.dot(&z) - b;
            if v > violation_tol(a, *b, &z) && worst.is_none_or(|(_, wv)| v > wv) {
                worst = Some((i, v));
            }
        }
        let Some((i, _)) = worst else {
            return Ok(z);
        };
        let (a, b) = &ineq[i];
        if a.iter().all(|v| *v == 0.0) {
            return Err(Error::EmptySet(format!("constraint 0 <= {b}")));
        }
        add_constraint(&mut z, &mut active, a.clone(), *b, false, &mut budget)?;
    }
}
