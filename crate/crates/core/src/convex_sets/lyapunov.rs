//! Generalized projections for `p != 2`, i.e. minimizers of
//! `phi(y, x) = |y|^2 - 2 <y, Jx> + |x|^2` over a set.

use nalgebra::DMatrix;

use super::least_distance;
use crate::banach_space::{duality_map_unchecked, lp_norm, Vector};
use crate::error::{Error, Result};
use crate::newton::{descend, reduced_gradient, stable_duality_jacobian, Blocker, LpObjective, MAX_NEWTON_ITERS};

const MAX_ACTIVE_SET_ROUNDS: usize = 100;

fn working_matrix(rows: &[(Vector, f64)], working: &[usize], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(working.len(), n);
    for (k, &i) in working.iter().enumerate() {
        m.set_row(k, &rows[i].0.transpose());
    }
    m
}

/// Generalized projection onto `{y : <a_i, y> <= b_i}`.
///
/// For `p > 2` a primal active-set method with damped Newton subproblems,
/// started from the Euclidean projection (which also detects emptiness). For
/// `p < 2` the primal Hessian blows up at zero coordinates, so the smooth
/// dual in the multipliers is solved instead.
pub(super) fn polyhedral(x: &Vector, rows: &[(Vector, f64)], p: f64, tol: f64) -> Result<Vector> {
    let start = least_distance(x, &[], rows)?;
    // unit normals keep tiny cuts from wrecking the working-set conditioning
    let rows: Vec<(Vector, f64)> = rows
        .iter()
        .filter_map(|(a, b)| {
            let s = a.norm();
            (s > 0.0).then(|| (a / s, b / s))
        })
        .collect();
    let rows = rows.as_slice();
    if p < 2.0 {
        return polyhedral_dual(x, rows, p, tol);
    }
    let n = x.len();
    let objective = LpObjective::new(p, duality_map_unchecked(x, p));
    let mut y = start;
    let mut working: Vec<usize> = Vec::new();
    let newton_tol = tol.min(1e-10);

    for _ in 0..MAX_ACTIVE_SET_ROUNDS {
        let g_work = working_matrix(rows, &working, n);
        let free: Vec<usize> = (0..rows.len()).filter(|i| !working.contains(i)).collect();
        let blockers: Vec<Blocker<'_>> = free
            .iter()
            .map(|&i| Blocker {
                a: &rows[i].0,
                b: rows[i].1,
            })
            .collect();
        let out = descend(&objective, y, &g_work, &blockers, newton_tol, MAX_NEWTON_ITERS)?;
        y = out.x;
        if let Some(k) = out.blocked {
            working.push(free[k]);
            continue;
        }
        if working.is_empty() {
            return Ok(y);
        }
        // KKT: grad + G^T mu = 0 with mu >= 0 for the inequalities.
        let grad = objective.gradient(&y);
        let gram = &g_work * g_work.transpose();
        let mu = -(gram
            .pseudo_inverse(1e-13)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            * (&g_work * &grad));
        let scale = grad.norm().max(1.0);
        let (worst, min_mu) = mu.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, v)| if *v < bv { (i, *v) } else { (bi, bv) },
        );
        if min_mu >= -1e-10 * scale {
            return Ok(y);
        }
        working.remove(worst);
    }
    let residual = reduced_gradient(&objective.gradient(&y), &working_matrix(rows, &working, n)).norm();
    Err(Error::NoConvergence {
        solver: "active-set projection",
        iterations: MAX_ACTIVE_SET_ROUNDS,
        residual,
    })
}

/// Projected Newton on the dual `min_{mu >= 0} |Jx - A^T mu|_q^2 / 2 + <b, mu>`,
/// whose minimizer gives `y = J^{-1}(Jx - A^T mu)`. Multipliers near zero
/// with a positive gradient are held at zero for the Newton step.
fn polyhedral_dual(x: &Vector, rows: &[(Vector, f64)], p: f64, tol: f64) -> Result<Vector> {
    let q = p / (p - 1.0);
    let (m, n) = (rows.len(), x.len());
    let a = working_matrix(rows, &(0..m).collect::<Vec<_>>(), n);
    let b = Vector::from_iterator(m, rows.iter().map(|r| r.1));
    let v = duality_map_unchecked(x, p);
    let primal = |mu: &Vector| duality_map_unchecked(&(&v - a.transpose() * mu), q);
    let value = |mu: &Vector| {
        let s = lp_norm(&(&v - a.transpose() * mu), q);
        0.5 * s * s + b.dot(mu)
    };
    let scale = 1.0 + lp_norm(x, p) + b.amax();
    let target = tol.min(1e-10) * scale;

    let mut mu = Vector::zeros(m);
    let mut iterations = 0;
    let mut pg_norm = f64::INFINITY;
    while iterations < MAX_NEWTON_ITERS {
        iterations += 1;
        let y = primal(&mu);
        let grad = &b - &a * &y;
        pg_norm = projected_gradient(&mu, &grad).amax();
        if pg_norm <= target {
            return Ok(y);
        }
        let eps = pg_norm.min(1e-3);
        let free: Vec<usize> = (0..m).filter(|&i| !(mu[i] <= eps && grad[i] > 0.0)).collect();

        let mut d = Vector::zeros(m);
        if !free.is_empty() {
            let af = working_matrix(rows, &free, n);
            let jac = stable_duality_jacobian(&(&v - a.transpose() * &mu), q);
            let mut h = &af * jac * af.transpose();
            let g_free = Vector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
            let reg = 1e-12 * h.diagonal().amax().max(1.0);
            for i in 0..free.len() {
                h[(i, i)] += reg;
            }
            let step = h
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&(-&g_free)))
                .unwrap_or_else(|| -&g_free);
            for (k, &i) in free.iter().enumerate() {
                d[i] = step[k];
            }
        }
        // held multipliers follow the negative gradient, clipped at zero
        for i in 0..m {
            if !free.contains(&i) {
                d[i] = -grad[i];
            }
        }

        let f0 = value(&mu);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = (&mu + &d * alpha).map(|t| t.max(0.0));
            // near the optimum the decrease in value drops below rounding,
            // so a shrinking projected gradient at flat value also counts
            let f1 = value(&trial);
            if f1 <= f0 + 1e-4 * grad.dot(&(&trial - &mu))
                || f1 <= f0 + 1e-14 * (1.0 + f0.abs())
                    && projected_gradient(&trial, &(&b - &a * primal(&trial))).amax() <= (1.0 - 1e-4 * alpha) * pg_norm
            {
                accepted = trial != mu;
                mu = trial;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let y = primal(&mu);
    if pg_norm <= 1e-8 * scale {
        return Ok(y);
    }
    Err(Error::NoConvergence {
        solver: "dual projection",
        iterations,
        residual: pg_norm,
    })
}

fn projected_gradient(mu: &Vector, grad: &Vector) -> Vector {
    Vector::from_fn(mu.len(), |i, _| if mu[i] > 0.0 { grad[i] } else { grad[i].min(0.0) })
}

/// Generalized projection onto the Euclidean ball `|y - c|_2 <= r`.
///
/// Outside the ball the minimizer solves `Jy - Jx + t (y - c) = 0` for the
/// multiplier `t > 0` at which `|y(t) - c| = r`; the distance is decreasing
/// in `t`, so `t` is found by bracketing and bisection.
pub(super) fn ball(x: &Vector, center: &Vector, radius: f64, p: f64, tol: f64) -> Result<Vector> {
    if (x - center).norm() <= radius {
        return Ok(x.clone());
    }
    if radius == 0.0 {
        return Ok(center.clone());
    }
    let n = x.len();
    let target = duality_map_unchecked(x, p);
    let no_rows = DMatrix::zeros(0, n);
    let newton_tol = tol.min(1e-10);
    let solve = |t: f64, start: Vector| -> Result<Vector> {
        let obj = LpObjective::new(p, target.clone()).with_anchor(t, center.clone(), 2.0);
        Ok(descend(&obj, start, &no_rows, &[], newton_tol, MAX_NEWTON_ITERS)?.x)
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut y = solve(hi, x.clone())?;
    let mut guard = 0;
    while (&y - center).norm() > radius {
        lo = hi;
        hi *= 4.0;
        y = solve(hi, y)?;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoConvergence {
                solver: "ball projection bracket",
                iterations: guard,
                residual: (&y - center).norm() - radius,
            });
        }
    }
    let mut best = y;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let ym = solve(mid, best.clone())?;
        let d = (&ym - center).norm();
        if d > radius {
            lo = mid;
        } else {
            hi = mid;
            best = ym;
        }
        if (radius - d).abs() <= 1e-3 * tol || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    // `best` is feasible; snap it onto the sphere when within rounding.
    let d = (&best - center).norm();
    if d > radius {
        best = center + (&best - center) * (radius / d);
    }
    Ok(best)
}
