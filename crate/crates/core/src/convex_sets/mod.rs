//! Closed convex sets, membership, and projections.
//!
//! Two projections are provided. [`euclidean_projection`] is the metric
//! projection in the Euclidean norm. [`generalized_projection`] minimizes
//! `phi(., x)` over the set, which in `l_p` with `p != 2` differs from the
//! metric projection and is characterized by
//!
//! ```text
//! <y - z, Jx - Jz> <= 0   for all y in S,   z = Pi_S(x).
//! ```
//!
//! Balls are always Euclidean balls, independent of the ambient exponent, so a
//! set fully describes itself without a geometry.

mod least_distance;
mod lyapunov;

use crate::banach_space::{SpaceGeometry, Vector};
use crate::error::{Error, Result};

pub(crate) use least_distance::least_distance;

/// `{ z : <a, z> <= b }`. A zero normal with `b >= 0` is the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    a: Vector,
    b: f64,
}

impl Halfspace {
    pub fn new(a: Vector, b: f64) -> Result<Self> {
        if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("halfspace"));
        }
        if a.iter().all(|v| *v == 0.0) && b < 0.0 {
            return Err(Error::EmptySet(format!("degenerate halfspace 0 <= {b}")));
        }
        Ok(Self { a, b })
    }

    pub fn normal(&self) -> &Vector {
        &self.a
    }

    pub fn offset(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn is_full_space(&self) -> bool {
        self.a.iter().all(|v| *v == 0.0)
    }

    /// `<a, x> - b`; positive means violated.
    pub fn violation(&self, x: &Vector) -> f64 {
        self.a.dot(x) - self.b
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.violation(x) <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    FullSpace {
        dim: usize,
    },
    Box {
        lo: Vector,
        hi: Vector,
    },
    /// Euclidean ball.
    Ball {
        center: Vector,
        radius: f64,
    },
    HalfspaceIntersection {
        dim: usize,
        halfspaces: Vec<Halfspace>,
    },
    IntersectionWith {
        base: Box<ConvexSet>,
        cuts: Vec<Halfspace>,
    },
}

/// A nonempty-by-construction (except for halfspace intersections, whose
/// emptiness is detected lazily) closed convex set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSet {
    kind: SetKind,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_finite(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

impl ConvexSet {
    pub fn full_space(dim: usize) -> Self {
        Self {
            kind: SetKind::FullSpace { dim },
        }
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        check_finite(&lo, "box bounds")?;
        check_finite(&hi, "box bounds")?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidParameter("box requires lo <= hi componentwise".into()));
        }
        Ok(Self {
            kind: SetKind::Box { lo, hi },
        })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        check_finite(&center, "ball center")?;
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be >= 0, got {radius}"
            )));
        }
        Ok(Self {
            kind: SetKind::Ball { center, radius },
        })
    }

    pub fn halfspaces(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self> {
        for h in &halfspaces {
            check_dim(dim, h.dim())?;
        }
        Ok(Self {
            kind: SetKind::HalfspaceIntersection { dim, halfspaces },
        })
    }

    pub fn intersection(base: ConvexSet, cuts: Vec<Halfspace>) -> Result<Self> {
        for h in &cuts {
            check_dim(base.dim(), h.dim())?;
        }
        Ok(Self {
            kind: SetKind::IntersectionWith {
                base: Box::new(base),
                cuts,
            },
        })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SetKind::FullSpace { dim } | SetKind::HalfspaceIntersection { dim, .. } => *dim,
            SetKind::Box { lo, .. } => lo.len(),
            SetKind::Ball { center, .. } => center.len(),
            SetKind::IntersectionWith { base, .. } => base.dim(),
        }
    }

    /// Every defining constraint holds within additive `tol`.
    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        Ok(self.contains_unchecked(x, tol))
    }

    fn contains_unchecked(&self, x: &Vector, tol: f64) -> bool {
        match &self.kind {
            SetKind::FullSpace { .. } => true,
            SetKind::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            SetKind::Ball { center, radius } => (x - center).norm() <= radius + tol,
            SetKind::HalfspaceIntersection { halfspaces, .. } => halfspaces.iter().all(|h| h.contains(x, tol)),
            SetKind::IntersectionWith { base, cuts } => {
                base.contains_unchecked(x, tol) && cuts.iter().all(|h| h.contains(x, tol))
            }
        }
    }

    /// The set as `{ z : <a_i, z> <= b_i }`, or `None` for a ball.
    pub(crate) fn linear_rows(&self) -> Option<Vec<(Vector, f64)>> {
        match &self.kind {
            SetKind::FullSpace { .. } => Some(Vec::new()),
            SetKind::Box { lo, hi } => {
                let n = lo.len();
                let mut rows = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let mut e = Vector::zeros(n);
                    e[i] = 1.0;
                    rows.push((-&e, -lo[i]));
                    rows.push((e, hi[i]));
                }
                Some(rows)
            }
            SetKind::Ball { .. } => None,
            SetKind::HalfspaceIntersection { halfspaces, .. } => Some(
                halfspaces
                    .iter()
                    .filter(|h| !h.is_full_space())
                    .map(|h| (h.a.clone(), h.b))
                    .collect(),
            ),
            SetKind::IntersectionWith { base, cuts } => {
                let mut rows = base.linear_rows()?;
                rows.extend(cuts.iter().filter(|h| !h.is_full_space()).map(|h| (h.a.clone(), h.b)));
                Some(rows)
            }
        }
    }
}

/// Free-function form of [`ConvexSet::contains`].
pub fn contains(set: &ConvexSet, x: &Vector, tol: f64) -> Result<bool> {
    set.contains(x, tol)
}

/// Metric projection in the Euclidean norm.
pub fn euclidean_projection(x: &Vector, set: &ConvexSet, tol: f64) -> Result<Vector> {
    check_dim(set.dim(), x.len())?;
    check_finite(x, "vector")?;
    match &set.kind {
        SetKind::FullSpace { .. } => Ok(x.clone()),
        SetKind::Box { lo, hi } => Ok(Vector::from_iterator(
            x.len(),
            x.iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )),
        SetKind::Ball { center, radius } => {
            let d = x - center;
            let dist = d.norm();
            if dist <= *radius {
                Ok(x.clone())
            } else {
                Ok(center + d * (*radius / dist))
            }
        }
        SetKind::HalfspaceIntersection { .. } => {
            let rows = set.linear_rows().unwrap_or_default();
            if x.len() == 1 {
                return interval_projection(x, &rows, tol);
            }
            least_distance(x, &[], &rows)
        }
        SetKind::IntersectionWith { base, cuts } => {
            let g = SpaceGeometry::euclidean(x.len())?;
            project_halfspace_intersection(x, cuts, base, &g, tol)
        }
    }
}

/// The minimizer of `phi(., x)` over `set`.
///
/// Coincides with [`euclidean_projection`] when `p = 2`, and in dimension one
/// for every `p` (the duality map is the identity there).
pub fn generalized_projection(x: &Vector, set: &ConvexSet, g: &SpaceGeometry, tol: f64) -> Result<Vector> {
    g.check(x)?;
    check_dim(g.dim(), set.dim())?;
    if g.is_hilbert() || g.dim() == 1 {
        return euclidean_projection(x, set, tol);
    }
    match &set.kind {
        SetKind::FullSpace { .. } => Ok(x.clone()),
        SetKind::Ball { center, radius } => lyapunov::ball(x, center, *radius, g.p(), tol),
        SetKind::IntersectionWith { base, cuts } => project_halfspace_intersection(x, cuts, base, g, tol),
        SetKind::Box { .. } | SetKind::HalfspaceIntersection { .. } => {
            if set.contains_unchecked(x, 0.0) {
                return Ok(x.clone());
            }
            let rows = set.linear_rows().unwrap_or_default();
            lyapunov::polyhedral(x, &rows, g.p(), tol)
        }
    }
}

/// Exact projection in one dimension: every row bounds the coordinate from
/// one side.
fn interval_projection(x: &Vector, rows: &[(Vector, f64)], tol: f64) -> Result<Vector> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (a, b) in rows {
        let a = a[0];
        if a > 0.0 {
            hi = hi.min(b / a);
        } else if a < 0.0 {
            lo = lo.max(b / a);
        } else if *b < 0.0 {
            return Err(Error::EmptySet(format!("constraint 0 <= {b}")));
        }
    }
    if lo > hi {
        if lo - hi > tol {
            return Err(Error::EmptySet(format!("interval [{lo}, {hi}] is empty")));
        }
        return Ok(Vector::from_element(1, 0.5 * (lo + hi)));
    }
    Ok(Vector::from_element(1, x[0].clamp(lo, hi)))
}

/// Number of cuts up to which the exact subset enumeration is used.
const MAX_ENUMERATED_CUTS: usize = 12;

/// Generalized projection of `x` onto `base ∩ cuts`.
///
/// For `p = 2` every subset of the cuts is tried as an equality set: the
/// least-distance point of `base ∩ {<a_i, z> = b_i : i in subset}` is computed
/// exactly and the feasible candidate nearest to `x` wins. Ties go to the
/// smaller subset, then to the lexicographically smaller point. For `p != 2`
/// an active-set method with Newton subproblems is used, started from the
/// Euclidean projection.
///
/// Zero-normal cuts with `b >= 0` are ignored; with `b < 0` the set is empty.
pub fn project_halfspace_intersection(
    x: &Vector,
    cuts: &[Halfspace],
    base: &ConvexSet,
    g: &SpaceGeometry,
    tol: f64,
) -> Result<Vector> {
    g.check(x)?;
    check_dim(g.dim(), base.dim())?;
    let mut active: Vec<&Halfspace> = Vec::with_capacity(cuts.len());
    for cut in cuts {
        check_dim(g.dim(), cut.dim())?;
        if cut.is_full_space() {
            if cut.b < 0.0 {
                return Err(Error::EmptySet(format!("degenerate cut 0 <= {}", cut.b)));
            }
            continue;
        }
        active.push(cut);
    }
    if active.is_empty() {
        return generalized_projection(x, base, g, tol);
    }
    let mut rows = base
        .linear_rows()
        .ok_or_else(|| Error::Unsupported("intersection of halfspace cuts with a ball".into()))?;
    let base_rows = rows.len();
    rows.extend(active.iter().map(|h| (h.a.clone(), h.b)));

    if g.dim() == 1 {
        return interval_projection(x, &rows, tol);
    }
    if !g.is_hilbert() {
        if rows.iter().all(|(a, b)| a.dot(x) <= *b) {
            return Ok(x.clone());
        }
        return lyapunov::polyhedral(x, &rows, g.p(), tol);
    }

    // Also the infeasibility check: the dual method reports an empty set.
    let direct = least_distance(x, &[], &rows)?;
    let m = active.len();
    if m > MAX_ENUMERATED_CUTS {
        return Ok(direct);
    }
    let base_rows = &rows[..base_rows];

    let mut best: Option<(f64, usize, Vector)> = None;
    let mut subsets: Vec<u32> = (0..(1u32 << m)).collect();
    subsets.sort_by_key(|s| (s.count_ones(), *s));
    for subset in subsets {
        let eq: Vec<(Vector, f64)> = (0..m)
            .filter(|i| subset & (1 << i) != 0)
            .map(|i| (active[i].a.clone(), active[i].b))
            .collect();
        let candidate = match least_distance(x, &eq, base_rows) {
            Ok(z) => z,
            Err(Error::EmptySet(_)) => continue,
            Err(e) => return Err(e),
        };
        if !active.iter().all(|h| h.contains(&candidate, tol)) {
            continue;
        }
        let dist = (&candidate - x).norm_squared();
        let card = eq.len();
        let better = match &best {
            None => true,
            Some((bd, bc, bz)) => {
                let tie = 1e-12 * (1.0 + bd.abs());
                if dist < bd - tie {
                    true
                } else if (dist - bd).abs() <= tie {
                    card < *bc || (card == *bc && lex_less(&candidate, bz))
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((dist, card, candidate));
        }
    }
    Ok(best.map(|(_, _, z)| z).unwrap_or(direct))
}

fn lex_less(a: &Vector, b: &Vector) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}
