//! Randomized property battery over all modules.
//!
//! `phi`, projections and resolvents always come from the library; the
//! duality map appearing explicitly in each inequality is injectable, so a
//! broken map is caught as a mismatch against the library's `phi`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::banach_space::{duality_map_unchecked, inverse_duality_map, lp_norm, phi, SpaceGeometry, Vector};
use crate::convex_sets::{euclidean_projection, generalized_projection, ConvexSet, Halfspace};
use crate::error::Result;
use crate::monotone::{generalized_resolvent, MonotoneOp};
use crate::solver::{make_sfp_instance, StoppingRule};
use crate::wmapping::{NonexpansiveMap, WFamily};

/// `(x, p) -> J_p x`.
pub type DualityFn = fn(&Vector, f64) -> Vector;

const EXPONENTS: [f64; 4] = [1.5, 2.0, 3.0, 4.0];

pub fn exact_duality_map(x: &Vector, p: f64) -> Vector {
    duality_map_unchecked(x, p)
}

/// A deliberately wrong duality map, one percent too long.
#[doc(hidden)]
pub fn skewed_duality_map(x: &Vector, p: f64) -> Vector {
    duality_map_unchecked(x, p) * 1.01
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyRow {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest residual divided by its tolerance; a case passes at `<= 1`.
    pub worst_ratio: f64,
    /// What went wrong in the first failing case.
    pub first_failure: Option<String>,
}

impl PropertyRow {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryReport {
    pub seed: u64,
    pub rows: Vec<PropertyRow>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(PropertyRow::passed)
    }

    pub fn row(&self, name: &str) -> Option<&PropertyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = format!("property battery, seed {}\n", self.seed);
        let _ = writeln!(
            s,
            "{:<38} {:>6} {:>8} {:>10}  result",
            "property", "cases", "failures", "worst/tol"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<38} {:>6} {:>8} {:>10.3e}  {}",
                r.name,
                r.cases,
                r.failures,
                r.worst_ratio,
                if r.passed() { "PASS" } else { "FAIL" }
            );
        }
        for r in &self.rows {
            if let Some(e) = &r.first_failure {
                let _ = writeln!(s, "{}: {e}", r.name);
            }
        }
        let _ = writeln!(
            s,
            "{}",
            if self.all_passed() {
                "all properties hold"
            } else {
                "FAILED"
            }
        );
        s
    }
}

/// Collects per-case residuals for one property.
struct Tally {
    name: &'static str,
    cases: usize,
    failures: usize,
    worst_ratio: f64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            worst_ratio: 0.0,
            first_failure: None,
        }
    }

    /// Records a case whose residual must not exceed `tol`. Errors count as
    /// failures.
    fn record(&mut self, outcome: Result<(f64, f64)>) {
        self.cases += 1;
        let (ratio, why) = match outcome {
            Ok((residual, tol)) if residual.is_finite() => (
                residual.max(0.0) / tol,
                format!("residual {residual:e} exceeds tolerance {tol:e}"),
            ),
            Ok((residual, _)) => (f64::INFINITY, format!("residual is {residual}")),
            Err(e) => (f64::INFINITY, e.to_string()),
        };
        if ratio > 1.0 {
            self.failures += 1;
            self.first_failure
                .get_or_insert_with(|| format!("case {}: {why}", self.cases));
        }
        self.worst_ratio = self.worst_ratio.max(ratio);
    }

    fn finish(self) -> PropertyRow {
        PropertyRow {
            name: self.name,
            cases: self.cases,
            failures: self.failures,
            worst_ratio: self.worst_ratio,
            first_failure: self.first_failure,
        }
    }
}

pub struct Battery {
    seed: u64,
    cases: usize,
    duality: DualityFn,
}

impl Battery {
    /// 1000 cases per property with the library's duality map.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cases: 1000,
            duality: exact_duality_map,
        }
    }

    pub fn with_cases(mut self, cases: usize) -> Self {
        self.cases = cases;
        self
    }

    pub fn with_duality(mut self, duality: DualityFn) -> Self {
        self.duality = duality;
        self
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn run(&self) -> BatteryReport {
        let mut rows = vec![
            self.duality_identities(),
            self.phi_sandwich(),
            self.dual_convexity(),
            self.four_point_identity(),
            self.projection_inequalities(),
            self.resolvent_inequality(),
            self.obtuse_angle(),
            self.w_mapping(),
        ];
        rows.extend(self.solver_runs());
        BatteryReport { seed: self.seed, rows }
    }

    fn duality_identities(&self) -> PropertyRow {
        let mut t = Tally::new("duality map identities");
        let mut rng = self.rng(1);
        for _ in 0..self.cases {
            let (g, x) = random_point(&mut rng);
            t.record((|| {
                let jx = (self.duality)(&x, g.p());
                let nx = lp_norm(&x, g.p());
                let back = inverse_duality_map(&jx, &g)?;
                let r = (x.dot(&jx) - nx * nx)
                    .abs()
                    .max((lp_norm(&jx, g.q()) - nx).abs() * (1.0 + nx))
                    .max((back - &x).amax() * (1.0 + nx));
                Ok((r, 1e-9 * (1.0 + nx * nx)))
            })());
        }
        t.finish()
    }

    fn phi_sandwich(&self) -> PropertyRow {
        let mut t = Tally::new("phi sandwich");
        let mut rng = self.rng(2);
        for _ in 0..self.cases {
            let (g, x) = random_point(&mut rng);
            let y = random_vector(&mut rng, g.dim(), 3.0);
            let (nx, ny) = (lp_norm(&x, g.p()), lp_norm(&y, g.p()));
            // phi with the injected map on the cross term
            let f = nx * nx - 2.0 * x.dot(&(self.duality)(&y, g.p())) + ny * ny;
            let r = ((nx - ny).powi(2) - f).max(f - (nx + ny).powi(2));
            t.record(Ok((r, 1e-9 * (1.0 + (nx + ny).powi(2)))));
        }
        t.finish()
    }

    fn dual_convexity(&self) -> PropertyRow {
        let mut t = Tally::new("phi dual convexity");
        let mut rng = self.rng(3);
        for _ in 0..self.cases {
            let (g, x) = random_point(&mut rng);
            let y = random_vector(&mut rng, g.dim(), 3.0);
            let s = random_vector(&mut rng, g.dim(), 3.0);
            let lambda = rng.random_range(0.0..=1.0);
            t.record((|| {
                let j = self.duality;
                let mix = j(&x, g.p()) * lambda + j(&y, g.p()) * (1.0 - lambda);
                let m = inverse_duality_map(&mix, &g)?;
                let lhs = phi(&s, &m, &g)?;
                let rhs = lambda * phi(&s, &x, &g)? + (1.0 - lambda) * phi(&s, &y, &g)?;
                Ok((lhs - rhs, 1e-9 * (1.0 + rhs)))
            })());
        }
        t.finish()
    }

    fn four_point_identity(&self) -> PropertyRow {
        let mut t = Tally::new("three-point identity");
        let mut rng = self.rng(4);
        for _ in 0..self.cases {
            let (g, x) = random_point(&mut rng);
            let [y, z, w] = [(); 3].map(|_| random_vector(&mut rng, g.dim(), 3.0));
            t.record((|| {
                let j = self.duality;
                let lhs = 2.0 * (&x - &y).dot(&(j(&z, g.p()) - j(&w, g.p())));
                let rhs = phi(&x, &w, &g)? + phi(&y, &z, &g)? - phi(&x, &z, &g)? - phi(&y, &w, &g)?;
                let scale = [&x, &y, &z, &w].iter().map(|v| lp_norm(v, g.p()).powi(2)).sum::<f64>();
                Ok(((lhs - rhs).abs(), 1e-9 * (1.0 + scale)))
            })());
        }
        t.finish()
    }

    fn projection_inequalities(&self) -> PropertyRow {
        let mut t = Tally::new("projection inequalities");
        let mut rng = self.rng(5);
        for _ in 0..self.cases {
            let dim = rng.random_range(2..=3);
            let p = EXPONENTS[rng.random_range(0..EXPONENTS.len())];
            let g = SpaceGeometry::new(dim, p).expect("valid geometry");
            let set = random_polyhedron(&mut rng, dim);
            let x = random_vector(&mut rng, dim, 4.0);
            let y = euclidean_projection(&random_vector(&mut rng, dim, 4.0), &set, 1e-12).expect("nonempty");
            t.record((|| {
                let z = generalized_projection(&x, &set, &g, 1e-12)?;
                let inside = if set.contains(&z, 1e-9)? { 0.0 } else { f64::INFINITY };
                let first = phi(&y, &z, &g)? + phi(&z, &x, &g)? - phi(&y, &x, &g)?;
                let j = self.duality;
                let second = (&y - &z).dot(&(j(&x, p) - j(&z, p)));
                let scale = 1.0 + phi(&y, &x, &g)?;
                Ok((first.max(second).max(inside), 1e-8 * scale))
            })());
        }
        t.finish()
    }

    fn resolvent_inequality(&self) -> PropertyRow {
        let mut t = Tally::new("resolvent inequality");
        let mut rng = self.rng(6);
        for _ in 0..self.cases {
            let (g, x) = random_point(&mut rng);
            let (op, null) = random_operator(&mut rng, g.dim(), false);
            let r = rng.random_range(0.05..3.0);
            t.record((|| {
                let u = generalized_resolvent(&op, r, &x, &g, 1e-11)?;
                let lhs = phi(&null, &u, &g)? + phi(&u, &x, &g)?;
                let rhs = phi(&null, &x, &g)?;
                // the resolvent equation, through the injected map
                let j = self.duality;
                let eq = lp_norm(&(j(&u, g.p()) + op.eval(&u)? * r - j(&x, g.p())), g.q());
                let ratio = (lhs - rhs) / (1e-8 * (1.0 + rhs));
                Ok((ratio.max(eq / (1e-8 * (1.0 + lp_norm(&x, g.p())))), 1.0))
            })());
        }
        t.finish()
    }

    fn obtuse_angle(&self) -> PropertyRow {
        let mut t = Tally::new("resolvent obtuse angle (p = 2)");
        let mut rng = self.rng(7);
        for _ in 0..self.cases {
            let dim = rng.random_range(1..=4);
            let g = SpaceGeometry::euclidean(dim).expect("valid geometry");
            let x = random_vector(&mut rng, dim, 3.0);
            let (op, null) = random_operator(&mut rng, dim, true);
            let r = rng.random_range(0.05..3.0);
            t.record((|| {
                let u = generalized_resolvent(&op, r, &x, &g, 1e-12)?;
                let v = -(&u - &null).dot(&(self.duality)(&(&x - &u), 2.0));
                Ok((v, 1e-10 * (1.0 + x.norm_squared() + null.norm_squared())))
            })());
        }
        t.finish()
    }

    fn w_mapping(&self) -> PropertyRow {
        let mut t = Tally::new("W_n nonexpansive, fixes common points");
        let mut rng = self.rng(8);
        for _ in 0..self.cases {
            let (g, x) = random_point(&mut rng);
            let y = random_vector(&mut rng, g.dim(), 3.0);
            let fixed = random_vector(&mut rng, g.dim(), 1.0);
            let depth = rng.random_range(1..=8);
            let maps = (0..depth).map(|_| signed_permutation_map(&mut rng, &fixed)).collect();
            let lambdas = (0..depth).map(|_| rng.random_range(0.05..=0.9)).collect();
            let n = rng.random_range(1..=depth);
            t.record((|| {
                let fam = WFamily::new(maps, lambdas, 0.9)?;
                let p = g.p();
                let expand = lp_norm(&(fam.apply_wn(n, &x)? - fam.apply_wn(n, &y)?), p) - lp_norm(&(&x - &y), p);
                let drift = lp_norm(&(fam.apply_wn(n, &fixed)? - &fixed), p);
                Ok((expand.max(drift), 1e-12 * (1.0 + lp_norm(&x, p) + lp_norm(&y, p))))
            })());
        }
        t.finish()
    }

    /// Random 5x3 box split feasibility problems containing the origin.
    fn solver_runs(&self) -> [PropertyRow; 2] {
        let mut cuts = Tally::new("cuts contain x_{n+1} and solution");
        let mut lyapunov = Tally::new("phi(x_n, x_1) nondecreasing");
        let mut rng = self.rng(9);
        const STEPS: usize = 50;
        let mut k = 0;
        // runs may stop early, so draw instances until enough steps are checked
        while cuts.cases < self.cases {
            k += 1;
            let p = if k % 4 == 3 { 3.0 } else { 2.0 };
            let outcome = random_sfp_run(&mut rng, p, STEPS);
            let states = match outcome {
                Ok(states) => states,
                Err(e) => {
                    cuts.record(Err(e.clone()));
                    lyapunov.record(Err(e));
                    continue;
                }
            };
            let zero = Vector::zeros(3);
            let mut prev = 0.0;
            for st in &states {
                let worst = st
                    .cuts
                    .iter()
                    .map(|h| h.violation(&st.x_next).max(h.violation(&zero)))
                    .fold(f64::NEG_INFINITY, f64::max);
                cuts.record(Ok((worst, 1e-8)));
                lyapunov.record(Ok((prev - st.diagnostics.phi_x1, 1e-10)));
                prev = st.diagnostics.phi_x1;
            }
        }
        [cuts.finish(), lyapunov.finish()]
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vector {
    Vector::from_fn(dim, |_, _| rng.random_range(-scale..scale))
}

fn random_point(rng: &mut ChaCha8Rng) -> (SpaceGeometry, Vector) {
    let dim = rng.random_range(1..=4);
    let p = EXPONENTS[rng.random_range(0..EXPONENTS.len())];
    let g = SpaceGeometry::new(dim, p).expect("valid geometry");
    (g, random_vector(rng, dim, 3.0))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

/// A box, a halfspace, or a box cut by a halfspace through its interior.
fn random_polyhedron(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    let lo = Vector::from_fn(dim, |_, _| rng.random_range(-2.0..0.0));
    let hi = Vector::from_fn(dim, |_, _| rng.random_range(0.1..2.0));
    let mut normal = random_vector(rng, dim, 1.0);
    normal[0] += 0.5;
    let cut = Halfspace::new(normal, rng.random_range(0.0..1.0)).expect("finite");
    let boxed = ConvexSet::boxed(lo, hi).expect("lo < hi");
    match rng.random_range(0..3) {
        0 => boxed,
        1 => ConvexSet::halfspaces(dim, vec![cut]).expect("matching dims"),
        _ => ConvexSet::intersection(boxed, vec![cut]).expect("matching dims"),
    }
}

/// An operator with a known null point. Indicators only when `indicator`.
fn random_operator(rng: &mut ChaCha8Rng, dim: usize, indicator: bool) -> (MonotoneOp, Vector) {
    match rng.random_range(0..if indicator { 3 } else { 2 }) {
        0 => (
            MonotoneOp::scaling(rng.random_range(0.1..3.0)).expect("positive"),
            Vector::zeros(dim),
        ),
        1 => {
            let q = random_orthogonal(rng, dim);
            let mut eig = Vector::from_fn(dim, |_, _| rng.random_range(0.1..3.0));
            eig[dim - 1] = 0.0;
            let b = &q * DMatrix::from_diagonal(&eig) * q.transpose();
            let b = (&b + b.transpose()) * 0.5;
            let null = q.column(dim - 1) * rng.random_range(-2.0..2.0);
            (MonotoneOp::linear_psd(b).expect("psd by construction"), null)
        }
        _ => {
            let set = random_polyhedron(rng, dim.max(1));
            let null = euclidean_projection(&random_vector(rng, dim, 2.0), &set, 1e-12).expect("nonempty");
            (MonotoneOp::indicator(set), null)
        }
    }
}

/// `x -> P (x - z) + z` with `P` a scaled signed permutation, an isometry of
/// every `l_p` up to the scale.
fn signed_permutation_map(rng: &mut ChaCha8Rng, z: &Vector) -> NonexpansiveMap {
    let dim = z.len();
    let mut perm: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let scale = rng.random_range(0.2..=1.0);
    let mut m = DMatrix::zeros(dim, dim);
    for (i, &j) in perm.iter().enumerate() {
        m[(i, j)] = if rng.random_bool(0.5) { scale } else { -scale };
    }
    let offset = z - &m * z;
    NonexpansiveMap::AffineContraction { matrix: m, offset }
}

fn random_sfp_run(rng: &mut ChaCha8Rng, p: f64, steps: usize) -> Result<Vec<crate::solver::IterateState>> {
    let ge = SpaceGeometry::new(3, p)?;
    let gf = SpaceGeometry::new(5, p)?;
    let a = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
    let c = ConvexSet::boxed(
        Vector::from_fn(3, |_, _| rng.random_range(-2.0..-0.5)),
        Vector::from_fn(3, |_, _| rng.random_range(0.5..2.0)),
    )?;
    let q = ConvexSet::boxed(
        Vector::from_fn(5, |_, _| rng.random_range(-0.3..-0.05)),
        Vector::from_fn(5, |_, _| rng.random_range(0.05..0.3)),
    )?;
    let x1 = euclidean_projection(&random_vector(rng, 3, 3.0), &c, 1e-12)?;
    let inst = make_sfp_instance(ge, gf, a, c, q, x1)?;
    let stop = StoppingRule {
        tol: 0.0,
        max_iters: steps,
        ..Default::default()
    };
    Ok(inst.run(&stop)?.states)
}
