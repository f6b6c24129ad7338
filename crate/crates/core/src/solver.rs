//! The hybrid projection iteration for the split common null point problem.
//!
//! One step from `x_n`:
//!
//! ```text
//! u_n = J^{-1}((1 - a_n) J x_n + a_n J P_C J^{-1}(s_n J W_n x_n + (1 - s_n) J S x_n))
//! z_n = resolvent(M1, lambda_n, u_n + e_n)
//! w_n = resolvent(M2, mu_n, A z_n)
//! y_n = P_C J^{-1}(J z_n - gamma A^T J_F(A z_n - w_n))
//! x_{n+1} = P_{C_n ∩ D_n ∩ Q_n} x_1
//! ```
//!
//! where `P` is the generalized projection and the cuts are
//!
//! ```text
//! C_n = {z in C : <w_n - A z, J_F(A z_n - w_n)> >= 0}
//! D_n = {z : phi(z, z_n) <= phi(z, u_n + e_n)}
//! Q_n = {z : <x_n - z, J x_1 - J x_n> >= 0}
//! ```
//!
//! All three are halfspaces containing the solution set, so the iterates
//! converge strongly to the generalized projection of `x_1` onto it. `y_n` does
//! not feed the update; `|x_n - y_n|` is only reported.

use nalgebra::DMatrix;

use crate::banach_space::{duality_map_unchecked, lp_norm, phi_unchecked, SpaceGeometry, Vector};
use crate::convex_sets::{generalized_projection, project_halfspace_intersection, ConvexSet, Halfspace};
use crate::error::{Error, Result};
use crate::monotone::{generalized_resolvent, MonotoneOp};
use crate::wmapping::{NonexpansiveMap, WFamily, DEFAULT_DEPTH};

/// Tolerance handed to projections and resolvents inside a step.
const INNER_TOL: f64 = 1e-12;
/// Tolerance for `x_1 ∈ C`.
const MEMBERSHIP_TOL: f64 = 1e-10;

/// A scalar sequence indexed from `n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarRule {
    Constant(f64),
    /// `scale / (n + shift)`.
    Reciprocal {
        scale: f64,
        shift: f64,
    },
    /// `n / (n + shift)`.
    Ratio {
        shift: f64,
    },
    /// Listed values; the last one repeats.
    Explicit(Vec<f64>),
}

impl ScalarRule {
    pub fn at(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            Self::Constant(c) => *c,
            Self::Reciprocal { scale, shift } => scale / (nf + shift),
            Self::Ratio { shift } => nf / (nf + shift),
            Self::Explicit(v) => v[(n - 1).min(v.len() - 1)],
        }
    }

    /// Whether every term lies in the open interval `(0, 1)`.
    fn check_unit(&self, name: &str) -> Result<()> {
        let ok = match self {
            Self::Constant(c) => *c > 0.0 && *c < 1.0,
            Self::Reciprocal { scale, shift } => *scale > 0.0 && *shift > -1.0 && scale / (1.0 + shift) < 1.0,
            Self::Ratio { shift } => *shift > 0.0,
            Self::Explicit(v) => !v.is_empty() && v.iter().all(|t| *t > 0.0 && *t < 1.0),
        };
        self.check_finite(name)?;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{name} must lie in (0, 1) for every n: {self:?}"
            )))
        }
    }

    /// Whether every term is at least `floor`.
    fn check_floor(&self, name: &str, floor: f64) -> Result<()> {
        let ok = match self {
            Self::Constant(c) => *c >= floor,
            // tends to zero
            Self::Reciprocal { .. } => false,
            Self::Ratio { shift } => *shift > -1.0 && (*shift <= 0.0 || 1.0 / (1.0 + shift) >= floor),
            Self::Explicit(v) => !v.is_empty() && v.iter().all(|t| *t >= floor),
        };
        self.check_finite(name)?;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{name} must stay >= {floor} for every n: {self:?}"
            )))
        }
    }

    fn check_finite(&self, name: &str) -> Result<()> {
        let finite = match self {
            Self::Constant(c) => c.is_finite(),
            Self::Reciprocal { scale, shift } => scale.is_finite() && shift.is_finite(),
            Self::Ratio { shift } => shift.is_finite(),
            Self::Explicit(v) => v.iter().all(|t| t.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} has non-finite parameters")))
        }
    }
}

/// The error sequence `e_n`.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorRule {
    Zero,
    /// `direction / n`.
    Reciprocal {
        direction: Vector,
    },
    /// Listed vectors; the last one repeats.
    Explicit(Vec<Vector>),
}

impl ErrorRule {
    pub fn at(&self, n: usize, dim: usize) -> Vector {
        match self {
            Self::Zero => Vector::zeros(dim),
            Self::Reciprocal { direction } => direction / n as f64,
            Self::Explicit(v) => v[(n - 1).min(v.len() - 1)].clone(),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        let vectors: Vec<&Vector> = match self {
            Self::Zero => Vec::new(),
            Self::Reciprocal { direction } => vec![direction],
            Self::Explicit(v) if v.is_empty() => {
                return Err(Error::InvalidParameter("empty error sequence".into()));
            }
            Self::Explicit(v) => v.iter().collect(),
        };
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite("error sequence"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSchedules {
    pub alpha: ScalarRule,
    pub sigma: ScalarRule,
    pub lambda: ScalarRule,
    pub mu: ScalarRule,
    pub error: ErrorRule,
    /// Lower bound `a` for `lambda_n` and `mu_n`.
    pub floor: f64,
}

impl Default for ParameterSchedules {
    fn default() -> Self {
        Self {
            alpha: ScalarRule::Reciprocal { scale: 1.0, shift: 1.0 },
            sigma: ScalarRule::Ratio { shift: 1.0 },
            lambda: ScalarRule::Constant(0.25),
            mu: ScalarRule::Constant(0.25),
            error: ErrorRule::Zero,
            floor: 0.01,
        }
    }
}

impl ParameterSchedules {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "floor must be > 0, got {}",
                self.floor
            )));
        }
        self.alpha.check_unit("alpha")?;
        self.sigma.check_unit("sigma")?;
        self.lambda.check_floor("lambda", self.floor)?;
        self.mu.check_floor("mu", self.floor)?;
        self.error.check(dim)
    }
}

/// Everything needed to build a [`ProblemInstance`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub ge: SpaceGeometry,
    pub gf: SpaceGeometry,
    /// `dim F x dim E`.
    pub a: DMatrix<f64>,
    pub m1: MonotoneOp,
    pub m2: MonotoneOp,
    pub c: ConvexSet,
    pub s: NonexpansiveMap,
    pub family: WFamily,
    pub schedules: ParameterSchedules,
    pub gamma: f64,
    /// Required unless both spaces are Hilbert, where it defaults to 1.
    pub c_const: Option<f64>,
    pub x1: Vector,
}

impl ProblemSpec {
    /// Split feasibility: `M1`, `M2` are the subdifferentials of the indicators
    /// of `c` and `q`, so both resolvents are generalized projections. Other
    /// fields take their defaults, with `gamma = 1 / (c |A|^2)`.
    pub fn sfp(
        ge: SpaceGeometry,
        gf: SpaceGeometry,
        a: DMatrix<f64>,
        c: ConvexSet,
        q: ConvexSet,
        x1: Vector,
    ) -> Result<Self> {
        let bound = operator_norm_estimate(&a, &ge, &gf);
        Ok(Self {
            ge,
            gf,
            m1: MonotoneOp::indicator(c.clone()),
            m2: MonotoneOp::indicator(q),
            c,
            s: NonexpansiveMap::Identity,
            family: WFamily::identity(DEFAULT_DEPTH)?,
            schedules: ParameterSchedules::default(),
            gamma: if bound > 0.0 { 1.0 / (bound * bound) } else { 1.0 },
            c_const: None,
            a,
            x1,
        })
    }
}

/// `|A|` for `p = 2` in both spaces, otherwise the conservative stand-in
/// `max(|A|_1, |A|_inf)` of induced norms.
pub fn operator_norm_estimate(a: &DMatrix<f64>, ge: &SpaceGeometry, gf: &SpaceGeometry) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if ge.is_hilbert() && gf.is_hilbert() {
        return a.clone().svd(false, false).singular_values.max();
    }
    let one = (0..a.ncols()).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let inf = (0..a.nrows()).map(|i| a.row(i).abs().sum()).fold(0.0, f64::max);
    one.max(inf)
}

/// A validated, immutable problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    spec: ProblemSpec,
    c_const: f64,
    a_norm: f64,
}

/// SFP instance with default schedules, identity maps and `gamma = 1/(c|A|^2)`.
pub fn make_sfp_instance(
    ge: SpaceGeometry,
    gf: SpaceGeometry,
    a: DMatrix<f64>,
    c: ConvexSet,
    q: ConvexSet,
    x1: Vector,
) -> Result<ProblemInstance> {
    let mut spec = ProblemSpec::sfp(ge, gf, a, c, q, x1)?;
    if !(spec.ge.is_hilbert() && spec.gf.is_hilbert()) {
        spec.c_const = Some(1.0);
    }
    ProblemInstance::new(spec)
}

fn check_op_dim(op: &MonotoneOp, dim: usize, name: &str) -> Result<()> {
    op.validate()?;
    match op.dim() {
        Some(d) if d != dim => Err(Error::InvalidParameter(format!(
            "{name} acts on dimension {d}, expected {dim}"
        ))),
        _ => Ok(()),
    }
}

impl ProblemInstance {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        let (n, m) = (spec.ge.dim(), spec.gf.dim());
        if spec.a.nrows() != m || spec.a.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "A is {}x{}, expected {m}x{n}",
                spec.a.nrows(),
                spec.a.ncols()
            )));
        }
        if spec.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("A"));
        }
        if spec.a.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParameter("A must be nonzero".into()));
        }
        check_op_dim(&spec.m1, n, "M1")?;
        check_op_dim(&spec.m2, m, "M2")?;
        if spec.c.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: spec.c.dim(),
            });
        }
        spec.s.validate(&spec.ge)?;
        spec.family.validate(&spec.ge)?;
        spec.schedules.validate(n)?;

        let hilbert = spec.ge.is_hilbert() && spec.gf.is_hilbert();
        let c_const = match spec.c_const {
            Some(c) if c.is_finite() && c > 0.0 => c,
            Some(c) => return Err(Error::InvalidParameter(format!("c_const must be > 0, got {c}"))),
            None if hilbert => 1.0,
            None => {
                return Err(Error::InvalidParameter("c_const is required when p != 2".into()));
            }
        };
        let a_norm = operator_norm_estimate(&spec.a, &spec.ge, &spec.gf);
        let gamma_max = 2.0 / (c_const * a_norm * a_norm);
        if !(spec.gamma > 0.0 && spec.gamma < gamma_max) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {} outside (0, {gamma_max})",
                spec.gamma
            )));
        }
        spec.ge.check(&spec.x1)?;
        if !spec.c.contains(&spec.x1, MEMBERSHIP_TOL)? {
            return Err(Error::InvalidParameter("x1 must lie in C".into()));
        }
        Ok(Self { spec, c_const, a_norm })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn x1(&self) -> &Vector {
        &self.spec.x1
    }

    /// The constant actually used in the `gamma` bound.
    pub fn c_const(&self) -> f64 {
        self.c_const
    }

    pub fn operator_norm(&self) -> f64 {
        self.a_norm
    }

    /// One iteration from `x_n`.
    pub fn step(&self, n: usize, x: &Vector) -> Result<IterateState> {
        if n == 0 {
            return Err(Error::InvalidParameter("iterations are numbered from 1".into()));
        }
        let sp = &self.spec;
        let (ge, gf) = (&sp.ge, &sp.gf);
        let (p, q) = (ge.p(), ge.q());
        ge.check(x)?;
        let sch = &sp.schedules;
        let (alpha, sigma) = (sch.alpha.at(n), sch.sigma.at(n));
        let (lambda, mu) = (sch.lambda.at(n), sch.mu.at(n));
        let e = sch.error.at(n, ge.dim());

        let jx = duality_map_unchecked(x, p);
        let wx = sp.family.apply_wn(n.min(sp.family.depth()), x)?;
        let sx = sp.s.apply(x)?;
        let mixed = duality_map_unchecked(&wx, p) * sigma + duality_map_unchecked(&sx, p) * (1.0 - sigma);
        let pc = generalized_projection(&duality_map_unchecked(&mixed, q), &sp.c, ge, INNER_TOL)?;
        let u = duality_map_unchecked(&(&jx * (1.0 - alpha) + duality_map_unchecked(&pc, p) * alpha), q);

        let u_e = &u + &e;
        let z = generalized_resolvent(&sp.m1, lambda, &u_e, ge, INNER_TOL)?;
        let az = &sp.a * &z;
        let w = generalized_resolvent(&sp.m2, mu, &az, gf, INNER_TOL)?;
        let residual = &az - &w;
        let jr = duality_map_unchecked(&residual, gf.p());
        let y_dual = duality_map_unchecked(&z, p) - sp.a.transpose() * &jr * sp.gamma;
        let y = generalized_projection(&duality_map_unchecked(&y_dual, q), &sp.c, ge, INNER_TOL)?;

        let cuts = [
            build_cut_c(&z, &w, &sp.a, gf)?,
            build_cut_d(&z, &u_e, ge)?,
            build_cut_q(x, &sp.x1, ge)?,
        ];
        let x_next = project_halfspace_intersection(&sp.x1, &cuts, &sp.c, ge, INNER_TOL).map_err(|err| match err {
            Error::EmptySet(msg) => Error::EmptySet(format!(
                "step {n}: C_n ∩ D_n ∩ Q_n is empty ({msg}); x_n = {:?}, cuts = {:?}",
                x.as_slice(),
                cuts.iter()
                    .map(|h| (h.normal().as_slice().to_vec(), h.offset()))
                    .collect::<Vec<_>>()
            )),
            other => other,
        })?;

        let diagnostics = Diagnostics {
            step_norm: lp_norm(&(&x_next - x), p),
            split_residual: lp_norm(&residual, gf.p()),
            fix_residual: lp_norm(&(x - &wx), p),
            phi_x1: phi_unchecked(x, &sp.x1, p),
            cond2_ratio: lp_norm(&(&jx - duality_map_unchecked(&u, p)), q) / alpha,
        };
        Ok(IterateState {
            n,
            x: x.clone(),
            u,
            z,
            w,
            y,
            cuts,
            x_next,
            diagnostics,
        })
    }

    /// Iterates from `x_1` until `|x_{n+1} - x_n| <= stop.tol` or the budget
    /// runs out.
    pub fn run(&self, stop: &StoppingRule) -> Result<RunOutcome> {
        let mut states = Vec::new();
        let mut x = self.spec.x1.clone();
        for n in 1..=stop.max_iters {
            let state = self.step(n, &x)?;
            let norm = lp_norm(&state.x_next, self.spec.ge.p());
            if norm.is_nan() || norm > stop.guard {
                return Err(Error::Diverged { n, norm });
            }
            let done = state.diagnostics.step_norm <= stop.tol;
            x = state.x_next.clone();
            states.push(state);
            if done {
                return Ok(RunOutcome {
                    states,
                    status: RunStatus::Converged,
                });
            }
        }
        Ok(RunOutcome {
            states,
            status: RunStatus::BudgetExhausted,
        })
    }
}

/// `C_n`: `<A^T J_F(A z_n - w_n), z> <= <w_n, J_F(A z_n - w_n)>`. The full
/// space when `A z_n = w_n`.
pub fn build_cut_c(z: &Vector, w: &Vector, a: &DMatrix<f64>, gf: &SpaceGeometry) -> Result<Halfspace> {
    gf.check(w)?;
    let jr = duality_map_unchecked(&(a * z - w), gf.p());
    Halfspace::new(a.transpose() * &jr, w.dot(&jr))
}

/// `D_n`: `phi(z, z_n) <= phi(z, u_n + e_n)`, i.e.
/// `<2(J(u_n + e_n) - J z_n), z> <= |u_n + e_n|^2 - |z_n|^2`.
pub fn build_cut_d(z: &Vector, u_e: &Vector, ge: &SpaceGeometry) -> Result<Halfspace> {
    ge.check(z)?;
    ge.check(u_e)?;
    let p = ge.p();
    let normal = (duality_map_unchecked(u_e, p) - duality_map_unchecked(z, p)) * 2.0;
    let (nu, nz) = (lp_norm(u_e, p), lp_norm(z, p));
    Halfspace::new(normal, nu * nu - nz * nz)
}

/// `Q_n`: `<J x_1 - J x_n, z> <= <J x_1 - J x_n, x_n>`. The full space at
/// `x_n = x_1`.
pub fn build_cut_q(x: &Vector, x1: &Vector, ge: &SpaceGeometry) -> Result<Halfspace> {
    ge.check(x)?;
    ge.check(x1)?;
    let p = ge.p();
    let normal = duality_map_unchecked(x1, p) - duality_map_unchecked(x, p);
    let offset = normal.dot(x);
    Halfspace::new(normal, offset)
}

/// Per-iteration residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `|x_{n+1} - x_n|`.
    pub step_norm: f64,
    /// `|A z_n - w_n|`.
    pub split_residual: f64,
    /// `|x_n - W_n x_n|`.
    pub fix_residual: f64,
    /// `phi(x_n, x_1)`, nondecreasing along the run.
    pub phi_x1: f64,
    /// `|J x_n - J u_n|_* / alpha_n`, which the convergence theory wants to vanish.
    pub cond2_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub n: usize,
    pub x: Vector,
    pub u: Vector,
    pub z: Vector,
    pub w: Vector,
    pub y: Vector,
    /// `C_n` (intersected with `C`), `D_n`, `Q_n`.
    pub cuts: [Halfspace; 3],
    pub x_next: Vector,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub tol: f64,
    pub max_iters: usize,
    /// `Diverged` once `|x_n|` exceeds this.
    pub guard: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100_000,
            guard: 1e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub states: Vec<IterateState>,
    pub status: RunStatus,
}

impl RunOutcome {
    /// The last computed iterate `x_{n+1}`.
    pub fn final_point(&self) -> Option<&Vector> {
        self.states.last().map(|s| &s.x_next)
    }
}
