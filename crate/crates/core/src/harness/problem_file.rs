//! Declarative JSON problem files.
//!
//! Every table rejects unknown fields. JSON has no NaN or infinity and
//! out-of-range literals fail to parse, so every number that gets through is
//! finite.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::banach_space::{SpaceGeometry, Vector};
use crate::convex_sets::{ConvexSet, Halfspace, SetKind};
use crate::error::{Error, Result};
use crate::monotone::MonotoneOp;
use crate::solver::{ErrorRule, ParameterSchedules, ProblemInstance, ProblemSpec, ScalarRule, StoppingRule};
use crate::wmapping::{NonexpansiveMap, WFamily, DEFAULT_DEPTH, DEFAULT_LAMBDA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub space_e: SpaceFile,
    pub space_f: SpaceFile,
    /// Row-major, `dim F` rows of length `dim E`.
    pub a: Vec<Vec<f64>>,
    pub m1: OperatorFile,
    pub m2: OperatorFile,
    pub c: SetFile,
    #[serde(default)]
    pub s: MapFile,
    #[serde(default)]
    pub family: FamilyFile,
    #[serde(default)]
    pub schedules: SchedulesFile,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_const: Option<f64>,
    pub x1: Vec<f64>,
    #[serde(default)]
    pub stop: StopFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub dim: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceFile {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetFile {
    FullSpace {
        dim: usize,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Halfspaces {
        dim: usize,
        halfspaces: Vec<HalfspaceFile>,
    },
    Intersection {
        base: Box<SetFile>,
        cuts: Vec<HalfspaceFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorFile {
    Scaling { a: f64 },
    LinearPsd { matrix: Vec<Vec<f64>> },
    Indicator { set: SetFile },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapFile {
    #[default]
    Identity,
    SetProjection {
        set: SetFile,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyFile {
    /// `depth` copies of one map with a common weight.
    Uniform { map: MapFile, depth: usize, lambda: f64 },
    Explicit {
        maps: Vec<MapFile>,
        lambdas: Vec<f64>,
        bound: f64,
    },
}

impl Default for FamilyFile {
    fn default() -> Self {
        Self::Uniform {
            map: MapFile::Identity,
            depth: DEFAULT_DEPTH,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleFile {
    Constant { value: f64 },
    Reciprocal { scale: f64, shift: f64 },
    Ratio { shift: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorFile {
    Zero,
    Reciprocal { direction: Vec<f64> },
    Explicit { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulesFile {
    pub alpha: RuleFile,
    pub sigma: RuleFile,
    pub lambda: RuleFile,
    pub mu: RuleFile,
    pub error: ErrorFile,
    pub floor: f64,
}

impl Default for SchedulesFile {
    fn default() -> Self {
        schedules_to_file(&ParameterSchedules::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopFile {
    pub tol: f64,
    pub max_iters: usize,
    pub guard: f64,
}

impl Default for StopFile {
    fn default() -> Self {
        let s = StoppingRule::default();
        Self {
            tol: s.tol,
            max_iters: s.max_iters,
            guard: s.guard,
        }
    }
}

impl ProblemFile {
    pub fn load(path: &Path) -> std::result::Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| HarnessError::Schema {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    /// Builds and validates the instance.
    pub fn to_instance(&self) -> Result<(ProblemInstance, StoppingRule)> {
        let ge = SpaceGeometry::new(self.space_e.dim, self.space_e.p)?;
        let gf = SpaceGeometry::new(self.space_f.dim, self.space_f.p)?;
        let family = match &self.family {
            FamilyFile::Uniform { map, depth, lambda } => WFamily::uniform(vec![map_from_file(map)?; *depth], *lambda)?,
            FamilyFile::Explicit { maps, lambdas, bound } => WFamily::new(
                maps.iter().map(map_from_file).collect::<Result<_>>()?,
                lambdas.clone(),
                *bound,
            )?,
        };
        let sch = &self.schedules;
        let schedules = ParameterSchedules {
            alpha: rule_from_file(&sch.alpha),
            sigma: rule_from_file(&sch.sigma),
            lambda: rule_from_file(&sch.lambda),
            mu: rule_from_file(&sch.mu),
            error: match &sch.error {
                ErrorFile::Zero => ErrorRule::Zero,
                ErrorFile::Reciprocal { direction } => ErrorRule::Reciprocal {
                    direction: vector(direction),
                },
                ErrorFile::Explicit { values } => ErrorRule::Explicit(values.iter().map(|v| vector(v)).collect()),
            },
            floor: sch.floor,
        };
        let spec = ProblemSpec {
            ge,
            gf,
            a: matrix(&self.a, "A")?,
            m1: operator_from_file(&self.m1)?,
            m2: operator_from_file(&self.m2)?,
            c: set_from_file(&self.c)?,
            s: map_from_file(&self.s)?,
            family,
            schedules,
            gamma: self.gamma,
            c_const: self.c_const,
            x1: vector(&self.x1),
        };
        let stop = StoppingRule {
            tol: self.stop.tol,
            max_iters: self.stop.max_iters,
            guard: self.stop.guard,
        };
        if !(stop.tol >= 0.0 && stop.guard > 0.0) {
            return Err(Error::InvalidParameter(
                "stopping rule needs tol >= 0 and guard > 0".into(),
            ));
        }
        Ok((ProblemInstance::new(spec)?, stop))
    }

    /// The file describing an existing instance.
    pub fn from_instance(inst: &ProblemInstance, stop: &StoppingRule) -> Self {
        let sp = inst.spec();
        let maps = sp.family.maps();
        let lambdas = sp.family.lambdas();
        let uniform = maps.iter().all(|m| *m == maps[0])
            && lambdas.iter().all(|l| *l == lambdas[0])
            && sp.family.bound() == lambdas[0];
        let family = if uniform {
            FamilyFile::Uniform {
                map: map_to_file(&maps[0]),
                depth: maps.len(),
                lambda: lambdas[0],
            }
        } else {
            FamilyFile::Explicit {
                maps: maps.iter().map(map_to_file).collect(),
                lambdas: lambdas.to_vec(),
                bound: sp.family.bound(),
            }
        };
        Self {
            space_e: SpaceFile {
                dim: sp.ge.dim(),
                p: sp.ge.p(),
            },
            space_f: SpaceFile {
                dim: sp.gf.dim(),
                p: sp.gf.p(),
            },
            a: rows(&sp.a),
            m1: operator_to_file(&sp.m1),
            m2: operator_to_file(&sp.m2),
            c: set_to_file(&sp.c),
            s: map_to_file(&sp.s),
            family,
            schedules: schedules_to_file(&sp.schedules),
            gamma: sp.gamma,
            c_const: sp.c_const,
            x1: sp.x1.as_slice().to_vec(),
            stop: StopFile {
                tol: stop.tol,
                max_iters: stop.max_iters,
                guard: stop.guard,
            },
        }
    }
}

fn vector(v: &[f64]) -> Vector {
    Vector::from_row_slice(v)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::InvalidParameter(format!("{what} must have at least one entry")));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::InvalidParameter(format!(
            "{what} is ragged: row of length {} in a matrix with {ncols} columns",
            r.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn halfspace_from_file(h: &HalfspaceFile) -> Result<Halfspace> {
    Halfspace::new(vector(&h.a), h.b)
}

fn halfspace_to_file(h: &Halfspace) -> HalfspaceFile {
    HalfspaceFile {
        a: h.normal().as_slice().to_vec(),
        b: h.offset(),
    }
}

fn set_from_file(s: &SetFile) -> Result<ConvexSet> {
    match s {
        SetFile::FullSpace { dim } => Ok(ConvexSet::full_space(*dim)),
        SetFile::Box { lo, hi } => ConvexSet::boxed(vector(lo), vector(hi)),
        SetFile::Ball { center, radius } => ConvexSet::ball(vector(center), *radius),
        SetFile::Halfspaces { dim, halfspaces } => {
            ConvexSet::halfspaces(*dim, halfspaces.iter().map(halfspace_from_file).collect::<Result<_>>()?)
        }
        SetFile::Intersection { base, cuts } => ConvexSet::intersection(
            set_from_file(base)?,
            cuts.iter().map(halfspace_from_file).collect::<Result<_>>()?,
        ),
    }
}

fn set_to_file(s: &ConvexSet) -> SetFile {
    match s.kind() {
        SetKind::FullSpace { dim } => SetFile::FullSpace { dim: *dim },
        SetKind::Box { lo, hi } => SetFile::Box {
            lo: lo.as_slice().to_vec(),
            hi: hi.as_slice().to_vec(),
        },
        SetKind::Ball { center, radius } => SetFile::Ball {
            center: center.as_slice().to_vec(),
            radius: *radius,
        },
        SetKind::HalfspaceIntersection { dim, halfspaces } => SetFile::Halfspaces {
            dim: *dim,
            halfspaces: halfspaces.iter().map(halfspace_to_file).collect(),
        },
        SetKind::IntersectionWith { base, cuts } => SetFile::Intersection {
            base: Box::new(set_to_file(base)),
            cuts: cuts.iter().map(halfspace_to_file).collect(),
        },
    }
}

fn operator_from_file(op: &OperatorFile) -> Result<MonotoneOp> {
    match op {
        OperatorFile::Scaling { a } => MonotoneOp::scaling(*a),
        OperatorFile::LinearPsd { matrix: m } => MonotoneOp::linear_psd(matrix(m, "operator matrix")?),
        OperatorFile::Indicator { set } => Ok(MonotoneOp::indicator(set_from_file(set)?)),
    }
}

fn operator_to_file(op: &MonotoneOp) -> OperatorFile {
    match op {
        MonotoneOp::Scaling(a) => OperatorFile::Scaling { a: *a },
        MonotoneOp::LinearPsd(b) => OperatorFile::LinearPsd { matrix: rows(b) },
        MonotoneOp::IndicatorSubdifferential(set) => OperatorFile::Indicator { set: set_to_file(set) },
    }
}

fn map_from_file(m: &MapFile) -> Result<NonexpansiveMap> {
    match m {
        MapFile::Identity => Ok(NonexpansiveMap::Identity),
        MapFile::SetProjection { set } => Ok(NonexpansiveMap::SetProjection(set_from_file(set)?)),
        MapFile::Affine { matrix: q, offset } => Ok(NonexpansiveMap::AffineContraction {
            matrix: matrix(q, "affine map")?,
            offset: vector(offset),
        }),
    }
}

fn map_to_file(m: &NonexpansiveMap) -> MapFile {
    match m {
        NonexpansiveMap::Identity => MapFile::Identity,
        NonexpansiveMap::SetProjection(set) => MapFile::SetProjection { set: set_to_file(set) },
        NonexpansiveMap::AffineContraction { matrix, offset } => MapFile::Affine {
            matrix: rows(matrix),
            offset: offset.as_slice().to_vec(),
        },
    }
}

fn rule_from_file(r: &RuleFile) -> ScalarRule {
    match r {
        RuleFile::Constant { value } => ScalarRule::Constant(*value),
        RuleFile::Reciprocal { scale, shift } => ScalarRule::Reciprocal {
            scale: *scale,
            shift: *shift,
        },
        RuleFile::Ratio { shift } => ScalarRule::Ratio { shift: *shift },
        RuleFile::Explicit { values } => ScalarRule::Explicit(values.clone()),
    }
}

fn rule_to_file(r: &ScalarRule) -> RuleFile {
    match r {
        ScalarRule::Constant(value) => RuleFile::Constant { value: *value },
        ScalarRule::Reciprocal { scale, shift } => RuleFile::Reciprocal {
            scale: *scale,
            shift: *shift,
        },
        ScalarRule::Ratio { shift } => RuleFile::Ratio { shift: *shift },
        ScalarRule::Explicit(values) => RuleFile::Explicit { values: values.clone() },
    }
}

fn schedules_to_file(s: &ParameterSchedules) -> SchedulesFile {
    SchedulesFile {
        alpha: rule_to_file(&s.alpha),
        sigma: rule_to_file(&s.sigma),
        lambda: rule_to_file(&s.lambda),
        mu: rule_to_file(&s.mu),
        error: match &s.error {
            ErrorRule::Zero => ErrorFile::Zero,
            ErrorRule::Reciprocal { direction } => ErrorFile::Reciprocal {
                direction: direction.as_slice().to_vec(),
            },
            ErrorRule::Explicit(values) => ErrorFile::Explicit {
                values: values.iter().map(|v| v.as_slice().to_vec()).collect(),
            },
        },
        floor: s.floor,
    }
}
