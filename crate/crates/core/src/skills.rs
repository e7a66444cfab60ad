//! Declarative discovery skills: a coordinate transform, an operator
//! whitelist and a set of physical constraints.
//!
//! Skills are JSON documents (`*.skill.json`, schema version 1). The same
//! schema is the response contract for skills synthesized by [`crate::agent`].

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_with_names, Expr, Operator, ParseError};

pub const SCHEMA_VERSION: u32 = 1;

const ISO_JSON: &str = include_str!("../assets/skills/hyperelastic_iso.skill.json");
const ANISO_JSON: &str = include_str!("../assets/skills/fiber_aniso.skill.json");

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("invalid skill JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("skill field `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("unsupported transform `{0}` (expected iso_invariants or aniso_invariants)")]
    UnsupportedTransform(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("operator `{op}` is not allowed by skill `{skill}`")]
    OperatorNotAllowed { op: Operator, skill: String },
    #[error("feature index {index} out of range for {count} features")]
    FeatureOutOfRange { index: usize, count: usize },
    #[error("exponent of pow must be a constant in skill `{0}`")]
    VariableExponent(String),
    #[error("expression does not fit the structure template: {0}")]
    Template(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

fn schema(field: &str, reason: impl Into<String>) -> SkillError {
    SkillError::Schema {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformId {
    /// `(Ĩ1, Ĩ2)`.
    IsoInvariants,
    /// `(Ĩ1, Ĩ2, Ĩ4)` with `Ĩ4 = I4 − 1` the squared fiber stretch minus one.
    AnisoInvariants,
}

impl TransformId {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformId::IsoInvariants => "iso_invariants",
            TransformId::AnisoInvariants => "aniso_invariants",
        }
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            TransformId::IsoInvariants => &["I1", "I2"],
            TransformId::AnisoInvariants => &["I1", "I2", "I4"],
        }
    }

    pub fn feature_count(self) -> usize {
        self.feature_names().len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Energy Hessian positive semi-definite (2×2: `det ≥ 0`, `tr ≥ 0`).
    HessianPsd,
    /// A scalar quantity is non-negative.
    QuantityNonnegative,
    /// `W = 0` in the undeformed state.
    ZeroAtReference,
    /// The fiber term vanishes for `Ĩ4 ≤ 0`.
    InactiveInCompression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintTarget {
    Energy,
    FiberTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDescriptor {
    pub kind: ConstraintKind,
    pub target: ConstraintTarget,
    /// Penalty weight, relative to the variance of the training stresses.
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    PrincipalStretchGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingDomain {
    pub mode: SamplingMode,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grid_n: usize,
    pub path_points: usize,
    /// Derive the stretch range from the data instead of `lambda_min/max`.
    pub auto_from_data: bool,
    #[serde(default = "default_margin")]
    pub data_margin: f64,
}

fn default_margin() -> f64 {
    1.1
}

impl SamplingDomain {
    fn validate(&self) -> Result<(), SkillError> {
        if !(self.lambda_min > 0.0 && self.lambda_min < 1.0) {
            return Err(schema("sampling.lambda_min", format!("must lie in (0, 1), got {}", self.lambda_min)));
        }
        if !(self.lambda_max > 1.0 && self.lambda_max.is_finite()) {
            return Err(schema("sampling.lambda_max", format!("must exceed 1, got {}", self.lambda_max)));
        }
        if self.grid_n < 4 {
            return Err(schema("sampling.grid_n", format!("must be at least 4, got {}", self.grid_n)));
        }
        if self.path_points < 16 {
            return Err(schema("sampling.path_points", format!("must be at least 16, got {}", self.path_points)));
        }
        if !(self.data_margin >= 1.0 && self.data_margin.is_finite()) {
            return Err(schema("sampling.data_margin", format!("must be at least 1, got {}", self.data_margin)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StructureTemplate {
    #[default]
    None,
    /// `W = W_iso(Ĩ1, Ĩ2) + W_f(Ĩ4)`.
    AdditiveIsoPlusFiber,
}

/// On-disk representation; converted to [`Skill`] after validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkillFile {
    schema_version: u32,
    name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
    transform: String,
    feature_count: usize,
    operators: Vec<String>,
    #[serde(default)]
    variable_exponents: bool,
    constraints: Vec<ConstraintDescriptor>,
    sampling: SamplingDomain,
    #[serde(default)]
    structure_template: StructureTemplate,
}

/// A validated skill `(T, O, C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Skill {
    pub name: String,
    pub description: String,
    pub transform_id: TransformId,
    pub feature_count: usize,
    pub operator_whitelist: BTreeSet<Operator>,
    /// Allow `pow` with a non-constant exponent.
    pub variable_exponents: bool,
    pub constraints: Vec<ConstraintDescriptor>,
    pub sampling: SamplingDomain,
    pub structure_template: StructureTemplate,
}

impl Skill {
    /// Parses and validates a skill document.
    pub fn from_json(text: &str) -> Result<Skill, SkillError> {
        let file: SkillFile = serde_json::from_str(text)?;
        Skill::from_file(file)
    }

    fn from_file(f: SkillFile) -> Result<Skill, SkillError> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", f.schema_version),
            ));
        }
        let transform_id = match f.transform.as_str() {
            "iso_invariants" => TransformId::IsoInvariants,
            "aniso_invariants" => TransformId::AnisoInvariants,
            other => return Err(SkillError::UnsupportedTransform(other.to_string())),
        };
        let mut operator_whitelist = BTreeSet::new();
        for name in &f.operators {
            let op = Operator::from_name(name).ok_or_else(|| schema("operators", format!("unknown operator `{name}`")))?;
            if !operator_whitelist.insert(op) {
                return Err(schema("operators", format!("duplicate operator `{name}`")));
            }
        }
        let skill = Skill {
            name: f.name,
            description: f.description,
            transform_id,
            feature_count: f.feature_count,
            operator_whitelist,
            variable_exponents: f.variable_exponents,
            constraints: f.constraints,
            sampling: f.sampling,
            structure_template: f.structure_template,
        };
        skill.validate()?;
        Ok(skill)
    }

    /// Checks every schema invariant.
    pub fn validate(&self) -> Result<(), SkillError> {
        if self.name.trim().is_empty() {
            return Err(schema("name", "must not be empty"));
        }
        if self.feature_count != self.transform_id.feature_count() {
            return Err(schema(
                "feature_count",
                format!(
                    "{} provides {} features, got {}",
                    self.transform_id.as_str(),
                    self.transform_id.feature_count(),
                    self.feature_count
                ),
            ));
        }
        if self.operator_whitelist.is_empty() {
            return Err(schema("operators", "must not be empty"));
        }
        let aniso = self.transform_id == TransformId::AnisoInvariants;
        let mut seen = BTreeSet::new();
        for (i, c) in self.constraints.iter().enumerate() {
            let field = format!("constraints[{i}].weight");
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(schema(&field, format!("must be positive and finite, got {}", c.weight)));
            }
            if c.target == ConstraintTarget::FiberTerm && !aniso {
                return Err(schema(&format!("constraints[{i}].target"), "fiber_term requires aniso_invariants"));
            }
            if c.kind == ConstraintKind::InactiveInCompression && c.target != ConstraintTarget::FiberTerm {
                return Err(schema(&format!("constraints[{i}].target"), "inactive_in_compression applies to fiber_term"));
            }
            if !seen.insert((c.kind, c.target == ConstraintTarget::FiberTerm)) {
                return Err(schema(&format!("constraints[{i}]"), "duplicate constraint"));
            }
        }
        if self.structure_template == StructureTemplate::AdditiveIsoPlusFiber && !aniso {
            return Err(schema("structure_template", "additive_iso_plus_fiber requires aniso_invariants"));
        }
        self.sampling.validate()
    }

    /// Serializes to the file schema; `from_json(to_json())` is the identity.
    pub fn to_json(&self) -> String {
        let file = SkillFile {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            description: self.description.clone(),
            transform: self.transform_id.as_str().to_string(),
            feature_count: self.feature_count,
            operators: self.operator_whitelist.iter().map(|o| o.name().to_string()).collect(),
            variable_exponents: self.variable_exponents,
            constraints: self.constraints.clone(),
            sampling: self.sampling,
            structure_template: self.structure_template,
        };
        serde_json::to_string_pretty(&file).expect("skill serializes") + "\n"
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        self.transform_id.feature_names()
    }

    pub fn constraint(&self, kind: ConstraintKind, target: ConstraintTarget) -> Option<&ConstraintDescriptor> {
        self.constraints.iter().find(|c| c.kind == kind && c.target == target)
    }

    pub fn allows(&self, op: Operator) -> bool {
        self.operator_whitelist.contains(&op)
    }

    /// Adds operators to the whitelist.
    pub fn with_operators(mut self, ops: &[Operator]) -> Skill {
        self.operator_whitelist.extend(ops.iter().copied());
        self
    }

    /// Parses an expression using this skill's feature names.
    pub fn parse_expr(&self, text: &str) -> Result<Expr, SkillError> {
        Ok(parse_with_names(text, self.feature_names())?)
    }

    /// Checks whitelist, feature range and exponent rules.
    pub fn check_expr(&self, expr: &Expr) -> Result<(), SkillError> {
        for op in expr.operators() {
            if !self.allows(op) {
                return Err(SkillError::OperatorNotAllowed {
                    op,
                    skill: self.name.clone(),
                });
            }
        }
        if let Some(index) = expr.max_var().filter(|&v| v >= self.feature_count) {
            return Err(SkillError::FeatureOutOfRange {
                index,
                count: self.feature_count,
            });
        }
        if !self.variable_exponents
            && expr
                .nodes()
                .any(|n| matches!(n, Expr::Binary(Operator::Pow, _, b) if !matches!(**b, Expr::Const(_))))
        {
            return Err(SkillError::VariableExponent(self.name.clone()));
        }
        Ok(())
    }
}

impl Serialize for Skill {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: serde_json::Value = serde_json::from_str(&self.to_json()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Skill {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = SkillFile::deserialize(d)?;
        Skill::from_file(file).map_err(serde::de::Error::custom)
    }
}

pub fn load_skill(path: impl AsRef<Path>) -> Result<Skill, SkillError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SkillError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Skill::from_json(&text)
}

pub fn save_skill(skill: &Skill, path: impl AsRef<Path>) -> Result<(), SkillError> {
    let path = path.as_ref();
    std::fs::write(path, skill.to_json()).map_err(|source| SkillError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Bundled isotropic hyperelasticity skill. Excludes `log` and `sqrt`.
pub fn builtin_isotropic() -> Skill {
    Skill::from_json(ISO_JSON).expect("bundled isotropic skill is valid")
}

/// Bundled fiber-reinforced skill with the additive template and Macaulay brackets.
pub fn builtin_anisotropic() -> Skill {
    Skill::from_json(ANISO_JSON).expect("bundled anisotropic skill is valid")
}

/// The bundled skill documents, by name: `isotropic` (`hyperelastic_iso`)
/// and `anisotropic` (`fiber_aniso`).
pub fn bundled_skill_json(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".skill.json") {
        "isotropic" | "hyperelastic_iso" | "isotropic-hyperelasticity" => Some(ISO_JSON),
        "anisotropic" | "fiber_aniso" | "fiber-reinforced-anisotropy" => Some(ANISO_JSON),
        _ => None,
    }
}

/// Splits an additive-template energy into `(isotropic part, fiber part)`.
///
/// Top-level additive terms (through `+`, `−` and negation) that use only
/// `I4` form the fiber part; terms that use `I4` together with another
/// feature are rejected.
pub fn split_additive(expr: &Expr) -> Result<(Expr, Expr), SkillError> {
    fn terms(e: &Expr, sign: f64, out: &mut Vec<(f64, Expr)>) {
        match e {
            Expr::Binary(Operator::Add, a, b) => {
                terms(a, sign, out);
                terms(b, sign, out);
            }
            Expr::Binary(Operator::Sub, a, b) => {
                terms(a, sign, out);
                terms(b, -sign, out);
            }
            Expr::Unary(Operator::Neg, a) => terms(a, -sign, out),
            _ => out.push((sign, e.clone())),
        }
    }
    let mut all = Vec::new();
    terms(expr, 1.0, &mut all);
    let mut iso: Option<Expr> = None;
    let mut fiber: Option<Expr> = None;
    for (sign, t) in all {
        let uses_fiber = t.uses_var(2);
        if uses_fiber && (t.uses_var(0) || t.uses_var(1)) {
            return Err(SkillError::Template(format!("term `{}` couples I4 with I1/I2", t.to_infix_with_names(&["I1", "I2", "I4"]))));
        }
        let slot = if uses_fiber { &mut fiber } else { &mut iso };
        *slot = Some(match (slot.take(), sign > 0.0) {
            (None, true) => t,
            (None, false) => -t,
            (Some(acc), true) => acc + t,
            (Some(acc), false) => acc - t,
        });
    }
    Ok((iso.unwrap_or(Expr::constant(0.0)), fiber.unwrap_or(Expr::constant(0.0))))
}
