use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Operator};
use crate::fitness::{hessian_penalty, SampleGrid};

/// Largest `|W(0)|` accepted as vanishing at the reference state.
pub const REFERENCE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    /// Every additive term matches a convex building block.
    CertifiedAnalytic,
    /// No pattern certificate, but the Hessian penalty vanishes on the grid.
    GridPass,
    /// Positive (or non-finite) Hessian penalty on the grid.
    Violated,
}

impl Convexity {
    pub fn as_str(self) -> &'static str {
        match self {
            Convexity::CertifiedAnalytic => "certified_analytic",
            Convexity::GridPass => "grid_pass",
            Convexity::Violated => "violated",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditFlag {
    /// Non-negative linear terms in both `Ĩ1` and `Ĩ2`.
    HasMooneyRivlinPart,
    /// A term `K/(B − C·Ĩ1)` with a finite extensibility limit `Ĩ1 = B/C`.
    HasRationalLockingTerm,
    /// A transcendental function applied to a non-polynomial argument.
    HasNestedTranscendental,
    ZeroAtReferenceOk,
}

impl AuditFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditFlag::HasMooneyRivlinPart => "has_mooney_rivlin_part",
            AuditFlag::HasRationalLockingTerm => "has_rational_locking_term",
            AuditFlag::HasNestedTranscendental => "has_nested_transcendental",
            AuditFlag::ZeroAtReferenceOk => "zero_at_reference_ok",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub convexity: Convexity,
    pub flags: BTreeSet<AuditFlag>,
    /// `B/C` of the tightest rational locking term.
    pub locking_invariant_limit: Option<f64>,
    /// Hessian penalty on the audit grid.
    pub hessian_penalty: f64,
}

impl AuditReport {
    pub fn has(&self, flag: AuditFlag) -> bool {
        self.flags.contains(&flag)
    }

    /// Locking term and Mooney-Rivlin part count +1 each, nested transcendentals −1.
    pub fn interpretability_score(&self) -> i32 {
        self.has(AuditFlag::HasRationalLockingTerm) as i32 + self.has(AuditFlag::HasMooneyRivlinPart) as i32
            - self.has(AuditFlag::HasNestedTranscendental) as i32
    }
}

/// `b + c·x` over the feature vector.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine {
    b: f64,
    c: [f64; 2],
}

fn affine(e: &Expr) -> Option<Affine> {
    Some(match e {
        Expr::Const(v) => Affine { b: *v, c: [0.0; 2] },
        Expr::Var(i) if *i < 2 => {
            let mut c = [0.0; 2];
            c[*i] = 1.0;
            Affine { b: 0.0, c }
        }
        Expr::Unary(Operator::Neg, a) => {
            let a = affine(a)?;
            Affine {
                b: -a.b,
                c: [-a.c[0], -a.c[1]],
            }
        }
        Expr::Binary(op @ (Operator::Add | Operator::Sub), a, b) => {
            let (a, b) = (affine(a)?, affine(b)?);
            let s = if *op == Operator::Add { 1.0 } else { -1.0 };
            Affine {
                b: a.b + s * b.b,
                c: [a.c[0] + s * b.c[0], a.c[1] + s * b.c[1]],
            }
        }
        Expr::Binary(Operator::Mul, a, b) => match (&**a, &**b) {
            (Expr::Const(k), x) | (x, Expr::Const(k)) => scale(affine(x)?, *k),
            _ => return None,
        },
        Expr::Binary(Operator::Div, a, b) => match &**b {
            Expr::Const(k) if *k != 0.0 => scale(affine(a)?, 1.0 / k),
            _ => return None,
        },
        _ => return None,
    })
}

fn scale(a: Affine, k: f64) -> Affine {
    Affine {
        b: a.b * k,
        c: [a.c[0] * k, a.c[1] * k],
    }
}

/// Flattens sums, differences, negations and constant factors into
/// `(scale, term)` pairs.
fn additive_terms<'a>(e: &'a Expr, s: f64, out: &mut Vec<(f64, &'a Expr)>) {
    match e {
        Expr::Binary(Operator::Add, a, b) => {
            additive_terms(a, s, out);
            additive_terms(b, s, out);
        }
        Expr::Binary(Operator::Sub, a, b) => {
            additive_terms(a, s, out);
            additive_terms(b, -s, out);
        }
        Expr::Unary(Operator::Neg, a) => additive_terms(a, -s, out),
        Expr::Binary(Operator::Mul, a, b) if matches!(**a, Expr::Const(_)) || matches!(**b, Expr::Const(_)) => {
            let (k, x) = match (&**a, &**b) {
                (Expr::Const(k), x) => (*k, x),
                (x, Expr::Const(k)) => (*k, x),
                _ => unreachable!(),
            };
            additive_terms(x, s * k, out);
        }
        Expr::Binary(Operator::Div, a, b) if matches!(**b, Expr::Const(k) if k != 0.0) => {
            let Expr::Const(k) = **b else { unreachable!() };
            additive_terms(a, s / k, out);
        }
        _ => out.push((s, e)),
    }
}

/// One classified additive term.
enum Atom {
    Affine(Affine),
    /// Convex on the physical domain; locking limits met along the way.
    Convex(Vec<f64>),
    Unknown,
}

/// `(b0 + a·Ĩ1)/(B + c·Ĩ1)` with `B > 0`, `C = −c > 0`: returns
/// `(K, b0/B, B/C)` where the term is `const + K/(B − C·Ĩ1)`.
fn locking_parts(num: &Expr, den: &Expr) -> Option<(f64, f64, f64)> {
    let (n, d) = (affine(num)?, affine(den)?);
    if n.c[1] != 0.0 || d.c[1] != 0.0 {
        return None;
    }
    let (b, c) = (d.b, -d.c[0]);
    (b > 0.0 && c > 0.0).then(|| (n.b + n.c[0] * b / c, n.b / b, b / c))
}

/// Variable mask of `e` if it is non-negative, non-decreasing and convex on
/// `Ĩ1, Ĩ2 ≥ 0` (below any locking limit, pushed to `limits`).
///
/// Products are only admitted over a single variable, where the product of
/// two such functions stays convex.
fn monotone_convex(e: &Expr, limits: &mut Vec<f64>) -> Option<u8> {
    let single = |m: u8| (m.count_ones() <= 1).then_some(m);
    match e {
        Expr::Const(c) => (*c >= 0.0).then_some(0),
        Expr::Var(i) if *i < 2 => Some(1 << i),
        Expr::Binary(Operator::Add, a, b) => Some(monotone_convex(a, limits)? | monotone_convex(b, limits)?),
        Expr::Binary(Operator::Sub, a, b) => match **b {
            Expr::Const(c) if c <= 0.0 => monotone_convex(a, limits),
            _ => None,
        },
        Expr::Binary(Operator::Mul, a, b) => single(monotone_convex(a, limits)? | monotone_convex(b, limits)?),
        Expr::Binary(Operator::Div, a, b) => match **b {
            Expr::Const(k) if k > 0.0 => monotone_convex(a, limits),
            _ => {
                let (k, at_zero, limit) = locking_parts(a, b)?;
                (k > 0.0 && at_zero >= 0.0).then(|| {
                    limits.push(limit);
                    1
                })
            }
        },
        Expr::Binary(Operator::Pow, a, b) => match **b {
            Expr::Const(n) if n >= 1.0 && n.fract() == 0.0 => monotone_convex(a, limits),
            _ => None,
        },
        Expr::Unary(Operator::Exp | Operator::Macaulay, a) => convex_nondecreasing(a, limits),
        _ => None,
    }
}

/// Variable mask of `e` if it is non-decreasing and convex on `Ĩ1, Ĩ2 ≥ 0`,
/// of any sign. Composing such a function with `exp` or `⟨·⟩` gives a
/// member of [`monotone_convex`].
fn convex_nondecreasing(e: &Expr, limits: &mut Vec<f64>) -> Option<u8> {
    if let Some(a) = affine(e) {
        return (a.c[0] >= 0.0 && a.c[1] >= 0.0).then(|| u8::from(a.c[0] > 0.0) | u8::from(a.c[1] > 0.0) << 1);
    }
    match e {
        Expr::Binary(Operator::Add, a, b) => Some(convex_nondecreasing(a, limits)? | convex_nondecreasing(b, limits)?),
        Expr::Binary(Operator::Sub, a, b) if matches!(**b, Expr::Const(_)) => convex_nondecreasing(a, limits),
        Expr::Binary(Operator::Mul, a, b) => match (&**a, &**b) {
            (Expr::Const(k), x) | (x, Expr::Const(k)) if *k >= 0.0 => convex_nondecreasing(x, limits),
            _ => monotone_convex(e, limits),
        },
        Expr::Binary(Operator::Div, a, b) if matches!(**b, Expr::Const(k) if k > 0.0) => convex_nondecreasing(a, limits),
        _ => monotone_convex(e, limits),
    }
}

fn classify(s: f64, e: &Expr) -> Atom {
    if let Some(a) = affine(e) {
        return Atom::Affine(scale(a, s));
    }
    if let Expr::Binary(Operator::Div, num, den) = e {
        if let Some((k, _, limit)) = locking_parts(num, den) {
            return if s * k > 0.0 { Atom::Convex(vec![limit]) } else { Atom::Unknown };
        }
    }
    let mut limits = Vec::new();
    if s >= 0.0 && monotone_convex(e, &mut limits).is_some() {
        Atom::Convex(limits)
    } else {
        Atom::Unknown
    }
}

fn is_polynomial(e: &Expr) -> bool {
    match e {
        Expr::Const(_) | Expr::Var(_) => true,
        Expr::Unary(Operator::Neg, a) => is_polynomial(a),
        Expr::Unary(..) => false,
        Expr::Binary(Operator::Pow, a, b) => matches!(**b, Expr::Const(n) if n >= 0.0 && n.fract() == 0.0) && is_polynomial(a),
        Expr::Binary(Operator::Div, a, b) => matches!(**b, Expr::Const(_)) && is_polynomial(a),
        Expr::Binary(_, a, b) => is_polynomial(a) && is_polynomial(b),
    }
}

fn has_nested_transcendental(e: &Expr) -> bool {
    e.nodes().any(|n| match n {
        Expr::Unary(op, a) if op.is_transcendental() => !is_polynomial(a),
        _ => false,
    })
}

/// Pattern-based convexity certificate with grid fallback, plus
/// interpretability flags.
///
/// The certificate is sound on `Ĩ1, Ĩ2 ≥ 0` below every locking limit but
/// not complete: convex forms that match no pattern get `grid_pass`.
pub fn structural_audit(expr: &Expr, grid: &SampleGrid) -> AuditReport {
    let mut terms = Vec::new();
    additive_terms(expr, 1.0, &mut terms);
    let mut linear = [0.0; 2];
    let mut certified = true;
    let mut limit: Option<f64> = None;
    for (s, t) in &terms {
        match classify(*s, t) {
            Atom::Affine(a) => {
                linear[0] += a.c[0];
                linear[1] += a.c[1];
            }
            Atom::Convex(ls) => {
                for l in ls {
                    limit = Some(limit.map_or(l, |m: f64| m.min(l)));
                }
            }
            Atom::Unknown => certified = false,
        }
    }
    if let Some(l) = limit {
        if !grid.is_empty() && grid.max_i1() >= l {
            certified = false;
        }
    }
    let penalty = hessian_penalty(expr, grid);
    let convexity = if certified && penalty.is_finite() {
        Convexity::CertifiedAnalytic
    } else if penalty == 0.0 {
        Convexity::GridPass
    } else {
        Convexity::Violated
    };
    let mut flags = BTreeSet::new();
    if linear[0] > 0.0 && linear[1] > 0.0 {
        flags.insert(AuditFlag::HasMooneyRivlinPart);
    }
    if limit.is_some() {
        flags.insert(AuditFlag::HasRationalLockingTerm);
    }
    if has_nested_transcendental(expr) {
        flags.insert(AuditFlag::HasNestedTranscendental);
    }
    let w0 = expr.evaluate(&[0.0, 0.0]);
    if w0.abs() <= REFERENCE_TOLERANCE {
        flags.insert(AuditFlag::ZeroAtReferenceOk);
    }
    AuditReport {
        convexity,
        flags,
        locking_invariant_limit: limit,
        hessian_penalty: penalty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::fitness::build_sample_grid;
    use crate::skills::builtin_isotropic;

    fn grid() -> SampleGrid {
        let mut sampling = builtin_isotropic().sampling;
        sampling.auto_from_data = false;
        build_sample_grid(&[], &sampling).unwrap()
    }

    #[test]
    fn locking_law_is_certified() {
        let e = parse("0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)").unwrap();
        let r = structural_audit(&e, &grid());
        assert_eq!(r.convexity, Convexity::CertifiedAnalytic);
        assert!(r.has(AuditFlag::HasMooneyRivlinPart) && r.has(AuditFlag::HasRationalLockingTerm));
        assert!(r.has(AuditFlag::ZeroAtReferenceOk) && !r.has(AuditFlag::HasNestedTranscendental));
        assert!((r.locking_invariant_limit.unwrap() - 77.9 / 1.05).abs() < 1e-12);
        assert_eq!(r.hessian_penalty, 0.0);
        assert_eq!(r.interpretability_score(), 2);
    }

    #[test]
    fn sqrt_form_is_violated() {
        let e = parse("sqrt(1.43*(exp(sqrt(sqrt(exp(0.067*I1)))) + 2.22) + (I1 + I2 - 1.01)/1.87)").unwrap();
        let r = structural_audit(&e, &grid());
        assert_eq!(r.convexity, Convexity::Violated);
        assert!(r.hessian_penalty > 0.0);
        assert!(r.has(AuditFlag::HasNestedTranscendental));
    }

    #[test]
    fn simple_forms() {
        let g = grid();
        assert_eq!(structural_audit(&parse("0.2*I1").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("(I2/4 + I1)/5").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("0.1*I1^3 + 2*exp(0.5*I2)").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("0.003*(I1*exp(0.05*I1) + 53*I1 + I2)").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("(I1 - -38)*(0.002*I1)").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("I1*(0.17 + exp(0.05*I1 - 5.7))").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("exp(0.1*I1 + 0.2*I2) - 1").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_ne!(structural_audit(&parse("I1*exp(-0.1*I1)").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_ne!(structural_audit(&parse("I1*exp(0.1*I2)").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        // Convex, but matches no pattern.
        assert_eq!(structural_audit(&parse("(I1 + I2)*(I1 + I2)").unwrap(), &g).convexity, Convexity::GridPass);
        // Not convex: a product across invariants.
        assert_ne!(structural_audit(&parse("I1*I2").unwrap(), &g).convexity, Convexity::CertifiedAnalytic);
        assert_eq!(structural_audit(&parse("-(I1*I1)").unwrap(), &g).convexity, Convexity::Violated);
    }

    #[test]
    fn locking_limit_inside_grid_is_not_certified() {
        let e = parse("I1/(10 - I1)").unwrap();
        let r = structural_audit(&e, &grid());
        assert_ne!(r.convexity, Convexity::CertifiedAnalytic);
        assert_eq!(r.locking_invariant_limit, Some(10.0));
    }

    #[test]
    fn nonzero_reference_flag() {
        let r = structural_audit(&parse("I1 + 1").unwrap(), &grid());
        assert!(!r.has(AuditFlag::ZeroAtReferenceOk));
    }
}
