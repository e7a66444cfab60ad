//! Expression trees over shifted invariants.
//!
//! An [`Expr`] is an immutable scalar function of `k` features (for the
//! isotropic skill `k = 2`: `I1 = I₁ − 3` and `I2 = I₂ − 3`). Trees are the
//! search object of the evolutionary engine and the representation of a
//! discovered strain-energy function.
//!
//! Evaluation never traps: `log` of a non-positive number, `sqrt` of a
//! negative one, division by zero and similar domain errors produce NaN or
//! ±∞, which callers treat as "this candidate is invalid".

mod jet;
mod parse;
mod simplify;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use jet::{Jet, Scalar, SecondOrderValue};
pub use parse::{parse, parse_with_names, ParseError, ParseErrorKind, ISO_NAMES};

/// The operator alphabet. Periodic functions are deliberately absent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    /// `pow(base, exponent)`.
    Pow,
    Exp,
    Log,
    Sqrt,
    Neg,
    /// Macaulay bracket `⟨x⟩ = max(0, x)`.
    Macaulay,
}

impl Operator {
    pub const ALL: [Operator; 10] = [
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Div,
        Operator::Pow,
        Operator::Exp,
        Operator::Log,
        Operator::Sqrt,
        Operator::Neg,
        Operator::Macaulay,
    ];

    pub fn arity(self) -> usize {
        match self {
            Operator::Add | Operator::Sub | Operator::Mul | Operator::Div | Operator::Pow => 2,
            Operator::Exp | Operator::Log | Operator::Sqrt | Operator::Neg | Operator::Macaulay => 1,
        }
    }

    /// Stable lowercase tag used in JSON and skill files.
    pub fn name(self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Sub => "sub",
            Operator::Mul => "mul",
            Operator::Div => "div",
            Operator::Pow => "pow",
            Operator::Exp => "exp",
            Operator::Log => "log",
            Operator::Sqrt => "sqrt",
            Operator::Neg => "neg",
            Operator::Macaulay => "macaulay",
        }
    }

    pub fn from_name(name: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn is_transcendental(self) -> bool {
        matches!(self, Operator::Exp | Operator::Log | Operator::Sqrt)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("operator `{op}` takes {expected} argument(s), got {got}")]
    Arity {
        op: Operator,
        expected: usize,
        got: usize,
    },
    #[error("constant {0} is not finite")]
    NonFiniteConstant(f64),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
}

/// A scalar expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(Operator, Box<Expr>),
    Binary(Operator, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        debug_assert!(value.is_finite(), "constants must be finite");
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    /// Checked construction from an operator and its argument list.
    pub fn op(op: Operator, args: Vec<Expr>) -> Result<Expr, ExprError> {
        if args.len() != op.arity() {
            return Err(ExprError::Arity {
                op,
                expected: op.arity(),
                got: args.len(),
            });
        }
        let mut it = args.into_iter();
        let a = it.next().unwrap();
        Ok(match it.next() {
            Some(b) => Expr::Binary(op, Box::new(a), Box::new(b)),
            None => Expr::Unary(op, Box::new(a)),
        })
    }

    pub fn unary(op: Operator, a: Expr) -> Expr {
        assert_eq!(op.arity(), 1, "{op} is not unary");
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: Operator, a: Expr, b: Expr) -> Expr {
        assert_eq!(op.arity(), 2, "{op} is not binary");
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn exp(self) -> Expr {
        Expr::unary(Operator::Exp, self)
    }

    pub fn log(self) -> Expr {
        Expr::unary(Operator::Log, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::unary(Operator::Sqrt, self)
    }

    pub fn macaulay(self) -> Expr {
        Expr::unary(Operator::Macaulay, self)
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::binary(Operator::Pow, self, exponent)
    }

    /// Number of nodes; constants, variables and operators each count one.
    pub fn complexity(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.complexity(),
            Expr::Binary(_, a, b) => 1 + a.complexity() + b.complexity(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Var(_))
    }

    pub fn operator(&self) -> Option<Operator> {
        match self {
            Expr::Unary(op, _) | Expr::Binary(op, _, _) => Some(*op),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Vec::new(),
            Expr::Unary(_, a) => vec![a],
            Expr::Binary(_, a, b) => vec![a, b],
        }
    }

    /// Pre-order node iterator.
    pub fn nodes(&self) -> impl Iterator<Item = &Expr> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            match node {
                Expr::Unary(_, a) => stack.push(a),
                Expr::Binary(_, a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
                _ => {}
            }
            Some(node)
        })
    }

    /// Node at a pre-order index.
    pub fn node_at(&self, index: usize) -> Option<&Expr> {
        self.nodes().nth(index)
    }

    /// Returns a copy with the pre-order node `index` replaced by `replacement`.
    pub fn replace_at(&self, index: usize, replacement: Expr) -> Expr {
        fn go(e: &Expr, index: &mut usize, target: usize, rep: &mut Option<Expr>) -> Expr {
            if *index == target {
                *index += e.complexity();
                return rep.take().expect("replacement used once");
            }
            *index += 1;
            match e {
                Expr::Const(_) | Expr::Var(_) => e.clone(),
                Expr::Unary(op, a) => Expr::Unary(*op, Box::new(go(a, index, target, rep))),
                Expr::Binary(op, a, b) => {
                    let a = go(a, index, target, rep);
                    let b = go(b, index, target, rep);
                    Expr::Binary(*op, Box::new(a), Box::new(b))
                }
            }
        }
        assert!(index < self.complexity(), "node index out of range");
        let mut counter = 0;
        go(self, &mut counter, index, &mut Some(replacement))
    }

    pub fn operators(&self) -> BTreeSet<Operator> {
        self.nodes().filter_map(Expr::operator).collect()
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.nodes()
            .filter_map(|n| match n {
                Expr::Var(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    pub fn uses_var(&self, index: usize) -> bool {
        self.nodes().any(|n| matches!(n, Expr::Var(i) if *i == index))
    }

    /// All leaf constants, pre-order.
    pub fn constants(&self) -> Vec<f64> {
        self.nodes()
            .filter_map(|n| match n {
                Expr::Const(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Constants that numerical refitting may change: every constant except
    /// the exponent of a `pow` node, which is treated as structural.
    pub fn optimizable_constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_optimizable(&mut |c| out.push(c));
        out
    }

    fn visit_optimizable(&self, f: &mut impl FnMut(f64)) {
        match self {
            Expr::Const(c) => f(*c),
            Expr::Var(_) => {}
            Expr::Unary(_, a) => a.visit_optimizable(f),
            Expr::Binary(Operator::Pow, a, b) => {
                a.visit_optimizable(f);
                if !matches!(**b, Expr::Const(_)) {
                    b.visit_optimizable(f);
                }
            }
            Expr::Binary(_, a, b) => {
                a.visit_optimizable(f);
                b.visit_optimizable(f);
            }
        }
    }

    /// Replaces the optimizable constants (same order as
    /// [`optimizable_constants`](Self::optimizable_constants)).
    pub fn with_optimizable_constants(&self, values: &[f64]) -> Expr {
        fn go(e: &Expr, values: &[f64], at: &mut usize) -> Expr {
            match e {
                Expr::Const(_) => {
                    let v = values[*at];
                    *at += 1;
                    Expr::Const(v)
                }
                Expr::Var(_) => e.clone(),
                Expr::Unary(op, a) => Expr::Unary(*op, Box::new(go(a, values, at))),
                Expr::Binary(Operator::Pow, a, b) if matches!(**b, Expr::Const(_)) => {
                    Expr::Binary(Operator::Pow, Box::new(go(a, values, at)), b.clone())
                }
                Expr::Binary(op, a, b) => {
                    let a = go(a, values, at);
                    let b = go(b, values, at);
                    Expr::Binary(*op, Box::new(a), Box::new(b))
                }
            }
        }
        let mut at = 0;
        let out = go(self, values, &mut at);
        assert_eq!(at, values.len(), "constant count mismatch");
        out
    }

    /// Evaluates the tree at `inputs`. Non-finite results are returned, not trapped.
    pub fn evaluate(&self, inputs: &[f64]) -> f64 {
        self.eval_generic(inputs)
    }

    /// Value, exact gradient and exact Hessian by second-order forward propagation.
    ///
    /// Supports up to 12 features.
    pub fn evaluate_with_derivatives(&self, inputs: &[f64]) -> SecondOrderValue {
        macro_rules! dispatch {
            ($($n:literal)*) => {
                match inputs.len() {
                    $($n => {
                        let vars: [Jet<$n>; $n] = Jet::variables(inputs.try_into().unwrap());
                        self.eval_generic(&vars).into()
                    })*
                    k => panic!("evaluate_with_derivatives supports 1..=12 features, got {k}"),
                }
            };
        }
        dispatch!(1 2 3 4 5 6 7 8 9 10 11 12)
    }

    /// Evaluates with any [`Scalar`] carrier.
    pub fn eval_generic<T: Scalar>(&self, vars: &[T]) -> T {
        match self {
            Expr::Const(c) => T::from_f64(*c),
            Expr::Var(i) => vars[*i],
            Expr::Unary(op, a) => apply_unary(*op, a.eval_generic(vars)),
            Expr::Binary(Operator::Pow, a, b) => {
                let base = a.eval_generic(vars);
                match **b {
                    Expr::Const(p) => base.powf(p),
                    _ => base.pow(b.eval_generic(vars)),
                }
            }
            Expr::Binary(op, a, b) => apply_binary(*op, a.eval_generic(vars), b.eval_generic(vars)),
        }
    }

    /// Like [`eval_generic`](Self::eval_generic) but optimizable constants are
    /// supplied by `constants` (pre-order, pow exponents excluded).
    pub fn eval_with_constants<T: Scalar>(&self, vars: &[T], constants: &[T]) -> T {
        fn go<T: Scalar>(e: &Expr, vars: &[T], cs: &[T], at: &mut usize) -> T {
            match e {
                Expr::Const(_) => {
                    let v = cs[*at];
                    *at += 1;
                    v
                }
                Expr::Var(i) => vars[*i],
                Expr::Unary(op, a) => apply_unary(*op, go(a, vars, cs, at)),
                Expr::Binary(Operator::Pow, a, b) => {
                    let base = go(a, vars, cs, at);
                    match **b {
                        Expr::Const(p) => base.powf(p),
                        _ => base.pow(go(b, vars, cs, at)),
                    }
                }
                Expr::Binary(op, a, b) => {
                    let x = go(a, vars, cs, at);
                    let y = go(b, vars, cs, at);
                    apply_binary(*op, x, y)
                }
            }
        }
        let mut at = 0;
        go(self, vars, constants, &mut at)
    }

    /// Canonical infix text, reparseable by [`parse`] with the iso names.
    pub fn to_infix(&self) -> String {
        parse::format_with_names(self, &ISO_NAMES)
    }

    pub fn to_infix_with_names(&self, names: &[&str]) -> String {
        parse::format_with_names(self, names)
    }

    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }
}

fn apply_unary<T: Scalar>(op: Operator, a: T) -> T {
    match op {
        Operator::Exp => a.exp(),
        Operator::Log => a.ln(),
        Operator::Sqrt => a.sqrt(),
        Operator::Neg => -a,
        Operator::Macaulay => a.macaulay(),
        _ => unreachable!("{op} is not unary"),
    }
}

fn apply_binary<T: Scalar>(op: Operator, a: T, b: T) -> T {
    match op {
        Operator::Add => a + b,
        Operator::Sub => a - b,
        Operator::Mul => a * b,
        Operator::Div => a / b,
        Operator::Pow => a.pow(b),
        _ => unreachable!("{op} is not binary"),
    }
}

/// Free-function form of [`Expr::evaluate`].
pub fn evaluate(expr: &Expr, inputs: &[f64]) -> f64 {
    expr.evaluate(inputs)
}

/// Free-function form of [`Expr::evaluate_with_derivatives`].
pub fn evaluate_with_derivatives(expr: &Expr, inputs: &[f64]) -> SecondOrderValue {
    expr.evaluate_with_derivatives(inputs)
}

pub fn complexity(expr: &Expr) -> usize {
    expr.complexity()
}

pub fn simplify(expr: &Expr) -> Expr {
    expr.simplify()
}

pub fn format(expr: &Expr) -> String {
    expr.to_infix()
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix())
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

macro_rules! expr_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::constant(rhs))
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::constant(self), rhs)
            }
        }
    };
}

expr_binop!(Add, add, Operator::Add);
expr_binop!(Sub, sub, Operator::Sub);
expr_binop!(Mul, mul, Operator::Mul);
expr_binop!(Div, div, Operator::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(Operator::Neg, self)
    }
}

// JSON form: {"op":"add","args":[...]}, {"var":0}, {"const":0.031}.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExprRepr {
    Op { op: String, args: Vec<Expr> },
    Var { var: usize },
    Const {
        #[serde(rename = "const")]
        value: f64,
    },
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Expr::Const(c) => ExprRepr::Const { value: *c },
            Expr::Var(i) => ExprRepr::Var { var: *i },
            Expr::Unary(op, a) => ExprRepr::Op {
                op: op.name().to_string(),
                args: vec![(**a).clone()],
            },
            Expr::Binary(op, a, b) => ExprRepr::Op {
                op: op.name().to_string(),
                args: vec![(**a).clone(), (**b).clone()],
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match ExprRepr::deserialize(deserializer)? {
            ExprRepr::Const { value } if value.is_finite() => Ok(Expr::Const(value)),
            ExprRepr::Const { value } => Err(D::Error::custom(ExprError::NonFiniteConstant(value))),
            ExprRepr::Var { var } => Ok(Expr::Var(var)),
            ExprRepr::Op { op, args } => {
                let op = Operator::from_name(&op)
                    .ok_or_else(|| D::Error::custom(ExprError::UnknownOperator(op.clone())))?;
                Expr::op(op, args).map_err(D::Error::custom)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn locking_law() -> Expr {
        parse("0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)").unwrap()
    }

    #[test]
    fn constant_evaluates_to_itself() {
        assert_eq!(Expr::constant(0.0).evaluate(&[1.0, 2.0]), 0.0);
    }

    #[test]
    fn locking_law_values() {
        let w = locking_law();
        assert_eq!(w.evaluate(&[0.0, 0.0]), 0.0);
        let expected = 0.031 * (3.75 * 2.0 + 1.25) + 2.0 / (77.9 - 1.05 * 2.0);
        assert!((w.evaluate(&[2.0, 1.25]) - expected).abs() < 1e-15);
        assert!((expected - 0.29764).abs() < 1e-5);
    }

    #[test]
    fn bilinear_derivatives() {
        let f = Expr::var(0) * Expr::var(1);
        let d = f.evaluate_with_derivatives(&[3.0, 5.0]);
        assert_eq!(d.value, 15.0);
        assert_eq!(d.gradient, vec![5.0, 3.0]);
        assert_eq!(d.hessian, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn locking_law_derivatives_at_reference() {
        let d = locking_law().evaluate_with_derivatives(&[0.0, 0.0]);
        let r1 = 77.9 / (77.9 * 77.9);
        let r2 = 2.0 * 1.05 * 77.9 / (77.9f64.powi(3));
        assert!((d.gradient[0] - (0.031 * 3.75 + r1)).abs() < 1e-15);
        assert!((d.gradient[0] - 0.129087).abs() < 1e-6);
        assert!((d.gradient[1] - 0.031).abs() < 1e-15);
        assert!((d.hessian[0][0] - r2).abs() < 1e-15);
        assert!((d.hessian[0][0] - 3.461e-4).abs() < 1e-7);
        assert_eq!(d.hessian[0][1], 0.0);
        assert_eq!(d.hessian[1][1], 0.0);
    }

    #[test]
    fn complexity_counts_nodes() {
        assert_eq!(Expr::constant(1.0).complexity(), 1);
        let mr = 0.2 * Expr::var(0) + 0.05 * Expr::var(1);
        assert_eq!(mr.complexity(), 7);
        assert_eq!(locking_law().complexity(), 15);
    }

    #[test]
    fn replace_and_index() {
        let e = parse("I1*2 + exp(I2)").unwrap();
        assert_eq!(e.node_at(2), Some(&Expr::Var(0)));
        let r = e.replace_at(4, Expr::constant(1.0));
        assert_eq!(r, parse("I1*2 + 1").unwrap());
        let r = e.replace_at(0, Expr::Var(1));
        assert_eq!(r, Expr::Var(1));
    }

    #[test]
    fn optimizable_constants_skip_pow_exponent() {
        let e = parse("0.5*I1^2 + 3").unwrap();
        assert_eq!(e.constants(), vec![0.5, 2.0, 3.0]);
        assert_eq!(e.optimizable_constants(), vec![0.5, 3.0]);
        let moved = e.with_optimizable_constants(&[1.0, 4.0]);
        assert_eq!(moved, parse("1*I1^2 + 4").unwrap());
    }

    #[test]
    fn json_shape() {
        let e = Expr::constant(0.031) * Expr::var(0);
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"op":"mul","args":[{"const":0.031},{"var":0}]}"#);
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Expr>(r#"{"op":"exp","args":[]}"#).is_err());
        assert!(serde_json::from_str::<Expr>(r#"{"op":"sin","args":[{"var":0}]}"#).is_err());
    }

    #[test]
    fn nonfinite_propagates() {
        assert!(parse("log(I1)").unwrap().evaluate(&[-1.0, 0.0]).is_nan());
        assert!(parse("1/I1").unwrap().evaluate(&[0.0, 0.0]).is_infinite());
        assert!(parse("sqrt(I1)").unwrap().evaluate(&[-1.0, 0.0]).is_nan());
        let m = parse("relu(I1)").unwrap();
        assert!(m.evaluate(&[f64::NAN, 0.0]).is_nan());
    }

    #[test]
    fn macaulay_convention_at_zero() {
        let d = parse("relu(I1)").unwrap().evaluate_with_derivatives(&[0.0, 0.0]);
        assert_eq!(d.value, 0.0);
        assert_eq!(d.gradient[0], 0.0);
        assert_eq!(d.hessian[0][0], 0.0);
    }
}
