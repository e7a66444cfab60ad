use super::{apply_binary, apply_unary, Expr, Operator};

/// Local algebraic clean-up. Never introduces an operator that was not
/// already present and never increases the node count.
pub(crate) fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(op, a) => {
            let a = simplify(a);
            match (op, &a) {
                (_, Expr::Const(c)) => fold(apply_unary(*op, *c)).unwrap_or_else(|| Expr::unary(*op, a)),
                (Operator::Neg, Expr::Unary(Operator::Neg, inner)) => (**inner).clone(),
                _ => Expr::unary(*op, a),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                let v = if *op == Operator::Pow { x.powf(*y) } else { apply_binary(*op, *x, *y) };
                if let Some(c) = fold(v) {
                    return c;
                }
            }
            let is = |e: &Expr, v: f64| matches!(e, Expr::Const(c) if *c == v);
            match op {
                Operator::Add if is(&b, 0.0) => a,
                Operator::Add if is(&a, 0.0) => b,
                Operator::Sub if is(&b, 0.0) => a,
                Operator::Mul if is(&b, 1.0) => a,
                Operator::Mul if is(&a, 1.0) => b,
                Operator::Mul if is(&a, 0.0) || is(&b, 0.0) => Expr::Const(0.0),
                Operator::Div if is(&b, 1.0) => a,
                Operator::Pow if is(&b, 1.0) => a,
                Operator::Mul | Operator::Add => merge_constants(*op, a, b),
                Operator::Sub => match b {
                    Expr::Const(c) if c < 0.0 => merge_constants(Operator::Add, a, Expr::Const(-c)),
                    Expr::Binary(Operator::Mul, k, x) if matches!(*k, Expr::Const(c) if c < 0.0) => {
                        let Expr::Const(c) = *k else { unreachable!() };
                        Expr::binary(Operator::Add, a, Expr::binary(Operator::Mul, Expr::Const(-c), *x))
                    }
                    _ => Expr::binary(Operator::Sub, a, b),
                },
                // (c·x)^n = cⁿ·xⁿ for integer n.
                Operator::Pow => match (a, b) {
                    (Expr::Binary(Operator::Mul, k, x), Expr::Const(n)) if n.fract() == 0.0 && matches!(*k, Expr::Const(_)) => {
                        let Expr::Const(c) = *k else { unreachable!() };
                        match fold(c.powf(n)) {
                            Some(cn) => merge_constants(Operator::Mul, cn, Expr::binary(Operator::Pow, *x, Expr::Const(n))),
                            None => Expr::binary(Operator::Pow, Expr::binary(Operator::Mul, Expr::Const(c), *x), Expr::Const(n)),
                        }
                    }
                    (a, b) => Expr::binary(Operator::Pow, a, b),
                },
                _ => Expr::binary(*op, a, b),
            }
        }
    }
}

/// Moves a constant operand of `+` or `*` to the left and combines it with a
/// constant already leading the other operand: `c1 op (c2 op x) = (c1 op c2) op x`.
fn merge_constants(op: Operator, a: Expr, b: Expr) -> Expr {
    let (a, b) = match (a, b) {
        (x, Expr::Const(c)) if !matches!(x, Expr::Const(_)) => (Expr::Const(c), x),
        pair => pair,
    };
    if let (Expr::Const(c1), Expr::Binary(inner, x, y)) = (&a, &b) {
        if *inner == op {
            if let Expr::Const(c2) = **x {
                if let Some(c) = fold(apply_binary(op, *c1, c2)) {
                    return simplify(&Expr::binary(op, c, (**y).clone()));
                }
            }
        }
    }
    Expr::binary(op, a, b)
}

fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then_some(Expr::Const(v))
}
