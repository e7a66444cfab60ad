//! Infix text form.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' number | '-' unary | power
//! power   := atom ('^' unary)?            right associative
//! atom    := number | name | func '(' expr ')' | '(' expr ')'
//! func    := exp | log | sqrt | relu
//! ```
//!
//! `relu` is the Macaulay bracket. A minus sign written directly in front of
//! a numeric literal produces a negative constant; in front of anything else
//! it produces a `neg` node.

use thiserror::Error;

use super::{Expr, Operator};

/// Variable names of the isotropic feature space (shifted invariants).
pub const ISO_NAMES: [&str; 2] = ["I1", "I2"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    UnknownIdentifier(String),
    InvalidNumber(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at column {}", .position + 1)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the input.
    pub position: usize,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected `{t}`"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number `{s}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::InvalidNumber(s.to_string()),
                position: start,
            })?;
            if !v.is_finite() {
                return Err(ParseError {
                    kind: ParseErrorKind::InvalidNumber(s.to_string()),
                    position: start,
                });
            }
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            let c = text[i..].chars().next().unwrap();
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedChar(c),
                position: i,
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
    names: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn err_here(&self) -> ParseError {
        match self.toks.get(self.at) {
            None => ParseError {
                kind: ParseErrorKind::UnexpectedEnd,
                position: self.end,
            },
            Some((t, p)) => ParseError {
                kind: ParseErrorKind::UnexpectedToken(match t {
                    Tok::Num(v) => v.to_string(),
                    Tok::Ident(s) => s.clone(),
                    Tok::Sym(c) => c.to_string(),
                }),
                position: *p,
            },
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err_here())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::binary(Operator::Add, lhs, self.term()?);
            } else if self.eat('-') {
                lhs = Expr::binary(Operator::Sub, lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::binary(Operator::Mul, lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = Expr::binary(Operator::Div, lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            if let Some(Tok::Num(v)) = self.peek() {
                let v = -*v;
                self.at += 1;
                return self.power_tail(Expr::Const(v));
            }
            return Ok(Expr::unary(Operator::Neg, self.unary()?));
        }
        let base = self.atom()?;
        self.power_tail(base)
    }

    fn power_tail(&mut self, base: Expr) -> Result<Expr, ParseError> {
        if self.eat('^') {
            let exponent = self.unary()?;
            Ok(Expr::binary(Operator::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                if let Some(i) = self.names.iter().position(|n| *n == name) {
                    return Ok(Expr::Var(i));
                }
                let op = match name.as_str() {
                    "exp" => Operator::Exp,
                    "log" => Operator::Log,
                    "sqrt" => Operator::Sqrt,
                    "relu" => Operator::Macaulay,
                    _ => {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnknownIdentifier(name),
                            position: pos,
                        })
                    }
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(Expr::unary(op, arg))
            }
            _ => Err(self.err_here()),
        }
    }
}

/// Parses infix text with the isotropic names `I1`, `I2`.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parse_with_names(text, &ISO_NAMES)
}

/// Parses infix text; `names[i]` denotes feature `i`.
pub fn parse_with_names(text: &str, names: &[&str]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        at: 0,
        end: text.len(),
        names,
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(p.err_here());
    }
    Ok(e)
}

// Binding strength used to decide where parentheses are needed.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(Operator::Add | Operator::Sub, ..) => 1,
        Expr::Binary(Operator::Mul | Operator::Div, ..) => 2,
        Expr::Unary(Operator::Neg, _) => 3,
        Expr::Binary(Operator::Pow, ..) => 4,
        _ => 5,
    }
}

pub(crate) fn format_with_names(e: &Expr, names: &[&str]) -> String {
    let mut s = String::new();
    write_expr(e, names, &mut s);
    s
}

fn wrap(e: &Expr, names: &[&str], paren: bool, out: &mut String) {
    if paren {
        out.push('(');
        write_expr(e, names, out);
        out.push(')');
    } else {
        write_expr(e, names, out);
    }
}

fn write_expr(e: &Expr, names: &[&str], out: &mut String) {
    match e {
        Expr::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                out.push_str(&format!("({c:?})"));
            } else {
                out.push_str(&format!("{c:?}"));
            }
        }
        Expr::Var(i) => match names.get(*i) {
            Some(n) => out.push_str(n),
            None => out.push_str(&format!("x{i}")),
        },
        Expr::Unary(Operator::Neg, a) => {
            out.push('-');
            // Literal constants must stay a `neg` node on reparse.
            let paren = prec(a) < 3 || matches!(**a, Expr::Const(c) if !c.is_sign_negative()) || matches!(**a, Expr::Unary(Operator::Neg, _));
            wrap(a, names, paren, out);
        }
        Expr::Unary(op, a) => {
            out.push_str(match op {
                Operator::Exp => "exp",
                Operator::Log => "log",
                Operator::Sqrt => "sqrt",
                Operator::Macaulay => "relu",
                _ => unreachable!(),
            });
            wrap(a, names, true, out);
        }
        Expr::Binary(op, a, b) => {
            let (sym, p) = match op {
                Operator::Add => (" + ", 1),
                Operator::Sub => (" - ", 1),
                Operator::Mul => ("*", 2),
                Operator::Div => ("/", 2),
                Operator::Pow => ("^", 4),
                _ => unreachable!(),
            };
            if *op == Operator::Pow {
                wrap(a, names, prec(a) < 5, out);
                out.push('^');
                wrap(b, names, prec(b) < 5, out);
                return;
            }
            wrap(a, names, prec(a) < p, out);
            out.push_str(sym);
            // Left associative: right operand of equal precedence needs parens.
            wrap(b, names, prec(b) <= p, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_locking_law() {
        let e = parse("0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)").unwrap();
        let expected = 0.031 * (3.75 * Expr::var(0) + Expr::var(1))
            + Expr::var(0) / (77.9 - 1.05 * Expr::var(0));
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_variables_and_functions() {
        assert_eq!(parse("I1").unwrap(), Expr::Var(0));
        assert_eq!(parse("relu(I2)").unwrap(), Expr::var(1).macaulay());
        assert_eq!(parse("-2.5").unwrap(), Expr::Const(-2.5));
        assert_eq!(parse("-I1").unwrap(), -Expr::var(0));
        assert_eq!(parse("2^3^2").unwrap().evaluate(&[]), 512.0);
        assert_eq!(parse("8/4/2").unwrap().evaluate(&[]), 1.0);
        assert_eq!(parse("1e-3*I1").unwrap().evaluate(&[2.0, 0.0]), 0.002);
    }

    #[test]
    fn errors_carry_position() {
        let e = parse("I1 + foo").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        assert_eq!(e.position, 5);
        let e = parse("I1 + ").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedEnd);
        let e = parse("I1 $ 2").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(e.position, 3);
        assert!(parse("(I1").is_err());
        assert!(parse("I1 I2").is_err());
    }

    #[test]
    fn format_round_trips_structurally() {
        for src in [
            "0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)",
            "I1 - (I2 - 3)",
            "-(2.0)*I1",
            "--I1",
            "(-1.5)^2",
            "exp(-I1)^(I2 + 1)",
            "I1/(I2*3)",
            "sqrt(1.43*(exp(sqrt(sqrt(exp(0.067*I1))) + 2.22) + (I1 + I2 - 1.01)/1.87))",
        ] {
            let e = parse(src).unwrap();
            let back = parse(&e.to_infix()).unwrap();
            assert_eq!(back, e, "{src} -> {}", e.to_infix());
        }
        let neg_const = Expr::unary(Operator::Neg, Expr::Const(2.0));
        assert_eq!(parse(&neg_const.to_infix()).unwrap(), neg_const);
        let neg_neg_const = Expr::unary(Operator::Neg, Expr::Const(-2.0));
        assert_eq!(parse(&neg_neg_const.to_infix()).unwrap(), neg_neg_const);
    }
}
