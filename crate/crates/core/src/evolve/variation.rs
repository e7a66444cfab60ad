use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::MutationWeights;
use crate::expr::{Expr, Operator};
use crate::skills::Skill;

/// Exponents available to `pow` nodes; they are structural, not fitted.
pub const POW_EXPONENTS: [f64; 2] = [2.0, 3.0];

const MAX_ATTEMPTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationKind {
    PointMutation,
    SubtreeReplace,
    InsertNode,
    DeleteSubtree,
    ConstantPerturb,
}

impl MutationKind {
    pub const ALL: [MutationKind; 5] = [
        MutationKind::PointMutation,
        MutationKind::SubtreeReplace,
        MutationKind::InsertNode,
        MutationKind::DeleteSubtree,
        MutationKind::ConstantPerturb,
    ];
}

/// Skill-constrained tree generation and variation.
#[derive(Clone, Debug)]
pub struct Variation {
    unary: Vec<Operator>,
    binary: Vec<Operator>,
    features: usize,
    maxsize: usize,
    weights: MutationWeights,
}

/// Pre-order mask of nodes that are the constant exponent of a `pow`.
pub(crate) fn exponent_mask(e: &Expr) -> Vec<bool> {
    fn go(e: &Expr, is_exp: bool, out: &mut Vec<bool>) {
        out.push(is_exp);
        match e {
            Expr::Unary(_, a) => go(a, false, out),
            Expr::Binary(op, a, b) => {
                go(a, false, out);
                go(b, *op == Operator::Pow && matches!(**b, Expr::Const(_)), out);
            }
            _ => {}
        }
    }
    let mut out = Vec::with_capacity(e.complexity());
    go(e, false, &mut out);
    out
}

impl Variation {
    pub fn new(skill: &Skill, maxsize: usize, weights: MutationWeights) -> Variation {
        let ops = &skill.operator_whitelist;
        Variation {
            unary: ops.iter().copied().filter(|o| o.arity() == 1).collect(),
            binary: ops.iter().copied().filter(|o| o.arity() == 2).collect(),
            features: skill.feature_count,
            maxsize,
            weights,
        }
    }

    pub fn maxsize(&self) -> usize {
        self.maxsize
    }

    fn allowed(&self, e: &Expr) -> bool {
        e.complexity() <= self.maxsize
            && e.nodes().all(|n| match n {
                Expr::Unary(op, _) => self.unary.contains(op),
                Expr::Binary(op, _, b) => self.binary.contains(op) && (*op != Operator::Pow || matches!(**b, Expr::Const(_))),
                Expr::Var(i) => *i < self.features,
                Expr::Const(c) => c.is_finite(),
            })
    }

    pub fn random_constant(&self, rng: &mut impl Rng) -> f64 {
        let mag = 10f64.powf(rng.random_range(-2.0..2.0));
        if rng.random_bool(0.2) {
            -mag
        } else {
            mag
        }
    }

    fn random_leaf(&self, rng: &mut impl Rng) -> Expr {
        if rng.random_bool(0.6) {
            Expr::Var(rng.random_range(0..self.features))
        } else {
            Expr::Const(self.random_constant(rng))
        }
    }

    fn random_exponent(rng: &mut impl Rng) -> Expr {
        Expr::Const(*POW_EXPONENTS.choose(rng).expect("non-empty"))
    }

    /// Random tree with at most `budget` nodes.
    pub fn random_tree(&self, budget: usize, rng: &mut impl Rng) -> Expr {
        let budget = budget.max(1);
        let can_unary = budget >= 2 && !self.unary.is_empty();
        let can_binary = budget >= 3 && !self.binary.is_empty();
        if !(can_unary || can_binary) || rng.random_bool(0.3) {
            return self.random_leaf(rng);
        }
        let use_binary = can_binary && (!can_unary || rng.random_bool(0.75));
        if use_binary {
            let op = *self.binary.choose(rng).expect("non-empty");
            if op == Operator::Pow {
                let base = self.random_tree(budget - 2, rng);
                return Expr::binary(op, base, Self::random_exponent(rng));
            }
            let left_budget = rng.random_range(1..=budget - 2);
            let a = self.random_tree(left_budget, rng);
            let b = self.random_tree(budget - 1 - a.complexity(), rng);
            Expr::binary(op, a, b)
        } else {
            let op = *self.unary.choose(rng).expect("non-empty");
            Expr::unary(op, self.random_tree(budget - 1, rng))
        }
    }

    pub(crate) fn pick_kind(&self, rng: &mut impl Rng) -> Option<MutationKind> {
        let w = self.weights.as_array();
        let total: f64 = w[..5].iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut x = rng.random_range(0.0..total);
        for (k, kind) in MutationKind::ALL.iter().enumerate() {
            if x < w[k] {
                return Some(*kind);
            }
            x -= w[k];
        }
        Some(MutationKind::ConstantPerturb)
    }

    /// One mutation drawn by weight. Invalid or unchanged results are retried
    /// up to 8 times; after that the input is returned.
    pub fn mutate(&self, expr: &Expr, rng: &mut impl Rng) -> Expr {
        for _ in 0..MAX_ATTEMPTS {
            let Some(kind) = self.pick_kind(rng) else {
                return expr.clone();
            };
            if let Some(out) = self.apply(kind, expr, rng) {
                let out = out.simplify();
                if out != *expr && self.allowed(&out) {
                    return out;
                }
            }
        }
        expr.clone()
    }

    /// A specific mutation, without simplification, retries or the size check.
    pub fn apply(&self, kind: MutationKind, e: &Expr, rng: &mut impl Rng) -> Option<Expr> {
        let n = e.complexity();
        let mask = exponent_mask(e);
        let free: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        match kind {
            MutationKind::PointMutation => {
                let i = rng.random_range(0..n);
                let node = e.node_at(i)?;
                let new = match node {
                    Expr::Const(_) if mask[i] => Self::random_exponent(rng),
                    Expr::Const(_) => Expr::Const(self.random_constant(rng)),
                    Expr::Var(_) => self.random_leaf(rng),
                    Expr::Unary(_, a) => Expr::Unary(*self.unary.choose(rng)?, a.clone()),
                    Expr::Binary(_, a, b) => {
                        let op = *self.binary.choose(rng)?;
                        if op == Operator::Pow && !matches!(**b, Expr::Const(_)) {
                            return None;
                        }
                        let b = if op == Operator::Pow && !POW_EXPONENTS.contains(&b.constants()[0]) {
                            Box::new(Self::random_exponent(rng))
                        } else {
                            b.clone()
                        };
                        Expr::Binary(op, a.clone(), b)
                    }
                };
                Some(e.replace_at(i, new))
            }
            MutationKind::SubtreeReplace => {
                let i = *free.choose(rng)?;
                let old = e.node_at(i)?.complexity();
                let room = self.maxsize - (n - old).min(self.maxsize);
                if room == 0 {
                    return None;
                }
                Some(e.replace_at(i, self.random_tree(rng.random_range(1..=room), rng)))
            }
            MutationKind::InsertNode => {
                let i = *free.choose(rng)?;
                let target = e.node_at(i)?.clone();
                let wrap_binary = !self.binary.is_empty() && (self.unary.is_empty() || rng.random_bool(0.7));
                let new = if wrap_binary {
                    let op = *self.binary.choose(rng)?;
                    if op == Operator::Pow {
                        Expr::binary(op, target, Self::random_exponent(rng))
                    } else if rng.random_bool(0.5) {
                        Expr::binary(op, target, self.random_leaf(rng))
                    } else {
                        Expr::binary(op, self.random_leaf(rng), target)
                    }
                } else {
                    Expr::unary(*self.unary.choose(rng)?, target)
                };
                Some(e.replace_at(i, new))
            }
            MutationKind::DeleteSubtree => {
                let internal: Vec<usize> = free.iter().copied().filter(|&i| !e.node_at(i).is_some_and(Expr::is_leaf)).collect();
                let i = *internal.choose(rng)?;
                let node = e.node_at(i)?;
                let children: Vec<&Expr> = match node {
                    Expr::Binary(Operator::Pow, a, _) => vec![a],
                    _ => node.children(),
                };
                let new = if rng.random_bool(0.8) {
                    (*children.choose(rng)?).clone()
                } else {
                    self.random_leaf(rng)
                };
                Some(e.replace_at(i, new))
            }
            MutationKind::ConstantPerturb => {
                let consts: Vec<usize> = free.iter().copied().filter(|&i| matches!(e.node_at(i), Some(Expr::Const(_)))).collect();
                let i = *consts.choose(rng)?;
                let Some(Expr::Const(c)) = e.node_at(i) else {
                    return None;
                };
                let eps = Normal::new(0.0, 0.2).expect("valid").sample(rng);
                let mut v = c * (1.0 + eps);
                if rng.random_bool(0.05) {
                    v = -v;
                }
                Some(e.replace_at(i, Expr::Const(v)))
            }
        }
    }

    /// Swaps random subtrees. Children over `maxsize` or violating the skill
    /// are rejected and the parents returned.
    pub fn crossover(&self, a: &Expr, b: &Expr, rng: &mut impl Rng) -> (Expr, Expr) {
        let pick = |e: &Expr, rng: &mut _| -> usize {
            let mask = exponent_mask(e);
            let free: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
            *free.choose(rng).expect("root is never an exponent")
        };
        let i = pick(a, rng);
        let j = pick(b, rng);
        let sa = a.node_at(i).expect("index").clone();
        let sb = b.node_at(j).expect("index").clone();
        let ca = a.replace_at(i, sb);
        let cb = b.replace_at(j, sa);
        if self.allowed(&ca) && self.allowed(&cb) {
            (ca, cb)
        } else {
            (a.clone(), b.clone())
        }
    }

    /// Whether `e` respects the whitelist, feature range and size bound.
    pub fn is_admissible(&self, e: &Expr) -> bool {
        self.allowed(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::builtin_isotropic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn var() -> Variation {
        Variation::new(&builtin_isotropic(), 18, MutationWeights::default())
    }

    #[test]
    fn random_trees_respect_skill() {
        let v = var();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let t = v.random_tree(18, &mut rng);
            assert!(v.is_admissible(&t), "{t}");
        }
    }

    #[test]
    fn mutations_stay_admissible() {
        let v = var();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut e = Expr::var(0);
        for _ in 0..5000 {
            e = v.mutate(&e, &mut rng);
            assert!(v.is_admissible(&e), "{e}");
        }
    }

    #[test]
    fn crossover_at_root_of_equal_trees() {
        let v = var();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Expr::var(0);
        assert_eq!(v.crossover(&x, &x, &mut rng), (x.clone(), x));
    }

    #[test]
    fn constant_perturb_scales() {
        let v = var();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = v.apply(MutationKind::ConstantPerturb, &Expr::constant(1.0), &mut rng).unwrap();
        assert!(matches!(out, Expr::Const(c) if c != 1.0 && c.abs() < 3.0));
    }

    #[test]
    fn exponents_are_masked() {
        let e = Expr::var(0).pow(Expr::constant(2.0)) + Expr::constant(3.0);
        assert_eq!(exponent_mask(&e), [false, false, false, true, false]);
    }
}
