use std::collections::BTreeMap;

use crate::expr::Expr;
use crate::fitness::FitnessReport;

#[derive(Clone, Debug, PartialEq)]
pub struct HallEntry {
    pub expr: Expr,
    pub report: FitnessReport,
}

/// Best valid candidate per complexity.
///
/// An entry is replaced only by a strictly lower composite, so ties keep
/// the earlier discovery.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HallOfFame {
    entries: BTreeMap<usize, HallEntry>,
}

impl HallOfFame {
    pub fn new() -> HallOfFame {
        HallOfFame::default()
    }

    /// Offers a candidate; returns whether it entered. Invalid candidates never do.
    pub fn insert(&mut self, expr: &Expr, report: &FitnessReport) -> bool {
        if !report.valid || !report.composite.is_finite() {
            return false;
        }
        let c = expr.complexity();
        match self.entries.get(&c) {
            Some(e) if e.report.composite <= report.composite => false,
            _ => {
                self.entries.insert(
                    c,
                    HallEntry {
                        expr: expr.clone(),
                        report: report.clone(),
                    },
                );
                true
            }
        }
    }

    /// Offers every entry of `other` in complexity order.
    pub fn merge(&mut self, other: &HallOfFame) {
        for e in other.entries.values() {
            self.insert(&e.expr, &e.report);
        }
    }

    pub fn get(&self, complexity: usize) -> Option<&HallEntry> {
        self.entries.get(&complexity)
    }

    /// Entries in ascending complexity.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &HallEntry)> {
        self.entries.iter().map(|(c, e)| (*c, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lowest composite over all entries.
    pub fn best(&self) -> Option<&HallEntry> {
        self.entries
            .values()
            .fold(None, |b: Option<&HallEntry>, e| match b {
                Some(b) if b.report.composite <= e.report.composite => Some(b),
                _ => Some(e),
            })
    }

    /// Whether the entry at `complexity` is beaten by a simpler one with
    /// composite no larger.
    pub fn is_dominated(&self, complexity: usize) -> bool {
        let Some(e) = self.entries.get(&complexity) else {
            return false;
        };
        self.entries
            .range(..complexity)
            .any(|(_, s)| s.report.composite <= e.report.composite)
    }
}
