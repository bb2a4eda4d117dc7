//! SSA path formulas.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Formula, LinExpr, Var};
use crate::cfa::{Edge, Operation, VarName};

pub fn ssa_name(v: &str, k: u32) -> Arc<str> {
    Arc::from(format!("{v}@{k}").as_str())
}

/// Splits `x@3` into (`x`, 3).
pub fn split_ssa(name: &str) -> Option<(&str, u32)> {
    let (v, k) = name.rsplit_once('@')?;
    Some((v, k.parse().ok()?))
}

/// Conjunction of per-edge constraints over SSA-indexed variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathFormula {
    parts: Vec<Formula>,
    indices: BTreeMap<VarName, u32>,
}

impl PathFormula {
    pub fn new() -> PathFormula {
        PathFormula::default()
    }

    pub fn build<'a>(edges: impl IntoIterator<Item = &'a Edge>) -> PathFormula {
        let mut pf = PathFormula::new();
        for e in edges {
            pf.push(&e.op);
        }
        pf
    }

    pub fn index(&self, v: &str) -> u32 {
        self.indices.get(v).copied().unwrap_or(0)
    }

    pub fn indices(&self) -> &BTreeMap<VarName, u32> {
        &self.indices
    }

    /// Current SSA name of `v`.
    pub fn current(&self, v: &str) -> Arc<str> {
        ssa_name(v, self.index(v))
    }

    /// Renames a formula over program variables to the current SSA names.
    pub fn instantiate(&self, f: &Formula) -> Formula {
        f.rename(&|n| self.current(n))
    }

    fn bump(&mut self, v: &VarName) -> u32 {
        let k = self.indices.entry(v.clone()).or_insert(0);
        *k += 1;
        *k
    }

    pub fn push(&mut self, op: &Operation) {
        let f = match op {
            Operation::Assign(v, t) => {
                let rhs = LinExpr::from_expr(t, &|n| self.current(n));
                let k = self.bump(v);
                let lhs = LinExpr::var(Var::Name(ssa_name(v, k)));
                Formula::eq(&lhs.sub(&rhs))
            }
            Operation::Assume(c) => Formula::from_bool_expr(c, &|n| self.current(n)),
            Operation::Havoc(v) => {
                self.bump(v);
                Formula::True
            }
        };
        self.parts.push(f);
    }

    /// Adds an arbitrary constraint over the current SSA names.
    pub fn push_formula(&mut self, f: Formula) {
        self.parts.push(f);
    }

    pub fn parts(&self) -> &[Formula] {
        &self.parts
    }

    pub fn formula(&self) -> Formula {
        Formula::and(self.parts.iter().cloned())
    }

    pub fn atom_count(&self) -> usize {
        self.parts.iter().map(Formula::atom_count).sum()
    }
}

/// `v@0 = 0` for every variable: the all-zero initial store.
pub fn initial_store(vars: &[VarName]) -> Formula {
    Formula::and(vars.iter().map(|v| Formula::eq(&LinExpr::var(Var::Name(ssa_name(v, 0))))))
}

/// Path constraints after forward substitution: assignments are folded into
/// a symbolic store, so only assumptions remain, over the values chosen by
/// havocs (named like SSA indices). Assignments whose value stays nonlinear
/// get a fresh name and an equality instead.
#[derive(Debug, Clone, Default)]
pub struct SymbolicPath {
    store: BTreeMap<VarName, LinExpr>,
    indices: BTreeMap<VarName, u32>,
    constraints: Vec<Formula>,
}

impl SymbolicPath {
    /// Starts from the all-zero store.
    pub fn new(vars: &[VarName]) -> SymbolicPath {
        SymbolicPath {
            store: vars.iter().map(|v| (v.clone(), LinExpr::constant(0))).collect(),
            ..SymbolicPath::default()
        }
    }

    fn value(&self, e: &LinExpr) -> LinExpr {
        e.substitute(&|n| self.store.get(n).cloned())
    }

    fn fresh(&mut self, v: &VarName) -> LinExpr {
        let k = self.indices.entry(v.clone()).or_insert(0);
        *k += 1;
        LinExpr::var(Var::Name(ssa_name(v, *k)))
    }

    pub fn push(&mut self, op: &Operation) {
        let ident = |n: &str| Arc::from(n);
        let f = match op {
            Operation::Assign(v, t) => {
                let rhs = self.value(&LinExpr::from_expr(t, &ident));
                let sym = self.fresh(v);
                if rhs.has_opaque() {
                    self.store.insert(v.clone(), sym.clone());
                    Formula::eq(&sym.sub(&rhs))
                } else {
                    self.store.insert(v.clone(), rhs);
                    Formula::True
                }
            }
            Operation::Assume(c) => {
                Formula::from_bool_expr(c, &ident).substitute(&|n| self.store.get(n).cloned())
            }
            Operation::Havoc(v) => {
                let sym = self.fresh(v);
                self.store.insert(v.clone(), sym);
                Formula::True
            }
        };
        self.constraints.push(f);
    }

    /// One constraint per pushed operation.
    pub fn constraints(&self) -> &[Formula] {
        &self.constraints
    }

    /// Constraints of the first `m` operations.
    pub fn prefix(&self, m: usize) -> Formula {
        Formula::and(self.constraints[..m].iter().cloned())
    }
}
