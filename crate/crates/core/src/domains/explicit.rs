//! Explicit-value analysis: a partial map from variables to integers,
//! absent entries meaning "unknown".

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use log::warn;

use crate::cfa::{Cfa, Edge, Operation, VarName};
use crate::formula::{Formula, LinExpr, Var};

/// More defined variables than this and coverage probing falls back to a scan.
const PROBE_LIMIT: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExplicitState {
    values: BTreeMap<VarName, i64>,
}

impl ExplicitState {
    /// The all-zero store.
    pub fn initial(cfa: &Cfa) -> ExplicitState {
        ExplicitState { values: cfa.variables().iter().map(|v| (v.clone(), 0)).collect() }
    }

    pub fn top() -> ExplicitState {
        ExplicitState::default()
    }

    pub fn from_values(values: impl IntoIterator<Item = (VarName, i64)>) -> ExplicitState {
        ExplicitState { values: values.into_iter().collect() }
    }

    pub fn get(&self, v: &str) -> Option<i64> {
        self.values.get(v).copied()
    }

    pub fn values(&self) -> &BTreeMap<VarName, i64> {
        &self.values
    }

    pub fn transfer(&self, edge: &Edge) -> Option<ExplicitState> {
        let env = |v: &str| self.get(v);
        match &edge.op {
            Operation::Assign(v, t) => {
                let mut next = self.clone();
                match t.eval(&env) {
                    Ok(Some(x)) => {
                        next.values.insert(v.clone(), x);
                    }
                    Ok(None) => {
                        next.values.remove(v);
                    }
                    Err(_) => {
                        warn!("arithmetic overflow evaluating `{t}` on edge {}; value becomes unknown", edge.id);
                        next.values.remove(v);
                    }
                }
                Some(next)
            }
            Operation::Assume(c) => match c.eval(&env) {
                Ok(Some(false)) => None,
                Ok(_) => Some(self.clone()),
                Err(_) => {
                    warn!("arithmetic overflow evaluating `{c}` on edge {}; treated as unknown", edge.id);
                    Some(self.clone())
                }
            },
            Operation::Havoc(v) => {
                let mut next = self.clone();
                next.values.remove(v);
                Some(next)
            }
        }
    }

    /// `self` is covered by `other` if `other` is less or equally defined and
    /// agrees on everything it defines.
    pub fn is_covered_by(&self, other: &ExplicitState) -> bool {
        other.values.iter().all(|(v, x)| self.values.get(v) == Some(x))
    }

    pub fn to_formula(&self) -> Formula {
        Formula::and(self.values.iter().map(|(v, x)| {
            Formula::eq(&LinExpr::var(Var::Name(v.clone())).sub(&LinExpr::constant(*x as i128)))
        }))
    }

    pub fn bucket(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.values.hash(&mut h);
        h.finish()
    }

    /// Buckets of every sub-map, i.e. of every state that could cover this one.
    pub fn probe_buckets(&self) -> Option<Vec<u64>> {
        let entries: Vec<(&VarName, &i64)> = self.values.iter().collect();
        if entries.len() > PROBE_LIMIT {
            return None;
        }
        let mut out = Vec::with_capacity(1 << entries.len());
        for mask in 0u32..(1 << entries.len()) {
            let sub: BTreeMap<VarName, i64> = entries
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, (v, x))| ((*v).clone(), **x))
                .collect();
            out.push(ExplicitState { values: sub }.bucket());
        }
        Some(out)
    }
}

impl std::fmt::Display for ExplicitState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, (v, x)) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}={x}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::parse_cfa;

    fn state(vals: &[(&str, i64)]) -> ExplicitState {
        ExplicitState::from_values(vals.iter().map(|(v, x)| (VarName::from(*v), *x)))
    }

    fn edge(op: &str) -> Edge {
        parse_cfa(&format!("vars: x, y; init: L0; L0 -> L1: {op};")).unwrap().edges()[0].clone()
    }

    #[test]
    fn assignment_evaluates() {
        assert_eq!(state(&[("x", 1)]).transfer(&edge("x := x + 2")), Some(state(&[("x", 3)])));
        assert_eq!(state(&[("x", 1)]).transfer(&edge("x := y + 2")), Some(state(&[])));
    }

    #[test]
    fn assume_keeps_unknown_and_drops_false() {
        assert_eq!(state(&[]).transfer(&edge("assume x < 10")), Some(state(&[])));
        assert_eq!(state(&[("x", 5)]).transfer(&edge("assume x < 3")), None);
    }

    #[test]
    fn overflow_becomes_unknown() {
        let s = state(&[("x", i64::MAX)]);
        assert_eq!(s.transfer(&edge("x := x + 1")), Some(state(&[])));
    }

    #[test]
    fn coverage_by_less_defined_state() {
        assert!(state(&[("x", 1)]).is_covered_by(&state(&[("x", 1)])));
        assert!(state(&[("x", 1)]).is_covered_by(&state(&[])));
        assert!(!state(&[]).is_covered_by(&state(&[("x", 1)])));
    }

    #[test]
    fn probes_include_every_coverer_bucket() {
        let s = state(&[("x", 1), ("y", 2)]);
        let probes = s.probe_buckets().unwrap();
        for c in [state(&[]), state(&[("x", 1)]), state(&[("y", 2)]), s.clone()] {
            assert!(probes.contains(&c.bucket()));
        }
    }

    #[test]
    fn renders_as_equalities() {
        assert_eq!(state(&[("x", 1), ("y", -2)]).to_formula().to_string(), "(x = 1) & (y = -2)");
        assert_eq!(state(&[]).to_formula(), Formula::True);
    }
}
