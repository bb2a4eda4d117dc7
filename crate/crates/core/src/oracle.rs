//! Concrete semantics: a single-step interpreter, bounded exhaustive
//! reachability and a brute-force boolean abstraction. Used to check the
//! analyses against ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::cfa::{Cfa, Edge, EdgeId, LocationId, Operation, VarName};
use crate::formula::{Atom, Formula, Int};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConcreteState {
    pub pc: LocationId,
    pub store: BTreeMap<VarName, i64>,
}

impl ConcreteState {
    pub fn initial(cfa: &Cfa) -> ConcreteState {
        ConcreteState { pc: cfa.initial(), store: cfa.variables().iter().map(|v| (v.clone(), 0)).collect() }
    }

    pub fn get(&self, v: &str) -> Option<i64> {
        self.store.get(v).copied()
    }

    pub fn env(&self) -> impl Fn(&str) -> Option<Int> + '_ {
        |v| self.get(v).map(Int::from)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("havoc edges must be expanded by the caller")]
    Havoc,
    #[error("edge {0} does not leave the current location")]
    WrongLocation(EdgeId),
    #[error("arithmetic overflow on edge {0}")]
    Overflow(EdgeId),
    #[error("undefined variable on edge {0}")]
    Undefined(EdgeId),
    #[error("state budget of {0} exceeded")]
    BudgetExceeded(usize),
}

/// Executes a non-havoc edge. `Ok(None)` means the assumption is violated.
pub fn step(c: &ConcreteState, edge: &Edge) -> Result<Option<ConcreteState>, OracleError> {
    if c.pc != edge.source {
        return Err(OracleError::WrongLocation(edge.id));
    }
    let env = |v: &str| c.get(v);
    match &edge.op {
        Operation::Assign(v, t) => {
            let x = t.eval(&env).map_err(|_| OracleError::Overflow(edge.id))?.ok_or(OracleError::Undefined(edge.id))?;
            let mut next = c.clone();
            next.pc = edge.target;
            next.store.insert(v.clone(), x);
            Ok(Some(next))
        }
        Operation::Assume(b) => {
            let holds = b.eval(&env).map_err(|_| OracleError::Overflow(edge.id))?.ok_or(OracleError::Undefined(edge.id))?;
            Ok(holds.then(|| ConcreteState { pc: edge.target, store: c.store.clone() }))
        }
        Operation::Havoc(_) => Err(OracleError::Havoc),
    }
}

/// Executes a havoc edge with a chosen value.
pub fn step_havoc(c: &ConcreteState, edge: &Edge, value: i64) -> Result<ConcreteState, OracleError> {
    let Operation::Havoc(v) = &edge.op else {
        return step(c, edge)?.ok_or(OracleError::Undefined(edge.id));
    };
    if c.pc != edge.source {
        return Err(OracleError::WrongLocation(edge.id));
    }
    let mut next = c.clone();
    next.pc = edge.target;
    next.store.insert(v.clone(), value);
    Ok(next)
}

/// Successors of a concrete state, havoc expanded over `range`.
pub fn successors(
    cfa: &Cfa,
    c: &ConcreteState,
    range: (i64, i64),
) -> Result<Vec<(EdgeId, ConcreteState)>, OracleError> {
    let mut out = Vec::new();
    for &eid in cfa.outgoing(c.pc) {
        let edge = cfa.edge(eid);
        if edge.op.is_havoc() {
            for x in range.0..=range.1 {
                out.push((eid, step_havoc(c, edge, x)?));
            }
        } else if let Some(n) = step(c, edge)? {
            out.push((eid, n));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Reachability {
    pub states: BTreeSet<ConcreteState>,
    /// Shortest trace to the first error state found: edges and the states
    /// after each of them.
    pub error_trace: Option<Vec<(EdgeId, ConcreteState)>>,
}

impl Reachability {
    pub fn error_hit(&self) -> bool {
        self.error_trace.is_some()
    }
}

/// Breadth-first enumeration from the all-zero store.
pub fn enumerate_reachable(cfa: &Cfa, range: (i64, i64), budget: usize) -> Result<Reachability, OracleError> {
    enumerate_within(cfa, range, budget, &|_| true)
}

/// Like [`enumerate_reachable`], but only through states satisfying `keep`;
/// a state failing `keep` ends its execution and is not recorded.
pub fn enumerate_within(
    cfa: &Cfa,
    range: (i64, i64),
    budget: usize,
    keep: &dyn Fn(&ConcreteState) -> bool,
) -> Result<Reachability, OracleError> {
    let init = ConcreteState::initial(cfa);
    let mut out = Reachability { states: BTreeSet::new(), error_trace: None };
    if !keep(&init) {
        return Ok(out);
    }
    let mut parent: HashMap<ConcreteState, Option<(EdgeId, ConcreteState)>> = HashMap::new();
    let mut queue = VecDeque::new();
    parent.insert(init.clone(), None);
    out.states.insert(init.clone());
    queue.push_back(init);
    while let Some(c) = queue.pop_front() {
        if cfa.is_error(c.pc) {
            if out.error_trace.is_none() {
                let mut trace = Vec::new();
                let mut cur = c.clone();
                while let Some(Some((e, p))) = parent.get(&cur) {
                    trace.push((*e, cur.clone()));
                    cur = p.clone();
                }
                trace.reverse();
                out.error_trace = Some(trace);
            }
            continue;
        }
        for (e, n) in successors(cfa, &c, range)? {
            if parent.contains_key(&n) || !keep(&n) {
                continue;
            }
            if out.states.len() >= budget {
                return Err(OracleError::BudgetExceeded(budget));
            }
            parent.insert(n.clone(), Some((e, c.clone())));
            out.states.insert(n.clone());
            queue.push_back(n);
        }
    }
    Ok(out)
}

/// Replays `edges` from the initial store, taking havoc values in order.
/// Returns the state after every edge, or `None` if an assumption fails.
pub fn replay(cfa: &Cfa, edges: &[EdgeId], havoc_values: &[i64]) -> Result<Option<Vec<ConcreteState>>, OracleError> {
    let mut c = ConcreteState::initial(cfa);
    let mut values = havoc_values.iter();
    let mut out = Vec::with_capacity(edges.len());
    for &eid in edges {
        let edge = cfa.edge(eid);
        c = if edge.op.is_havoc() {
            let Some(x) = values.next() else { return Ok(None) };
            step_havoc(&c, edge, *x)?
        } else {
            match step(&c, edge)? {
                Some(n) => n,
                None => return Ok(None),
            }
        };
        out.push(c.clone());
    }
    Ok(Some(out))
}

/// Strongest boolean combination of `preds` implied by `sp`, by enumerating
/// every model of `vars` in `[-box_bound, box_bound]`.
pub fn brute_force_boolean_abstraction(sp: &Formula, preds: &[Atom], vars: &[Arc<str>], box_bound: i64) -> Formula {
    let mut minterms: BTreeSet<Vec<bool>> = BTreeSet::new();
    let mut values = vec![-box_bound; vars.len()];
    loop {
        let env = |n: &str| vars.iter().position(|v| &**v == n).map(|i| Int::from(values[i]));
        if sp.eval(&env) == Some(true) {
            minterms.insert(preds.iter().map(|p| p.eval(&env) == Some(true)).collect());
        }
        // odometer increment
        let mut i = 0;
        while i < values.len() && values[i] == box_bound {
            values[i] = -box_bound;
            i += 1;
        }
        if i == values.len() {
            break;
        }
        values[i] += 1;
    }
    if minterms.len() == 1 << preds.len() {
        return Formula::True;
    }
    Formula::or(minterms.into_iter().map(|m| {
        Formula::and(preds.iter().zip(m).map(|(p, b)| if b { Formula::atom(p) } else { Formula::atom(p).not() }))
    }))
}
