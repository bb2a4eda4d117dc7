//! Assumption automata: the path-sensitive form of a condition, exported
//! from an ART and consumed by a later run as an observer.
//!
//! State 0 is the sink `T` (everything below was verified), state 1 is the
//! sink `U` (nothing below was verified). Other states correspond to ART
//! nodes that still lead to unverified parts.
//!
//! ```text
//! cfa-edges 9;
//! state 0 T;
//! state 1 U;
//! state 2 init;
//! trans 0 edge=* assume=true -> 0;
//! trans 1 edge=* assume=true -> 1;
//! trans 2 edge=0 assume=true -> 0;
//! trans 2 edge=1 assume=false -> 3;
//! ```

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use thiserror::Error;

use crate::cfa::{Cfa, EdgeId};
use crate::cpa::{NodeId, Reached};
use crate::formula::Formula;
use crate::syntax::{Parser, SyntaxError, Tok};

pub const SINK_T: u32 = 0;
pub const SINK_U: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StateKind {
    T,
    U,
    Inner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub assumption: Formula,
    pub target: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    cfa_edges: usize,
    states: BTreeMap<u32, StateKind>,
    initial: u32,
    /// `None` edge is the wildcard.
    transitions: BTreeMap<(u32, Option<EdgeId>), Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("automaton was built for a CFA with {expected} edges, this CFA has {found}")]
    Mismatch { expected: usize, found: usize },
    #[error("transition on edge {0} which does not exist in the CFA")]
    UnknownEdge(u32),
    #[error("state {0} is used but not declared")]
    UnknownState(u32),
    #[error("state {0} has two transitions on the same edge")]
    Nondeterministic(u32),
    #[error("automaton has no initial state")]
    NoInitial,
}

/// What the observer does after following an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Prune,
    Continue(u32),
}

impl Automaton {
    /// Single accepting-everything state: the whole program is verified.
    pub fn verified(cfa_edges: usize) -> Automaton {
        let mut a = Automaton {
            cfa_edges,
            states: BTreeMap::from([(SINK_T, StateKind::T)]),
            initial: SINK_T,
            transitions: BTreeMap::new(),
        };
        a.transitions.insert((SINK_T, None), Transition { assumption: Formula::True, target: SINK_T });
        a
    }

    pub fn initial(&self) -> u32 {
        self.initial
    }

    pub fn cfa_edges(&self) -> usize {
        self.cfa_edges
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn kind(&self, q: u32) -> Option<StateKind> {
        self.states.get(&q).copied()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (u32, Option<EdgeId>, &Transition)> {
        self.transitions.iter().map(|((q, e), t)| (*q, *e, t))
    }

    pub fn check_cfa(&self, cfa: &Cfa) -> Result<(), AutomatonError> {
        if self.cfa_edges != cfa.edges().len() {
            return Err(AutomatonError::Mismatch { expected: self.cfa_edges, found: cfa.edges().len() });
        }
        Ok(())
    }

    /// Follows `edge` from `q`; unmatched edges lead to `U`.
    pub fn step(&self, q: u32, edge: EdgeId) -> Step {
        let target = if q == SINK_U {
            SINK_U
        } else {
            self.transitions
                .get(&(q, Some(edge)))
                .or_else(|| self.transitions.get(&(q, None)))
                .map_or(SINK_U, |t| t.target)
        };
        if self.states.get(&target) == Some(&StateKind::T) {
            Step::Prune
        } else {
            Step::Continue(target)
        }
    }

    pub fn parse(src: &str) -> Result<Automaton, AutomatonError> {
        let mut p = Parser::new(src)?;
        // `cfa-edges` tokenizes as `cfa - edges`
        p.expect_keyword("cfa")?;
        p.expect_sym("-")?;
        p.expect_keyword("edges")?;
        let n = p.expect_int()?;
        p.expect_sym(";")?;
        let mut a = Automaton {
            cfa_edges: n.max(0) as usize,
            states: BTreeMap::new(),
            initial: u32::MAX,
            transitions: BTreeMap::new(),
        };
        while p.eat_keyword("state") {
            let id = p.expect_int()? as u32;
            let mut kind = StateKind::Inner;
            while !p.eat_sym(";") {
                match p.expect_ident()?.as_str() {
                    "T" => kind = StateKind::T,
                    "U" => kind = StateKind::U,
                    "init" => a.initial = id,
                    other => return Err(syntax(&p, format!("unknown state tag `{other}`"))),
                }
            }
            a.states.insert(id, kind);
        }
        while p.eat_keyword("trans") {
            let src = p.expect_int()? as u32;
            p.expect_keyword("edge")?;
            p.expect_sym("=")?;
            let edge = if p.eat_sym("*") {
                None
            } else {
                let e = p.expect_int()? as u32;
                if e as usize >= a.cfa_edges {
                    return Err(AutomatonError::UnknownEdge(e));
                }
                Some(EdgeId(e))
            };
            p.expect_keyword("assume")?;
            p.expect_sym("=")?;
            let b = p.bool_expr_no_implication()?;
            let assumption = Formula::from_bool_expr(&b, &|s| Arc::from(s));
            p.expect_sym("->")?;
            let dst = p.expect_int()? as u32;
            p.expect_sym(";")?;
            for s in [src, dst] {
                if !a.states.contains_key(&s) {
                    return Err(AutomatonError::UnknownState(s));
                }
            }
            if a.transitions.insert((src, edge), Transition { assumption, target: dst }).is_some() {
                return Err(AutomatonError::Nondeterministic(src));
            }
        }
        if !matches!(p.peek(), Tok::Eof) {
            return Err(syntax(&p, "expected `trans` line"));
        }
        if a.initial == u32::MAX {
            return Err(AutomatonError::NoInitial);
        }
        Ok(a)
    }

    /// Builds the automaton of an ART: nodes whose subtree is fully verified
    /// collapse into `T`; excluded, waitlisted and error nodes send
    /// everything to `U`.
    pub fn export<S: Clone + PartialEq + fmt::Debug>(reached: &Reached<S>, cfa: &Cfa) -> Automaton {
        let n = reached.node_count();
        let live = |id: NodeId| !reached.node(id).removed;
        let unfinished = |id: NodeId| {
            let node = reached.node(id);
            node.excluded || node.target || node.in_waitlist()
        };
        // Least fixpoint of "leads to something unverified", propagated
        // upwards from unfinished nodes and non-true edge labels.
        let mut covering: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut retained = vec![false; n];
        let mut queue = VecDeque::new();
        for (id, node) in reached.nodes() {
            if node.removed {
                continue;
            }
            if let Some(c) = node.covered_by {
                covering.entry(c).or_default().push(id);
            }
            let seed = unfinished(id)
                || node.children.iter().any(|c| live(*c) && !reached.node(*c).assumption.is_true());
            if seed {
                retained[id.0] = true;
                queue.push_back(id);
            }
        }
        while let Some(id) = queue.pop_front() {
            let parent = reached.node(id).parent.map(|(p, _)| p);
            let covered = covering.get(&id).into_iter().flatten().copied();
            for m in parent.into_iter().chain(covered) {
                if live(m) && !retained[m.0] {
                    retained[m.0] = true;
                    queue.push_back(m);
                }
            }
        }
        let root = reached.root();
        if !retained[root.0] {
            return Automaton::verified(cfa.edges().len());
        }

        // Number retained, uncovered nodes in BFS order.
        let resolve = |id: NodeId| reached.node(id).covered_by.unwrap_or(id);
        let mut ids: BTreeMap<NodeId, u32> = BTreeMap::new();
        let mut queue = VecDeque::from([root]);
        let mut order = Vec::new();
        while let Some(id) = queue.pop_front() {
            let id = resolve(id);
            if ids.contains_key(&id) || !retained[id.0] {
                continue;
            }
            ids.insert(id, 2 + order.len() as u32);
            order.push(id);
            for c in &reached.node(id).children {
                if live(*c) {
                    queue.push_back(*c);
                }
            }
        }

        let mut a = Automaton {
            cfa_edges: cfa.edges().len(),
            states: BTreeMap::from([(SINK_T, StateKind::T), (SINK_U, StateKind::U)]),
            initial: ids[&root],
            transitions: BTreeMap::new(),
        };
        a.transitions.insert((SINK_T, None), Transition { assumption: Formula::True, target: SINK_T });
        a.transitions.insert((SINK_U, None), Transition { assumption: Formula::True, target: SINK_U });
        for id in order {
            let q = ids[&id];
            a.states.insert(q, StateKind::Inner);
            if unfinished(id) {
                a.transitions.insert((q, None), Transition { assumption: Formula::True, target: SINK_U });
                continue;
            }
            let node = reached.node(id);
            // Outgoing edges without a successor were found infeasible.
            for e in cfa.outgoing(node.location) {
                a.transitions.insert((q, Some(*e)), Transition { assumption: Formula::True, target: SINK_T });
            }
            let mut seen = std::collections::BTreeSet::new();
            for c in &node.children {
                let child = reached.node(*c);
                if child.removed {
                    continue;
                }
                let Some((_, edge)) = child.parent else { continue };
                if !seen.insert(edge) {
                    continue;
                }
                let m = resolve(*c);
                let label = child.assumption.clone();
                let target = if label.is_true() || label.is_false() {
                    if retained[m.0] {
                        ids[&m]
                    } else {
                        SINK_T
                    }
                } else {
                    // The subtree was only verified under this assumption.
                    SINK_U
                };
                a.transitions.insert((q, Some(edge)), Transition { assumption: label, target });
            }
        }
        a
    }
}

fn syntax(p: &Parser, msg: impl Into<String>) -> AutomatonError {
    AutomatonError::Syntax(p.error::<()>(msg).unwrap_err())
}

impl fmt::Display for Automaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cfa-edges {};", self.cfa_edges)?;
        for (id, kind) in &self.states {
            let mut line = format!("state {id}");
            match kind {
                StateKind::T => line.push_str(" T"),
                StateKind::U => line.push_str(" U"),
                StateKind::Inner => {}
            }
            if *id == self.initial {
                line.push_str(" init");
            }
            writeln!(f, "{line};")?;
        }
        for ((q, e), t) in &self.transitions {
            let mut edge = String::new();
            match e {
                Some(e) => write!(edge, "{e}")?,
                None => edge.push('*'),
            }
            writeln!(f, "trans {q} edge={edge} assume={} -> {};", t.assumption, t.target)?;
        }
        Ok(())
    }
}
