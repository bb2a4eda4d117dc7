//! Turning the reached set into a condition: one implication per state,
//! `(pc = l) -> !e_P` for unfinished states and `(pc = l) -> (!e_P | e_A)`
//! for settled ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::assumptions::composite::CompositeState;
use crate::cfa::LocationId;
use crate::cpa::Reached;
use crate::formula::{Formula, Int};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum Verdict {
    #[serde(rename = "TRUE")]
    True,
    #[serde(rename = "FALSE")]
    False,
    #[serde(rename = "CONDITION")]
    Condition,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::True => "TRUE",
            Verdict::False => "FALSE",
            Verdict::Condition => "CONDITION",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause {
    pub loc: LocationId,
    pub body: Formula,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(pc = {}) -> ({})", self.loc.0, self.body)
    }
}

/// How a state ended up when the run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateStatus {
    /// Still waiting to be expanded.
    Waiting,
    /// At an error location.
    Error,
    /// Expanded, or excluded by an assumption.
    Settled,
}

/// A conjunction of location-guarded clauses; no clauses means `true`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Condition {
    clauses: BTreeSet<Clause>,
}

impl Condition {
    pub fn from_states<'a>(states: impl IntoIterator<Item = (LocationId, StateStatus, &'a Formula, &'a Formula)>) -> Condition {
        let mut clauses = BTreeSet::new();
        for (loc, status, e_p, e_a) in states {
            let body = match status {
                StateStatus::Waiting | StateStatus::Error => e_p.not(),
                StateStatus::Settled => Formula::or2(e_p.not(), e_a.clone()),
            };
            if !body.is_true() {
                clauses.insert(Clause { loc, body });
            }
        }
        Condition { clauses }
    }

    pub fn is_true(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter()
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Clauses grouped by location, for repeated evaluation.
    pub fn by_location(&self) -> BTreeMap<LocationId, Vec<&Formula>> {
        let mut out: BTreeMap<LocationId, Vec<&Formula>> = BTreeMap::new();
        for c in &self.clauses {
            out.entry(c.loc).or_default().push(&c.body);
        }
        out
    }

    /// Whether a concrete state at `loc` satisfies the condition. Clauses
    /// that cannot be evaluated (opaque terms) count as violated.
    pub fn holds(&self, loc: LocationId, env: &dyn Fn(&str) -> Option<Int>) -> bool {
        self.clauses.iter().filter(|c| c.loc == loc).all(|c| c.body.eval(env) == Some(true))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# psi")?;
        if self.clauses.is_empty() {
            return writeln!(f, "true");
        }
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn state_status(reached: &Reached<CompositeState>, id: crate::cpa::NodeId) -> StateStatus {
    let n = reached.node(id);
    if n.target {
        StateStatus::Error
    } else if n.in_waitlist() {
        StateStatus::Waiting
    } else {
        StateStatus::Settled
    }
}

/// Condition of a finished run and whether it amounts to `TRUE`.
pub fn postprocess(reached: &Reached<CompositeState>) -> (Condition, Verdict) {
    let rendered: Vec<(LocationId, StateStatus, Formula, Formula)> = reached
        .reached()
        .map(|(id, n)| (n.location, state_status(reached, id), n.state.domain.formula(), n.assumption.clone()))
        .collect();
    let condition = Condition::from_states(rendered.iter().map(|(l, s, p, a)| (*l, *s, p, a)));
    let unfinished = rendered.iter().any(|(_, s, _, a)| *s != StateStatus::Settled || !a.is_true());
    let verdict = if unfinished || !reached.waitlist_is_empty() { Verdict::Condition } else { Verdict::True };
    (condition, verdict)
}
