//! Assumptions: the composite analysis that records them, post-processing
//! into a condition formula, and assumption automata.

pub mod automaton;
pub mod composite;
pub mod postprocess;

pub use automaton::{Automaton, AutomatonError};
pub use composite::{CompositeConfig, CompositeCpa, CompositeState, DomainKind, DomainState};
pub use postprocess::{postprocess, Clause, Condition, StateStatus, Verdict};
