//! Conditional model checking for a small imperative integer language.

pub mod assumptions;
pub mod cfa;
pub mod conditions;
pub mod cpa;
pub mod domains;
pub mod driver;
pub mod formula;
pub mod gen;
pub mod oracle;
pub mod par;
pub mod refine;
pub mod syntax;
