//! The analysis domains: location, explicit values, and predicates.

pub mod explicit;
pub mod precision;
pub mod predicate;

use crate::cfa::{Edge, LocationId};

pub use explicit::ExplicitState;
pub use precision::Precision;

/// Flat lattice over program locations; `Top` stands for any location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocationState {
    At(LocationId),
    Top,
}

impl LocationState {
    pub fn transfer(self, edge: &Edge) -> Option<LocationState> {
        match self {
            LocationState::At(l) if l != edge.source => None,
            _ => Some(LocationState::At(edge.target)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::{BoolExpr, EdgeId, Operation};

    #[test]
    fn location_transfer_follows_edges() {
        let e = Edge { id: EdgeId(0), source: LocationId(0), target: LocationId(1), op: Operation::Assume(BoolExpr::True) };
        assert_eq!(LocationState::At(LocationId(0)).transfer(&e), Some(LocationState::At(LocationId(1))));
        assert_eq!(LocationState::At(LocationId(2)).transfer(&e), None);
        assert_eq!(LocationState::Top.transfer(&e), Some(LocationState::At(LocationId(1))));
    }
}
