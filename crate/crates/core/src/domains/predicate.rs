//! Predicate abstraction: abstract states are formulas over the predicates
//! tracked at their location.

use thiserror::Error;

use crate::cfa::Edge;
use crate::formula::{Atom, Formula, PathFormula, SolverCache};

pub const DEFAULT_MINTERM_BOUND: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("predicate abstraction could not be computed")]
pub struct AbstractionFailure;

/// Strongest postcondition of `state` along `edge` as an SSA path formula.
pub fn strongest_post(state: &Formula, edge: &Edge) -> PathFormula {
    let mut pf = PathFormula::new();
    pf.push_formula(pf.instantiate(state));
    pf.push(&edge.op);
    pf
}

/// Abstract successor of `state` along `edge` over `preds`. `Ok(False)` means
/// the successor is unreachable.
pub fn abstract_post(
    state: &Formula,
    edge: &Edge,
    preds: &[Atom],
    minterm_bound: usize,
    solver: &mut SolverCache,
) -> Result<Formula, AbstractionFailure> {
    let pf = strongest_post(state, edge);
    let sp = pf.formula();
    let pairs: Vec<(Formula, Formula)> = preds
        .iter()
        .map(|p| {
            let f = Formula::atom(p);
            let inst = pf.instantiate(&f);
            (f, inst)
        })
        .collect();
    abstraction(&sp, &pairs, minterm_bound, solver)
}

/// Boolean abstraction of `sp` over predicates given as (rendered, instantiated)
/// pairs: exact up to `minterm_bound` predicates, Cartesian beyond.
pub fn abstraction(
    sp: &Formula,
    preds: &[(Formula, Formula)],
    minterm_bound: usize,
    solver: &mut SolverCache,
) -> Result<Formula, AbstractionFailure> {
    if solver.is_unsat(sp).map_err(|_| AbstractionFailure)? {
        return Ok(Formula::False);
    }
    if preds.len() <= minterm_bound {
        split(sp, preds, 0, &mut Vec::new(), solver)
    } else {
        cartesian(sp, preds, solver)
    }
}

/// Enumerates satisfiable minterms as a decision tree, merging branches
/// that lead to identical sub-results. `cube` is known not to be unsat
/// together with `sp`.
fn split(
    sp: &Formula,
    preds: &[(Formula, Formula)],
    i: usize,
    cube: &mut Vec<Formula>,
    solver: &mut SolverCache,
) -> Result<Formula, AbstractionFailure> {
    let Some((p, inst)) = preds.get(i) else {
        return Ok(Formula::True);
    };
    let feasible = |lit: Formula, cube: &mut Vec<Formula>, solver: &mut SolverCache| {
        let q = Formula::and(std::iter::once(sp.clone()).chain(cube.iter().cloned()).chain([lit]));
        solver.is_unsat(&q).map(|u| !u).map_err(|_| AbstractionFailure)
    };
    let pos_ok = feasible(inst.clone(), cube, solver)?;
    let neg_ok = feasible(inst.not(), cube, solver)?;
    let branch = |lit: Formula, cube: &mut Vec<Formula>, solver: &mut SolverCache| {
        cube.push(lit);
        let r = split(sp, preds, i + 1, cube, solver);
        cube.pop();
        r
    };
    Ok(match (pos_ok, neg_ok) {
        (true, true) => {
            let a = branch(inst.clone(), cube, solver)?;
            let b = branch(inst.not(), cube, solver)?;
            if a == b {
                a
            } else {
                Formula::or2(Formula::and2(p.clone(), a), Formula::and2(p.not(), b))
            }
        }
        (true, false) => Formula::and2(p.clone(), branch(inst.clone(), cube, solver)?),
        (false, true) => Formula::and2(p.not(), branch(inst.not(), cube, solver)?),
        (false, false) => Formula::False,
    })
}

fn cartesian(
    sp: &Formula,
    preds: &[(Formula, Formula)],
    solver: &mut SolverCache,
) -> Result<Formula, AbstractionFailure> {
    let mut parts = Vec::new();
    for (p, inst) in preds {
        if solver.is_unsat(&Formula::and2(sp.clone(), inst.not())).map_err(|_| AbstractionFailure)? {
            parts.push(p.clone());
        } else if solver.is_unsat(&Formula::and2(sp.clone(), inst.clone())).map_err(|_| AbstractionFailure)? {
            parts.push(p.not());
        }
    }
    Ok(Formula::and(parts))
}
