//! Counterexample analysis: feasibility of abstract error paths, predicate
//! mining, and the refinement loop that turns unrefinable paths into
//! assumptions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use log::{debug, info};

use crate::assumptions::{CompositeCpa, CompositeState, DomainKind};
use crate::cfa::{Cfa, EdgeId, LocationId, Operation};
use crate::conditions::{GlobalMonitor, HaltReason};
use crate::cpa::{run_cpa, NodeId, Reached, RunOutcome};
use crate::formula::path::{initial_store, ssa_name};
use crate::formula::{Atom, Formula, LinExpr, PathFormula, SatResult, SolverCache, SymbolicPath};
use crate::oracle::{self, ConcreteState};

/// A concrete execution reaching an error location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub edges: Vec<EdgeId>,
    pub havoc_values: Vec<i64>,
    /// State after each edge.
    pub states: Vec<ConcreteState>,
    ops: Vec<String>,
}

impl Witness {
    pub fn write(&self, f: &mut impl fmt::Write) -> fmt::Result {
        for (k, ((e, op), c)) in self.edges.iter().zip(&self.ops).zip(&self.states).enumerate() {
            let store: Vec<String> = c.store.iter().map(|(v, x)| format!("{v}={x}")).collect();
            writeln!(f, "step {}: edge {e} {op}; store {{{}}}", k + 1, store.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    Feasible(Witness),
    /// `pivot` is the index (root = 0) of the first unreachable state.
    Infeasible { pivot: usize },
    /// Neither refuted nor confirmed; the error state serves as pivot.
    Unconfirmed,
}

/// Checks the path given by `edges` from the initial store.
pub fn check_feasibility(cfa: &Cfa, edges: &[EdgeId], solver: &mut SolverCache, pf_atoms: Option<usize>) -> Feasibility {
    let mut pf = PathFormula::new();
    pf.push_formula(initial_store(cfa.variables()));
    for e in edges {
        pf.push(&cfa.edge(*e).op);
    }
    if pf_atoms.is_some_and(|limit| pf.atom_count() > limit) {
        debug!("path formula with {} atoms exceeds the limit", pf.atom_count());
        return Feasibility::Unconfirmed;
    }
    let mut sp = SymbolicPath::new(cfa.variables());
    for e in edges {
        sp.push(&cfa.edge(*e).op);
    }
    let prefix = |m: usize| sp.prefix(m);
    match solver.check(&prefix(edges.len())) {
        Ok(SatResult::Sat(model)) => confirm(cfa, edges, &model),
        Ok(SatResult::Unsat) => {
            // Longest prefix that is not unsat; prefixes only get stronger.
            let (mut lo, mut hi) = (0, edges.len());
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                match solver.is_unsat(&prefix(mid)) {
                    Ok(true) => hi = mid,
                    _ => lo = mid,
                }
            }
            Feasibility::Infeasible { pivot: hi }
        }
        Ok(SatResult::MaybeSat) | Err(_) => Feasibility::Unconfirmed,
    }
}

/// Replays a model concretely; anything short of reaching the error
/// location leaves the path unconfirmed.
fn confirm(cfa: &Cfa, edges: &[EdgeId], model: &BTreeMap<std::sync::Arc<str>, i128>) -> Feasibility {
    let mut pf = PathFormula::new();
    let mut havoc_values = Vec::new();
    for e in edges {
        let op = &cfa.edge(*e).op;
        pf.push(op);
        if let Operation::Havoc(v) = op {
            let x = model.get(&ssa_name(v, pf.index(v))).copied().unwrap_or(0);
            match i64::try_from(x) {
                Ok(x) => havoc_values.push(x),
                Err(_) => return Feasibility::Unconfirmed,
            }
        }
    }
    match oracle::replay(cfa, edges, &havoc_values) {
        Ok(Some(states)) if states.last().is_some_and(|c| cfa.is_error(c.pc)) => Feasibility::Feasible(Witness {
            edges: edges.to_vec(),
            havoc_values,
            states,
            ops: edges.iter().map(|e| cfa.edge(*e).op.to_string()).collect(),
        }),
        _ => Feasibility::Unconfirmed,
    }
}

/// Predicates from the assumptions on the first `upto` edges of a path,
/// carried backwards through assignments by substitution. Each atom is
/// attached to the locations where it was found.
pub fn mine_predicates(cfa: &Cfa, edges: &[EdgeId], upto: usize) -> Vec<(LocationId, Atom)> {
    let ident = |n: &str| std::sync::Arc::from(n);
    let mut out: BTreeSet<(LocationId, Atom)> = BTreeSet::new();
    for j in 0..upto.min(edges.len()) {
        let edge = cfa.edge(edges[j]);
        let Operation::Assume(c) = &edge.op else { continue };
        let mut atoms = Vec::new();
        Formula::from_bool_expr(c, &ident).collect_atoms(&mut atoms);
        for a in atoms {
            out.insert((edge.target, a.predicate_key()));
            out.insert((edge.source, a.predicate_key()));
            let mut visited: HashSet<LocationId> = HashSet::from([edge.source]);
            let mut cur = a;
            for i in (0..j).rev() {
                let prev = cfa.edge(edges[i]);
                if !visited.insert(prev.source) {
                    break;
                }
                match &prev.op {
                    Operation::Assign(v, t) if Formula::atom(&cur).names().contains(v) => {
                        let rhs = LinExpr::from_expr(t, &ident);
                        match Formula::atom(&cur).substitute(&|n| (n == &**v).then(|| rhs.clone())) {
                            Formula::Atom(b) | Formula::Not(b) => cur = b,
                            _ => break,
                        }
                    }
                    Operation::Havoc(v) if Formula::atom(&cur).names().contains(v) => break,
                    _ => {}
                }
                out.insert((prev.source, cur.predicate_key()));
            }
        }
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineOptions {
    /// Grow the precision on spurious paths (predicate domain only).
    pub refine: bool,
    /// Rebuild the ART from scratch after each refinement.
    pub full_restart: bool,
    pub pf_atoms: Option<usize>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { refine: true, full_restart: false, pf_atoms: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefineStats {
    pub refinements: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoopOutcome {
    Bug(Witness),
    Complete,
    Halted(HaltReason),
}

/// Runs the analysis, analysing every error state it reaches.
pub fn refine_loop(
    cpa: &mut CompositeCpa,
    cfa: &Cfa,
    reached: &mut Reached<CompositeState>,
    monitor: &mut GlobalMonitor,
    opts: RefineOptions,
) -> (LoopOutcome, RefineStats) {
    let mut stats = RefineStats::default();
    let mut refined_paths: HashSet<Vec<EdgeId>> = HashSet::new();
    loop {
        let targets = match run_cpa(cpa, cfa, reached, monitor, true) {
            RunOutcome::Complete => return (LoopOutcome::Complete, stats),
            RunOutcome::Halted(r) => return (LoopOutcome::Halted(r), stats),
            RunOutcome::TargetReached(t) => t,
        };
        for t in targets {
            let node = reached.node(t);
            if node.removed || node.excluded {
                continue;
            }
            let path = reached.path_to(t);
            let edges: Vec<EdgeId> = path.iter().filter_map(|(_, e)| *e).collect();
            let pivot = match check_feasibility(cfa, &edges, &mut cpa.solver, opts.pf_atoms) {
                Feasibility::Feasible(w) => {
                    info!("error path of length {} confirmed", edges.len());
                    return (LoopOutcome::Bug(w), stats);
                }
                Feasibility::Infeasible { pivot } => pivot,
                Feasibility::Unconfirmed => edges.len(),
            };
            let nodes: Vec<NodeId> = path.iter().map(|(n, _)| *n).collect();
            if opts.refine && cpa.config.domain == DomainKind::Predicate && refined_paths.insert(edges.clone()) {
                let mut changed = BTreeSet::new();
                for (l, a) in mine_predicates(cfa, &edges, pivot) {
                    if cpa.precision.add(l, &a) {
                        changed.insert(l);
                    }
                }
                let cut = (1..nodes.len()).find(|i| changed.contains(&reached.node(nodes[*i]).location));
                if let Some(i) = cut {
                    stats.refinements += 1;
                    debug!("refinement {}: {} new predicates, cut at depth {i}", stats.refinements, changed.len());
                    if opts.full_restart {
                        *reached = Reached::new(cpa, cfa, reached.order());
                    } else {
                        reached.reexpand(nodes[i - 1]);
                    }
                    break;
                }
            }
            stats.failures += 1;
            debug!("giving up on error path of length {}, excluding from depth {pivot}", edges.len());
            exclude_suffix(reached, &nodes[pivot..]);
        }
    }
}

/// Marks the path nodes excluded, dropping everything that branches off them.
fn exclude_suffix(reached: &mut Reached<CompositeState>, nodes: &[NodeId]) {
    for (i, &n) in nodes.iter().enumerate() {
        reached.prune_children(n, nodes.get(i + 1).copied());
        let mut state = reached.node(n).state.clone();
        state.assumption = Formula::False;
        reached.exclude(n, state);
    }
}
