//! The composite analysis: assumption component, location, condition
//! counters, a value domain and an optional observer automaton, tied
//! together by the strengthening step.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::assumptions::automaton::{Automaton, Step, SINK_U};
use crate::cfa::{Cfa, Edge, LocationId, Operation};
use crate::conditions::{PathLimits, PathStats, RepeatState};
use crate::cpa::{Cpa, Successor};
use crate::domains::predicate::{abstract_post, DEFAULT_MINTERM_BOUND};
use crate::domains::{ExplicitState, Precision};
use crate::formula::{Entailment, Formula, LinExpr, SolverCache, SolverConfig, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Location,
    Explicit,
    Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainState {
    Location,
    Explicit(ExplicitState),
    Predicate(Formula),
}

impl DomainState {
    pub fn top(kind: DomainKind) -> DomainState {
        match kind {
            DomainKind::Location => DomainState::Location,
            DomainKind::Explicit => DomainState::Explicit(ExplicitState::top()),
            DomainKind::Predicate => DomainState::Predicate(Formula::True),
        }
    }

    /// The state as a formula over program variables.
    pub fn formula(&self) -> Formula {
        match self {
            DomainState::Location => Formula::True,
            DomainState::Explicit(s) => s.to_formula(),
            DomainState::Predicate(f) => f.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeState {
    pub assumption: Formula,
    pub loc: LocationId,
    pub repeat: Option<RepeatState>,
    pub path: Option<PathStats>,
    pub domain: DomainState,
    /// Current state of the input automaton, if one is attached.
    pub obs: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeConfig {
    pub domain: DomainKind,
    pub repeat_limit: Option<u32>,
    pub path_limits: PathLimits,
    /// `(MIN, MAX)` for the overflow monitor; off when `None`.
    pub overflow: Option<(i64, i64)>,
    pub minterm_bound: usize,
    pub solver: SolverConfig,
}

impl CompositeConfig {
    pub fn new(domain: DomainKind) -> CompositeConfig {
        CompositeConfig {
            domain,
            repeat_limit: None,
            path_limits: PathLimits::default(),
            overflow: None,
            minterm_bound: DEFAULT_MINTERM_BOUND,
            solver: SolverConfig::default(),
        }
    }
}

pub const INT32_BOUNDS: (i64, i64) = (i32::MIN as i64, i32::MAX as i64);

/// `(x ≥ MIN) ∧ (x ≤ MAX)` after an assignment to `x`, `true` otherwise.
pub fn overflow_transfer(edge: &Edge, bounds: (i64, i64)) -> Formula {
    let Operation::Assign(x, _) = &edge.op else {
        return Formula::True;
    };
    let v = LinExpr::var(Var::Name(x.clone()));
    Formula::and2(
        Formula::le(&LinExpr::constant(bounds.0 as i128).sub(&v)),
        Formula::le(&v.sub(&LinExpr::constant(bounds.1 as i128))),
    )
}

pub struct CompositeCpa {
    pub config: CompositeConfig,
    pub precision: Precision,
    pub observer: Option<Arc<Automaton>>,
    pub solver: SolverCache,
}

impl CompositeCpa {
    pub fn new(config: CompositeConfig) -> CompositeCpa {
        let solver = SolverCache::new(config.solver);
        CompositeCpa { config, precision: Precision::new(), observer: None, solver }
    }

    pub fn with_observer(mut self, automaton: Arc<Automaton>) -> CompositeCpa {
        self.observer = Some(automaton);
        self
    }

    fn step_observer(&self, s: &CompositeState, edge: &Edge) -> Option<Option<u32>> {
        match (&self.observer, s.obs) {
            (Some(a), Some(q)) => match a.step(q, edge.id) {
                Step::Prune => None,
                Step::Continue(q) => Some(Some(q)),
            },
            _ => Some(s.obs),
        }
    }

    fn counters(&self, s: &CompositeState, edge: &Edge) -> (Option<RepeatState>, Option<PathStats>, bool) {
        let repeat = match (&s.repeat, self.config.repeat_limit) {
            (Some(r), Some(k)) => Some(r.transfer(edge.target, k)),
            _ => s.repeat.clone(),
        };
        let path = s.path.map(|p| p.transfer(edge, &self.config.path_limits));
        let exceeded = repeat.as_ref().is_some_and(|r| r.exceeded) || path.is_some_and(|p| p.exceeded);
        (repeat, path, exceeded)
    }

    fn domain_covers(&mut self, s: &DomainState, c: &DomainState) -> bool {
        match (s, c) {
            (DomainState::Location, DomainState::Location) => true,
            (DomainState::Explicit(a), DomainState::Explicit(b)) => a.is_covered_by(b),
            (DomainState::Predicate(a), DomainState::Predicate(b)) => {
                b.is_true() || a == b || self.solver.entails(a, b) == Entailment::Yes
            }
            _ => false,
        }
    }
}

impl Cpa for CompositeCpa {
    type State = CompositeState;

    fn initial_state(&mut self, cfa: &Cfa) -> CompositeState {
        let domain = match self.config.domain {
            DomainKind::Location => DomainState::Location,
            DomainKind::Explicit => DomainState::Explicit(ExplicitState::initial(cfa)),
            DomainKind::Predicate => DomainState::Predicate(Formula::True),
        };
        let repeat = self.config.repeat_limit.map(|_| RepeatState {
            counts: [(cfa.initial(), 1)].into_iter().collect(),
            exceeded: false,
        });
        let limits = self.config.path_limits;
        let path = (limits.length.is_some() || limits.assume_edges.is_some()).then(PathStats::default);
        CompositeState {
            assumption: Formula::True,
            loc: cfa.initial(),
            repeat,
            path,
            domain,
            obs: self.observer.as_ref().map(|a| a.initial()),
        }
    }

    fn location(&self, s: &CompositeState) -> LocationId {
        s.loc
    }

    fn successors(&mut self, s: &CompositeState, edge: &Edge) -> Vec<Successor<CompositeState>> {
        let Some(obs) = self.step_observer(s, edge) else {
            return Vec::new();
        };
        let mut failed = false;
        let mut domain = match &s.domain {
            DomainState::Location => DomainState::Location,
            DomainState::Explicit(v) => match v.transfer(edge) {
                Some(n) => DomainState::Explicit(n),
                None => return Vec::new(),
            },
            DomainState::Predicate(f) => {
                let preds = self.precision.at(edge.target);
                match abstract_post(f, edge, &preds, self.config.minterm_bound, &mut self.solver) {
                    Ok(Formula::False) => return Vec::new(),
                    Ok(g) => DomainState::Predicate(g),
                    Err(_) => {
                        failed = true;
                        DomainState::Predicate(Formula::True)
                    }
                }
            }
        };
        let (repeat, path, exceeded) = self.counters(s, edge);
        let mut excluded = failed || exceeded;

        // Strengthening with the overflow monitor.
        let mut assumption = Formula::True;
        if let Some(bounds) = self.config.overflow {
            let phi = overflow_transfer(edge, bounds);
            match &mut domain {
                DomainState::Explicit(v) => match phi.eval(&|x| v.get(x).map(i128::from)) {
                    Some(true) => {}
                    Some(false) => excluded = true,
                    None => assumption = phi,
                },
                DomainState::Predicate(f) if !phi.is_true() => {
                    let g = Formula::and2(f.clone(), phi.clone());
                    if self.solver.is_unsat(&g).unwrap_or(false) {
                        excluded = true;
                    } else {
                        *f = g;
                        assumption = phi;
                    }
                }
                _ => assumption = phi,
            }
        }
        if excluded {
            assumption = Formula::False;
        }
        let state = CompositeState { assumption, loc: edge.target, repeat, path, domain, obs };
        vec![Successor { state, excluded }]
    }

    fn excluded_successor(&mut self, s: &CompositeState, edge: &Edge) -> CompositeState {
        let obs = self.step_observer(s, edge).unwrap_or(Some(SINK_U));
        let (repeat, path, _) = self.counters(s, edge);
        CompositeState {
            assumption: Formula::False,
            loc: edge.target,
            repeat,
            path,
            domain: DomainState::top(self.config.domain),
            obs,
        }
    }

    fn merge(&mut self, new: &CompositeState, existing: &CompositeState) -> CompositeState {
        if new.loc != existing.loc || new.domain != existing.domain || new.obs != existing.obs {
            return existing.clone();
        }
        let repeat = match (&new.repeat, &existing.repeat) {
            (Some(a), Some(b)) => Some(b.merge(a)),
            _ => existing.repeat.clone(),
        };
        let path = match (new.path, existing.path) {
            (Some(a), Some(b)) => Some(b.merge(&a)),
            _ => existing.path,
        };
        CompositeState {
            assumption: Formula::and2(existing.assumption.clone(), new.assumption.clone()),
            loc: existing.loc,
            repeat,
            path,
            domain: existing.domain.clone(),
            obs: existing.obs,
        }
    }

    fn covers(&mut self, s: &CompositeState, c: &CompositeState) -> bool {
        if s.loc != c.loc || !(s.obs == c.obs || c.obs == Some(SINK_U)) {
            return false;
        }
        if !self.domain_covers(&s.domain, &c.domain) {
            return false;
        }
        s.assumption.is_true()
            || c.assumption == s.assumption
            || self.solver.entails(&c.assumption, &s.assumption) == Entailment::Yes
    }

    fn assumption(&self, s: &CompositeState) -> Formula {
        s.assumption.clone()
    }

    fn bucket(&self, s: &CompositeState) -> u64 {
        let b = match &s.domain {
            DomainState::Explicit(v) => v.bucket(),
            _ => 0,
        };
        with_obs(b, s.obs)
    }

    /// A coverer has a sub-map of the explicit values and the same observer
    /// state, or the observer is in `U`.
    fn probe_buckets(&self, s: &CompositeState) -> Option<Vec<u64>> {
        let domain = match &s.domain {
            DomainState::Explicit(v) => v.probe_buckets()?,
            _ => vec![0],
        };
        let mut obs = vec![s.obs];
        if s.obs.is_some() && s.obs != Some(SINK_U) {
            obs.push(Some(SINK_U));
        }
        Some(domain.iter().flat_map(|b| obs.iter().map(|o| with_obs(*b, *o))).collect())
    }
}

fn with_obs(bucket: u64, obs: Option<u32>) -> u64 {
    match obs {
        None => bucket,
        Some(q) => {
            let mut h = DefaultHasher::new();
            (bucket, q).hash(&mut h);
            h.finish()
        }
    }
}
