//! Three-valued satisfiability for linear integer formulas.
//!
//! Each DNF clause is first checked with Fourier–Motzkin elimination (with
//! gcd tightening, so sound over the integers). Clauses that survive go to a
//! bounded witness search that assigns named variables one at a time, using
//! projected bounds to choose candidates. `Sat` is only reported with a
//! witness that evaluates the formula to true, products included.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use super::{Atom, Formula, Int, LinExpr, Rel, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Maximum number of DNF clauses before giving up.
    pub clause_bound: usize,
    /// Half-width of the witness window per unbounded variable.
    pub window: Int,
    /// Maximum number of search nodes per clause.
    pub node_budget: usize,
    /// Maximum number of inequalities alive during elimination.
    pub fm_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { clause_bound: 4096, window: 32, node_budget: 20_000, fm_cap: 4_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("formula exceeds the DNF clause bound")]
pub struct FormulaTooLarge;

pub type Model = BTreeMap<Arc<str>, Int>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Unsat,
    Sat(Model),
    MaybeSat,
}

impl SatResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entailment {
    Yes,
    Unknown,
}

/// `e rel 0`
type Lit = (LinExpr, Rel);

fn literal(a: &Atom) -> Lit {
    (a.lhs(), a.rel())
}

fn dnf(f: &Formula, bound: usize) -> Result<Vec<Vec<Lit>>, FormulaTooLarge> {
    Ok(match f {
        Formula::True => vec![vec![]],
        Formula::False => vec![],
        Formula::Atom(a) => vec![vec![literal(a)]],
        Formula::Not(a) => {
            // t ≠ 0  ⇔  t ≤ -1  ∨  -t ≤ -1
            let t = a.lhs();
            let one = LinExpr::constant(1);
            vec![vec![(t.add(&one), Rel::Le)], vec![(t.scale(-1).add(&one), Rel::Le)]]
        }
        Formula::Or(ps) => {
            let mut out = Vec::new();
            for p in ps {
                out.extend(dnf(p, bound)?);
                if out.len() > bound {
                    return Err(FormulaTooLarge);
                }
            }
            out
        }
        Formula::And(ps) => {
            let mut acc: Vec<Vec<Lit>> = vec![vec![]];
            for p in ps {
                let part = dnf(p, bound)?;
                if part.is_empty() {
                    return Ok(vec![]);
                }
                if acc.len().saturating_mul(part.len()) > bound {
                    return Err(FormulaTooLarge);
                }
                let mut next = Vec::with_capacity(acc.len() * part.len());
                for a in &acc {
                    for b in &part {
                        let mut c = a.clone();
                        c.extend(b.iter().cloned());
                        next.push(c);
                    }
                }
                acc = next;
            }
            acc
        }
    })
}

enum Norm {
    True,
    False,
    Lit(Lit),
}

fn normalize(e: &LinExpr, rel: Rel) -> Norm {
    match Atom::build(e, rel) {
        Formula::True => Norm::True,
        Formula::False => Norm::False,
        Formula::Atom(a) => Norm::Lit(literal(&a)),
        _ => unreachable!("atom construction yields atoms or constants"),
    }
}

#[derive(Debug)]
enum Fm {
    Infeasible,
    /// Projected integer bounds of the kept variable, if any.
    Feasible(Option<Int>, Option<Int>),
    GaveUp,
}

fn checked_combine(p: &LinExpr, a: Int, n: &LinExpr, b: Int) -> Option<LinExpr> {
    let mut out = LinExpr::constant(p.constant.checked_mul(a)?.checked_add(n.constant.checked_mul(b)?)?);
    for (v, c) in &p.terms {
        out.add_term(v.clone(), c.checked_mul(a)?);
    }
    for (v, c) in &n.terms {
        out.add_term(v.clone(), c.checked_mul(b)?);
    }
    Some(out)
}

/// Fourier–Motzkin over `lits`, keeping `keep` (if any) uneliminated.
fn fm(lits: &[Lit], keep: Option<&Var>, cap: usize) -> Fm {
    let mut eqs: Vec<LinExpr> = Vec::new();
    let mut les: Vec<LinExpr> = Vec::new();
    for (e, rel) in lits {
        match normalize(e, *rel) {
            Norm::True => {}
            Norm::False => return Fm::Infeasible,
            Norm::Lit((e, Rel::Eq)) => eqs.push(e),
            Norm::Lit((e, Rel::Le)) => les.push(e),
        }
    }

    // Equality elimination by (integer-scaled) substitution.
    while let Some(eq) = eqs.pop() {
        let pick = eq
            .terms
            .iter()
            .filter(|(v, _)| Some(*v) != keep)
            .min_by_key(|(v, c)| (c.abs(), (*v).clone()))
            .map(|(v, c)| (v.clone(), *c));
        let Some((v, c)) = pick else {
            // Only the kept variable remains: split into two bounds.
            les.push(eq.clone());
            les.push(eq.scale(-1));
            continue;
        };
        let mut rest = eq.clone();
        rest.terms.remove(&v);
        // c·v = -rest
        let replace = |e: &LinExpr| -> Option<LinExpr> {
            let d = *e.terms.get(&v)?;
            let mut r = e.clone();
            r.terms.remove(&v);
            checked_combine(&r, c.abs(), &rest, -c.signum() * d)
        };
        let mut next_eqs = Vec::new();
        for e in eqs.drain(..) {
            let e2 = if e.terms.contains_key(&v) {
                match replace(&e) {
                    Some(x) => x,
                    None => return Fm::GaveUp,
                }
            } else {
                e
            };
            match normalize(&e2, Rel::Eq) {
                Norm::True => {}
                Norm::False => return Fm::Infeasible,
                Norm::Lit((x, _)) => next_eqs.push(x),
            }
        }
        eqs = next_eqs;
        let mut next_les = Vec::new();
        for e in les.drain(..) {
            let e2 = if e.terms.contains_key(&v) {
                match replace(&e) {
                    Some(x) => x,
                    None => return Fm::GaveUp,
                }
            } else {
                e
            };
            match normalize(&e2, Rel::Le) {
                Norm::True => {}
                Norm::False => return Fm::Infeasible,
                Norm::Lit((x, _)) => next_les.push(x),
            }
        }
        les = next_les;
    }

    // Keep only the tightest constant per coefficient vector.
    let mut set: BTreeMap<BTreeMap<Var, Int>, Int> = BTreeMap::new();
    let insert = |set: &mut BTreeMap<BTreeMap<Var, Int>, Int>, e: LinExpr| {
        let k = set.entry(e.terms).or_insert(e.constant);
        if e.constant > *k {
            *k = e.constant;
        }
    };
    for e in les {
        insert(&mut set, e);
    }

    loop {
        let mut counts: BTreeMap<&Var, (usize, usize)> = BTreeMap::new();
        for terms in set.keys() {
            for (v, c) in terms {
                if Some(v) == keep {
                    continue;
                }
                let e = counts.entry(v).or_default();
                if *c > 0 {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        let Some(var) = counts
            .iter()
            .min_by_key(|(_, (p, n))| p * n)
            .map(|(v, _)| (*v).clone())
        else {
            break;
        };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut next = BTreeMap::new();
        for (terms, k) in std::mem::take(&mut set) {
            match terms.get(&var).copied() {
                Some(c) if c > 0 => pos.push((LinExpr { terms, constant: k }, c)),
                Some(c) => neg.push((LinExpr { terms, constant: k }, -c)),
                None => insert(&mut next, LinExpr { terms, constant: k }),
            }
        }
        for (p, a) in &pos {
            for (n, b) in &neg {
                let Some(combined) = checked_combine(p, *b, n, *a) else {
                    return Fm::GaveUp;
                };
                match normalize(&combined, Rel::Le) {
                    Norm::True => {}
                    Norm::False => return Fm::Infeasible,
                    Norm::Lit((x, _)) => insert(&mut next, x),
                }
            }
            if next.len() > cap {
                return Fm::GaveUp;
            }
        }
        set = next;
    }

    let (mut lo, mut hi): (Option<Int>, Option<Int>) = (None, None);
    for (terms, k) in &set {
        // Only the kept variable is left, with coefficient ±1 after gcd reduction.
        match terms.values().next().copied() {
            Some(1) => hi = Some(hi.map_or(-k, |h| h.min(-k))),
            Some(-1) => lo = Some(lo.map_or(*k, |l| l.max(*k))),
            _ => {}
        }
    }
    if let (Some(l), Some(h)) = (lo, hi) {
        if l > h {
            return Fm::Infeasible;
        }
    }
    Fm::Feasible(lo, hi)
}

struct Search<'a> {
    cfg: &'a SolverConfig,
    names: Vec<Arc<str>>,
    nodes: usize,
    exhaustive: bool,
}

fn substitute_lits(lits: &[Lit], assign: &Model) -> Option<Vec<Lit>> {
    let mut out = Vec::with_capacity(lits.len());
    for (e, rel) in lits {
        let s = e.substitute(&|n| assign.get(n).map(|v| LinExpr::constant(*v)));
        match normalize(&s, *rel) {
            Norm::True => {}
            Norm::False => return None,
            Norm::Lit(l) => out.push(l),
        }
    }
    Some(out)
}

fn mentions(lits: &[Lit], name: &str) -> bool {
    lits.iter().any(|(e, _)| {
        let mut names = BTreeSet::new();
        e.collect_names(&mut names);
        names.contains(name)
    })
}

impl Search<'_> {
    fn candidates(&mut self, lo: Option<Int>, hi: Option<Int>) -> Vec<Int> {
        let w = self.cfg.window;
        let (wl, wh) = match (lo, hi) {
            (Some(l), _) if l > w => (l, hi.map_or(l + 2 * w, |h| h.min(l + 2 * w))),
            (_, Some(h)) if h < -w => (lo.map_or(h - 2 * w, |l| l.max(h - 2 * w)), h),
            _ => (lo.map_or(-w, |l| l.max(-w)), hi.map_or(w, |h| h.min(w))),
        };
        if lo.is_none_or(|l| l < wl) || hi.is_none_or(|h| h > wh) {
            self.exhaustive = false;
        }
        let mut vals: Vec<Int> = (wl..=wh).collect();
        vals.sort_by_key(|v| (v.abs(), *v));
        vals
    }

    fn run(&mut self, lits: &[Lit], assign: &mut Model) -> Option<Model> {
        self.nodes += 1;
        if self.nodes > self.cfg.node_budget {
            self.exhaustive = false;
            return None;
        }
        let residual = substitute_lits(lits, assign)?;
        let next = self
            .names
            .iter()
            .find(|n| !assign.contains_key(*n) && mentions(&residual, n))
            .cloned();
        let Some(name) = next else {
            if !residual.is_empty() {
                // Only opaque terms with unassigned factors could remain, which
                // cannot happen once every mentioned name is assigned.
                return None;
            }
            let mut model = assign.clone();
            for n in &self.names {
                model.entry(n.clone()).or_insert(0);
            }
            return Some(model);
        };
        let (lo, hi) = match fm(&residual, Some(&Var::Name(name.clone())), self.cfg.fm_cap) {
            Fm::Infeasible => return None,
            Fm::Feasible(lo, hi) => (lo, hi),
            Fm::GaveUp => {
                self.exhaustive = false;
                (None, None)
            }
        };
        for v in self.candidates(lo, hi) {
            assign.insert(name.clone(), v);
            if let Some(m) = self.run(&residual, assign) {
                return Some(m);
            }
            assign.remove(&name);
            if self.nodes > self.cfg.node_budget {
                return None;
            }
        }
        None
    }
}

fn check_clause(lits: &[Lit], cfg: &SolverConfig) -> SatResult {
    match fm(lits, None, cfg.fm_cap) {
        Fm::Infeasible => return SatResult::Unsat,
        Fm::Feasible(..) | Fm::GaveUp => {}
    }
    let mut names = BTreeSet::new();
    let mut opaque = false;
    for (e, _) in lits {
        e.collect_names(&mut names);
        opaque |= e.has_opaque();
    }
    let mut s = Search { cfg, names: names.into_iter().collect(), nodes: 0, exhaustive: true };
    match s.run(lits, &mut Model::new()) {
        Some(m) => SatResult::Sat(m),
        None if s.exhaustive && !opaque => SatResult::Unsat,
        None => SatResult::MaybeSat,
    }
}

pub fn check(f: &Formula, cfg: &SolverConfig) -> Result<SatResult, FormulaTooLarge> {
    let clauses = dnf(f, cfg.clause_bound)?;
    let mut all_unsat = true;
    for c in &clauses {
        match check_clause(c, cfg) {
            SatResult::Sat(m) => {
                debug_assert_eq!(f.eval(&|n| m.get(n).copied()), Some(true));
                return Ok(SatResult::Sat(m));
            }
            SatResult::MaybeSat => all_unsat = false,
            SatResult::Unsat => {}
        }
    }
    Ok(if all_unsat { SatResult::Unsat } else { SatResult::MaybeSat })
}

pub fn is_satisfiable(f: &Formula) -> Result<SatResult, FormulaTooLarge> {
    check(f, &SolverConfig::default())
}

/// `Yes` iff `f ∧ ¬g` is unsatisfiable.
pub fn entails_with(f: &Formula, g: &Formula, cfg: &SolverConfig) -> Entailment {
    if g.is_true() || f.is_false() || f == g {
        return Entailment::Yes;
    }
    if let Formula::And(ps) = f {
        if ps.contains(g) {
            return Entailment::Yes;
        }
    }
    match check(&Formula::and2(f.clone(), g.not()), cfg) {
        Ok(SatResult::Unsat) => Entailment::Yes,
        _ => Entailment::Unknown,
    }
}

pub fn entails(f: &Formula, g: &Formula) -> Entailment {
    entails_with(f, g, &SolverConfig::default())
}

/// Memoizing front end to [`check`], owned by a single analysis run.
#[derive(Debug, Clone, Default)]
pub struct SolverCache {
    pub config: SolverConfig,
    memo: HashMap<Formula, Result<SatResult, FormulaTooLarge>>,
    pub queries: u64,
}

impl SolverCache {
    pub fn new(config: SolverConfig) -> SolverCache {
        SolverCache { config, memo: HashMap::new(), queries: 0 }
    }

    pub fn check(&mut self, f: &Formula) -> Result<SatResult, FormulaTooLarge> {
        self.queries += 1;
        if let Some(r) = self.memo.get(f) {
            return r.clone();
        }
        let r = check(f, &self.config);
        if self.memo.len() > 200_000 {
            self.memo.clear();
        }
        self.memo.insert(f.clone(), r.clone());
        r
    }

    pub fn is_unsat(&mut self, f: &Formula) -> Result<bool, FormulaTooLarge> {
        Ok(self.check(f)?.is_unsat())
    }

    pub fn entails(&mut self, f: &Formula, g: &Formula) -> Entailment {
        if g.is_true() || f.is_false() || f == g {
            return Entailment::Yes;
        }
        if let Formula::And(ps) = f {
            if ps.contains(g) {
                return Entailment::Yes;
            }
        }
        match self.check(&Formula::and2(f.clone(), g.not())) {
            Ok(SatResult::Unsat) => Entailment::Yes,
            _ => Entailment::Unknown,
        }
    }
}
