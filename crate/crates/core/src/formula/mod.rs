//! Quantifier-free formulas over linear integer atoms.
//!
//! Atoms are kept in a canonical form (`Σ cᵢ·vᵢ ≤ k` or `Σ cᵢ·vᵢ = k`,
//! gcd-reduced, variables sorted) so that structural equality is meaningful.
//! Products of two non-constant terms become opaque variables.

pub mod path;
pub mod solver;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::cfa::{BoolExpr, CmpOp, Expr};
use crate::syntax::{Parser, SyntaxError};

pub use path::{PathFormula, SymbolicPath};
pub use solver::{entails, is_satisfiable, Entailment, FormulaTooLarge, Model, SatResult, SolverCache, SolverConfig};

pub type Int = i128;

pub fn gcd(a: Int, b: Int) -> Int {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A term the arithmetic treats atomically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Name(Arc<str>),
    /// Uninterpreted product of two primitive factors, stored in sorted order.
    Product(Arc<(LinExpr, LinExpr)>),
}

impl Var {
    pub fn name(s: &str) -> Var {
        Var::Name(Arc::from(s))
    }

    pub fn is_opaque(&self) -> bool {
        matches!(self, Var::Product(_))
    }

    fn collect_names(&self, out: &mut BTreeSet<Arc<str>>) {
        match self {
            Var::Name(n) => {
                out.insert(n.clone());
            }
            Var::Product(p) => {
                p.0.collect_names(out);
                p.1.collect_names(out);
            }
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Name(n) => write!(f, "{n}"),
            Var::Product(p) => {
                for (i, factor) in [&p.0, &p.1].into_iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    match factor.single_var() {
                        Some(v @ Var::Name(_)) => write!(f, "{v}")?,
                        _ => write!(f, "({factor})")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinExpr {
    pub terms: BTreeMap<Var, Int>,
    pub constant: Int,
}

impl LinExpr {
    pub fn constant(c: Int) -> LinExpr {
        LinExpr { terms: BTreeMap::new(), constant: c }
    }

    pub fn var(v: Var) -> LinExpr {
        LinExpr { terms: BTreeMap::from([(v, 1)]), constant: 0 }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    fn single_var(&self) -> Option<&Var> {
        match (self.terms.len(), self.constant) {
            (1, 0) => self.terms.iter().next().filter(|(_, c)| **c == 1).map(|(v, _)| v),
            _ => None,
        }
    }

    pub fn add_term(&mut self, v: Var, c: Int) {
        use std::collections::btree_map::Entry;
        if c == 0 {
            return;
        }
        match self.terms.entry(v) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0 {
                    o.remove();
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
        }
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (v, c) in &other.terms {
            out.add_term(v.clone(), *c);
        }
        out.constant += other.constant;
        out
    }

    pub fn scale(&self, k: Int) -> LinExpr {
        if k == 0 {
            return LinExpr::default();
        }
        LinExpr {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add(&other.scale(-1))
    }

    /// Splits off the content so that the remaining factor is primitive with
    /// a positive leading coefficient.
    fn primitive(&self) -> (Int, LinExpr) {
        let mut g = self.terms.values().fold(self.constant, |g, c| gcd(g, *c));
        if g == 0 {
            return (0, LinExpr::default());
        }
        let lead = self.terms.values().next().copied().unwrap_or(self.constant);
        if lead < 0 {
            g = -g;
        }
        let out = LinExpr {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c / g)).collect(),
            constant: self.constant / g,
        };
        (g, out)
    }

    pub fn mul(&self, other: &LinExpr) -> LinExpr {
        if self.is_constant() {
            return other.scale(self.constant);
        }
        if other.is_constant() {
            return self.scale(other.constant);
        }
        let (ga, a) = self.primitive();
        let (gb, b) = other.primitive();
        let pair = if a <= b { (a, b) } else { (b, a) };
        LinExpr::var(Var::Product(Arc::new(pair))).scale(ga * gb)
    }

    pub fn from_expr(e: &Expr, rename: &dyn Fn(&str) -> Arc<str>) -> LinExpr {
        match e {
            Expr::Const(c) => LinExpr::constant(*c as Int),
            Expr::Var(v) => LinExpr::var(Var::Name(rename(v))),
            Expr::Neg(a) => LinExpr::from_expr(a, rename).scale(-1),
            Expr::Add(a, b) => LinExpr::from_expr(a, rename).add(&LinExpr::from_expr(b, rename)),
            Expr::Sub(a, b) => LinExpr::from_expr(a, rename).sub(&LinExpr::from_expr(b, rename)),
            Expr::Mul(a, b) => LinExpr::from_expr(a, rename).mul(&LinExpr::from_expr(b, rename)),
        }
    }

    /// Replaces named variables; products are rebuilt so that a factor that
    /// becomes constant turns the product linear.
    pub fn substitute(&self, sub: &dyn Fn(&str) -> Option<LinExpr>) -> LinExpr {
        let mut out = LinExpr::constant(self.constant);
        for (v, c) in &self.terms {
            let replaced = match v {
                Var::Name(n) => sub(n).unwrap_or_else(|| LinExpr::var(v.clone())),
                Var::Product(p) => p.0.substitute(sub).mul(&p.1.substitute(sub)),
            };
            out = out.add(&replaced.scale(*c));
        }
        out
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<Int>) -> Option<Int> {
        let mut acc = self.constant;
        for (v, c) in &self.terms {
            let x = match v {
                Var::Name(n) => env(n)?,
                Var::Product(p) => p.0.eval(env)?.checked_mul(p.1.eval(env)?)?,
            };
            acc = acc.checked_add(c.checked_mul(x)?)?;
        }
        Some(acc)
    }

    pub fn collect_names(&self, out: &mut BTreeSet<Arc<str>>) {
        for v in self.terms.keys() {
            v.collect_names(out);
        }
    }

    pub fn has_opaque(&self) -> bool {
        self.terms.keys().any(Var::is_opaque)
    }
}

fn write_sum(f: &mut fmt::Formatter<'_>, terms: &[(&Var, Int)], constant: Int) -> fmt::Result {
    let mut first = true;
    for (v, c) in terms {
        let (sign, mag) = if *c < 0 { ("-", -c) } else { ("+", *c) };
        if first {
            if sign == "-" {
                write!(f, "-")?;
            }
        } else {
            write!(f, " {sign} ")?;
        }
        if mag == 1 {
            write!(f, "{v}")?;
        } else {
            write!(f, "{mag} * {v}")?;
        }
        first = false;
    }
    if first {
        write!(f, "{constant}")
    } else if constant > 0 {
        write!(f, " + {constant}")
    } else if constant < 0 {
        write!(f, " - {}", -constant)
    } else {
        Ok(())
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<(&Var, Int)> = self.terms.iter().map(|(v, c)| (v, *c)).collect();
        write_sum(f, &terms, self.constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    Le,
    Eq,
}

/// `Σ terms rel bound`, canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    terms: Vec<(Var, Int)>,
    rel: Rel,
    bound: Int,
}

impl Atom {
    /// Builds `e rel 0`, folding constant comparisons.
    pub fn build(e: &LinExpr, rel: Rel) -> Formula {
        let bound = -e.constant;
        if e.terms.is_empty() {
            let holds = match rel {
                Rel::Le => 0 <= bound,
                Rel::Eq => bound == 0,
            };
            return if holds { Formula::True } else { Formula::False };
        }
        let mut g = e.terms.values().fold(0, |g, c| gcd(g, *c));
        let mut bound = bound;
        match rel {
            Rel::Le => bound = bound.div_euclid(g),
            Rel::Eq => {
                if bound % g != 0 {
                    return Formula::False;
                }
                if *e.terms.values().next().expect("nonempty") < 0 {
                    g = -g;
                }
                bound /= g;
            }
        }
        let terms = e.terms.iter().map(|(v, c)| (v.clone(), c / g)).collect();
        Formula::Atom(Atom { terms, rel, bound })
    }

    pub fn rel(&self) -> Rel {
        self.rel
    }

    pub fn bound(&self) -> Int {
        self.bound
    }

    pub fn terms(&self) -> &[(Var, Int)] {
        &self.terms
    }

    /// `terms - bound` so that the atom reads `lhs() rel 0`.
    pub fn lhs(&self) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().cloned().collect(),
            constant: -self.bound,
        }
    }

    /// Complement of a `≤` atom over the integers: `¬(t ≤ k)` is `-t ≤ -k-1`.
    fn negate_le(&self) -> Atom {
        debug_assert_eq!(self.rel, Rel::Le);
        Atom {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), -c)).collect(),
            rel: Rel::Le,
            bound: -self.bound - 1,
        }
    }

    /// Representative of the pair {p, ¬p}: leading coefficient positive.
    pub fn predicate_key(&self) -> Atom {
        match self.rel {
            Rel::Le if self.terms[0].1 < 0 => self.negate_le(),
            _ => self.clone(),
        }
    }

    pub fn has_opaque(&self) -> bool {
        self.terms.iter().any(|(v, _)| v.is_opaque())
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<Int>) -> Option<bool> {
        let v = self.lhs().eval(env)?;
        Some(match self.rel {
            Rel::Le => v <= 0,
            Rel::Eq => v == 0,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flip = self.rel == Rel::Le && self.terms[0].1 < 0;
        let sign = if flip { -1 } else { 1 };
        let op = match (self.rel, flip) {
            (Rel::Eq, _) => "=",
            (Rel::Le, false) => "<=",
            (Rel::Le, true) => ">=",
        };
        let left: Vec<(&Var, Int)> =
            self.terms.iter().map(|(v, c)| (v, c * sign)).filter(|(_, c)| *c > 0).collect();
        let right: Vec<(&Var, Int)> =
            self.terms.iter().map(|(v, c)| (v, -c * sign)).filter(|(_, c)| *c > 0).collect();
        write_sum(f, &left, 0)?;
        write!(f, " {op} ")?;
        write_sum(f, &right, self.bound * sign)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    /// Negated equality; other negations are pushed into the atoms.
    Not(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = BTreeSet::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => {
                    out.insert(other);
                }
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.into_iter().next().expect("one element"),
            _ => Formula::And(out.into_iter().collect()),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = BTreeSet::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => {
                    out.insert(other);
                }
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.into_iter().next().expect("one element"),
            _ => Formula::Or(out.into_iter().collect()),
        }
    }

    pub fn and2(a: Formula, b: Formula) -> Formula {
        Formula::and([a, b])
    }

    pub fn or2(a: Formula, b: Formula) -> Formula {
        Formula::or([a, b])
    }

    pub fn not(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Atom(a) if a.rel == Rel::Le => Formula::Atom(a.negate_le()),
            Formula::Atom(a) => Formula::Not(a.clone()),
            Formula::Not(a) => Formula::Atom(a.clone()),
            Formula::And(ps) => Formula::or(ps.iter().map(Formula::not)),
            Formula::Or(ps) => Formula::and(ps.iter().map(Formula::not)),
        }
    }

    pub fn implies(a: &Formula, b: Formula) -> Formula {
        Formula::or2(a.not(), b)
    }

    pub fn atom(a: &Atom) -> Formula {
        Formula::Atom(a.clone())
    }

    pub fn le(e: &LinExpr) -> Formula {
        Atom::build(e, Rel::Le)
    }

    pub fn eq(e: &LinExpr) -> Formula {
        Atom::build(e, Rel::Eq)
    }

    pub fn from_bool_expr(b: &BoolExpr, rename: &dyn Fn(&str) -> Arc<str>) -> Formula {
        match b {
            BoolExpr::True => Formula::True,
            BoolExpr::False => Formula::False,
            BoolExpr::Cmp(op, l, r) => {
                let d = LinExpr::from_expr(l, rename).sub(&LinExpr::from_expr(r, rename));
                let one = LinExpr::constant(1);
                match op {
                    CmpOp::Lt => Formula::le(&d.add(&one)),
                    CmpOp::Le => Formula::le(&d),
                    CmpOp::Eq => Formula::eq(&d),
                    CmpOp::Ne => Formula::eq(&d).not(),
                    CmpOp::Ge => Formula::le(&d.scale(-1)),
                    CmpOp::Gt => Formula::le(&d.scale(-1).add(&one)),
                }
            }
            BoolExpr::Not(x) => Formula::from_bool_expr(x, rename).not(),
            BoolExpr::And(x, y) => {
                Formula::and2(Formula::from_bool_expr(x, rename), Formula::from_bool_expr(y, rename))
            }
            BoolExpr::Or(x, y) => {
                Formula::or2(Formula::from_bool_expr(x, rename), Formula::from_bool_expr(y, rename))
            }
        }
    }

    /// Parses the formula text syntax (`&`, `|`, `!`, `->`, comparisons).
    pub fn parse(src: &str) -> Result<Formula, SyntaxError> {
        let mut p = Parser::new(src)?;
        let b = p.bool_expr()?;
        if !p.at_eof() {
            return p.error("unexpected trailing input");
        }
        Ok(Formula::from_bool_expr(&b, &|s| Arc::from(s)))
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::False)
    }

    /// Number of atom occurrences.
    pub fn atom_count(&self) -> usize {
        match self {
            Formula::True | Formula::False => 0,
            Formula::Atom(_) | Formula::Not(_) => 1,
            Formula::And(ps) | Formula::Or(ps) => ps.iter().map(Formula::atom_count).sum(),
        }
    }

    pub fn map_atoms(&self, f: &mut dyn FnMut(&Atom) -> Formula) -> Formula {
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Atom(a) => f(a),
            Formula::Not(a) => f(a).not(),
            Formula::And(ps) => Formula::and(ps.iter().map(|p| p.map_atoms(f)).collect::<Vec<_>>()),
            Formula::Or(ps) => Formula::or(ps.iter().map(|p| p.map_atoms(f)).collect::<Vec<_>>()),
        }
    }

    pub fn substitute(&self, sub: &dyn Fn(&str) -> Option<LinExpr>) -> Formula {
        self.map_atoms(&mut |a| Atom::build(&a.lhs().substitute(sub), a.rel))
    }

    pub fn rename(&self, rename: &dyn Fn(&str) -> Arc<str>) -> Formula {
        self.substitute(&|n| Some(LinExpr::var(Var::Name(rename(n)))))
    }

    pub fn collect_atoms(&self, out: &mut Vec<Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) | Formula::Not(a) => out.push(a.clone()),
            Formula::And(ps) | Formula::Or(ps) => ps.iter().for_each(|p| p.collect_atoms(out)),
        }
    }

    pub fn names(&self) -> BTreeSet<Arc<str>> {
        let mut atoms = Vec::new();
        self.collect_atoms(&mut atoms);
        let mut out = BTreeSet::new();
        for a in atoms {
            for (v, _) in &a.terms {
                v.collect_names(&mut out);
            }
        }
        out
    }

    pub fn has_opaque(&self) -> bool {
        let mut atoms = Vec::new();
        self.collect_atoms(&mut atoms);
        atoms.iter().any(Atom::has_opaque)
    }

    /// Evaluation with products computed from their factors.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<Int>) -> Option<bool> {
        match self {
            Formula::True => Some(true),
            Formula::False => Some(false),
            Formula::Atom(a) => a.eval(env),
            Formula::Not(a) => a.eval(env).map(|b| !b),
            Formula::And(ps) => {
                let mut all = Some(true);
                for p in ps {
                    match p.eval(env) {
                        Some(false) => return Some(false),
                        None => all = None,
                        _ => {}
                    }
                }
                all
            }
            Formula::Or(ps) => {
                let mut any = Some(false);
                for p in ps {
                    match p.eval(env) {
                        Some(true) => return Some(true),
                        None => any = None,
                        _ => {}
                    }
                }
                any
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, ps: &[Formula], sep: &str| -> fmt::Result {
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                match p {
                    Formula::Not(_) => write!(f, "{p}")?,
                    _ => write!(f, "({p})")?,
                }
            }
            Ok(())
        };
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(a) => write!(f, "!({a})"),
            Formula::And(ps) => join(f, ps, "&"),
            Formula::Or(ps) => join(f, ps, "|"),
        }
    }
}
