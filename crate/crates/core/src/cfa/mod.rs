//! Control-flow automata: locations, operation-labelled edges, and the
//! expression language the operations are written in.

mod lang;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use lang::{parse_program, LangError};
pub use text::{parse_cfa, serialize_cfa, CfaTextError};

pub type VarName = Arc<str>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationId(pub u32);

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Var(VarName),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    True,
    False,
    Cmp(CmpOp, Expr, Expr),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operation {
    Assign(VarName, Expr),
    Assume(BoolExpr),
    /// Nondeterministic assignment.
    Havoc(VarName),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub source: LocationId,
    pub target: LocationId,
    pub op: Operation,
}

/// Integer overflow of the host integer type during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("arithmetic overflow")]
pub struct ArithOverflow;

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Arc::from(name))
    }

    /// Evaluates under a partial store; `Ok(None)` when some operand is unknown.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<i64>) -> Result<Option<i64>, ArithOverflow> {
        let bin = |a: &Expr, b: &Expr, op: fn(i64, i64) -> Option<i64>| -> Result<Option<i64>, ArithOverflow> {
            match (a.eval(env)?, b.eval(env)?) {
                (Some(x), Some(y)) => op(x, y).map(Some).ok_or(ArithOverflow),
                _ => Ok(None),
            }
        };
        match self {
            Expr::Const(c) => Ok(Some(*c)),
            Expr::Var(v) => Ok(env(v)),
            Expr::Neg(e) => match e.eval(env)? {
                Some(x) => x.checked_neg().map(Some).ok_or(ArithOverflow),
                None => Ok(None),
            },
            Expr::Add(a, b) => bin(a, b, i64::checked_add),
            Expr::Sub(a, b) => bin(a, b, i64::checked_sub),
            Expr::Mul(a, b) => bin(a, b, i64::checked_mul),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<VarName>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Const(c) if *c < 0 => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, 4)
            }
            Expr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, " * ")?;
                child(f, b, 3)
            }
        }
    }
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

impl BoolExpr {
    #[allow(clippy::should_implement_trait)]
    pub fn not(e: BoolExpr) -> BoolExpr {
        BoolExpr::Not(Box::new(e))
    }

    /// Three-valued evaluation: `Ok(None)` when the outcome depends on an
    /// unknown operand.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<i64>) -> Result<Option<bool>, ArithOverflow> {
        Ok(match self {
            BoolExpr::True => Some(true),
            BoolExpr::False => Some(false),
            BoolExpr::Cmp(op, a, b) => match (a.eval(env)?, b.eval(env)?) {
                (Some(x), Some(y)) => Some(op.holds(x, y)),
                _ => None,
            },
            BoolExpr::Not(e) => e.eval(env)?.map(|b| !b),
            BoolExpr::And(a, b) => match (a.eval(env)?, b.eval(env)?) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            BoolExpr::Or(a, b) => match (a.eval(env)?, b.eval(env)?) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
        })
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<VarName>) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Cmp(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            BoolExpr::Not(e) => e.collect_vars(out),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            BoolExpr::Or(..) => 1,
            BoolExpr::And(..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &BoolExpr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            BoolExpr::True => write!(f, "true"),
            BoolExpr::False => write!(f, "false"),
            BoolExpr::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            BoolExpr::Not(e) => match **e {
                BoolExpr::True | BoolExpr::False => write!(f, "!{e}"),
                _ => write!(f, "!({e})"),
            },
            BoolExpr::And(a, b) => {
                child(f, a, 2)?;
                write!(f, " && ")?;
                child(f, b, 3)
            }
            BoolExpr::Or(a, b) => {
                child(f, a, 1)?;
                write!(f, " || ")?;
                child(f, b, 2)
            }
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Assign(v, e) => write!(f, "{v} := {e}"),
            Operation::Assume(c) => write!(f, "assume {c}"),
            Operation::Havoc(v) => write!(f, "havoc {v}"),
        }
    }
}

impl Operation {
    pub fn is_havoc(&self) -> bool {
        matches!(self, Operation::Havoc(_))
    }

    pub fn is_assume(&self) -> bool {
        matches!(self, Operation::Assume(_))
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<VarName>) {
        match self {
            Operation::Assign(v, e) => {
                out.insert(v.clone());
                e.collect_vars(out);
            }
            Operation::Assume(c) => c.collect_vars(out),
            Operation::Havoc(v) => {
                out.insert(v.clone());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfaError {
    #[error("location {0} is referenced but not declared")]
    UnknownLocation(LocationId),
    #[error("edge {0} uses undeclared variable `{1}`")]
    UndeclaredVariable(EdgeId, String),
    #[error("edge ids must be dense: expected {expected}, found {found}")]
    EdgeIdOrder { expected: u32, found: u32 },
    #[error("variable name `{0}` is reserved")]
    ReservedVariable(String),
}

/// A program as a control-flow automaton. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfa {
    locations: BTreeSet<LocationId>,
    initial: LocationId,
    error_locations: BTreeSet<LocationId>,
    edges: Vec<Edge>,
    variables: Vec<VarName>,
    outgoing: BTreeMap<LocationId, Vec<EdgeId>>,
}

impl Cfa {
    pub fn new(
        locations: BTreeSet<LocationId>,
        initial: LocationId,
        error_locations: BTreeSet<LocationId>,
        edges: Vec<Edge>,
        variables: Vec<VarName>,
    ) -> Result<Cfa, CfaError> {
        if !locations.contains(&initial) {
            return Err(CfaError::UnknownLocation(initial));
        }
        if let Some(e) = error_locations.iter().find(|l| !locations.contains(l)) {
            return Err(CfaError::UnknownLocation(*e));
        }
        if let Some(v) = variables.iter().find(|v| &***v == "pc" || v.contains('@') || crate::syntax::is_reserved(v)) {
            return Err(CfaError::ReservedVariable(v.to_string()));
        }
        let declared: BTreeSet<&str> = variables.iter().map(|v| &**v).collect();
        let mut outgoing: BTreeMap<LocationId, Vec<EdgeId>> = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            if e.id.0 as usize != i {
                return Err(CfaError::EdgeIdOrder { expected: i as u32, found: e.id.0 });
            }
            for l in [e.source, e.target] {
                if !locations.contains(&l) {
                    return Err(CfaError::UnknownLocation(l));
                }
            }
            let mut used = BTreeSet::new();
            e.op.collect_vars(&mut used);
            if let Some(v) = used.iter().find(|v| !declared.contains(&***v)) {
                return Err(CfaError::UndeclaredVariable(e.id, v.to_string()));
            }
            outgoing.entry(e.source).or_default().push(e.id);
        }
        Ok(Cfa { locations, initial, error_locations, edges, variables, outgoing })
    }

    pub fn locations(&self) -> &BTreeSet<LocationId> {
        &self.locations
    }

    pub fn initial(&self) -> LocationId {
        self.initial
    }

    pub fn error_locations(&self) -> &BTreeSet<LocationId> {
        &self.error_locations
    }

    pub fn is_error(&self, loc: LocationId) -> bool {
        self.error_locations.contains(&loc)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn variables(&self) -> &[VarName] {
        &self.variables
    }

    pub fn outgoing(&self, loc: LocationId) -> &[EdgeId] {
        self.outgoing.get(&loc).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_nonlinear(&self) -> bool {
        fn nonlinear(e: &Expr) -> bool {
            match e {
                Expr::Mul(a, b) => {
                    let mut va = BTreeSet::new();
                    let mut vb = BTreeSet::new();
                    a.collect_vars(&mut va);
                    b.collect_vars(&mut vb);
                    (!va.is_empty() && !vb.is_empty()) || nonlinear(a) || nonlinear(b)
                }
                Expr::Add(a, b) | Expr::Sub(a, b) => nonlinear(a) || nonlinear(b),
                Expr::Neg(a) => nonlinear(a),
                _ => false,
            }
        }
        fn nonlinear_b(b: &BoolExpr) -> bool {
            match b {
                BoolExpr::Cmp(_, x, y) => nonlinear(x) || nonlinear(y),
                BoolExpr::Not(x) => nonlinear_b(x),
                BoolExpr::And(x, y) | BoolExpr::Or(x, y) => nonlinear_b(x) || nonlinear_b(y),
                _ => false,
            }
        }
        self.edges.iter().any(|e| match &e.op {
            Operation::Assign(_, x) => nonlinear(x),
            Operation::Assume(c) => nonlinear_b(c),
            Operation::Havoc(_) => false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_display_minimizes_parentheses() {
        let e = Expr::Mul(
            Box::new(Expr::Add(Box::new(Expr::var("x")), Box::new(Expr::Const(1)))),
            Box::new(Expr::Sub(Box::new(Expr::var("y")), Box::new(Expr::Const(-2)))),
        );
        assert_eq!(e.to_string(), "(x + 1) * (y - -2)");
    }

    #[test]
    fn three_valued_boolean_evaluation() {
        let env = |v: &str| if v == "x" { Some(1) } else { None };
        let known_false = BoolExpr::Cmp(CmpOp::Gt, Expr::var("x"), Expr::Const(5));
        let unknown = BoolExpr::Cmp(CmpOp::Gt, Expr::var("y"), Expr::Const(5));
        let and = BoolExpr::And(Box::new(unknown.clone()), Box::new(known_false.clone()));
        assert_eq!(and.eval(&env), Ok(Some(false)));
        let or = BoolExpr::Or(Box::new(unknown), Box::new(known_false));
        assert_eq!(or.eval(&env), Ok(None));
    }

    #[test]
    fn overflow_is_reported() {
        let e = Expr::Mul(Box::new(Expr::Const(i64::MAX)), Box::new(Expr::Const(2)));
        assert_eq!(e.eval(&|_| None), Err(ArithOverflow));
    }

    #[test]
    fn rejects_dangling_initial() {
        let err = Cfa::new(BTreeSet::new(), LocationId(0), BTreeSet::new(), vec![], vec![]);
        assert_eq!(err.unwrap_err(), CfaError::UnknownLocation(LocationId(0)));
    }
}
