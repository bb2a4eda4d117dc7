//! Frontend for the `.imp` mini-language.
//!
//! ```text
//! int x, y;
//! x := 0;
//! y := nondet();
//! while (x < 10) { x := x + 1; }
//! if (y > 0) { assert(x == 10); } else { skip; }
//! ```

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use super::{BoolExpr, Cfa, CfaError, Edge, EdgeId, Expr, LocationId, Operation, VarName};
use crate::syntax::{is_reserved, Parser, SyntaxError, Tok};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{line}:{col}: use of undeclared variable `{name}`")]
    Undeclared { line: usize, col: usize, name: String },
    #[error("{line}:{col}: variable `{name}` declared twice")]
    Redeclared { line: usize, col: usize, name: String },
    #[error("{line}:{col}: nondet() is only allowed as the whole right-hand side of an assignment")]
    NondetInExpression { line: usize, col: usize },
    #[error("{line}:{col}: `{name}` cannot be used as a variable name")]
    ReservedName { line: usize, col: usize, name: String },
    #[error(transparent)]
    Cfa(#[from] CfaError),
}

#[derive(Debug)]
enum Stmt {
    Assign(VarName, Expr),
    Havoc(VarName),
    Assume(BoolExpr),
    Assert(BoolExpr),
    Skip,
    If(BoolExpr, Vec<Stmt>, Vec<Stmt>),
    While(BoolExpr, Vec<Stmt>),
}

struct Front {
    p: Parser,
    declared: BTreeSet<VarName>,
}

impl Front {
    fn check_vars(&self, pos: (usize, usize), vars: BTreeSet<VarName>) -> Result<(), LangError> {
        match vars.into_iter().find(|v| !self.declared.contains(v)) {
            Some(v) => Err(LangError::Undeclared { line: pos.0, col: pos.1, name: v.to_string() }),
            None => Ok(()),
        }
    }

    fn reject_nondet(&self, stop: &str) -> Result<(), LangError> {
        match self.p.find_keyword_before("nondet", stop) {
            Some((line, col)) => Err(LangError::NondetInExpression { line, col }),
            None => Ok(()),
        }
    }

    fn declared_var(&mut self) -> Result<VarName, LangError> {
        let pos = self.p.here();
        let name: VarName = Arc::from(self.p.expect_ident()?.as_str());
        self.check_vars(pos, BTreeSet::from([name.clone()]))?;
        Ok(name)
    }

    fn condition(&mut self, stop: &str) -> Result<BoolExpr, LangError> {
        self.reject_nondet(stop)?;
        let pos = self.p.here();
        self.p.expect_sym("(")?;
        let c = self.p.bool_expr()?;
        self.p.expect_sym(")")?;
        let mut vars = BTreeSet::new();
        c.collect_vars(&mut vars);
        self.check_vars(pos, vars)?;
        Ok(c)
    }

    fn declarations(&mut self) -> Result<(), LangError> {
        while self.p.eat_keyword("int") {
            loop {
                let (line, col) = self.p.here();
                let name = self.p.expect_ident()?;
                if is_reserved(&name) || name == "pc" || name.contains('@') {
                    return Err(LangError::ReservedName { line, col, name });
                }
                if !self.declared.insert(Arc::from(name.as_str())) {
                    return Err(LangError::Redeclared { line, col, name });
                }
                if !self.p.eat_sym(",") {
                    break;
                }
            }
            self.p.expect_sym(";")?;
        }
        Ok(())
    }

    fn block(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.p.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.p.is_sym("}") {
            out.push(self.stmt()?);
        }
        self.p.expect_sym("}")?;
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        if self.p.eat_keyword("skip") {
            self.p.expect_sym(";")?;
            return Ok(Stmt::Skip);
        }
        if self.p.eat_keyword("havoc") {
            let v = self.declared_var()?;
            self.p.expect_sym(";")?;
            return Ok(Stmt::Havoc(v));
        }
        if self.p.eat_keyword("assert") {
            let c = self.condition(";")?;
            self.p.expect_sym(";")?;
            return Ok(Stmt::Assert(c));
        }
        if self.p.eat_keyword("assume") {
            let c = self.condition(";")?;
            self.p.expect_sym(";")?;
            return Ok(Stmt::Assume(c));
        }
        if self.p.eat_keyword("if") {
            let c = self.condition("{")?;
            let then = self.block()?;
            let els = if self.p.eat_keyword("else") {
                if self.p.is_keyword("if") {
                    vec![self.stmt()?]
                } else {
                    self.block()?
                }
            } else {
                Vec::new()
            };
            return Ok(Stmt::If(c, then, els));
        }
        if self.p.eat_keyword("while") {
            let c = self.condition("{")?;
            let body = self.block()?;
            return Ok(Stmt::While(c, body));
        }
        if self.p.is_keyword("int") {
            return Err(self.p.error::<()>("declarations must precede statements").unwrap_err().into());
        }
        let v = self.declared_var()?;
        self.p.expect_sym(":=")?;
        let whole_nondet = self.p.is_keyword("nondet")
            && matches!(self.p.peek_at(1), Tok::Sym("("))
            && matches!(self.p.peek_at(2), Tok::Sym(")"))
            && matches!(self.p.peek_at(3), Tok::Sym(";"));
        if whole_nondet {
            for _ in 0..4 {
                self.p.advance();
            }
            return Ok(Stmt::Havoc(v));
        }
        self.reject_nondet(";")?;
        let pos = self.p.here();
        let e = self.p.expr()?;
        let mut vars = BTreeSet::new();
        e.collect_vars(&mut vars);
        self.check_vars(pos, vars)?;
        self.p.expect_sym(";")?;
        Ok(Stmt::Assign(v, e))
    }
}

#[derive(Default)]
struct Builder {
    next_loc: u32,
    locations: BTreeSet<LocationId>,
    errors: BTreeSet<LocationId>,
    edges: Vec<Edge>,
}

impl Builder {
    fn fresh(&mut self) -> LocationId {
        let l = LocationId(self.next_loc);
        self.next_loc += 1;
        self.locations.insert(l);
        l
    }

    fn edge(&mut self, source: LocationId, target: LocationId, op: Operation) {
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(Edge { id, source, target, op });
    }

    fn target(&mut self, to: Option<LocationId>) -> LocationId {
        match to {
            Some(l) => l,
            None => self.fresh(),
        }
    }

    /// Compiles `stmts` starting at `from`; if `to` is given the block ends there.
    fn block(&mut self, stmts: &[Stmt], from: LocationId, to: Option<LocationId>) -> LocationId {
        if stmts.is_empty() {
            return match to {
                Some(t) => {
                    self.edge(from, t, Operation::Assume(BoolExpr::True));
                    t
                }
                None => from,
            };
        }
        let mut cur = from;
        for (i, s) in stmts.iter().enumerate() {
            let last = i + 1 == stmts.len();
            cur = self.stmt(s, cur, if last { to } else { None });
        }
        cur
    }

    fn branch(&mut self, from: LocationId, cond: BoolExpr, body: &[Stmt], join: LocationId) {
        if body.is_empty() {
            self.edge(from, join, Operation::Assume(cond));
        } else {
            let start = self.fresh();
            self.edge(from, start, Operation::Assume(cond));
            self.block(body, start, Some(join));
        }
    }

    fn stmt(&mut self, s: &Stmt, from: LocationId, to: Option<LocationId>) -> LocationId {
        match s {
            Stmt::Assign(v, e) => {
                let t = self.target(to);
                self.edge(from, t, Operation::Assign(v.clone(), e.clone()));
                t
            }
            Stmt::Havoc(v) => {
                let t = self.target(to);
                self.edge(from, t, Operation::Havoc(v.clone()));
                t
            }
            Stmt::Assume(c) => {
                let t = self.target(to);
                self.edge(from, t, Operation::Assume(c.clone()));
                t
            }
            Stmt::Skip => {
                let t = self.target(to);
                self.edge(from, t, Operation::Assume(BoolExpr::True));
                t
            }
            Stmt::Assert(c) => {
                let err = self.fresh();
                self.errors.insert(err);
                self.edge(from, err, Operation::Assume(BoolExpr::not(c.clone())));
                let t = self.target(to);
                self.edge(from, t, Operation::Assume(c.clone()));
                t
            }
            Stmt::If(c, then, els) => {
                let join = self.target(to);
                self.branch(from, c.clone(), then, join);
                self.branch(from, BoolExpr::not(c.clone()), els, join);
                join
            }
            Stmt::While(c, body) => {
                let head = from;
                if body.is_empty() {
                    self.edge(head, head, Operation::Assume(c.clone()));
                } else {
                    let start = self.fresh();
                    self.edge(head, start, Operation::Assume(c.clone()));
                    self.block(body, start, Some(head));
                }
                let exit = self.target(to);
                self.edge(head, exit, Operation::Assume(BoolExpr::not(c.clone())));
                exit
            }
        }
    }
}

/// Parses a mini-language program and compiles it to a CFA.
pub fn parse_program(src: &str) -> Result<Cfa, LangError> {
    let mut front = Front { p: Parser::new(src)?, declared: BTreeSet::new() };
    front.declarations()?;
    let mut stmts = Vec::new();
    while !front.p.at_eof() {
        stmts.push(front.stmt()?);
    }
    let mut b = Builder::default();
    let init = b.fresh();
    b.block(&stmts, init, None);
    let Builder { locations, errors, edges, .. } = b;
    let vars = front.declared.into_iter().collect();
    Ok(Cfa::new(locations, init, errors, edges, vars)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assert_desugars_to_error_edge_then_continuation() {
        let cfa = parse_program("int x; x := 0; assert(x == 0);").unwrap();
        assert_eq!(cfa.variables().len(), 1);
        assert_eq!(cfa.error_locations().len(), 1);
        assert_eq!(cfa.locations().len() - cfa.error_locations().len(), 3);
        let ops: Vec<String> = cfa.edges().iter().map(|e| e.op.to_string()).collect();
        assert_eq!(ops, ["x := 0", "assume !(x == 0)", "assume x == 0"]);
        assert!(cfa.is_error(cfa.edges()[1].target));
    }

    #[test]
    fn while_head_has_two_assume_edges() {
        let cfa = parse_program("int i; i := 0; while (i < 3) { i := i + 1; } assert(i == 3);").unwrap();
        let head = cfa.edges()[0].target;
        let out: Vec<String> =
            cfa.outgoing(head).iter().map(|e| cfa.edge(*e).op.to_string()).collect();
        assert_eq!(out, ["assume i < 3", "assume !(i < 3)"]);
        let body = &cfa.edges()[2];
        assert_eq!(body.target, head);
    }

    #[test]
    fn nondet_only_as_whole_rhs() {
        let cfa = parse_program("int x; x := nondet();").unwrap();
        assert!(matches!(cfa.edges()[0].op, Operation::Havoc(_)));
        let err = parse_program("int x;\nx := nondet() + 1;").unwrap_err();
        assert_eq!(err, LangError::NondetInExpression { line: 2, col: 6 });
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let err = parse_program("int x;\nx := y + 1;").unwrap_err();
        assert!(matches!(err, LangError::Undeclared { line: 2, ref name, .. } if name == "y"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_program("int x;\nx := ;").unwrap_err();
        assert!(matches!(err, LangError::Syntax(SyntaxError { line: 2, col: 6, .. })));
    }

    #[test]
    fn if_branches_are_complementary() {
        let cfa = parse_program("int x; if (x > 0) { x := 1; } else { x := 2; }").unwrap();
        let out = cfa.outgoing(cfa.initial());
        assert_eq!(out.len(), 2);
        let (a, b) = (&cfa.edge(out[0]).op, &cfa.edge(out[1]).op);
        match (a, b) {
            (Operation::Assume(c), Operation::Assume(BoolExpr::Not(n))) => assert_eq!(c, &**n),
            _ => panic!("unexpected branch shape"),
        }
    }
}
