//! Tokenizer and expression parser shared by the mini-language frontend,
//! the CFA text format, and the formula text syntax.

use std::sync::Arc;

use thiserror::Error;

use crate::cfa::{BoolExpr, CmpOp, Expr};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

// Longest symbols first so that greedy matching works.
const SYMBOLS: &[&str] = &[
    ":=", "<=", ">=", "==", "!=", "&&", "||", "->", ";", ",", "(", ")", "{", "}", "+", "-", "*",
    "<", ">", "=", "!", "&", "|", ":", "#", "[", "]",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        // `//` line comments
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let value = text.parse::<i64>().map_err(|_| SyntaxError {
                line: start_line,
                col: start_col,
                msg: format!("integer literal `{text}` out of range"),
            })?;
            out.push(Token { tok: Tok::Int(value), line: start_line, col: start_col });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '@') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(SyntaxError { line, col, msg: format!("unexpected character `{c}`") });
        };
        i += sym.len();
        col += sym.len();
        out.push(Token { tok: Tok::Sym(sym), line: start_line, col: start_col });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

/// Recursive-descent cursor over a token stream.
pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Parser { toks: tokenize(src)?, pos: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    pub fn advance(&mut self) {
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
    }

    pub fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    pub fn error<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        let (line, col) = self.here();
        Err(SyntaxError { line, col, msg: msg.into() })
    }

    /// Position of the first `kw` identifier before the next `stop` symbol.
    pub fn find_keyword_before(&self, kw: &str, stop: &str) -> Option<(usize, usize)> {
        for t in &self.toks[self.pos..] {
            match &t.tok {
                Tok::Ident(x) if x == kw => return Some((t.line, t.col)),
                Tok::Sym(s) if *s == stop => return None,
                Tok::Eof => return None,
                _ => {}
            }
        }
        None
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    pub fn expect_ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.pos += 1;
                Ok(name)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    pub fn expect_int(&mut self) -> Result<i64, SyntaxError> {
        let negative = self.eat_sym("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(if negative { -v } else { v })
            }
            other => self.error(format!("expected integer, found {}", describe(&other))),
        }
    }

    /// Arithmetic expression: `+`, `-`, `*`, unary minus, literals, variables.
    pub fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_sym("+") {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_sym("-") {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while self.eat_sym("*") {
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        match self.peek().clone() {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                if is_reserved(&name) {
                    return self.error(format!("unexpected keyword `{name}` in expression"));
                }
                self.pos += 1;
                if self.is_sym("(") {
                    return self.error(format!("call to `{name}` not allowed here"));
                }
                Ok(Expr::Var(Arc::from(name.as_str())))
            }
            Tok::Sym("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            other => self.error(format!("expected expression, found {}", describe(&other))),
        }
    }

    /// Boolean expression with `->` (lowest, right-assoc), `||`/`|`,
    /// `&&`/`&`, `!`, comparisons and parentheses.
    pub fn bool_expr(&mut self) -> Result<BoolExpr, SyntaxError> {
        let lhs = self.bool_or()?;
        if self.eat_sym("->") {
            let rhs = self.bool_expr()?;
            return Ok(BoolExpr::Or(Box::new(BoolExpr::Not(Box::new(lhs))), Box::new(rhs)));
        }
        Ok(lhs)
    }

    /// Like [`Parser::bool_expr`] but leaves a trailing `->` unconsumed.
    pub fn bool_expr_no_implication(&mut self) -> Result<BoolExpr, SyntaxError> {
        self.bool_or()
    }

    fn bool_or(&mut self) -> Result<BoolExpr, SyntaxError> {
        let mut lhs = self.bool_and()?;
        while self.eat_sym("||") || self.eat_sym("|") {
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(self.bool_and()?));
        }
        Ok(lhs)
    }

    fn bool_and(&mut self) -> Result<BoolExpr, SyntaxError> {
        let mut lhs = self.bool_not()?;
        while self.eat_sym("&&") || self.eat_sym("&") {
            lhs = BoolExpr::And(Box::new(lhs), Box::new(self.bool_not()?));
        }
        Ok(lhs)
    }

    fn bool_not(&mut self) -> Result<BoolExpr, SyntaxError> {
        if self.eat_sym("!") {
            return Ok(BoolExpr::Not(Box::new(self.bool_not()?)));
        }
        if self.eat_keyword("true") {
            return Ok(BoolExpr::True);
        }
        if self.eat_keyword("false") {
            return Ok(BoolExpr::False);
        }
        // `(` may open either an arithmetic or a boolean group; try the
        // comparison reading first and fall back.
        if self.is_sym("(") {
            let save = self.pos;
            if let Ok(cmp) = self.comparison() {
                return Ok(cmp);
            }
            self.pos = save;
            self.expect_sym("(")?;
            let inner = self.bool_expr()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<BoolExpr, SyntaxError> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("==") | Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym(">") => CmpOp::Gt,
            other => {
                let msg = format!("expected comparison operator, found {}", describe(other));
                return self.error(msg);
            }
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(BoolExpr::Cmp(op, lhs, rhs))
    }
}

pub const RESERVED: &[&str] = &[
    "int", "if", "else", "while", "assert", "assume", "havoc", "nondet", "true", "false", "skip",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name)
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}
