//! Plain-text CFA format.
//!
//! ```text
//! vars: x, y;
//! locs: L0, L1, L2;
//! init: L0;
//! error: L2;
//! L0 -> L1: x := x + 1;
//! L1 -> L2: assume x > y;
//! ```
//!
//! Edge lines may carry an explicit id prefix `#3 L0 -> L1: ...;`; either all
//! edges have one or none do. The `locs` header is optional when reading; if
//! present every referenced location must be listed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::{Cfa, CfaError, Edge, EdgeId, LocationId, Operation, VarName};
use crate::syntax::{Parser, SyntaxError, Tok};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfaTextError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("duplicate edge id #{0}")]
    DuplicateEdgeId(u32),
    #[error("edge ids are not contiguous: #{0} is missing")]
    MissingEdgeId(u32),
    #[error("either every edge carries an explicit id or none does")]
    MixedEdgeIds,
    #[error("dangling reference to location {0}")]
    DanglingLocation(LocationId),
    #[error("missing `init` header")]
    MissingInit,
    #[error(transparent)]
    Cfa(#[from] CfaError),
}

fn location(p: &mut Parser) -> Result<LocationId, SyntaxError> {
    let name = p.expect_ident().or_else(|_| p.error("expected location name like `L0`"))?;
    match name.strip_prefix('L').and_then(|n| n.parse::<u32>().ok()) {
        Some(n) => Ok(LocationId(n)),
        None => p.error(format!("`{name}` is not a location name")),
    }
}

fn list<T>(
    p: &mut Parser,
    mut item: impl FnMut(&mut Parser) -> Result<T, SyntaxError>,
) -> Result<Vec<T>, SyntaxError> {
    let mut out = Vec::new();
    if p.eat_sym(";") {
        return Ok(out);
    }
    loop {
        out.push(item(p)?);
        if p.eat_sym(";") {
            return Ok(out);
        }
        p.expect_sym(",")?;
    }
}

fn operation(p: &mut Parser) -> Result<Operation, SyntaxError> {
    if p.eat_keyword("assume") {
        return Ok(Operation::Assume(p.bool_expr()?));
    }
    if p.eat_keyword("havoc") {
        return Ok(Operation::Havoc(Arc::from(p.expect_ident()?.as_str())));
    }
    let v = p.expect_ident()?;
    p.expect_sym(":=")?;
    Ok(Operation::Assign(Arc::from(v.as_str()), p.expr()?))
}

pub fn parse_cfa(src: &str) -> Result<Cfa, CfaTextError> {
    let mut p = Parser::new(src)?;
    let mut vars: Vec<VarName> = Vec::new();
    let mut declared_locs: Option<BTreeSet<LocationId>> = None;
    let mut init = None;
    let mut errors = BTreeSet::new();
    loop {
        let header = match p.peek() {
            Tok::Ident(h) if matches!(h.as_str(), "vars" | "locs" | "init" | "error") => h.clone(),
            _ => break,
        };
        p.expect_ident()?;
        p.eat_sym(":");
        match header.as_str() {
            "vars" => vars.extend(list(&mut p, |p| p.expect_ident().map(|s| Arc::from(s.as_str())))?),
            "locs" => declared_locs.get_or_insert_with(BTreeSet::new).extend(list(&mut p, location)?),
            "init" => {
                init = Some(location(&mut p)?);
                p.expect_sym(";")?;
            }
            _ => errors.extend(list(&mut p, location)?),
        }
    }

    let mut raw: Vec<(Option<u32>, Edge)> = Vec::new();
    while !p.at_eof() {
        let id = if p.eat_sym("#") {
            let v = p.expect_int()?;
            if v < 0 || v > u32::MAX as i64 {
                return Err(p.error::<()>("edge id out of range").unwrap_err().into());
            }
            Some(v as u32)
        } else {
            None
        };
        let source = location(&mut p)?;
        p.expect_sym("->")?;
        let target = location(&mut p)?;
        p.expect_sym(":")?;
        let op = operation(&mut p)?;
        p.expect_sym(";")?;
        raw.push((id, Edge { id: EdgeId(0), source, target, op }));
    }

    let explicit = raw.iter().filter(|(id, _)| id.is_some()).count();
    let edges = if explicit == 0 {
        raw.into_iter()
            .enumerate()
            .map(|(i, (_, e))| Edge { id: EdgeId(i as u32), ..e })
            .collect::<Vec<_>>()
    } else if explicit != raw.len() {
        return Err(CfaTextError::MixedEdgeIds);
    } else {
        let mut by_id = BTreeMap::new();
        for (id, e) in raw {
            let id = id.expect("checked above");
            if by_id.insert(id, Edge { id: EdgeId(id), ..e }).is_some() {
                return Err(CfaTextError::DuplicateEdgeId(id));
            }
        }
        if let Some((i, _)) = by_id.keys().enumerate().find(|(i, k)| *i as u32 != **k) {
            return Err(CfaTextError::MissingEdgeId(i as u32));
        }
        by_id.into_values().collect()
    };

    let init = init.ok_or(CfaTextError::MissingInit)?;
    let mut referenced: BTreeSet<LocationId> = errors.clone();
    referenced.insert(init);
    for e in &edges {
        referenced.insert(e.source);
        referenced.insert(e.target);
    }
    let locations = match declared_locs {
        Some(ls) => {
            if let Some(l) = referenced.iter().find(|l| !ls.contains(l)) {
                return Err(CfaTextError::DanglingLocation(*l));
            }
            ls
        }
        None => referenced,
    };
    Ok(Cfa::new(locations, init, errors, edges, vars)?)
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn serialize_cfa(cfa: &Cfa) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars: {};", join(cfa.variables().iter()));
    let _ = writeln!(out, "locs: {};", join(cfa.locations().iter()));
    let _ = writeln!(out, "init: {};", cfa.initial());
    let _ = writeln!(out, "error: {};", join(cfa.error_locations().iter()));
    for e in cfa.edges() {
        let _ = writeln!(out, "{} -> {}: {};", e.source, e.target, e.op);
    }
    out
}
