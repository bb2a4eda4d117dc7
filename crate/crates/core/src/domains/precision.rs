//! Predicate sets per location plus a global set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::cfa::LocationId;
use crate::formula::{Atom, Formula};
use crate::syntax::{Parser, SyntaxError, Tok};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Precision {
    local: BTreeMap<LocationId, BTreeSet<Atom>>,
    global: BTreeSet<Atom>,
}

impl Precision {
    pub fn new() -> Precision {
        Precision::default()
    }

    /// Predicates tracked at `loc`, in canonical order.
    pub fn at(&self, loc: LocationId) -> Vec<Atom> {
        let mut out: BTreeSet<Atom> = self.global.clone();
        if let Some(s) = self.local.get(&loc) {
            out.extend(s.iter().cloned());
        }
        out.into_iter().collect()
    }

    pub fn add(&mut self, loc: LocationId, atom: &Atom) -> bool {
        let key = atom.predicate_key();
        if self.global.contains(&key) {
            return false;
        }
        self.local.entry(loc).or_default().insert(key)
    }

    pub fn add_global(&mut self, atom: &Atom) -> bool {
        self.global.insert(atom.predicate_key())
    }

    pub fn contains(&self, loc: LocationId, atom: &Atom) -> bool {
        let key = atom.predicate_key();
        self.global.contains(&key) || self.local.get(&loc).is_some_and(|s| s.contains(&key))
    }

    /// Total number of (location, predicate) entries plus global predicates.
    pub fn atom_count(&self) -> usize {
        self.local.values().map(BTreeSet::len).sum::<usize>() + self.global.len()
    }

    pub fn parse(src: &str) -> Result<Precision, SyntaxError> {
        let mut p = Parser::new(src)?;
        let mut out = Precision::new();
        while !p.at_eof() {
            let scope = match p.peek() {
                Tok::Ident(s) if s == "loc" => {
                    p.advance();
                    let name = p.expect_ident()?;
                    let Some(n) = name.strip_prefix('L').and_then(|n| n.parse().ok()) else {
                        return p.error(format!("`{name}` is not a location name"));
                    };
                    Some(LocationId(n))
                }
                Tok::Ident(s) if s == "global" => {
                    p.advance();
                    None
                }
                _ => return p.error("expected `loc` or `global`"),
            };
            p.expect_sym(":")?;
            let b = p.bool_expr()?;
            let atom = match Formula::from_bool_expr(&b, &|s| Arc::from(s)) {
                Formula::Atom(a) | Formula::Not(a) => a,
                _ => return p.error("predicate must be a single comparison"),
            };
            p.expect_sym(";")?;
            match scope {
                Some(l) => out.add(l, &atom),
                None => out.add_global(&atom),
            };
        }
        Ok(out)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, atoms) in &self.local {
            for a in atoms {
                writeln!(f, "loc {l}: {a};")?;
            }
        }
        for a in &self.global {
            writeln!(f, "global: {a};")?;
        }
        Ok(())
    }
}
