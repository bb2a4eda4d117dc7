//! Seeded random programs for property tests and benchmarks: at most four
//! variables, loops bounded by constant counters, havocs, branches and
//! assertions.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cfa::{parse_program, Cfa};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenOptions {
    pub max_vars: usize,
    pub max_locations: usize,
    pub max_depth: u32,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { max_vars: 4, max_locations: 20, max_depth: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub source: String,
    pub cfa: Cfa,
}

const NAMES: [&str; 4] = ["a", "b", "c", "d"];
const RELS: [&str; 6] = ["<", "<=", "==", "!=", ">=", ">"];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    vars: Vec<&'static str>,
    /// Loop counters of enclosing loops; never written in the loop body.
    locked: Vec<&'static str>,
    out: String,
    asserts: usize,
}

impl Gen<'_> {
    fn var(&mut self) -> &'static str {
        self.vars.choose(self.rng).copied().unwrap()
    }

    fn writable(&mut self) -> Option<&'static str> {
        let free: Vec<_> = self.vars.iter().copied().filter(|v| !self.locked.contains(v)).collect();
        free.choose(self.rng).copied()
    }

    fn term(&mut self) -> String {
        match self.rng.random_range(0..5) {
            0 => self.rng.random_range(0..5).to_string(),
            1 => format!("{} + {}", self.var(), self.rng.random_range(1..3)),
            2 => format!("{} - {}", self.var(), self.rng.random_range(1..3)),
            3 => format!("{} + {}", self.var(), self.var()),
            _ => self.var().to_string(),
        }
    }

    fn atom(&mut self) -> String {
        let rel = RELS.choose(self.rng).unwrap();
        let lhs = if self.vars.len() > 1 && self.rng.random_bool(0.3) {
            let pair: Vec<_> = self.vars.choose_multiple(self.rng, 2).collect();
            format!("{} - {}", pair[0], pair[1])
        } else {
            self.var().to_string()
        };
        format!("{lhs} {rel} {}", self.rng.random_range(0..8))
    }

    fn cond(&mut self) -> String {
        match self.rng.random_range(0..6) {
            0 => format!("{} && {}", self.atom(), self.atom()),
            1 => format!("{} || {}", self.atom(), self.atom()),
            _ => self.atom(),
        }
    }

    fn line(&mut self, indent: usize, s: &str) {
        self.out.push_str(&"  ".repeat(indent));
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn block(&mut self, indent: usize, depth: u32) {
        let n = self.rng.random_range(1..if indent == 0 { 6 } else { 4 });
        for _ in 0..n {
            self.stmt(indent, depth);
        }
    }

    fn stmt(&mut self, indent: usize, depth: u32) {
        let nested = depth > 0;
        match self.rng.random_range(0..if nested { 7 } else { 5 }) {
            0 => {
                if let Some(v) = self.writable() {
                    self.line(indent, &format!("havoc {v};"));
                }
            }
            1 | 2 => {
                if let Some(v) = self.writable() {
                    let t = self.term();
                    self.line(indent, &format!("{v} := {t};"));
                }
            }
            3 => {
                let mut c = self.cond();
                if self.rng.random_bool(0.5) {
                    c = format!("{c} || {}", self.atom());
                }
                self.asserts += 1;
                self.line(indent, &format!("assert({c});"));
            }
            4 if !nested || self.rng.random_bool(0.5) => {
                let c = self.atom();
                self.line(indent, &format!("assume({c});"));
            }
            4 | 5 => {
                let c = self.cond();
                self.line(indent, &format!("if ({c}) {{"));
                self.block(indent + 1, depth - 1);
                if self.rng.random_bool(0.5) {
                    self.line(indent, "} else {");
                    self.block(indent + 1, depth - 1);
                }
                self.line(indent, "}");
            }
            _ => {
                let Some(i) = self.writable() else { return };
                let bound = self.rng.random_range(1..4);
                self.line(indent, &format!("{i} := 0;"));
                self.line(indent, &format!("while ({i} < {bound}) {{"));
                self.locked.push(i);
                self.block(indent + 1, depth - 1);
                self.locked.pop();
                self.line(indent + 1, &format!("{i} := {i} + 1;"));
                self.line(indent, "}");
            }
        }
    }
}

/// Program number `index` of the stream seeded by `seed`; every program has
/// at least one assertion and fits `opts.max_locations`.
pub fn random_program(seed: u64, index: u64, opts: &GenOptions) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    loop {
        let nvars = rng.random_range(1..=opts.max_vars.clamp(1, NAMES.len()));
        let mut g = Gen { rng: &mut rng, vars: NAMES[..nvars].to_vec(), locked: Vec::new(), out: String::new(), asserts: 0 };
        g.out.push_str(&format!("int {};\n", g.vars.join(", ")));
        for v in g.vars.clone() {
            if g.rng.random_bool(0.7) {
                g.line(0, &format!("havoc {v};"));
            }
        }
        g.block(0, opts.max_depth);
        g.stmt(0, opts.max_depth);
        if g.asserts == 0 {
            let c = g.cond();
            g.line(0, &format!("assert({c});"));
        }
        let source = g.out;
        let cfa = parse_program(&source).expect("generated programs parse");
        if cfa.locations().len() <= opts.max_locations {
            return Generated { source, cfa };
        }
    }
}
