//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every run is bounded by fuel only, so
//! the whole suite is executed twice and the outputs compared.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmcheck::assumptions::{postprocess, Automaton, CompositeConfig, CompositeCpa, CompositeState, DomainKind, DomainState, StateStatus, Verdict};
use cmcheck::cfa::{parse_cfa, parse_program, Cfa, EdgeId, LocationId, Operation};
use cmcheck::conditions::{GlobalMonitor, Thresholds};
use cmcheck::cpa::{run_cpa, Cpa, NodeId, Reached, RunOutcome, WaitlistOrder};
use cmcheck::domains::predicate::{abstract_post, DEFAULT_MINTERM_BOUND};
use cmcheck::driver::{run_analysis, run_pipeline, AnalysisConfig, ChainMode, FinalReport, Pipeline, StageReport};
use cmcheck::refine::refine_loop;
use cmcheck::formula::{Atom, Formula, SolverCache, SolverConfig};
use cmcheck::gen::{random_program, GenOptions};
use cmcheck::oracle::{self, brute_force_boolean_abstraction, enumerate_reachable, enumerate_within, ConcreteState};

// Pinned parameters.
const SOUNDNESS_PROGRAMS: u64 = 200;
const SOUNDNESS_SEED: u64 = 0x5eed_0001;
const SOUNDNESS_FUEL: &str = "20000";
const HAVOC_RANGE: (i64, i64) = (0, 4);
const ORACLE_BUDGET: usize = 200_000;
const SOUNDNESS_TIME_LIMIT: Duration = Duration::from_secs(300);

const FIG3_EXPLICIT_FUEL: &str = "100000";
const FIG3_PREDICATE_FUEL: &str = "1000000";
const FIG3_TIME_LIMIT: Duration = Duration::from_secs(60);

const BUG_FUEL: u64 = 100_000;
const BUG_PATH_LENGTH: &str = "7";
const BUG_REPEAT_LOC: &str = "3";
/// Recorded baseline post counts: fuel only, path-length, repeat-loc.
const BUG_BASELINE_POSTS: (u64, u64, u64) = (99_999, 18, 20);

const ABSTRACTION_PAIRS: u64 = 500;
const ABSTRACTION_SEED: u64 = 0x5eed_0004;
const ABSTRACTION_MAX_PREDS: usize = 6;
const BOX: i64 = 8;

const ALG1_PROGRAMS: u64 = 50;
const ALG1_SEED: u64 = 0x5eed_0005;
const ALG1_FUEL: u64 = 1_000_000;

const RESTRICTION_PROGRAMS: u64 = 40;
const RESTRICTION_SEED: u64 = 0x5eed_0007;

struct Outcome {
    pass: bool,
    detail: String,
    /// Everything a run produced that must not vary between executions.
    transcript: String,
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> Cfa {
    parse_program(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn config(name: &str, conditions: &[(&str, &str)]) -> AnalysisConfig {
    let mut c = AnalysisConfig::named(name).unwrap();
    for (k, v) in conditions {
        c.set_condition(k, v).unwrap();
    }
    c
}

fn stage_transcript(r: &StageReport) -> String {
    let witness = r.witness.as_ref().map(|w| w.to_string()).unwrap_or_default();
    format!("{}\n{}{}{}posts={}\n", r.verdict, r.psi, r.automaton, witness, r.stats.posts)
}

fn report_transcript(r: &FinalReport) -> String {
    let mut out = String::new();
    for s in &r.stages {
        match s {
            cmcheck::driver::StageResult::Ran(r) => out.push_str(&stage_transcript(r)),
            cmcheck::driver::StageResult::Skipped(n) => out.push_str(&format!("skipped {n}\n")),
        }
    }
    out
}

// 1. Condition soundness ----------------------------------------------------

enum Check {
    Ok,
    Violation(String),
    Inconclusive(String),
}

fn check_stage(cfa: &Cfa, r: &StageReport) -> Check {
    match r.verdict {
        Verdict::True => match enumerate_reachable(cfa, HAVOC_RANGE, ORACLE_BUDGET) {
            Ok(reach) if reach.error_hit() => Check::Violation("TRUE but an error is reachable".into()),
            Ok(_) => Check::Ok,
            Err(e) => Check::Inconclusive(e.to_string()),
        },
        Verdict::False => {
            let Some(w) = &r.witness else { return Check::Violation("FALSE without witness".into()) };
            match oracle::replay(cfa, &w.edges, &w.havoc_values) {
                Ok(Some(states)) if states.last().is_some_and(|c| cfa.is_error(c.pc)) => Check::Ok,
                other => Check::Violation(format!("witness does not replay: {other:?}")),
            }
        }
        Verdict::Condition => {
            let keep = |c: &ConcreteState| r.psi.holds(c.pc, &c.env());
            match enumerate_within(cfa, HAVOC_RANGE, ORACLE_BUDGET, &keep) {
                Ok(reach) if reach.error_hit() => Check::Violation(format!(
                    "execution inside psi reaches an error: {:?}",
                    reach.error_trace.map(|t| t.into_iter().map(|(e, _)| e.0).collect::<Vec<_>>())
                )),
                Ok(_) => Check::Ok,
                Err(e) => Check::Inconclusive(e.to_string()),
            }
        }
    }
}

fn soundness_pipelines() -> Vec<(String, Pipeline)> {
    let fuel = ("fuel", SOUNDNESS_FUEL);
    let single = |name: &str, extra: &[(&str, &str)]| {
        let mut conds = vec![fuel];
        conds.extend_from_slice(extra);
        let label = std::iter::once(name.to_string()).chain(extra.iter().map(|(k, v)| format!("{k}={v}"))).collect::<Vec<_>>().join(" ");
        (label, Pipeline::single(config(name, &conds)))
    };
    let chained = Pipeline {
        stages: vec![config("explicit", &[("fuel", "300")]), config("predicate", &[fuel])],
        mode: ChainMode::ConditionPassing,
    };
    vec![
        single("location", &[]),
        single("explicit", &[]),
        single("predicate", &[]),
        single("explicit", &[("repeat-loc", "2")]),
        single("explicit", &[("path-length", "8")]),
        single("predicate", &[("assume-edges", "3")]),
        ("explicit>predicate".into(), chained),
    ]
}

fn criterion_soundness() -> Outcome {
    let start = Instant::now();
    let opts = GenOptions::default();
    let programs: Vec<u64> = (0..SOUNDNESS_PROGRAMS).collect();
    let pipelines = soundness_pipelines();
    let per_program = cmcheck::par::map(&programs, |&k| {
        let g = random_program(SOUNDNESS_SEED, k, &opts);
        let mut lines = Vec::new();
        let mut problems = Vec::new();
        let mut finals = Vec::new();
        for (label, p) in &pipelines {
            let report = run_pipeline(&g.cfa, p, &format!("gen-{k}")).unwrap();
            lines.push(format!("{k} {label}: {}", report_transcript(&report)));
            finals.push(report.verdict().to_string());
            for s in &report.stages {
                let cmcheck::driver::StageResult::Ran(r) = s else { continue };
                match check_stage(&g.cfa, r) {
                    Check::Ok => {}
                    Check::Violation(m) => problems.push((true, format!("program {k} [{label}] {}: {m}\n{}", r.name, g.source))),
                    Check::Inconclusive(m) => problems.push((false, format!("program {k} [{label}]: oracle {m}"))),
                }
            }
        }
        (lines, problems, finals)
    });
    let mut transcript = String::new();
    let mut violations = Vec::new();
    let mut inconclusive = Vec::new();
    let mut verdicts: BTreeMap<&String, usize> = BTreeMap::new();
    for (lines, problems, v) in &per_program {
        lines.iter().for_each(|l| transcript.push_str(l));
        for (hard, m) in problems {
            if *hard { violations.push(m.clone()) } else { inconclusive.push(m.clone()) }
        }
        for x in v {
            *verdicts.entry(x).or_default() += 1;
        }
    }
    let elapsed = start.elapsed();
    for v in violations.iter().chain(&inconclusive).take(5) {
        eprintln!("  {v}");
    }
    Outcome {
        pass: violations.is_empty() && inconclusive.is_empty() && elapsed < SOUNDNESS_TIME_LIMIT,
        detail: format!(
            "{} programs x {} configurations, final verdicts {:?}, {} violations, {} inconclusive oracle runs, {:.1}s (limit {}s)",
            SOUNDNESS_PROGRAMS,
            pipelines.len(),
            verdicts,
            violations.len(),
            inconclusive.len(),
            elapsed.as_secs_f64(),
            SOUNDNESS_TIME_LIMIT.as_secs()
        ),
        transcript,
    }
}

// 2. Two configurations succeed where each alone fails -----------------------

fn pipeline_fixture(name: &str) -> Pipeline {
    Pipeline::parse(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn criterion_two_configurations() -> Outcome {
    let start = Instant::now();
    let cfa = load("two_assertions.imp");
    let mut failures = Vec::new();
    let mut transcript = String::new();

    let pred = run_analysis(&cfa, &config("predicate", &[("fuel", FIG3_PREDICATE_FUEL)]), None);
    transcript.push_str(&stage_transcript(&pred));
    let clauses: Vec<String> = pred.psi.clauses().map(|c| c.body.to_string()).collect();
    if pred.verdict != Verdict::Condition || clauses != ["r >= x"] {
        failures.push(format!("predicate alone: {} with psi bodies {clauses:?}", pred.verdict));
    }
    let expl = run_analysis(&cfa, &config("explicit", &[("fuel", FIG3_EXPLICIT_FUEL)]), None);
    transcript.push_str(&stage_transcript(&expl));
    if expl.verdict != Verdict::Condition {
        failures.push(format!("explicit alone: {}", expl.verdict));
    }
    let mut finals = Vec::new();
    for name in ["pipeline_explicit_predicate.json", "pipeline_predicate_explicit.json"] {
        let mut p = pipeline_fixture(name);
        for s in &mut p.stages {
            if s.thresholds.fuel.is_none() {
                s.set_condition("fuel", FIG3_PREDICATE_FUEL).unwrap();
            }
        }
        let r = run_pipeline(&cfa, &p, "two_assertions.imp").unwrap();
        transcript.push_str(&report_transcript(&r));
        let stage1 = match &r.stages[0] {
            cmcheck::driver::StageResult::Ran(s) => s.verdict,
            cmcheck::driver::StageResult::Skipped(_) => Verdict::True,
        };
        if stage1 != Verdict::Condition || r.verdict() != Verdict::True {
            failures.push(format!("{name}: stage 1 {stage1}, final {}", r.verdict()));
        }
        finals.push(format!("{name} -> {}", r.verdict()));
    }
    let elapsed = start.elapsed();
    if elapsed >= FIG3_TIME_LIMIT {
        failures.push(format!("took {:.1}s", elapsed.as_secs_f64()));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "predicate alone {} psi {:?}; explicit alone (fuel {}) {}; {}; {:.2}s (limit {}s){}",
            pred.verdict,
            pred.psi.clauses().map(|c| c.to_string()).collect::<Vec<_>>(),
            FIG3_EXPLICIT_FUEL,
            expl.verdict,
            finals.join(", "),
            elapsed.as_secs_f64(),
            FIG3_TIME_LIMIT.as_secs(),
            if failures.is_empty() { String::new() } else { format!("; problems: {}", failures.join("; ")) }
        ),
        transcript,
    }
}

// 3. Conditions find a shallow bug behind a deep loop ------------------------

fn criterion_bug_hunting() -> Outcome {
    let cfa = load("deep_loop_bug.imp");
    let fuel = BUG_FUEL.to_string();
    let run = |extra: &[(&str, &str)]| {
        let mut conds = vec![("fuel", fuel.as_str())];
        conds.extend_from_slice(extra);
        run_analysis(&cfa, &config("explicit", &conds), None)
    };
    let plain = run(&[]);
    let by_length = run(&[("path-length", BUG_PATH_LENGTH)]);
    let by_repeat = run(&[("repeat-loc", BUG_REPEAT_LOC)]);
    let posts = (plain.stats.posts, by_length.stats.posts, by_repeat.stats.posts);
    let tenth = BUG_FUEL / 10;
    let replays = |r: &StageReport| {
        r.witness.as_ref().is_some_and(|w| {
            oracle::replay(&cfa, &w.edges, &w.havoc_values)
                .ok()
                .flatten()
                .is_some_and(|st| st.last().is_some_and(|c| cfa.is_error(c.pc)))
        })
    };
    let pass = plain.verdict == Verdict::Condition
        && by_length.verdict == Verdict::False
        && by_repeat.verdict == Verdict::False
        && replays(&by_length)
        && replays(&by_repeat)
        && posts.1 < tenth
        && posts.2 < tenth
        && posts == BUG_BASELINE_POSTS;
    Outcome {
        pass,
        detail: format!(
            "fuel {BUG_FUEL}: no condition {} ({} posts), path-length={BUG_PATH_LENGTH} {} ({} posts), repeat-loc={BUG_REPEAT_LOC} {} ({} posts); baseline {:?}, bound {tenth}",
            plain.verdict, posts.0, by_length.verdict, posts.1, by_repeat.verdict, posts.2, BUG_BASELINE_POSTS
        ),
        transcript: [&plain, &by_length, &by_repeat].map(stage_transcript).concat(),
    }
}

// 4. Predicate abstraction against brute force -------------------------------

const VARS: [&str; 3] = ["x", "y", "z"];

fn random_linear(rng: &mut ChaCha8Rng) -> String {
    let mut terms = Vec::new();
    for v in VARS {
        let c: i64 = rng.random_range(-2..=2);
        if c != 0 {
            terms.push(format!("{c}*{v}"));
        }
    }
    if terms.is_empty() {
        terms.push(VARS.choose(rng).unwrap().to_string());
    }
    terms.join(" + ")
}

fn random_atom_text(rng: &mut ChaCha8Rng) -> String {
    let rel = ["<=", "<", ">=", ">", "=="].choose(rng).unwrap();
    format!("{} {rel} {}", random_linear(rng), rng.random_range(-6..=6))
}

fn random_predicate(rng: &mut ChaCha8Rng) -> Atom {
    loop {
        if let Formula::Atom(a) = Formula::parse(&random_atom_text(rng)).unwrap() {
            return a;
        }
    }
}

fn box_constraint() -> String {
    VARS.iter().map(|v| format!("{v} >= -{BOX} && {v} <= {BOX}")).collect::<Vec<_>>().join(" && ")
}

/// Every point of the box, as an environment.
fn box_points() -> Vec<BTreeMap<&'static str, i64>> {
    let mut out = Vec::new();
    for x in -BOX..=BOX {
        for y in -BOX..=BOX {
            for z in -BOX..=BOX {
                out.push(BTreeMap::from([("x", x), ("y", y), ("z", z)]));
            }
        }
    }
    out
}

/// Whether a point's minterm belongs to the reference abstraction.
type Membership = dyn Fn(&dyn Fn(&str) -> Option<i128>) -> bool;

fn minterm(preds: &[Atom], env: &dyn Fn(&str) -> Option<i128>) -> Vec<bool> {
    preds.iter().map(|p| p.eval(env) == Some(true)).collect()
}

fn criterion_abstraction() -> Outcome {
    let points = box_points();
    let vars: Vec<Arc<str>> = VARS.iter().map(|v| Arc::from(*v)).collect();
    let pairs: Vec<u64> = (0..ABSTRACTION_PAIRS).collect();
    let results = cmcheck::par::map(&pairs, |&k| {
        let mut rng = ChaCha8Rng::seed_from_u64(ABSTRACTION_SEED.wrapping_add(k));
        let mut state_text = box_constraint();
        for _ in 0..rng.random_range(1..=3) {
            let a = random_atom_text(&mut rng);
            if rng.random_bool(0.25) {
                state_text = format!("{state_text} && ({a} || {})", random_atom_text(&mut rng));
            } else {
                state_text = format!("{state_text} && {a}");
            }
        }
        let state = Formula::parse(&state_text).unwrap();
        let op = if rng.random_bool(0.5) {
            format!("assume {}", random_atom_text(&mut rng))
        } else {
            let v = VARS.choose(&mut rng).unwrap();
            format!("{v} := {} + {}", random_linear(&mut rng), rng.random_range(-3..=3))
        };
        let cfa = parse_cfa(&format!("vars: x, y, z; init: L0; L0 -> L1: {op};")).unwrap();
        let edge = &cfa.edges()[0];
        let n = rng.random_range(1..=ABSTRACTION_MAX_PREDS);
        let preds: Vec<Atom> = (0..n).map(|_| random_predicate(&mut rng)).collect();

        let mut solver = SolverCache::new(SolverConfig::default());
        let abstracted = match abstract_post(&state, edge, &preds, DEFAULT_MINTERM_BOUND, &mut solver) {
            Ok(f) => f,
            Err(e) => return (1usize, format!("pair {k}: {e}\n")),
        };
        // Reference: concrete images of the box models of the state.
        let reference: Box<Membership> = match &edge.op {
            Operation::Assume(_) => {
                let cond = Formula::parse(&op["assume ".len()..]).unwrap();
                let sp = Formula::and([state.clone(), cond]);
                let f = brute_force_boolean_abstraction(&sp, &preds, &vars, BOX);
                Box::new(move |env| f.eval(env) == Some(true))
            }
            _ => {
                let mut images = BTreeSet::new();
                for p in &points {
                    let env = |n: &str| p.get(n).map(|&x| i128::from(x));
                    if state.eval(&env) != Some(true) {
                        continue;
                    }
                    let pre = ConcreteState {
                        pc: edge.source,
                        store: p.iter().map(|(k, v)| (Arc::from(*k), *v)).collect(),
                    };
                    let post = oracle::step(&pre, edge).unwrap().unwrap();
                    images.insert(minterm(&preds, &post.env()));
                }
                let preds = preds.clone();
                Box::new(move |env| images.contains(&minterm(&preds, env)))
            }
        };
        let mut mismatches = 0;
        for p in &points {
            let env = |n: &str| p.get(n).map(|&x| i128::from(x));
            if (abstracted.eval(&env) == Some(true)) != reference(&env) {
                mismatches += 1;
            }
        }
        let line = format!("pair {k}: {state_text} / {op} / {} preds -> {abstracted}\n", preds.len());
        (usize::from(mismatches > 0), line)
    });
    let failed: usize = results.iter().map(|r| r.0).sum();
    let transcript: String = results.iter().map(|r| r.1.as_str()).collect();
    if failed > 0 {
        for (_, l) in results.iter().filter(|r| r.0 > 0).take(3) {
            eprint!("  {l}");
        }
    }
    Outcome {
        pass: failed == 0,
        detail: format!(
            "{ABSTRACTION_PAIRS} (state, edge, predicates) triples, up to {ABSTRACTION_MAX_PREDS} predicates, box [-{BOX},{BOX}]^3: {failed} with mismatches"
        ),
        transcript,
    }
}

// 5. Reachability engine against a naive reference ---------------------------

/// (location, known values; `None` for location-only states).
type RefState = (LocationId, Option<BTreeMap<String, i64>>);

fn ref_transfer(s: &RefState, edge: &cmcheck::cfa::Edge) -> Option<RefState> {
    let Some(values) = &s.1 else { return Some((edge.target, None)) };
    let env = |v: &str| values.get(v).copied();
    let mut next = values.clone();
    match &edge.op {
        Operation::Assign(v, t) => match t.eval(&env) {
            Ok(Some(x)) => {
                next.insert(v.to_string(), x);
            }
            _ => {
                next.remove(&**v);
            }
        },
        Operation::Assume(c) => {
            if let Ok(Some(false)) = c.eval(&env) {
                return None;
            }
        }
        Operation::Havoc(v) => {
            next.remove(&**v);
        }
    }
    Some((edge.target, Some(next)))
}

/// `r` covers `s`: same location and `r` knows a subset of what `s` knows.
fn ref_covers(s: &RefState, r: &RefState) -> bool {
    s.0 == r.0
        && match (&s.1, &r.1) {
            (Some(sv), Some(rv)) => rv.iter().all(|(k, x)| sv.get(k) == Some(x)),
            (None, None) => true,
            _ => false,
        }
}

/// Worklist reachability with separate merge and stop by coverage, written
/// without indices or buckets.
fn reference_reached(cfa: &Cfa, explicit: bool, order: WaitlistOrder) -> Vec<RefState> {
    let init_values = explicit.then(|| cfa.variables().iter().map(|v| (v.to_string(), 0)).collect());
    let init: RefState = (cfa.initial(), init_values);
    let mut reached = vec![init.clone()];
    let mut waitlist = std::collections::VecDeque::new();
    if !cfa.is_error(init.0) {
        waitlist.push_back(init);
    }
    loop {
        let next = match order {
            WaitlistOrder::Dfs => waitlist.pop_back(),
            WaitlistOrder::Bfs => waitlist.pop_front(),
        };
        let Some(e) = next else { break };
        let mut fresh = Vec::new();
        for &eid in cfa.outgoing(e.0) {
            let Some(succ) = ref_transfer(&e, cfa.edge(eid)) else { continue };
            if reached.iter().any(|r| ref_covers(&succ, r)) {
                continue;
            }
            reached.push(succ.clone());
            if !cfa.is_error(succ.0) {
                fresh.push(succ);
            }
        }
        if order == WaitlistOrder::Dfs {
            fresh.reverse();
        }
        waitlist.extend(fresh);
    }
    reached.sort();
    reached
}

fn project(s: &CompositeState) -> RefState {
    let values = match &s.domain {
        DomainState::Explicit(e) => Some(e.values().iter().map(|(k, v)| (k.to_string(), *v)).collect()),
        _ => None,
    };
    (s.loc, values)
}

fn criterion_algorithm() -> Outcome {
    let opts = GenOptions::default();
    let programs: Vec<u64> = (0..ALG1_PROGRAMS).collect();
    let results = cmcheck::par::map(&programs, |&k| {
        let g = random_program(ALG1_SEED, k, &opts);
        let mut problems = Vec::new();
        let mut transcript = String::new();
        for kind in [DomainKind::Location, DomainKind::Explicit] {
            for order in [WaitlistOrder::Dfs, WaitlistOrder::Bfs] {
                let mut cpa = CompositeCpa::new(CompositeConfig::new(kind));
                let mut reached = Reached::new(&mut cpa, &g.cfa, order);
                let mut monitor = GlobalMonitor::new(Thresholds { fuel: Some(ALG1_FUEL), ..Thresholds::default() });
                let outcome = run_cpa(&mut cpa, &g.cfa, &mut reached, &mut monitor, false);
                let label = format!("program {k} {kind:?} {order:?}");
                if outcome != RunOutcome::Complete {
                    problems.push(format!("{label}: {outcome:?}"));
                    continue;
                }
                let mut got: Vec<RefState> = reached.reached().map(|(_, n)| project(&n.state)).collect();
                got.sort();
                let want = reference_reached(&g.cfa, kind == DomainKind::Explicit, order);
                if got != want {
                    problems.push(format!("{label}: engine {} states, reference {}", got.len(), want.len()));
                }
                // Closed under transfer modulo coverage.
                let states: Vec<CompositeState> = reached.reached().map(|(_, n)| n.state.clone()).collect();
                for (_, n) in reached.reached() {
                    if n.target {
                        continue;
                    }
                    for &eid in g.cfa.outgoing(n.location) {
                        for succ in cpa.successors(&n.state, g.cfa.edge(eid)) {
                            if !states.iter().any(|c| cpa.covers(&succ.state, c)) {
                                problems.push(format!("{label}: successor along edge {} not covered", eid.0));
                            }
                        }
                    }
                }
                transcript.push_str(&format!("{label}: {:?}\n", got));
            }
        }
        (problems, transcript)
    });
    let problems: Vec<&String> = results.iter().flat_map(|r| &r.0).collect();
    for p in problems.iter().take(5) {
        eprintln!("  {p}");
    }
    Outcome {
        pass: problems.is_empty(),
        detail: format!(
            "{ALG1_PROGRAMS} programs x (location, explicit) x (dfs, bfs): {} differences from the reference or uncovered successors",
            problems.len()
        ),
        transcript: results.iter().map(|r| r.1.as_str()).collect(),
    }
}

// 6. Post-processing on a fixed three-node ART -------------------------------

/// Hands out fixed (e_P, e_A) pairs per location, so the ART built by the
/// engine has known labels: a settled root, a waiting and an error state.
struct Scripted(BTreeMap<LocationId, (Formula, Formula)>);

impl Scripted {
    fn state(&self, loc: LocationId) -> CompositeState {
        let (p, a) = self.0[&loc].clone();
        CompositeState { assumption: a, loc, repeat: None, path: None, domain: DomainState::Predicate(p), obs: None }
    }
}

impl Cpa for Scripted {
    type State = CompositeState;

    fn initial_state(&mut self, cfa: &Cfa) -> CompositeState {
        self.state(cfa.initial())
    }

    fn location(&self, s: &CompositeState) -> LocationId {
        s.loc
    }

    fn successors(&mut self, _s: &CompositeState, edge: &cmcheck::cfa::Edge) -> Vec<cmcheck::cpa::Successor<CompositeState>> {
        vec![cmcheck::cpa::Successor::live(self.state(edge.target))]
    }

    fn excluded_successor(&mut self, _s: &CompositeState, edge: &cmcheck::cfa::Edge) -> CompositeState {
        self.state(edge.target)
    }

    fn covers(&mut self, _s: &CompositeState, _c: &CompositeState) -> bool {
        false
    }

    fn assumption(&self, s: &CompositeState) -> Formula {
        s.assumption.clone()
    }
}

fn criterion_postprocess() -> Outcome {
    let cfa = parse_cfa(&std::fs::read_to_string(fixture("three_node.cfa")).unwrap()).unwrap();
    let f = |s: &str| Formula::parse(s).unwrap();
    let mut cpa = Scripted(BTreeMap::from([
        (LocationId(0), (f("x >= 0"), f("x <= 100"))),
        (LocationId(1), (f("x <= 5"), f("x >= 2"))),
        (LocationId(2), (f("x >= 6"), f("true"))),
    ]));
    let mut reached = Reached::new(&mut cpa, &cfa, WaitlistOrder::Dfs);
    // Enough fuel to expand the root only.
    let mut monitor = GlobalMonitor::new(Thresholds { fuel: Some(2), ..Thresholds::default() });
    let outcome = run_cpa(&mut cpa, &cfa, &mut reached, &mut monitor, false);
    let statuses: Vec<(u32, StateStatus)> =
        reached.reached().map(|(id, n)| (n.location.0, cmcheck::assumptions::postprocess::state_status(&reached, id))).collect();
    let (psi, verdict) = postprocess(&reached);
    let got = psi.to_string();
    let golden = std::fs::read_to_string(fixture("three_node_psi.golden")).unwrap();
    let shape = statuses
        == [(0, StateStatus::Settled), (1, StateStatus::Waiting), (2, StateStatus::Error)];
    Outcome {
        pass: got == golden && shape && verdict == Verdict::Condition && reached.node_count() == 3,
        detail: format!(
            "{} nodes, statuses {statuses:?}, halted {outcome:?}, verdict {verdict}, psi {} golden file",
            reached.node_count(),
            if got == golden { "matches" } else { "differs from" }
        ),
        transcript: got,
    }
}

// 7. Automaton round trip and restriction ------------------------------------

fn run_raw(cfa: &Cfa, config: &AnalysisConfig, input: Option<Arc<Automaton>>) -> (Reached<CompositeState>, Automaton) {
    let mut cpa = CompositeCpa::new(config.composite());
    if let Some(a) = input {
        cpa = cpa.with_observer(a);
    }
    let mut reached = Reached::new(&mut cpa, cfa, config.order);
    let mut monitor = GlobalMonitor::new(config.thresholds);
    refine_loop(&mut cpa, cfa, &mut reached, &mut monitor, config.refine_options());
    let automaton = Automaton::export(&reached, cfa);
    (reached, automaton)
}

fn round_trips(a: &Automaton) -> bool {
    let text = a.to_string();
    Automaton::parse(&text).is_ok_and(|b| b.to_string() == text)
}

/// Nodes of a first-run ART whose whole future was verified: finished,
/// reached from every live child through a `true` label, and covered only
/// by such nodes. Greatest fixpoint by repeated removal.
fn verified_region(r: &Reached<CompositeState>) -> HashSet<NodeId> {
    let mut region: HashSet<NodeId> = r
        .nodes()
        .filter(|(_, n)| !n.removed && !n.excluded && !n.target && !n.in_waitlist())
        .map(|(id, _)| id)
        .collect();
    loop {
        let before = region.len();
        let snapshot = region.clone();
        region.retain(|&id| {
            let n = r.node(id);
            let children_ok = n.children.iter().filter(|c| !r.node(**c).removed).all(|c| {
                let label = &r.node(*c).assumption;
                label.is_true() && snapshot.contains(c)
            });
            let cover_ok = n.covered_by.is_none_or(|c| snapshot.contains(&c));
            children_ok && cover_ok
        });
        if region.len() == before {
            return region;
        }
    }
}

fn resolve(r: &Reached<CompositeState>, mut id: NodeId) -> NodeId {
    while let Some(c) = r.node(id).covered_by {
        id = c;
    }
    id
}

/// Walks `edges` through the first run's ART; an error if the walk enters
/// the verified region or takes an edge the first run found infeasible.
fn walk(first: &Reached<CompositeState>, region: &HashSet<NodeId>, edges: &[EdgeId]) -> Result<(), String> {
    let mut m = first.root();
    for (k, e) in edges.iter().enumerate() {
        m = resolve(first, m);
        let node = first.node(m);
        if region.contains(&m) {
            return Err(format!("step {k} enters verified node {}", m.0));
        }
        if node.excluded || node.target || node.in_waitlist() {
            return Ok(());
        }
        let child = node.children.iter().copied().find(|c| {
            let c = first.node(*c);
            !c.removed && c.parent.is_some_and(|(_, pe)| pe == *e)
        });
        let Some(c) = child else {
            return Err(format!("step {k} takes edge {} that was infeasible", e.0));
        };
        let label = &first.node(c).assumption;
        if !label.is_true() && !label.is_false() {
            return Ok(());
        }
        m = c;
    }
    let m = resolve(first, m);
    if region.contains(&m) {
        return Err(format!("ends in verified node {}", m.0));
    }
    Ok(())
}

fn criterion_automata() -> Outcome {
    let opts = GenOptions::default();
    let programs: Vec<u64> = (0..RESTRICTION_PROGRAMS).collect();
    let firsts = [
        config("explicit", &[("fuel", "25")]),
        config("predicate", &[("fuel", "40")]),
        config("explicit", &[("fuel", "20000"), ("path-length", "6")]),
        config("predicate", &[("fuel", "20000"), ("repeat-loc", "1")]),
    ];
    let seconds = [config("explicit", &[("fuel", "20000")]), config("predicate", &[("fuel", "20000")])];
    let results = cmcheck::par::map(&programs, |&k| {
        let g = random_program(RESTRICTION_SEED, k, &opts);
        let mut problems = Vec::new();
        let mut transcript = String::new();
        let mut checked_nodes = 0usize;
        let mut restricted_runs = 0usize;
        for c1 in &firsts {
            let (first, a1) = run_raw(&g.cfa, c1, None);
            if !round_trips(&a1) {
                problems.push(format!("program {k} {}: automaton does not round-trip", c1.name));
            }
            transcript.push_str(&a1.to_string());
            let region = verified_region(&first);
            let a1 = Arc::new(a1);
            for c2 in &seconds {
                let (second, a2) = run_raw(&g.cfa, c2, Some(a1.clone()));
                if !round_trips(&a2) {
                    problems.push(format!("program {k} {}>{}: automaton does not round-trip", c1.name, c2.name));
                }
                restricted_runs += 1;
                for (id, n) in second.nodes() {
                    // The root always exists; anything explored from it is
                    // checked through its descendants.
                    if n.removed || id == second.root() {
                        continue;
                    }
                    let edges: Vec<EdgeId> = second.path_to(id).into_iter().filter_map(|(_, e)| e).collect();
                    checked_nodes += 1;
                    if let Err(m) = walk(&first, &region, &edges) {
                        problems.push(format!("program {k} {}>{} node {}: {m}", c1.name, c2.name, id.0));
                    }
                }
                transcript.push_str(&a2.to_string());
            }
        }
        (problems, transcript, checked_nodes, restricted_runs)
    });
    let problems: Vec<&String> = results.iter().flat_map(|r| &r.0).collect();
    for p in problems.iter().take(5) {
        eprintln!("  {p}");
    }
    let nodes: usize = results.iter().map(|r| r.2).sum();
    let runs: usize = results.iter().map(|r| r.3).sum();
    // The two-configuration automata must round-trip as well.
    let cfa = load("two_assertions.imp");
    let (_, fig) = run_raw(&cfa, &config("predicate", &[("fuel", FIG3_PREDICATE_FUEL)]), None);
    let fig_ok = round_trips(&fig);
    let round_trip_failures = problems.iter().filter(|p| p.contains("round-trip")).count() + usize::from(!fig_ok);
    Outcome {
        pass: problems.is_empty() && fig_ok,
        detail: format!(
            "{runs} restricted runs on {RESTRICTION_PROGRAMS} programs, {nodes} ART nodes checked against the first run's verified region: {} entered it; {round_trip_failures} automata not byte-identical after export, parse, export",
            problems.len() - round_trip_failures + usize::from(!fig_ok),
        ),
        transcript: results.iter().map(|r| r.1.as_str()).collect(),
    }
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: Vec<Criterion> = vec![
        ("condition soundness", criterion_soundness),
        ("two configurations", criterion_two_configurations),
        ("bug hunting with conditions", criterion_bug_hunting),
        ("predicate abstraction exactness", criterion_abstraction),
        ("reachability algorithm", criterion_algorithm),
        ("post-processing", criterion_postprocess),
        ("automaton round trip and restriction", criterion_automata),
    ];
    let mut all_pass = true;
    let mut first = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        all_pass &= o.pass;
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        first.push(o.transcript);
    }
    let differing: Vec<usize> = criteria
        .iter()
        .zip(&first)
        .enumerate()
        .filter(|(_, ((_, f), t))| f().transcript != **t)
        .map(|(k, _)| k + 1)
        .collect();
    let bytes: usize = first.iter().map(String::len).sum();
    let deterministic = differing.is_empty();
    all_pass &= deterministic;
    println!(
        "{} 8. determinism: criteria 1-7 rerun, {bytes} bytes of verdicts, conditions, automata, witnesses and post counts compared; differing criteria {differing:?}",
        if deterministic { "PASS" } else { "FAIL" }
    );
    if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
