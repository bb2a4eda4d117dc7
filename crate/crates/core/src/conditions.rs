//! Condition monitors: per-path counters carried in abstract states and a
//! global monitor polled by the reachability loop.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use crate::cfa::{Edge, EdgeId, LocationId};

/// Occurrence counts of locations along a path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RepeatState {
    pub counts: BTreeMap<LocationId, u32>,
    pub exceeded: bool,
}

impl RepeatState {
    pub fn transfer(&self, target: LocationId, k: u32) -> RepeatState {
        let mut counts = self.counts.clone();
        let c = counts.entry(target).or_insert(0);
        *c += 1;
        let exceeded = self.exceeded || *c > k;
        RepeatState { counts, exceeded }
    }

    pub fn merge(&self, other: &RepeatState) -> RepeatState {
        let mut counts = self.counts.clone();
        for (l, c) in &other.counts {
            let e = counts.entry(*l).or_insert(0);
            *e = (*e).max(*c);
        }
        RepeatState { counts, exceeded: self.exceeded || other.exceeded }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PathLimits {
    pub length: Option<u32>,
    pub assume_edges: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PathStats {
    pub length: u32,
    pub assume_edges: u32,
    pub exceeded: bool,
}

impl PathStats {
    pub fn transfer(&self, edge: &Edge, limits: &PathLimits) -> PathStats {
        let length = self.length + 1;
        let assume_edges = self.assume_edges + u32::from(edge.op.is_assume());
        let over = limits.length.is_some_and(|n| length > n)
            || limits.assume_edges.is_some_and(|n| assume_edges > n);
        PathStats { length, assume_edges, exceeded: self.exceeded || over }
    }

    pub fn merge(&self, other: &PathStats) -> PathStats {
        PathStats {
            length: self.length.max(other.length),
            assume_edges: self.assume_edges.max(other.assume_edges),
            exceeded: self.exceeded || other.exceeded,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Thresholds {
    pub max_reached: Option<usize>,
    pub soft_time: Option<Duration>,
    pub fuel: Option<u64>,
    pub busy_edge: Option<u64>,
    pub pf_atoms: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    ReachedSize,
    SoftTime,
    Fuel,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HaltReason::ReachedSize => "reached-size",
            HaltReason::SoftTime => "soft-time",
            HaltReason::Fuel => "fuel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusyEdge {
    Proceed,
    SkipWithAssumption,
}

#[derive(Debug, Clone)]
pub struct GlobalMonitor {
    pub thresholds: Thresholds,
    posts: u64,
    edge_posts: HashMap<EdgeId, u64>,
    start: Instant,
    halted: Option<HaltReason>,
}

impl GlobalMonitor {
    pub fn new(thresholds: Thresholds) -> GlobalMonitor {
        GlobalMonitor { thresholds, posts: 0, edge_posts: HashMap::new(), start: Instant::now(), halted: None }
    }

    pub fn posts(&self) -> u64 {
        self.posts
    }

    pub fn halted(&self) -> Option<HaltReason> {
        self.halted
    }

    /// Polled once per iteration before a state is expanded; `upcoming` is
    /// the number of transfers that expansion would perform.
    pub fn should_halt(&mut self, reached_size: usize, upcoming: u64) -> Option<HaltReason> {
        if self.halted.is_some() {
            return self.halted;
        }
        let t = &self.thresholds;
        let reason = if t.max_reached.is_some_and(|m| reached_size > m) {
            Some(HaltReason::ReachedSize)
        } else if t.fuel.is_some_and(|f| self.posts + upcoming > f) {
            Some(HaltReason::Fuel)
        } else if t.soft_time.is_some_and(|d| self.start.elapsed() > d) {
            Some(HaltReason::SoftTime)
        } else {
            None
        };
        self.halted = reason;
        reason
    }

    /// Counts one transfer along `edge`.
    pub fn busy_edge_check(&mut self, edge: EdgeId) -> BusyEdge {
        self.posts += 1;
        let c = self.edge_posts.entry(edge).or_insert(0);
        *c += 1;
        match self.thresholds.busy_edge {
            Some(limit) if *c > limit => BusyEdge::SkipWithAssumption,
            _ => BusyEdge::Proceed,
        }
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::{BoolExpr, Operation};

    fn edge(target: u32, op: Operation) -> Edge {
        Edge { id: EdgeId(0), source: LocationId(0), target: LocationId(target), op }
    }

    #[test]
    fn repeat_threshold_is_strict() {
        let s = RepeatState { counts: BTreeMap::from([(LocationId(1), 2)]), exceeded: false };
        let s = s.transfer(LocationId(1), 3);
        assert_eq!((s.counts[&LocationId(1)], s.exceeded), (3, false));
        assert!(s.transfer(LocationId(1), 3).exceeded);
        assert!(RepeatState::default().transfer(LocationId(4), 0).exceeded);
    }

    #[test]
    fn repeat_merge_takes_maximum() {
        let a = RepeatState { counts: BTreeMap::from([(LocationId(1), 2)]), exceeded: false };
        let b = RepeatState { counts: BTreeMap::from([(LocationId(1), 5)]), exceeded: false };
        assert_eq!(a.merge(&b).counts[&LocationId(1)], 5);
        assert_eq!(a.merge(&a), a);
        assert_eq!(a.merge(&b), b.merge(&a));
    }

    #[test]
    fn path_length_limit() {
        let limits = PathLimits { length: Some(7), assume_edges: None };
        let assign = edge(1, Operation::Havoc("x".into()));
        let s = PathStats { length: 6, ..Default::default() }.transfer(&assign, &limits);
        assert_eq!((s.length, s.exceeded), (7, false));
        assert!(s.transfer(&assign, &limits).exceeded);
        assert_eq!(s.assume_edges, 0);
        let assume = edge(1, Operation::Assume(BoolExpr::True));
        assert_eq!(s.transfer(&assume, &limits).assume_edges, 1);
    }

    #[test]
    fn monitor_limits() {
        let mut m = GlobalMonitor::new(Thresholds { max_reached: Some(100), ..Default::default() });
        assert_eq!(m.should_halt(100, 1), None);
        assert_eq!(m.should_halt(101, 1), Some(HaltReason::ReachedSize));
        assert_eq!(m.should_halt(0, 0), Some(HaltReason::ReachedSize));

        let mut free = GlobalMonitor::new(Thresholds::default());
        for _ in 0..1000 {
            free.busy_edge_check(EdgeId(0));
            assert_eq!(free.should_halt(1_000_000, 1), None);
        }

        let mut fuel = GlobalMonitor::new(Thresholds { fuel: Some(500), ..Default::default() });
        let mut iterations = 0;
        while fuel.should_halt(0, 1).is_none() {
            iterations += 1;
            fuel.busy_edge_check(EdgeId(0));
        }
        assert_eq!((iterations, fuel.posts()), (500, 500));
    }

    #[test]
    fn busy_edge_counts_per_edge() {
        let mut m = GlobalMonitor::new(Thresholds { busy_edge: Some(3), ..Default::default() });
        for _ in 0..3 {
            assert_eq!(m.busy_edge_check(EdgeId(0)), BusyEdge::Proceed);
        }
        assert_eq!(m.busy_edge_check(EdgeId(1)), BusyEdge::Proceed);
        assert_eq!(m.busy_edge_check(EdgeId(0)), BusyEdge::SkipWithAssumption);
    }
}
