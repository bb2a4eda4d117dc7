//! The CPA interface and the generic reachability loop over it.
//!
//! The reached set doubles as an abstract reachability tree: every state
//! ever produced becomes a node with a parent link, and nodes that were
//! covered on arrival are kept (outside the reached set proper) so that the
//! tree can be exported later.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Debug;

use crate::cfa::{Cfa, Edge, EdgeId, LocationId};
use crate::conditions::{BusyEdge, GlobalMonitor, HaltReason};
use crate::formula::Formula;

#[derive(Debug, Clone)]
pub struct Successor<S> {
    pub state: S,
    /// Set by the strengthening step when the path must not be continued.
    pub excluded: bool,
}

impl<S> Successor<S> {
    pub fn live(state: S) -> Self {
        Successor { state, excluded: false }
    }
}

pub trait Cpa {
    type State: Clone + PartialEq + Debug;

    fn initial_state(&mut self, cfa: &Cfa) -> Self::State;

    fn location(&self, s: &Self::State) -> LocationId;

    /// Abstract successors of `s` along `edge`, which leaves `s`'s location.
    fn successors(&mut self, s: &Self::State, edge: &Edge) -> Vec<Successor<Self::State>>;

    /// Stand-in successor when a transfer is skipped by the busy-edge monitor.
    fn excluded_successor(&mut self, s: &Self::State, edge: &Edge) -> Self::State;

    /// `merge(new, existing)`; returning `existing` unchanged means no merge.
    fn merge(&mut self, _new: &Self::State, existing: &Self::State) -> Self::State {
        existing.clone()
    }

    /// Stop check against a single reached state at the same location.
    fn covers(&mut self, s: &Self::State, coverer: &Self::State) -> bool;

    /// Assumption attached to the state, used as ART edge label.
    fn assumption(&self, _s: &Self::State) -> Formula {
        Formula::True
    }

    /// Index bucket the state is stored under.
    fn bucket(&self, _s: &Self::State) -> u64 {
        0
    }

    /// Buckets that may hold a coverer of `s`; `None` means all of them.
    fn probe_buckets(&self, _s: &Self::State) -> Option<Vec<u64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct Node<S> {
    pub state: S,
    pub location: LocationId,
    pub parent: Option<(NodeId, EdgeId)>,
    pub assumption: Formula,
    pub children: Vec<NodeId>,
    pub covered_by: Option<NodeId>,
    pub excluded: bool,
    pub target: bool,
    pub removed: bool,
    in_reached: bool,
    in_waitlist: bool,
}

impl<S> Node<S> {
    pub fn in_reached(&self) -> bool {
        self.in_reached && !self.removed
    }

    pub fn in_waitlist(&self) -> bool {
        self.in_waitlist && !self.removed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaitlistOrder {
    #[default]
    Dfs,
    Bfs,
}

#[derive(Debug, Clone)]
pub struct Reached<S> {
    nodes: Vec<Node<S>>,
    index: HashMap<LocationId, BTreeMap<u64, Vec<NodeId>>>,
    waitlist: VecDeque<NodeId>,
    order: WaitlistOrder,
    size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Complete,
    Halted(HaltReason),
    /// Target (error-location) nodes added while expanding the last state.
    TargetReached(Vec<NodeId>),
}

impl<S: Clone + PartialEq + Debug> Reached<S> {
    pub fn new<C: Cpa<State = S>>(cpa: &mut C, cfa: &Cfa, order: WaitlistOrder) -> Reached<S> {
        let init = cpa.initial_state(cfa);
        let mut r = Reached { nodes: Vec::new(), index: HashMap::new(), waitlist: VecDeque::new(), order, size: 0 };
        let id = r.add_node(cpa, init, None, false, None);
        r.nodes[id.0].target = cfa.is_error(r.nodes[id.0].location);
        if !r.nodes[id.0].target {
            r.push_waitlist(id);
        }
        r
    }

    pub fn order(&self) -> WaitlistOrder {
        self.order
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node<S>)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of states in the reached set proper.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn reached(&self) -> impl Iterator<Item = (NodeId, &Node<S>)> {
        self.nodes().filter(|(_, n)| n.in_reached())
    }

    pub fn waitlist(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.nodes().filter(|(_, n)| n.in_waitlist()).map(|(i, _)| i).collect();
        out.sort();
        out
    }

    pub fn waitlist_is_empty(&self) -> bool {
        !self.nodes.iter().any(Node::in_waitlist)
    }

    fn add_node<C: Cpa<State = S>>(
        &mut self,
        cpa: &C,
        state: S,
        parent: Option<(NodeId, EdgeId)>,
        excluded: bool,
        covered_by: Option<NodeId>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        let location = cpa.location(&state);
        let assumption = if excluded { Formula::False } else { cpa.assumption(&state) };
        let in_reached = covered_by.is_none();
        if in_reached {
            let bucket = cpa.bucket(&state);
            self.index.entry(location).or_default().entry(bucket).or_default().push(id);
            self.size += 1;
        }
        self.nodes.push(Node {
            state,
            location,
            parent,
            assumption,
            children: Vec::new(),
            covered_by,
            excluded,
            target: false,
            removed: false,
            in_reached,
            in_waitlist: false,
        });
        if let Some((p, _)) = parent {
            self.nodes[p.0].children.push(id);
        }
        id
    }

    pub fn push_waitlist(&mut self, id: NodeId) {
        let n = &mut self.nodes[id.0];
        if n.removed || n.excluded || n.target || n.in_waitlist || !n.in_reached {
            return;
        }
        n.in_waitlist = true;
        self.waitlist.push_back(id);
    }

    fn peek_next(&mut self) -> Option<NodeId> {
        loop {
            let id = match self.order {
                WaitlistOrder::Dfs => *self.waitlist.back()?,
                WaitlistOrder::Bfs => *self.waitlist.front()?,
            };
            if self.nodes[id.0].in_waitlist() {
                return Some(id);
            }
            match self.order {
                WaitlistOrder::Dfs => self.waitlist.pop_back(),
                WaitlistOrder::Bfs => self.waitlist.pop_front(),
            };
        }
    }

    fn pop(&mut self, id: NodeId) {
        match self.order {
            WaitlistOrder::Dfs => self.waitlist.pop_back(),
            WaitlistOrder::Bfs => self.waitlist.pop_front(),
        };
        self.nodes[id.0].in_waitlist = false;
    }

    fn candidates<C: Cpa<State = S>>(&self, cpa: &C, s: &S, loc: LocationId, only_own_bucket: bool) -> Vec<NodeId> {
        let Some(buckets) = self.index.get(&loc) else {
            return Vec::new();
        };
        let mut out: Vec<NodeId> = if only_own_bucket {
            buckets.get(&cpa.bucket(s)).cloned().unwrap_or_default()
        } else {
            match cpa.probe_buckets(s) {
                Some(bs) => bs.iter().filter_map(|b| buckets.get(b)).flatten().copied().collect(),
                None => buckets.values().flatten().copied().collect(),
            }
        };
        out.retain(|id| self.nodes[id.0].in_reached());
        out.sort();
        out.dedup();
        out
    }

    fn reindex<C: Cpa<State = S>>(&mut self, cpa: &C, id: NodeId, old_bucket: u64) {
        let loc = self.nodes[id.0].location;
        let new_bucket = cpa.bucket(&self.nodes[id.0].state);
        if new_bucket == old_bucket {
            return;
        }
        let buckets = self.index.entry(loc).or_default();
        if let Some(v) = buckets.get_mut(&old_bucket) {
            v.retain(|x| *x != id);
        }
        buckets.entry(new_bucket).or_default().push(id);
    }

    /// Root-to-node sequence of (node, edge into it); the root has no edge.
    pub fn path_to(&self, id: NodeId) -> Vec<(NodeId, Option<EdgeId>)> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let parent = self.nodes[c.0].parent;
            out.push((c, parent.map(|(_, e)| e)));
            cur = parent.map(|(p, _)| p);
        }
        out.reverse();
        out
    }

    /// Marks a node excluded: it leaves the waitlist and is never expanded.
    pub fn exclude(&mut self, id: NodeId, state: S) {
        let n = &mut self.nodes[id.0];
        n.state = state;
        n.excluded = true;
        n.in_waitlist = false;
        n.assumption = Formula::False;
    }

    /// Removes the subtree below and including `id` from reached, waitlist
    /// and tree. Returns live nodes that had been covered by a removed node;
    /// they are dropped as well and their parents need re-expansion.
    fn remove_subtree(&mut self, id: NodeId) -> Vec<NodeId> {
        let mut stack = vec![id];
        let mut removed = Vec::new();
        while let Some(n) = stack.pop() {
            if self.nodes[n.0].removed {
                continue;
            }
            let node = &mut self.nodes[n.0];
            node.removed = true;
            node.in_waitlist = false;
            if node.in_reached {
                self.size -= 1;
            }
            stack.extend(node.children.iter().copied());
            removed.push(n);
        }
        let mut is_removed = vec![false; self.nodes.len()];
        for n in &removed {
            is_removed[n.0] = true;
            let loc = self.nodes[n.0].location;
            if let Some(buckets) = self.index.get_mut(&loc) {
                for v in buckets.values_mut() {
                    v.retain(|x| x != n);
                }
            }
        }
        if let Some((p, _)) = self.nodes[id.0].parent {
            self.nodes[p.0].children.retain(|c| *c != id);
        }
        let mut uncovered = Vec::new();
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            if node.removed || !node.covered_by.is_some_and(|c| is_removed[c.0]) {
                continue;
            }
            self.nodes[i].removed = true;
            if let Some((p, _)) = self.nodes[i].parent {
                self.nodes[p.0].children.retain(|c| c.0 != i);
            }
            uncovered.push(NodeId(i));
        }
        uncovered
    }

    /// Removes every successor subtree of `id` except the one rooted at `keep`.
    /// Nodes that lose their coverer this way get their parents re-expanded.
    pub fn prune_children(&mut self, id: NodeId, keep: Option<NodeId>) {
        let children: Vec<NodeId> = self.nodes[id.0].children.iter().copied().filter(|c| Some(*c) != keep).collect();
        for c in children {
            for u in self.remove_subtree(c) {
                if let Some((p, _)) = self.nodes[u.0].parent {
                    self.reexpand(p);
                }
            }
        }
    }

    /// Drops all successors of `id` and queues it for expansion again.
    pub fn reexpand(&mut self, id: NodeId) {
        let mut pending = vec![id];
        while let Some(n) = pending.pop() {
            if self.nodes[n.0].removed {
                continue;
            }
            let children = std::mem::take(&mut self.nodes[n.0].children);
            for c in children {
                for u in self.remove_subtree(c) {
                    if let Some((p, _)) = self.nodes[u.0].parent {
                        pending.push(p);
                    }
                }
            }
            self.push_waitlist(n);
        }
    }
}

/// Expands states from the waitlist until it is empty, the monitor halts,
/// or (with `stop_on_target`) an error-location state has been added.
pub fn run_cpa<C: Cpa>(
    cpa: &mut C,
    cfa: &Cfa,
    reached: &mut Reached<C::State>,
    monitor: &mut GlobalMonitor,
    stop_on_target: bool,
) -> RunOutcome {
    loop {
        let Some(id) = reached.peek_next() else {
            return RunOutcome::Complete;
        };
        let loc = reached.node(id).location;
        let out = cfa.outgoing(loc);
        if let Some(reason) = monitor.should_halt(reached.size(), out.len() as u64) {
            return RunOutcome::Halted(reason);
        }
        reached.pop(id);
        let state = reached.node(id).state.clone();
        let mut fresh = Vec::new();
        let mut targets = Vec::new();
        for &eid in out {
            let edge = cfa.edge(eid);
            let succs = match monitor.busy_edge_check(eid) {
                BusyEdge::Proceed => cpa.successors(&state, edge),
                BusyEdge::SkipWithAssumption => {
                    vec![Successor { state: cpa.excluded_successor(&state, edge), excluded: true }]
                }
            };
            for s in succs {
                insert_successor(cpa, cfa, reached, id, eid, s, &mut fresh, &mut targets);
            }
        }
        if reached.order == WaitlistOrder::Dfs {
            fresh.reverse();
        }
        for n in fresh {
            reached.push_waitlist(n);
        }
        if stop_on_target && !targets.is_empty() {
            return RunOutcome::TargetReached(targets);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn insert_successor<C: Cpa>(
    cpa: &mut C,
    cfa: &Cfa,
    reached: &mut Reached<C::State>,
    parent: NodeId,
    edge: EdgeId,
    succ: Successor<C::State>,
    fresh: &mut Vec<NodeId>,
    targets: &mut Vec<NodeId>,
) {
    if succ.excluded {
        reached.add_node(cpa, succ.state, Some((parent, edge)), true, None);
        return;
    }
    let loc = cpa.location(&succ.state);
    for c in reached.candidates(cpa, &succ.state, loc, true) {
        let node = &reached.nodes[c.0];
        if node.excluded {
            continue;
        }
        let merged = cpa.merge(&succ.state, &node.state);
        if merged != node.state {
            let old_bucket = cpa.bucket(&node.state);
            let n = &mut reached.nodes[c.0];
            n.assumption = cpa.assumption(&merged);
            n.state = merged;
            reached.reindex(cpa, c, old_bucket);
            if !reached.nodes[c.0].target {
                fresh.push(c);
            }
        }
    }
    for c in reached.candidates(cpa, &succ.state, loc, false) {
        if cpa.covers(&succ.state, &reached.nodes[c.0].state) {
            reached.add_node(cpa, succ.state, Some((parent, edge)), false, Some(c));
            return;
        }
    }
    let id = reached.add_node(cpa, succ.state, Some((parent, edge)), false, None);
    if cfa.is_error(loc) {
        reached.nodes[id.0].target = true;
        targets.push(id);
    } else {
        fresh.push(id);
    }
}
