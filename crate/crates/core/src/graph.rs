//! Rooted trace graph with state-partitioned adjacency.
//!
//! Every non-root vertex has at most one current parent edge. Edges carry an
//! [`EdgeState`]; queries select edges through a [`StatePredicate`]. Children
//! of a parent are kept in one sorted bucket per state, so listing and
//! breadth-first enumeration are deterministic.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a trace vertex. `0` is the root and the id of summary items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraceId(pub u64);

impl TraceId {
    pub const ROOT: TraceId = TraceId(0);

    pub fn is_root(self) -> bool {
        self.0 == 0
    }
}

impl From<u64> for TraceId {
    fn from(value: u64) -> Self {
        TraceId(value)
    }
}

impl fmt::Display for TraceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// State label carried by a trace edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeState {
    Active,
    Closed,
}

impl EdgeState {
    /// Every state, in bucket order.
    pub const ALL: [EdgeState; 2] = [EdgeState::Active, EdgeState::Closed];

    fn bit(self) -> u32 {
        1 << (self as u32)
    }
}

/// A set of accepted edge states. The empty predicate selects nothing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StatePredicate {
    mask: u32,
}

impl StatePredicate {
    pub const fn none() -> Self {
        StatePredicate { mask: 0 }
    }

    pub fn all() -> Self {
        EdgeState::ALL.into_iter().collect()
    }

    pub fn only(state: EdgeState) -> Self {
        StatePredicate { mask: state.bit() }
    }

    pub fn with(mut self, state: EdgeState) -> Self {
        self.mask |= state.bit();
        self
    }

    pub fn accepts(&self, state: EdgeState) -> bool {
        self.mask & state.bit() != 0
    }

    /// Accepted states in bucket order.
    pub fn states(&self) -> impl Iterator<Item = EdgeState> + '_ {
        EdgeState::ALL.into_iter().filter(|s| self.accepts(*s))
    }
}

impl FromIterator<EdgeState> for StatePredicate {
    fn from_iter<I: IntoIterator<Item = EdgeState>>(iter: I) -> Self {
        iter.into_iter().fold(StatePredicate::none(), StatePredicate::with)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("the root vertex cannot be a child")]
    RootAsChild,
    #[error("self edge on vertex {0}")]
    SelfEdge(TraceId),
    #[error("vertex {0} has no current parent edge")]
    MissingChild(TraceId),
    #[error("parent chain starting at {0} contains a cycle")]
    Cycle(TraceId),
    #[error("graph invariant violated: {0}")]
    Corrupt(String),
}

/// One edge in the debug serialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub parent: TraceId,
    pub child: TraceId,
    pub state: EdgeState,
}

/// Debug serialization: edges sorted by `(parent, child)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub edges: Vec<EdgeRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct TraceGraph {
    parent_of: HashMap<TraceId, (TraceId, EdgeState)>,
    buckets: HashMap<(TraceId, EdgeState), Vec<TraceId>>,
}

impl TraceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of edges (equivalently, vertices that currently have a parent).
    pub fn edge_count(&self) -> usize {
        self.parent_of.len()
    }

    /// Inserts or moves the current edge of `child` to `(parent, state)`.
    ///
    /// Parents are not required to exist beforehand; a vertex exists once it
    /// appears in an edge. Upserting an existing `(parent, child)` pair with a
    /// different state is a state update.
    pub fn upsert(&mut self, parent: TraceId, child: TraceId, state: EdgeState) -> Result<(), GraphError> {
        if child.is_root() {
            return Err(GraphError::RootAsChild);
        }
        if parent == child {
            return Err(GraphError::SelfEdge(child));
        }
        if let Some(&(old_parent, old_state)) = self.parent_of.get(&child) {
            if old_parent == parent && old_state == state {
                return Ok(());
            }
            self.bucket_remove(old_parent, old_state, child);
        }
        self.bucket_insert(parent, state, child);
        self.parent_of.insert(child, (parent, state));
        Ok(())
    }

    /// Changes the state of the current edge of `child`, keeping its parent.
    pub fn set_state(&mut self, child: TraceId, state: EdgeState) -> Result<(), GraphError> {
        let (parent, old_state) = *self.parent_of.get(&child).ok_or(GraphError::MissingChild(child))?;
        if old_state == state {
            return Ok(());
        }
        self.bucket_remove(parent, old_state, child);
        self.bucket_insert(parent, state, child);
        self.parent_of.insert(child, (parent, state));
        Ok(())
    }

    pub fn parent_of(&self, child: TraceId) -> Option<(TraceId, EdgeState)> {
        self.parent_of.get(&child).copied()
    }

    /// True for the root and for any id that appears in an edge.
    pub fn contains_vertex(&self, id: TraceId) -> bool {
        id.is_root()
            || self.parent_of.contains_key(&id)
            || EdgeState::ALL.iter().any(|s| self.buckets.contains_key(&(id, *s)))
    }

    /// Direct children of `parent` over accepted states, ascending.
    pub fn children(&self, parent: TraceId, pred: StatePredicate) -> Vec<TraceId> {
        let mut out = Vec::new();
        self.extend_children(parent, pred, &mut out);
        out
    }

    fn extend_children(&self, parent: TraceId, pred: StatePredicate, out: &mut Vec<TraceId>) {
        let start = out.len();
        let mut contributing = 0;
        for state in pred.states() {
            if let Some(bucket) = self.buckets.get(&(parent, state)) {
                out.extend_from_slice(bucket);
                contributing += 1;
            }
        }
        // Each bucket is sorted; only a merge of several needs re-sorting.
        if contributing > 1 {
            out[start..].sort_unstable();
        }
    }

    /// Breadth-first descendants of `root` over accepted edges.
    ///
    /// Children of one parent are visited in ascending id order. The start
    /// vertex is excluded and every vertex is reported at most once.
    pub fn descendants(&self, root: TraceId, pred: StatePredicate) -> Vec<TraceId> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        seen.insert(root);
        let mut queue = VecDeque::from([root]);
        let mut scratch = Vec::new();
        while let Some(u) = queue.pop_front() {
            scratch.clear();
            self.extend_children(u, pred, &mut scratch);
            for &v in &scratch {
                if seen.insert(v) {
                    out.push(v);
                    queue.push_back(v);
                }
            }
        }
        out
    }

    /// All edges sorted by `(parent, child)`.
    pub fn edges(&self) -> Vec<EdgeRecord> {
        let mut edges: Vec<EdgeRecord> = self
            .parent_of
            .iter()
            .map(|(&child, &(parent, state))| EdgeRecord { parent, child, state })
            .collect();
        edges.sort_unstable_by_key(|e| (e.parent, e.child));
        edges
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot { edges: self.edges() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("graph snapshot serializes")
    }

    pub fn from_snapshot(snapshot: &GraphSnapshot) -> Result<Self, GraphError> {
        let mut graph = TraceGraph::new();
        for e in &snapshot.edges {
            graph.upsert(e.parent, e.child, e.state)?;
        }
        Ok(graph)
    }

    /// [`check_structure`](Self::check_structure) plus
    /// [`check_acyclic`](Self::check_acyclic). Linear in graph size; meant
    /// for tests and debugging rather than the update path.
    pub fn validate(&self) -> Result<(), GraphError> {
        self.check_structure()?;
        self.check_acyclic()
    }

    /// Sorted non-empty buckets, no root or self edges, and every child in
    /// exactly one bucket that agrees with its parent-map entry.
    pub fn check_structure(&self) -> Result<(), GraphError> {
        let mut seen = 0usize;
        for (&(parent, state), bucket) in &self.buckets {
            if bucket.is_empty() {
                return Err(GraphError::Corrupt(format!("empty bucket ({parent}, {state:?})")));
            }
            if !bucket.windows(2).all(|w| w[0] < w[1]) {
                return Err(GraphError::Corrupt(format!(
                    "bucket ({parent}, {state:?}) not strictly sorted"
                )));
            }
            for &child in bucket {
                if child.is_root() {
                    return Err(GraphError::RootAsChild);
                }
                if child == parent {
                    return Err(GraphError::SelfEdge(child));
                }
                if self.parent_of.get(&child) != Some(&(parent, state)) {
                    return Err(GraphError::Corrupt(format!("child {child} disagrees with parent map")));
                }
                seen += 1;
            }
        }
        if seen != self.parent_of.len() {
            return Err(GraphError::Corrupt(format!(
                "{seen} bucket entries for {} parent-map entries",
                self.parent_of.len()
            )));
        }
        Ok(())
    }

    /// Walks every parent chain with a visited set.
    pub fn check_acyclic(&self) -> Result<(), GraphError> {
        let mut cleared: HashSet<TraceId> = HashSet::new();
        for &start in self.parent_of.keys() {
            let mut path = HashSet::new();
            let mut cur = start;
            while let Some(&(parent, _)) = self.parent_of.get(&cur) {
                if cleared.contains(&cur) {
                    break;
                }
                if !path.insert(cur) {
                    return Err(GraphError::Cycle(start));
                }
                cur = parent;
            }
            cleared.extend(path);
        }
        Ok(())
    }

    fn bucket_insert(&mut self, parent: TraceId, state: EdgeState, child: TraceId) {
        let bucket = self.buckets.entry((parent, state)).or_default();
        if let Err(pos) = bucket.binary_search(&child) {
            bucket.insert(pos, child);
        }
    }

    fn bucket_remove(&mut self, parent: TraceId, state: EdgeState, child: TraceId) {
        if let Some(bucket) = self.buckets.get_mut(&(parent, state)) {
            if let Ok(pos) = bucket.binary_search(&child) {
                bucket.remove(pos);
            }
            if bucket.is_empty() {
                self.buckets.remove(&(parent, state));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    const A: EdgeState = EdgeState::Active;
    const C: EdgeState = EdgeState::Closed;

    fn t(v: u64) -> TraceId {
        TraceId(v)
    }

    fn ids(v: &[u64]) -> Vec<TraceId> {
        v.iter().copied().map(TraceId).collect()
    }

    fn mixed_state_tree() -> TraceGraph {
        let mut g = TraceGraph::new();
        for (p, c, s) in [(0, 1, A), (0, 2, C), (1, 3, A), (2, 4, A), (2, 5, C)] {
            g.upsert(t(p), t(c), s).unwrap();
        }
        g
    }

    /// Naive model: child -> (parent, state); queries recompute from scratch.
    #[derive(Default, Clone)]
    struct EdgeList(BTreeMap<u64, (u64, EdgeState)>);

    impl EdgeList {
        fn children(&self, u: u64, pred: StatePredicate) -> Vec<u64> {
            // BTreeMap iteration is ascending by child.
            self.0
                .iter()
                .filter(|(_, &(p, s))| p == u && pred.accepts(s))
                .map(|(&c, _)| c)
                .collect()
        }

        fn bfs(&self, root: u64, pred: StatePredicate) -> Vec<u64> {
            let mut out = Vec::new();
            let mut seen = std::collections::BTreeSet::from([root]);
            let mut frontier = vec![root];
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for u in frontier {
                    for c in self.children(u, pred) {
                        if seen.insert(c) {
                            out.push(c);
                            next.push(c);
                        }
                    }
                }
                frontier = next;
            }
            out
        }
    }

    #[test]
    fn single_insertion() {
        let mut g = TraceGraph::new();
        g.upsert(t(0), t(1), A).unwrap();
        assert_eq!(g.parent_of(t(1)), Some((t(0), A)));
        assert_eq!(g.children(t(0), StatePredicate::only(A)), ids(&[1]));
    }

    #[test]
    fn mixed_state_queries() {
        let g = mixed_state_tree();
        let active = StatePredicate::only(A);
        assert_eq!(g.children(t(0), StatePredicate::all()), ids(&[1, 2]));
        assert_eq!(g.children(t(0), active), ids(&[1]));
        assert_eq!(g.children(t(2), active), ids(&[4]));
        assert_eq!(g.children(t(3), StatePredicate::all()), ids(&[]));
        assert_eq!(g.descendants(t(0), active), ids(&[1, 3]));
        assert_eq!(g.descendants(t(2), active), ids(&[4]));
        assert_eq!(g.descendants(t(0), StatePredicate::all()), ids(&[1, 2, 3, 4, 5]));
        assert_eq!(g.parent_of(t(4)), Some((t(2), A)));
        assert_eq!(g.parent_of(t(0)), None);
        g.validate().unwrap();
    }

    #[test]
    fn upsert_moves_child() {
        let mut g = mixed_state_tree();
        g.upsert(t(0), t(5), A).unwrap();
        assert_eq!(g.parent_of(t(5)), Some((t(0), A)));
        assert_eq!(g.children(t(2), StatePredicate::all()), ids(&[4]));
        assert_eq!(g.children(t(0), StatePredicate::only(A)), ids(&[1, 5]));
        g.validate().unwrap();
    }

    #[test]
    fn set_state_moves_bucket() {
        let mut g = mixed_state_tree();
        g.set_state(t(2), A).unwrap();
        assert_eq!(g.descendants(t(0), StatePredicate::only(A)), ids(&[1, 2, 3, 4]));
        let before = g.snapshot();
        g.set_state(t(1), A).unwrap();
        assert_eq!(g.snapshot(), before);
        assert_eq!(g.set_state(t(99), C), Err(GraphError::MissingChild(t(99))));
    }

    #[test]
    fn rejects_root_child_and_self_edge() {
        let mut g = TraceGraph::new();
        assert_eq!(g.upsert(t(1), t(0), A), Err(GraphError::RootAsChild));
        assert_eq!(g.upsert(t(3), t(3), A), Err(GraphError::SelfEdge(t(3))));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn empty_predicate_selects_nothing() {
        let g = mixed_state_tree();
        assert!(g.children(t(0), StatePredicate::none()).is_empty());
        assert!(g.descendants(t(0), StatePredicate::none()).is_empty());
    }

    #[test]
    fn unknown_parents_are_allowed() {
        let mut g = TraceGraph::new();
        g.upsert(t(7), t(8), A).unwrap();
        assert!(g.contains_vertex(t(7)));
        assert!(g.contains_vertex(t(8)));
        assert!(!g.contains_vertex(t(9)));
        assert!(g.descendants(t(0), StatePredicate::all()).is_empty());
    }

    #[test]
    fn cycle_detection() {
        let mut g = TraceGraph::new();
        g.upsert(t(1), t(2), A).unwrap();
        g.upsert(t(2), t(3), A).unwrap();
        g.check_acyclic().unwrap();
        g.upsert(t(3), t(1), A).unwrap();
        assert!(matches!(g.check_acyclic(), Err(GraphError::Cycle(_))));
        // A cycle still terminates and reports each vertex once.
        assert_eq!(g.descendants(t(1), StatePredicate::all()), ids(&[2, 3]));
    }

    #[test]
    fn json_is_sorted() {
        let g = mixed_state_tree();
        assert_eq!(
            g.to_json(),
            r#"{"edges":[{"parent":0,"child":1,"state":"active"},{"parent":0,"child":2,"state":"closed"},{"parent":1,"child":3,"state":"active"},{"parent":2,"child":4,"state":"active"},{"parent":2,"child":5,"state":"closed"}]}"#
        );
        let back: GraphSnapshot = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(TraceGraph::from_snapshot(&back).unwrap().snapshot(), g.snapshot());
    }

    #[test]
    fn tree_full_descendants_is_n_minus_one() {
        let mut g = TraceGraph::new();
        for v in 1..200u64 {
            let s = if v % 3 == 0 { C } else { A };
            g.upsert(t((v - 1) / 3), t(v), s).unwrap();
        }
        assert_eq!(g.descendants(t(0), StatePredicate::all()).len(), 199);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Upsert(u64, u64, bool),
        SetState(u64, bool),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..20, 0u64..20, any::<bool>()).prop_map(|(p, c, a)| Op::Upsert(p, c, a)),
            (0u64..20, any::<bool>()).prop_map(|(c, a)| Op::SetState(c, a)),
        ]
    }

    fn state(a: bool) -> EdgeState {
        if a {
            A
        } else {
            C
        }
    }

    proptest! {
        #[test]
        fn matches_edge_list_model(ops in prop::collection::vec(op(), 0..40)) {
            let mut g = TraceGraph::new();
            let mut model = EdgeList::default();
            for op in ops {
                match op {
                    Op::Upsert(p, c, a) => {
                        let r = g.upsert(t(p), t(c), state(a));
                        if c == 0 || p == c {
                            prop_assert!(r.is_err());
                        } else {
                            prop_assert!(r.is_ok());
                            model.0.insert(c, (p, state(a)));
                        }
                    }
                    Op::SetState(c, a) => {
                        let r = g.set_state(t(c), state(a));
                        match model.0.get_mut(&c) {
                            Some(entry) => { prop_assert!(r.is_ok()); entry.1 = state(a); }
                            None => prop_assert_eq!(r, Err(GraphError::MissingChild(t(c)))),
                        }
                    }
                }
                // Bucket/map agreement; cycles are legal here so skip that part.
                let snap = g.snapshot();
                prop_assert_eq!(snap.edges.len(), model.0.len());
            }
            for pred in [StatePredicate::none(), StatePredicate::only(A), StatePredicate::only(C), StatePredicate::all()] {
                for u in 0..20u64 {
                    let kids: Vec<u64> = g.children(t(u), pred).iter().map(|x| x.0).collect();
                    prop_assert_eq!(&kids, &model.children(u, pred));
                    let desc: Vec<u64> = g.descendants(t(u), pred).iter().map(|x| x.0).collect();
                    prop_assert_eq!(&desc, &model.bfs(u, pred));
                    prop_assert!(kids.iter().all(|k| desc.contains(k)));
                }
            }
        }

        #[test]
        fn output_independent_of_build_order(seed in any::<u64>(), n in 2usize..40) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let edges: Vec<(u64, u64, EdgeState)> = (1..n as u64)
                .map(|v| (rng.gen_range(0..v), v, state(rng.gen())))
                .collect();
            let mut a = TraceGraph::new();
            for &(p, c, s) in &edges {
                a.upsert(t(p), t(c), s).unwrap();
            }
            let mut shuffled = edges.clone();
            shuffled.shuffle(&mut rng);
            let mut b = TraceGraph::new();
            for &(p, c, s) in &shuffled {
                // Detour through a wrong parent first so the histories differ.
                b.upsert(t(0), t(c), C).unwrap();
                b.upsert(t(p), t(c), s).unwrap();
            }
            prop_assert_eq!(a.snapshot(), b.snapshot());
            for pred in [StatePredicate::only(A), StatePredicate::all()] {
                prop_assert_eq!(a.descendants(t(0), pred), b.descendants(t(0), pred));
            }
            prop_assert_eq!(a.descendants(t(0), StatePredicate::all()).len(), n - 1);
        }
    }
}
