//! Directed transition graphs between the states of a multi-state process.
//!
//! States are dense indices `0..num_states`. Edges are stored in
//! lexicographic order; that order is the canonical edge numbering used by
//! the parameter layout, the design and every file format.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Trajectory;
use crate::error::{Error, Result};

/// An allowed transition `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub const fn new(from: usize, to: usize) -> Self {
        Edge { from, to }
    }
}

impl From<(usize, usize)> for Edge {
    fn from((from, to): (usize, usize)) -> Self {
        Edge { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Immutable directed graph with O(1) edge and successor lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    num_states: usize,
    edges: Vec<Edge>,
    labels: Option<Vec<String>>,
    // num_states x num_states, edge index of (k, k') if present
    adjacency: Vec<Option<usize>>,
    // successors of each state as (target state, edge index), ascending by target
    successors: Vec<Vec<(usize, usize)>>,
    // transitive-reflexive closure, num_states x num_states
    closure: Vec<bool>,
}

impl TransitionGraph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range states.
    pub fn new(
        num_states: usize,
        edges: impl IntoIterator<Item = impl Into<Edge>>,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::Graph("a graph needs at least one state".into()));
        }
        let mut seen = HashSet::new();
        let mut sorted = Vec::new();
        for edge in edges {
            let edge: Edge = edge.into();
            if edge.from >= num_states || edge.to >= num_states {
                return Err(Error::Graph(format!(
                    "edge {edge} references a state outside 0..{num_states}"
                )));
            }
            if edge.from == edge.to {
                return Err(Error::Graph(format!("edge {edge} is a self-loop")));
            }
            if !seen.insert(edge) {
                return Err(Error::Graph(format!("edge {edge} is duplicated")));
            }
            sorted.push(edge);
        }
        sorted.sort();

        let mut adjacency = vec![None; num_states * num_states];
        let mut successors = vec![Vec::new(); num_states];
        for (idx, e) in sorted.iter().enumerate() {
            adjacency[e.from * num_states + e.to] = Some(idx);
            successors[e.from].push((e.to, idx));
        }

        let mut closure = vec![false; num_states * num_states];
        let mut queue = VecDeque::new();
        for start in 0..num_states {
            let row = &mut closure[start * num_states..(start + 1) * num_states];
            row[start] = true;
            queue.push_back(start);
            while let Some(k) = queue.pop_front() {
                for &(s, _) in &successors[k] {
                    if !row[s] {
                        row[s] = true;
                        queue.push_back(s);
                    }
                }
            }
        }

        Ok(TransitionGraph {
            num_states,
            edges: sorted,
            labels: None,
            adjacency,
            successors,
            closure,
        })
    }

    /// Attaches display labels, one per state.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.num_states {
            return Err(Error::Graph(format!(
                "{} labels given for {} states",
                labels.len(),
                self.num_states
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical (lexicographic) order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, state: usize) -> String {
        match &self.labels {
            Some(l) => l[state].clone(),
            None => state.to_string(),
        }
    }

    /// Canonical index of `edge`, if it exists.
    pub fn edge_index(&self, edge: Edge) -> Option<usize> {
        if edge.from >= self.num_states || edge.to >= self.num_states {
            return None;
        }
        self.adjacency[edge.from * self.num_states + edge.to]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edge_index(Edge::new(from, to)).is_some()
    }

    /// Successors of `state` as `(target, edge index)`, ascending by target.
    pub fn successors(&self, state: usize) -> &[(usize, usize)] {
        &self.successors[state]
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.successors[state].is_empty()
    }

    /// Dense 0/1 adjacency matrix, row-major.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.num_states)
            .map(|k| {
                (0..self.num_states)
                    .map(|j| u8::from(self.adjacency[k * self.num_states + j].is_some()))
                    .collect()
            })
            .collect()
    }

    /// Whether some directed path (possibly empty) leads from a member of
    /// `from` to a member of `to`.
    pub fn reaches(&self, from: &[usize], to: &[usize]) -> Result<bool> {
        if from.is_empty() || to.is_empty() {
            return Err(Error::Validation(
                "reachability query with an empty state set".into(),
            ));
        }
        for &s in from.iter().chain(to) {
            if s >= self.num_states {
                return Err(Error::Validation(format!("state {s} out of range")));
            }
        }
        Ok(from
            .iter()
            .any(|&a| to.iter().any(|&b| self.closure[a * self.num_states + b])))
    }

    /// Single-state reachability; panics on out-of-range states.
    pub fn state_reaches(&self, from: usize, to: usize) -> bool {
        self.closure[from * self.num_states + to]
    }
}

/// One observed transition inside a bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketEntry {
    pub individual: usize,
    pub entry: f64,
    pub exit: f64,
}

/// The censored sojourn closing each observed trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalRecord {
    pub individual: usize,
    pub state: usize,
    pub time: f64,
    pub censoring: f64,
}

/// Observed transitions grouped by edge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBuckets {
    pub buckets: BTreeMap<Edge, Vec<BucketEntry>>,
    pub terminals: Vec<TerminalRecord>,
}

impl TransitionBuckets {
    pub fn count(&self, edge: Edge) -> usize {
        self.buckets.get(&edge).map_or(0, Vec::len)
    }

    pub fn total_transitions(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }
}

/// Groups every consecutive pair of each trajectory under its edge.
pub fn build_buckets(
    graph: &TransitionGraph,
    trajectories: &[Trajectory],
    censoring: &[f64],
) -> Result<TransitionBuckets> {
    if trajectories.len() != censoring.len() {
        return Err(Error::Shape(format!(
            "{} trajectories but {} censoring times",
            trajectories.len(),
            censoring.len()
        )));
    }
    let mut out = TransitionBuckets::default();
    for (i, (traj, &c)) in trajectories.iter().zip(censoring).enumerate() {
        for w in traj.pairs().windows(2) {
            let ((t0, s0), (t1, s1)) = (w[0], w[1]);
            if !graph.has_edge(s0, s1) {
                return Err(Error::IllegalTransition {
                    individual: i,
                    from: s0,
                    to: s1,
                });
            }
            out.buckets
                .entry(Edge::new(s0, s1))
                .or_default()
                .push(BucketEntry {
                    individual: i,
                    entry: t0,
                    exit: t1,
                });
        }
        let (time, state) = traj.last();
        out.terminals.push(TerminalRecord {
            individual: i,
            state,
            time,
            censoring: c,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1() -> TransitionGraph {
        TransitionGraph::new(4, [(0, 1), (0, 3), (1, 2), (1, 3), (2, 1), (2, 3)]).unwrap()
    }

    #[test]
    fn adjacency_of_four_state_graph() {
        let g = fig1();
        assert_eq!(
            g.adjacency_matrix(),
            vec![
                vec![0, 1, 0, 1],
                vec![0, 0, 1, 1],
                vec![0, 1, 0, 1],
                vec![0, 0, 0, 0]
            ]
        );
        assert!(g.is_absorbing(3));
        assert!(!g.is_absorbing(1));
    }

    #[test]
    fn single_state_graph_is_absorbing() {
        let g = TransitionGraph::new(1, Vec::<(usize, usize)>::new()).unwrap();
        assert!(g.is_absorbing(0));
        assert!(g.successors(0).is_empty());
        assert!(g.reaches(&[0], &[0]).unwrap());
    }

    #[test]
    fn rejects_malformed_edges() {
        let err = TransitionGraph::new(2, [(0, 0)]).unwrap_err();
        assert!(err.to_string().contains("0->0"), "{err}");
        let err = TransitionGraph::new(2, [(0, 1), (0, 1)]).unwrap_err();
        assert!(err.to_string().contains("duplicated"));
        let err = TransitionGraph::new(2, [(0, 2)]).unwrap_err();
        assert!(err.to_string().contains("0->2"));
    }

    #[test]
    fn reachability_examples() {
        let g = fig1();
        assert!(!g.reaches(&[3], &[1]).unwrap());
        assert!(g.reaches(&[0], &[2]).unwrap());
        assert!(g.reaches(&[2], &[2]).unwrap());
        assert!(g.reaches(&[], &[1]).is_err());
        assert!(g.reaches(&[0], &[]).is_err());
    }

    #[test]
    fn buckets_record_pairs_and_terminals() {
        let g = TransitionGraph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let trajs = vec![
            Trajectory::new(vec![(0.0, 0), (2.0, 1)]).unwrap(),
            Trajectory::new(vec![(0.0, 0)]).unwrap(),
        ];
        let b = build_buckets(&g, &trajs, &[5.0, 5.0]).unwrap();
        assert_eq!(
            b.buckets[&Edge::new(0, 1)],
            vec![BucketEntry {
                individual: 0,
                entry: 0.0,
                exit: 2.0
            }]
        );
        assert_eq!(b.total_transitions(), 1);
        assert_eq!(b.terminals.len(), 2);
        assert_eq!(b.terminals[0].state, 1);
        assert_eq!(b.terminals[1].time, 0.0);

        let empty = build_buckets(&g, &[], &[]).unwrap();
        assert!(empty.buckets.is_empty() && empty.terminals.is_empty());
    }

    #[test]
    fn buckets_reject_non_edges() {
        let g = TransitionGraph::new(3, [(0, 1)]).unwrap();
        let trajs = vec![Trajectory::new(vec![(0.0, 0), (1.0, 2)]).unwrap()];
        let err = build_buckets(&g, &trajs, &[3.0]).unwrap_err();
        assert_eq!(
            err,
            Error::IllegalTransition {
                individual: 0,
                from: 0,
                to: 2
            }
        );
    }

    fn brute_force_path(p: usize, edges: &[Edge], a: usize, b: usize) -> bool {
        // enumerate walks of length < p
        let mut frontier = vec![a];
        for _ in 0..p {
            if frontier.contains(&b) {
                return true;
            }
            let mut next = frontier.clone();
            for &k in &frontier {
                for e in edges.iter().filter(|e| e.from == k) {
                    if !next.contains(&e.to) {
                        next.push(e.to);
                    }
                }
            }
            frontier = next;
        }
        frontier.contains(&b)
    }

    proptest! {
        #[test]
        fn closure_matches_path_enumeration(
            p in 1usize..=6,
            mask in proptest::collection::vec(any::<bool>(), 36),
        ) {
            let edges: Vec<Edge> = (0..p)
                .flat_map(|k| (0..p).map(move |j| (k, j)))
                .filter(|&(k, j)| k != j && mask[k * 6 + j])
                .map(Edge::from)
                .collect();
            let g = TransitionGraph::new(p, edges.clone()).unwrap();
            for a in 0..p {
                prop_assert_eq!(g.is_absorbing(a), g.adjacency_matrix()[a].iter().all(|&x| x == 0));
                for b in 0..p {
                    prop_assert_eq!(g.reaches(&[a], &[b]).unwrap(), brute_force_path(p, &edges, a, b));
                }
            }
        }

        #[test]
        fn bucket_counts_sum_to_pairs(
            lens in proptest::collection::vec(1usize..5, 0..20),
        ) {
            // chain graph 0 -> 1 -> 2 -> 3 -> 4
            let g = TransitionGraph::new(5, (0..4).map(|k| (k, k + 1))).unwrap();
            let trajs: Vec<Trajectory> = lens
                .iter()
                .map(|&l| Trajectory::new((0..l).map(|k| (k as f64, k)).collect()).unwrap())
                .collect();
            let cens = vec![10.0; trajs.len()];
            let b = build_buckets(&g, &trajs, &cens).unwrap();
            let pairs: usize = lens.iter().map(|l| l - 1).sum();
            prop_assert_eq!(b.total_transitions(), pairs);
        }
    }
}
