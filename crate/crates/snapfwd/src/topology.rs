//! Identified, connected, undirected network graph with the structural
//! queries (degree, distance, diameter) used by the protocols and the
//! verifier.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Processor identity. Ids form the contiguous set `{0, .., n-1}` and every
/// processor knows the whole set.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("edge endpoint {0} out of range (n = {1})")]
    NodeOutOfRange(u16, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(u16),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(u16, u16),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph must have at least one node")]
    Empty,
    #[error("at most {0} nodes supported")]
    TooLarge(usize),
}

/// Static network graph. Immutable after construction, so it can be shared
/// freely across concurrent runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    /// Neighbor sets in ascending id order.
    neighbors: Vec<Vec<NodeId>>,
    /// All-pairs shortest path lengths in hops.
    dist: Vec<Vec<u16>>,
    max_degree: usize,
    diameter: usize,
}

/// Small ids keep per-slot flags one byte wide.
const MAX_NODES: usize = 250;

impl Topology {
    /// Validates and builds the graph, then precomputes the distance table
    /// by breadth-first search from every node.
    pub fn build(n: usize, edges: &[(u16, u16)]) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        if n > MAX_NODES {
            return Err(TopologyError::TooLarge(MAX_NODES));
        }
        let mut neighbors: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            for &x in &[a, b] {
                if x as usize >= n {
                    return Err(TopologyError::NodeOutOfRange(x, n));
                }
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            if neighbors[a as usize].contains(&NodeId(b)) {
                return Err(TopologyError::DuplicateEdge(a.min(b), a.max(b)));
            }
            neighbors[a as usize].push(NodeId(b));
            neighbors[b as usize].push(NodeId(a));
        }
        for nb in &mut neighbors {
            nb.sort();
        }

        let dist = all_pairs_bfs(n, &neighbors)?;
        let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let diameter = dist
            .iter()
            .flat_map(|row| row.iter().copied())
            .max()
            .unwrap_or(0) as usize;

        Ok(Topology {
            n,
            neighbors,
            dist,
            max_degree,
            diameter,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximal degree, written Δ in trace summaries.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Network diameter D; the ranked buffer scheme uses D+1 buffers.
    pub fn diameter(&self) -> usize {
        self.diameter
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n as u16).map(NodeId)
    }

    pub fn neighbors(&self, p: NodeId) -> &[NodeId] {
        &self.neighbors[p.index()]
    }

    pub fn degree(&self, p: NodeId) -> usize {
        self.neighbors[p.index()].len()
    }

    pub fn are_neighbors(&self, p: NodeId, q: NodeId) -> bool {
        self.neighbors[p.index()].binary_search(&q).is_ok()
    }

    /// Shortest path length in hops; `dist(p, p) = 0`.
    pub fn dist(&self, p: NodeId, q: NodeId) -> usize {
        self.dist[p.index()][q.index()] as usize
    }

    /// Smallest-id neighbor, if any. Used wherever an "arbitrary neighbor"
    /// has to be pinned for reproducible traces.
    pub fn smallest_neighbor(&self, p: NodeId) -> Option<NodeId> {
        self.neighbors[p.index()].first().copied()
    }

    /// Smallest-id neighbor of `p` lying on a shortest path toward `d`.
    /// For `d = p` falls back to the smallest neighbor.
    pub fn canonical_next_hop(&self, p: NodeId, d: NodeId) -> Option<NodeId> {
        if p == d {
            return self.smallest_neighbor(p);
        }
        self.neighbors(p)
            .iter()
            .copied()
            .find(|&q| self.dist(q, d) + 1 == self.dist(p, d))
    }
}

fn all_pairs_bfs(n: usize, neighbors: &[Vec<NodeId>]) -> Result<Vec<Vec<u16>>, TopologyError> {
    let unreached = u16::MAX;
    let mut dist = vec![vec![unreached; n]; n];
    let mut queue = std::collections::VecDeque::new();
    for src in 0..n {
        dist[src][src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[src][u];
            for &v in &neighbors[u] {
                if dist[src][v.index()] == unreached {
                    dist[src][v.index()] = du + 1;
                    queue.push_back(v.index());
                }
            }
        }
        if dist[src].contains(&unreached) {
            return Err(TopologyError::Disconnected);
        }
    }
    Ok(dist)
}

/// The five-node example network: edges a-c, b-c, c-d, d-e with
/// ids a=0, b=1, c=2, d=3, e=4.
pub fn five_node_example() -> Topology {
    Topology::build(5, &[(0, 2), (1, 2), (2, 3), (3, 4)]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent distance oracle: Floyd-Warshall over the edge list.
    fn floyd_warshall(n: usize, edges: &[(u16, u16)]) -> Vec<Vec<usize>> {
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
        }
        for &(a, b) in edges {
            d[a as usize][b as usize] = 1;
            d[b as usize][a as usize] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn five_node_graph_has_expected_shape() {
        let t = five_node_example();
        assert_eq!(t.n(), 5);
        assert_eq!(t.max_degree(), 3);
        assert_eq!(t.diameter(), 3);
        assert_eq!(t.dist(NodeId(0), NodeId(4)), 3);
        // D+1 = 4 buffer ranks in the distance-based scheme.
        assert_eq!(t.diameter() + 1, 4);
    }

    #[test]
    fn single_node_graph() {
        let t = Topology::build(1, &[]).unwrap();
        assert_eq!(t.max_degree(), 0);
        assert_eq!(t.diameter(), 0);
        assert_eq!(t.dist(NodeId(0), NodeId(0)), 0);
    }

    #[test]
    fn rejects_disconnected() {
        let err = Topology::build(4, &[(0, 1), (2, 3)]).unwrap_err();
        assert_eq!(err, TopologyError::Disconnected);
    }

    #[test]
    fn rejects_self_loop_and_duplicates() {
        assert_eq!(
            Topology::build(2, &[(0, 0)]).unwrap_err(),
            TopologyError::SelfLoop(0)
        );
        assert_eq!(
            Topology::build(2, &[(0, 1), (1, 0)]).unwrap_err(),
            TopologyError::DuplicateEdge(0, 1)
        );
        assert_eq!(
            Topology::build(2, &[(0, 3)]).unwrap_err(),
            TopologyError::NodeOutOfRange(3, 2)
        );
    }

    #[test]
    fn distances_match_floyd_warshall_on_example() {
        let t = five_node_example();
        let oracle = floyd_warshall(5, &[(0, 2), (1, 2), (2, 3), (3, 4)]);
        for p in t.nodes() {
            for q in t.nodes() {
                assert_eq!(t.dist(p, q), oracle[p.index()][q.index()]);
            }
        }
    }

    #[test]
    fn canonical_next_hop_is_minimal_and_smallest() {
        let t = five_node_example();
        // a reaches b through c.
        assert_eq!(t.canonical_next_hop(NodeId(0), NodeId(1)), Some(NodeId(2)));
        // c toward itself: smallest neighbor.
        assert_eq!(t.canonical_next_hop(NodeId(2), NodeId(2)), Some(NodeId(0)));
        for p in t.nodes() {
            for d in t.nodes() {
                if p == d {
                    continue;
                }
                let h = t.canonical_next_hop(p, d).unwrap();
                assert_eq!(t.dist(h, d) + 1, t.dist(p, d));
            }
        }
    }

    /// Random connected graph: a random spanning tree plus extra edges.
    fn connected_graph() -> impl Strategy<Value = (usize, Vec<(u16, u16)>)> {
        (2usize..8).prop_flat_map(|n| {
            let attach = proptest::collection::vec(0u32..1000, n - 1);
            let extra = proptest::collection::vec((0u16..n as u16, 0u16..n as u16), 0..6);
            (Just(n), attach, extra).prop_map(|(n, attach, extra)| {
                let mut edges: Vec<(u16, u16)> = Vec::new();
                for (i, a) in attach.iter().enumerate() {
                    let v = (i + 1) as u16;
                    let u = (a % (i as u32 + 1)) as u16;
                    edges.push((u, v));
                }
                for (a, b) in extra {
                    if a != b && !edges.contains(&(a, b)) && !edges.contains(&(b, a)) {
                        edges.push((a, b));
                    }
                }
                (n, edges)
            })
        })
    }

    proptest! {
        #[test]
        fn distances_symmetric_triangle_and_match_oracle((n, edges) in connected_graph()) {
            let t = Topology::build(n, &edges).unwrap();
            let oracle = floyd_warshall(n, &edges);
            for p in t.nodes() {
                for q in t.nodes() {
                    prop_assert_eq!(t.dist(p, q), oracle[p.index()][q.index()]);
                    prop_assert_eq!(t.dist(p, q), t.dist(q, p));
                    for r in t.nodes() {
                        prop_assert!(t.dist(p, q) <= t.dist(p, r) + t.dist(r, q));
                    }
                }
            }
        }
    }
}
