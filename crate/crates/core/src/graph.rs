//! Undirected simple graphs.

use crate::error::{Error, Result};

/// An undirected simple graph on nodes `0..node_count`.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(u32, u32)>,
}

/// Compressed sorted adjacency lists.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    #[inline]
    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }
}

impl Graph {
    /// Build from arbitrary pairs. Self-loops are dropped and duplicates
    /// (in either orientation) collapse to one edge.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut out = Vec::new();
        for (u, v) in edges {
            if u as usize >= node_count || v as usize >= node_count {
                return Err(Error::Bounds {
                    u: u as usize,
                    v: v as usize,
                    order: node_count,
                });
            }
            if u != v {
                out.push((u.min(v), u.max(v)));
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(Graph { node_count, edges: out })
    }

    /// Trusts that `edges` are sorted, unique and satisfy `u < v < node_count`.
    pub(crate) fn from_sorted_upper(node_count: usize, edges: Vec<(u32, u32)>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(u, v)| u < v && (v as usize) < node_count));
        Graph { node_count, edges }
    }

    pub fn empty(node_count: usize) -> Self {
        Graph { node_count, edges: Vec::new() }
    }

    pub fn complete(node_count: usize) -> Self {
        let n = node_count as u32;
        let edges = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
        Graph { node_count, edges }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Adjacency {
        let deg = self.degrees();
        let mut offsets = Vec::with_capacity(self.node_count + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; 2 * self.edges.len()];
        // edges are sorted, so each list receives its smaller neighbors in
        // order, then its larger neighbors in order
        for &(u, v) in &self.edges {
            targets[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for &(u, v) in &self.edges {
            targets[fill[u as usize]] = v;
            fill[u as usize] += 1;
        }
        Adjacency { offsets, targets }
    }

    /// Subgraph induced on `nodes`, relabeled by rank in ascending id order.
    pub fn induced_subgraph(&self, nodes: &[u32]) -> Graph {
        let mut keep = nodes.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut rank = vec![u32::MAX; self.node_count];
        for (i, &u) in keep.iter().enumerate() {
            rank[u as usize] = i as u32;
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(u, v)| {
                let (ru, rv) = (rank[u as usize], rank[v as usize]);
                (ru != u32::MAX && rv != u32::MAX).then_some((ru, rv))
            })
            .collect();
        Graph::from_sorted_upper(keep.len(), edges)
    }
}
