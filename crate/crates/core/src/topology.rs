//! Undirected, unweighted communication graph and its Laplacian.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    /// Normalized so that `a < b`.
    edges: BTreeSet<(NodeId, NodeId)>,
    /// Neighbor indices per node, ascending by node id.
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    pub fn build(
        node_ids: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        let node_ids: Vec<NodeId> = node_ids.into_iter().collect();
        let mut index = BTreeMap::new();
        for (i, &id) in node_ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::Topology(format!("duplicate node {id}")));
            }
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Topology(format!("self-loop at node {a}")));
            }
            for end in [a, b] {
                if !index.contains_key(&end) {
                    return Err(Error::Topology(format!(
                        "edge ({a}, {b}) references unknown node {end}"
                    )));
                }
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Topology(format!("duplicate edge ({a}, {b})")));
            }
        }
        let mut adjacency = vec![Vec::new(); node_ids.len()];
        for &(a, b) in &set {
            adjacency[index[&a]].push(index[&b]);
            adjacency[index[&b]].push(index[&a]);
        }
        for list in &mut adjacency {
            list.sort_by_key(|&j| node_ids[j]);
        }
        Ok(Topology {
            node_ids,
            index,
            edges: set,
            adjacency,
        })
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn degree(&self, id: NodeId) -> Option<usize> {
        self.index_of(id).map(|i| self.adjacency[i].len())
    }

    /// Neighbors of `id` in ascending id order.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let list = self.index_of(id).map(|i| self.adjacency[i].as_slice()).unwrap_or(&[]);
        list.iter().map(|&j| self.node_ids[j])
    }

    /// Neighbor positions (into [`node_ids`](Self::node_ids)) of the node at `i`.
    pub fn neighbor_indices(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Laplacian `L = [l_ij]` in node order: `l_ij = −1` for an edge, `l_ii` = degree.
    pub fn laplacian(&self) -> Vec<Vec<i64>> {
        let n = self.len();
        let mut l = vec![vec![0i64; n]; n];
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            l[i][i] = nbrs.len() as i64;
            for &j in nbrs {
                l[i][j] = -1;
            }
        }
        l
    }

    /// `λᵀ L λ = Σ_edges (λ_a − λ_b)²` for values in node order.
    pub fn quadratic_form(&self, values: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|(a, b)| {
                let d = values[self.index[a]] - values[self.index[b]];
                d * d
            })
            .sum()
    }

    /// Connected components as sets of node positions, smallest id first.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                comp.push(i);
                for &j in &self.adjacency[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// True iff the graph has exactly one connected component.
    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Laplacian eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.len();
        if n == 0 {
            return Vec::new();
        }
        let lap = self.laplacian();
        let m = DMatrix::from_fn(n, n, |i, j| lap[i][j] as f64);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Algebraic connectivity: the second-smallest Laplacian eigenvalue.
    ///
    /// Zero for a disconnected graph (and for graphs with fewer than two nodes).
    pub fn sigma2(&self) -> f64 {
        if !self.is_connected() || self.len() < 2 {
            return 0.0;
        }
        self.eigenvalues()[1].max(0.0)
    }

    /// Largest Laplacian eigenvalue.
    pub fn sigma_max(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Induced subgraph with `id` and its incident edges removed.
    pub fn without_node(&self, id: NodeId) -> Result<Topology> {
        if !self.contains(id) {
            return Err(Error::Topology(format!("unknown node {id}")));
        }
        Topology::build(
            self.node_ids.iter().copied().filter(|&n| n != id),
            self.edges.iter().copied().filter(|&(a, b)| a != id && b != id),
        )
    }

    /// Adds `id` connected to each of `neighbors`.
    pub fn with_node(&self, id: NodeId, neighbors: &[NodeId]) -> Result<Topology> {
        if self.contains(id) {
            return Err(Error::Topology(format!("node {id} already present")));
        }
        Topology::build(
            self.node_ids.iter().copied().chain(std::iter::once(id)),
            self.edges.iter().copied().chain(neighbors.iter().map(|&n| (id, n))),
        )
    }
}
