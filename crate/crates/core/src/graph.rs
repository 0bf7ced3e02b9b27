//! Directed graphs and the dual propagation operators.
//!
//! Rows of the adjacency matrix index out-nodes and columns index in-nodes,
//! so `a_ij = 1` means an edge `i → j`.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{SparseMatrix, Tensor};
use crate::{Error, Result};

/// Unweighted directed graph with a binary adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: SparseMatrix,
    in_degree: Vec<usize>,
    out_degree: Vec<usize>,
}

/// `Ã = O^{-1/2}(A+I)P^{-1/2}` for outgoing propagation and `Â = Ãᵀ` for
/// incoming propagation, with degrees taken over `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperators {
    pub a_tilde: SparseMatrix,
    pub a_hat: SparseMatrix,
}

impl DirectedGraph {
    /// Builds a graph on `n` nodes. Repeated pairs are stored once; self-loops
    /// are kept.
    pub fn from_edge_list(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("graph must have at least one node".into()));
        }
        if let Some(&(s, t)) = pairs.iter().find(|&&(s, t)| s >= n || t >= n) {
            return Err(Error::Input(alloc::format!(
                "edge ({s}, {t}) references a node outside 0..{n}"
            )));
        }
        let mut edges = pairs.to_vec();
        edges.sort_unstable();
        edges.dedup();
        let adjacency =
            SparseMatrix::from_triplets(n, n, edges.iter().map(|&(s, t)| (s, t, 1.0)).collect())?;
        let mut in_degree = vec![0; n];
        let mut out_degree = vec![0; n];
        for &(s, t) in &edges {
            out_degree[s] += 1;
            in_degree[t] += 1;
        }
        Ok(DirectedGraph {
            n,
            edges,
            adjacency,
            in_degree,
            out_degree,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges sorted by `(source, target)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn in_degree(&self) -> &[usize] {
        &self.in_degree
    }

    pub fn out_degree(&self) -> &[usize] {
        &self.out_degree
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edges.binary_search(&(source, target)).is_ok()
    }

    /// Direct successors of `v`, ascending.
    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(v).map(|(j, _)| j)
    }

    /// Direct predecessors of `v`, ascending.
    pub fn predecessors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == v).map(|e| e.0)
    }

    /// The `n × n` identity, used as features when none are given.
    pub fn one_hot_features(&self) -> Tensor {
        Tensor::identity(self.n)
    }

    pub fn build_operators(&self) -> PropagationOperators {
        let n = self.n;
        let mut with_loops = Vec::with_capacity(self.edges.len() + n);
        with_loops.extend_from_slice(&self.edges);
        with_loops.extend((0..n).map(|i| (i, i)));
        with_loops.sort_unstable();
        with_loops.dedup();

        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for &(s, t) in &with_loops {
            out_deg[s] += 1;
            in_deg[t] += 1;
        }
        let entries = with_loops
            .iter()
            .map(|&(s, t)| (s, t, 1.0 / libm::sqrt((out_deg[s] * in_deg[t]) as f64)))
            .collect();
        let a_tilde = SparseMatrix::from_triplets(n, n, entries)
            .expect("self-loop augmented adjacency is a valid CSR layout");
        let a_hat = a_tilde.transpose();
        PropagationOperators { a_tilde, a_hat }
    }

    /// Adds the reverse of every edge: `A ← max(A, Aᵀ)`.
    pub fn symmetrize(&self) -> DirectedGraph {
        let mut pairs = self.edges.clone();
        pairs.extend(self.edges.iter().map(|&(s, t)| (t, s)));
        DirectedGraph::from_edge_list(self.n, &pairs).expect("indices already validated")
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(s, t)| self.has_edge(t, s))
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<DirectedGraph> {
        check_permutation(perm, self.n)?;
        let pairs: Vec<_> = self
            .edges
            .iter()
            .map(|&(s, t)| (perm[s], perm[t]))
            .collect();
        DirectedGraph::from_edge_list(self.n, &pairs)
    }

    /// Disjoint union; nodes of `other` are shifted by `self.node_count()`.
    pub fn disjoint_union(&self, other: &DirectedGraph) -> DirectedGraph {
        let shift = self.n;
        let mut pairs = self.edges.clone();
        pairs.extend(other.edges.iter().map(|&(s, t)| (s + shift, t + shift)));
        DirectedGraph::from_edge_list(self.n + other.n, &pairs).expect("indices in range")
    }

    /// Topological order, or `None` if the graph has a cycle (self-loops
    /// count as cycles).
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg = self.in_degree.clone();
        let mut queue: Vec<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            order.push(v);
            for w in self.successors(v) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push(w);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n
        || perm
            .iter()
            .any(|&p| p >= n || core::mem::replace(&mut seen[p], true))
    {
        return Err(Error::Input("not a permutation".into()));
    }
    Ok(())
}
