//! Labeled undirected graphs and the structural operators built on them.
//!
//! Edges are stored as a sorted list of directed pairs holding both
//! directions of every undirected edge. Self-loops are never stored; the
//! normalized adjacency adds them on the fly.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    label: usize,
}

impl Graph {
    /// Builds a graph from directed pairs that already satisfy the storage
    /// invariants: in range, symmetric, no duplicates, no self-loops.
    pub fn new(
        num_nodes: usize,
        mut edges: Vec<(usize, usize)>,
        features: Tensor,
        label: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidGraph(format!("duplicate edge {:?}", w[0])));
            }
        }
        for &(i, j) in &edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {num_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            if edges.binary_search(&(j, i)).is_err() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has no reverse"
                )));
            }
        }
        Ok(Self {
            num_nodes,
            edges,
            features,
            label,
        })
    }

    /// Symmetrizes and deduplicates `pairs`, dropping self-loops.
    pub fn from_undirected(
        num_nodes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        label: usize,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, j) in pairs {
            if i != j {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Self::new(num_nodes, edges, features, label)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Directed pairs, both directions of each undirected edge.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(i, _) in &self.edges {
            deg[i] += 1;
        }
        deg
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
        }
        adj
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn dense_adjacency(&self) -> Tensor {
        let n = self.num_nodes;
        let mut a = Tensor::zeros(n, n);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
        }
        a
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃` is the degree matrix of `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(Tensor);

impl NormalizedAdjacency {
    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

pub fn normalized_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .into_iter()
        .map(|d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut m = Tensor::zeros(n, n);
    for (i, s) in inv_sqrt.iter().enumerate() {
        m.set(i, i, s * s);
    }
    for &(i, j) in g.edges() {
        m.set(i, j, inv_sqrt[i] * inv_sqrt[j]);
    }
    NormalizedAdjacency(m)
}

/// Subgraph on the strictly increasing node list `idx`, with node `a` of the
/// result standing for `idx[a]`. Features are the matching source rows.
pub fn induced_subgraph(g: &Graph, idx: &[usize]) -> Result<Graph> {
    let features = g.features().gather_rows(check_selection(g, idx)?);
    induced_subgraph_with_features(g, idx, features)
}

/// [`induced_subgraph`] carrying caller-supplied features (one row per
/// selected node).
pub fn induced_subgraph_with_features(g: &Graph, idx: &[usize], features: Tensor) -> Result<Graph> {
    check_selection(g, idx)?;
    let mut new_index = vec![usize::MAX; g.num_nodes()];
    for (a, &i) in idx.iter().enumerate() {
        new_index[i] = a;
    }
    let edges = g
        .edges()
        .iter()
        .filter_map(|&(i, j)| {
            let (a, b) = (new_index[i], new_index[j]);
            (a != usize::MAX && b != usize::MAX).then_some((a, b))
        })
        .collect();
    Graph::new(idx.len(), edges, features, g.label())
}

fn check_selection<'a>(g: &Graph, idx: &'a [usize]) -> Result<&'a [usize]> {
    if idx.is_empty() {
        return Err(Error::EmptyPooledGraph);
    }
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGraph(
            "selection must be strictly increasing".into(),
        ));
    }
    if idx[idx.len() - 1] >= g.num_nodes() {
        return Err(Error::InvalidGraph(format!(
            "selected node {} out of range for {} nodes",
            idx[idx.len() - 1],
            g.num_nodes()
        )));
    }
    Ok(idx)
}

fn check_bijection(perm: &[usize]) -> Result<()> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::NotABijection(n));
        }
    }
    Ok(())
}

/// Relabels node `i` as `perm[i]`.
pub fn permute(g: &Graph, perm: &[usize]) -> Result<Graph> {
    if perm.len() != g.num_nodes() {
        return Err(Error::NotABijection(g.num_nodes()));
    }
    check_bijection(perm)?;
    let edges = g.edges().iter().map(|&(i, j)| (perm[i], perm[j])).collect();
    Graph::new(
        g.num_nodes(),
        edges,
        permute_rows(g.features(), perm)?,
        g.label(),
    )
}

/// Moves row `i` of `t` to row `perm[i]`.
pub fn permute_rows(t: &Tensor, perm: &[usize]) -> Result<Tensor> {
    if perm.len() != t.rows() {
        return Err(Error::NotABijection(t.rows()));
    }
    check_bijection(perm)?;
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for (i, &p) in perm.iter().enumerate() {
        for c in 0..t.cols() {
            out.set(p, c, t.get(i, c));
        }
    }
    Ok(out)
}
