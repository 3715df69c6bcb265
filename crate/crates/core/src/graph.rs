//! Weighted undirected graphs, Laplacians and the algebra of edge removal.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Unordered vertex pair identifying an edge, stored with `i < j`.
pub type EdgeKey = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn key(&self) -> EdgeKey {
        (self.i, self.j)
    }
}

/// Normalizes a pair so that the smaller vertex comes first.
pub fn edge_key(a: usize, b: usize) -> EdgeKey {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Topology `G = (V, E, W)`: edge list sorted lexicographically plus the
/// dense symmetric adjacency matrix.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

/// Builds a graph, rejecting self-loops, duplicates, out-of-range vertices and
/// nonpositive weights. Pairs given as `(j, i)` with `j > i` are normalized.
pub fn build_graph(n: usize, weighted_edges: &[(usize, usize, f64)]) -> Result<WeightedGraph> {
    if n == 0 {
        return Err(Error::InvalidParameter("graph needs at least one vertex".into()));
    }
    let mut edges = Vec::with_capacity(weighted_edges.len());
    for &(a, b, weight) in weighted_edges {
        for v in [a, b] {
            if v >= n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
        }
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        let (i, j) = edge_key(a, b);
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::NonpositiveWeight { i, j, weight });
        }
        edges.push(Edge { i, j, weight });
    }
    edges.sort_by_key(|e| e.key());
    if let Some(w) = edges.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(Error::DuplicateEdge(w[0].i, w[0].j));
    }

    let mut adjacency = DMatrix::zeros(n, n);
    let mut neighbors = vec![Vec::new(); n];
    for e in &edges {
        adjacency[(e.i, e.j)] = e.weight;
        adjacency[(e.j, e.i)] = e.weight;
        neighbors[e.i].push(e.j);
        neighbors[e.j].push(e.i);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    Ok(WeightedGraph {
        n,
        edges,
        adjacency,
        neighbors,
    })
}

impl WeightedGraph {
    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_keys(&self) -> Vec<EdgeKey> {
        self.edges.iter().map(Edge::key).collect()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.adjacency.row_iter().map(|r| r.sum()))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i != j && self.adjacency[(i, j)] > 0.0
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.has_edge(i, j).then(|| self.adjacency[(i, j)])
    }

    /// Copy of the graph with the listed edges removed.
    pub fn without_edges(&self, removed: &[EdgeKey]) -> Result<WeightedGraph> {
        let removed: BTreeSet<EdgeKey> = removed.iter().map(|&(a, b)| edge_key(a, b)).collect();
        for &(i, j) in &removed {
            if !self.has_edge(i, j) {
                return Err(Error::NotAnEdge(i, j));
            }
        }
        let kept: Vec<_> = self
            .edges
            .iter()
            .filter(|e| !removed.contains(&e.key()))
            .map(|e| (e.i, e.j, e.weight))
            .collect();
        build_graph(self.n, &kept)
    }

    /// Hop distances from `source`, `None` for unreachable vertices. When
    /// `limit` is given the search stops expanding past that depth.
    pub fn hop_distances(&self, source: usize, limit: Option<usize>) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            if limit.is_some_and(|l| d >= l) {
                continue;
            }
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Combinatorial connectivity by BFS, independent of any eigensolver.
    pub fn is_connected(&self) -> bool {
        self.hop_distances(0, None).iter().all(Option::is_some)
    }

    /// Largest finite hop distance between two vertices.
    pub fn diameter(&self) -> usize {
        (0..self.n)
            .flat_map(|s| self.hop_distances(s, None))
            .flatten()
            .max()
            .unwrap_or(0)
    }
}

/// On-disk graph representation: `{"n": .., "edges": [[i, j, w], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl From<&WeightedGraph> for GraphFile {
    fn from(g: &WeightedGraph) -> Self {
        GraphFile {
            n: g.n,
            edges: g.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
        }
    }
}

impl GraphFile {
    pub fn into_graph(self) -> Result<WeightedGraph> {
        build_graph(self.n, &self.edges)
    }
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path)?;
    let file: GraphFile = serde_json::from_str(&text)?;
    file.into_graph()
}

pub fn save_graph(g: &WeightedGraph, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&GraphFile::from(g))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Numerical-rank threshold shared by every routine that has to decide
/// whether an eigenvalue is zero.
pub fn rank_tolerance(n: usize, max_abs_eigenvalue: f64) -> f64 {
    n as f64 * f64::EPSILON * max_abs_eigenvalue
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen(format!("symmetric eigensolver did not converge (n = {n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Laplacian `L = diag(W1) - W` with its cached eigendecomposition
/// `L = U diag(lambda) U^T`.
///
/// Eigenvalues below the rank tolerance are stored as exact zeros, so the
/// GMRF transfer function and every pseudo-inverse see the same null space.
#[derive(Debug, Clone)]
pub struct LaplacianView {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    zero_eig_count: usize,
    tolerance: f64,
}

pub fn laplacian(g: &WeightedGraph) -> Result<LaplacianView> {
    let degrees = g.degrees();
    let matrix = DMatrix::from_diagonal(&degrees) - g.adjacency();
    LaplacianView::from_matrix(matrix)
}

impl LaplacianView {
    /// Wraps a symmetric matrix assumed to be a Laplacian and decomposes it.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        let (mut eigenvalues, eigenvectors) = sorted_symmetric_eigen(&matrix)?;
        let max_abs = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tolerance = rank_tolerance(n, max_abs);
        if let Some(&worst) = eigenvalues
            .iter()
            .find(|&&v| v < -1e3 * tolerance.max(f64::MIN_POSITIVE))
        {
            return Err(Error::Eigen(format!("Laplacian has a negative eigenvalue {worst:e}")));
        }
        let mut zero_eig_count = 0;
        for v in eigenvalues.iter_mut() {
            if *v <= tolerance {
                *v = 0.0;
                zero_eig_count += 1;
            }
        }
        Ok(LaplacianView {
            matrix,
            eigenvalues,
            eigenvectors,
            zero_eig_count,
            tolerance,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn zero_eig_count(&self) -> usize {
        self.zero_eig_count
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// A single zero eigenvalue means one connected component.
    pub fn is_connected(&self) -> bool {
        self.zero_eig_count == 1
    }

    /// `U f(Lambda) U^T` for an arbitrary spectral weighting.
    pub fn spectral_matrix(&self, weights: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let scaled = DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, c)] * weights(self.eigenvalues[c]));
        scaled * u.transpose()
    }

    /// Laplacian after removing edge `(i, j)`; the edge must be present.
    pub fn remove_edge(&self, i: usize, j: usize) -> Result<LaplacianView> {
        let e = single_edge_perturbation(self, i, j)?;
        LaplacianView::from_matrix(&self.matrix - e)
    }
}

/// Perturbation removing one edge:
/// `L_ij (e_i e_j^T + e_j e_i^T - e_j e_j^T - e_i e_i^T)`.
pub fn single_edge_perturbation(l0: &LaplacianView, i: usize, j: usize) -> Result<DMatrix<f64>> {
    let n = l0.n();
    for v in [i, j] {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v, n });
        }
    }
    let lij = l0.matrix[(i, j)];
    if i == j || lij == 0.0 {
        return Err(Error::NotAnEdge(i, j));
    }
    let mut e = DMatrix::zeros(n, n);
    add_single_edge(&mut e, i, j, -lij);
    Ok(e)
}

pub(crate) fn add_single_edge(e: &mut DMatrix<f64>, i: usize, j: usize, weight: f64) {
    e[(i, i)] += weight;
    e[(j, j)] += weight;
    e[(i, j)] -= weight;
    e[(j, i)] -= weight;
}

/// Candidate disconnection set `C` together with its affected vertices `S`.
/// The perturbation matrix is formed on demand to keep large enumerations
/// cheap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisconnectionHypothesis {
    pub removed_edges: Vec<Edge>,
    pub affected_vertices: Vec<usize>,
}

impl DisconnectionHypothesis {
    pub fn null() -> Self {
        DisconnectionHypothesis {
            removed_edges: Vec::new(),
            affected_vertices: Vec::new(),
        }
    }

    /// Builds the hypothesis from edges (weights taken from the edge records).
    pub fn from_edges(mut removed_edges: Vec<Edge>) -> Self {
        removed_edges.sort_by_key(Edge::key);
        let affected: BTreeSet<usize> = removed_edges.iter().flat_map(|e| [e.i, e.j]).collect();
        DisconnectionHypothesis {
            removed_edges,
            affected_vertices: affected.into_iter().collect(),
        }
    }

    /// Looks up the weights of `keys` in `l0`, rejecting non-edges.
    pub fn from_keys(l0: &LaplacianView, keys: &[EdgeKey]) -> Result<Self> {
        let n = l0.n();
        let mut edges = Vec::with_capacity(keys.len());
        for &(a, b) in keys {
            let (i, j) = edge_key(a, b);
            if j >= n {
                return Err(Error::VertexOutOfRange { vertex: j, n });
            }
            let w = -l0.matrix[(i, j)];
            if i == j || w == 0.0 {
                return Err(Error::NotAnEdge(i, j));
            }
            edges.push(Edge { i, j, weight: w });
        }
        let hyp = Self::from_edges(edges);
        if let Some(w) = hyp.removed_edges.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::DuplicateEdge(w[0].i, w[0].j));
        }
        Ok(hyp)
    }

    pub fn is_null(&self) -> bool {
        self.removed_edges.is_empty()
    }

    pub fn keys(&self) -> Vec<EdgeKey> {
        self.removed_edges.iter().map(Edge::key).collect()
    }

    /// `E = sum over C of E^(i,j)`.
    pub fn perturbation(&self, n: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(n, n);
        for edge in &self.removed_edges {
            add_single_edge(&mut e, edge.i, edge.j, edge.weight);
        }
        e
    }
}

/// `L^(k) = L^(0) - E^(k)` with a fresh decomposition.
pub fn apply_hypothesis(l0: &LaplacianView, removed: &[EdgeKey]) -> Result<(LaplacianView, DisconnectionHypothesis)> {
    let hyp = DisconnectionHypothesis::from_keys(l0, removed)?;
    let lk = apply_disconnection(l0, &hyp)?;
    Ok((lk, hyp))
}

/// Applies an already-built hypothesis to `l0`.
pub fn apply_disconnection(l0: &LaplacianView, hyp: &DisconnectionHypothesis) -> Result<LaplacianView> {
    if hyp.is_null() {
        return Ok(l0.clone());
    }
    LaplacianView::from_matrix(l0.matrix() - hyp.perturbation(l0.n()))
}

/// `N(i, beta)`: vertices within `beta` hops of `i`, sorted.
pub fn neighborhood(g: &WeightedGraph, i: usize, beta: usize) -> Vec<usize> {
    g.hop_distances(i, Some(beta))
        .iter()
        .enumerate()
        .filter_map(|(v, d)| d.filter(|&d| d <= beta).map(|_| v))
        .collect()
}

/// `N((i, j), beta) = N(i, beta) ∪ N(j, beta)`.
pub fn edge_neighborhood(g: &WeightedGraph, (i, j): EdgeKey, beta: usize) -> Vec<usize> {
    let set: BTreeSet<usize> = neighborhood(g, i, beta)
        .into_iter()
        .chain(neighborhood(g, j, beta))
        .collect();
    set.into_iter().collect()
}

/// Union of the edges lying on some shortest path from `i` to a vertex of
/// `N(i, beta)`: `(u, v)` qualifies when `hop(u) + 1 == hop(v) <= beta`.
pub fn path_edge_set(g: &WeightedGraph, i: usize, beta: usize) -> Vec<EdgeKey> {
    let hop = g.hop_distances(i, Some(beta));
    g.edges
        .iter()
        .filter(|e| match (hop[e.i], hop[e.j]) {
            (Some(a), Some(b)) => (a + 1 == b && b <= beta) || (b + 1 == a && a <= beta),
            _ => false,
        })
        .map(Edge::key)
        .collect()
}

/// Parameters of the small-world generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WattsStrogatz {
    pub n: usize,
    pub k_per_side: usize,
    pub p_rewire: f64,
    pub weight_lo: f64,
    pub weight_hi: f64,
}

impl Default for WattsStrogatz {
    fn default() -> Self {
        WattsStrogatz {
            n: 20,
            k_per_side: 2,
            p_rewire: 0.1,
            weight_lo: 0.1,
            weight_hi: 5.0,
        }
    }
}

const MAX_GENERATOR_ATTEMPTS: usize = 1000;

/// Ring lattice with `k_per_side` neighbors on each side, each lattice edge
/// rewired with probability `p_rewire` (keeping its first endpoint, avoiding
/// self-loops and duplicates), i.i.d. uniform weights. Draws are repeated
/// until the graph is connected.
pub fn watts_strogatz(params: &WattsStrogatz, seed: u64) -> Result<WeightedGraph> {
    let WattsStrogatz {
        n,
        k_per_side: k,
        p_rewire,
        weight_lo,
        weight_hi,
    } = *params;
    if k == 0 || n <= 2 * k {
        return Err(Error::InvalidParameter(format!(
            "Watts-Strogatz needs n > 2 k_per_side and k_per_side >= 1 (n = {n}, k_per_side = {k})"
        )));
    }
    if !(0.0..=1.0).contains(&p_rewire) {
        return Err(Error::InvalidParameter(format!("p_rewire {p_rewire} outside [0, 1]")));
    }
    if !(weight_lo > 0.0 && weight_lo <= weight_hi && weight_hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "weight range [{weight_lo}, {weight_hi}] must satisfy 0 < lo <= hi"
        )));
    }

    let mut rng = stream_rng(seed, 0);
    for _ in 0..MAX_GENERATOR_ATTEMPTS {
        let mut adj = vec![BTreeSet::new(); n];
        for i in 0..n {
            for d in 1..=k {
                let j = (i + d) % n;
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
        for d in 1..=k {
            for i in 0..n {
                let j = (i + d) % n;
                if !adj[i].contains(&j) || !rng.random_bool(p_rewire) {
                    continue;
                }
                let free: Vec<usize> = (0..n).filter(|&v| v != i && !adj[i].contains(&v)).collect();
                if let Some(&target) = free.choose(&mut rng) {
                    adj[i].remove(&j);
                    adj[j].remove(&i);
                    adj[i].insert(target);
                    adj[target].insert(i);
                }
            }
        }
        let mut list = Vec::new();
        for (i, nbrs) in adj.iter().enumerate() {
            for &j in nbrs.range(i + 1..) {
                list.push((i, j, rng.random_range(weight_lo..=weight_hi)));
            }
        }
        let g = build_graph(n, &list)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetriesExhausted(MAX_GENERATOR_ATTEMPTS))
}
