//! Weighted directed graphs, their Laplacians, root sets and scrambling measures.
//!
//! Weight convention: `w[i][j] > 0` iff there is an edge `j -> i`, i.e. row `i`
//! lists the agents whose state agent `i` listens to.

mod edgelist;
mod scc;

pub use edgelist::{parse_edge_list, write_edge_list};

use nalgebra::DMatrix;
use thiserror::Error;

/// Residual tolerance for the left null vector of an irreducible Laplacian block.
pub const NULL_VECTOR_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("weight w[{i}][{j}] = {value} is negative or not finite")]
    BadWeight { i: usize, j: usize, value: f64 },
    #[error("self link on vertex {0}: diagonal weight must be zero")]
    SelfLink(usize),
    #[error("off-diagonal entry m[{i}][{j}] = {value} is negative, matrix is not Metzler")]
    NotMetzler { i: usize, j: usize, value: f64 },
    #[error("matrix row {row} sums to {sum}, not a Laplacian")]
    NotLaplacian { row: usize, sum: f64 },
    #[error("block is reducible (its graph is not strongly connected)")]
    Reducible,
    #[error("graph has no spanning tree")]
    NoSpanningTree,
    #[error("state vector has length {got}, graph has {expected} vertices")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("null vector solve failed: {0}")]
    Solve(String),
    #[error("delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Simple weighted digraph on `n` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
}

impl WeightedDigraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight { i, j, value: w });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLink(i));
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn empty(n: usize) -> Self {
        assert!(n > 0, "graph needs a vertex");
        Self {
            weights: DMatrix::zeros(n, n),
        }
    }

    /// Complete digraph, every directed edge carrying `weight`.
    pub fn complete(n: usize, weight: f64) -> Result<Self, GraphError> {
        Self::new(DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 0.0 } else { weight },
        ))
    }

    /// Builds a graph from `(src, dst, weight)` triples; `src -> dst` sets `w[dst][src]`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut w = DMatrix::zeros(n, n);
        for &(src, dst, weight) in edges {
            if src >= n || dst >= n {
                return Err(GraphError::DimensionMismatch {
                    expected: n,
                    got: src.max(dst) + 1,
                });
            }
            w[(dst, src)] = weight;
        }
        Self::new(w)
    }

    /// Recovers the weight matrix from a Laplacian, `w_ij = -l_ij` off the diagonal.
    pub fn from_laplacian(l: &DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = l.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            let sum: f64 = l.row(i).iter().sum();
            let scale: f64 = l.row(i).iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            if sum.abs() > 1e-12 * scale {
                return Err(GraphError::NotLaplacian { row: i, sum });
            }
        }
        Self::new(DMatrix::from_fn(rows, cols, |i, j| {
            if i == j {
                0.0
            } else {
                -l[(i, j)]
            }
        }))
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weight of the edge `src -> dst` (zero when absent).
    pub fn edge_weight(&self, src: usize, dst: usize) -> f64 {
        self.weights[(dst, src)]
    }

    /// All edges as `(src, dst, weight)`, ordered by source then destination.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for src in 0..n {
            for dst in 0..n {
                let w = self.weights[(dst, src)];
                if w > 0.0 {
                    out.push((src, dst, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn smallest_positive_weight(&self) -> Option<f64> {
        self.weights
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(None, |acc, w| Some(acc.map_or(w, |a: f64| a.min(w))))
    }

    /// Out-neighbour lists.
    pub(crate) fn successors(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        (0..n)
            .map(|src| {
                (0..n)
                    .filter(|&dst| self.weights[(dst, src)] > 0.0)
                    .collect()
            })
            .collect()
    }

    pub fn laplacian(&self) -> Laplacian {
        laplacian(self)
    }

    /// The δ-graph: same vertices, keeping the edges with weight at least `delta`.
    pub fn delta_graph(&self, delta: f64) -> Result<Self, GraphError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(GraphError::BadDelta(delta));
        }
        Ok(Self {
            weights: self.weights.map(|w| if w >= delta { w } else { 0.0 }),
        })
    }

    /// Every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GraphError> {
        Self::new(&self.weights * factor)
    }

    pub fn is_strongly_connected(&self) -> bool {
        scc::tarjan(&self.successors()).count == 1
    }

    /// Vertices reachable from any of `start` (including `start`).
    pub fn reachable_from(&self, start: &[usize]) -> Vec<bool> {
        let succ = self.successors();
        let mut seen = vec![false; self.n()];
        let mut queue: std::collections::VecDeque<usize> = start.iter().copied().collect();
        for &s in start {
            seen[s] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Induced subgraph on `vertices`, renumbered in the given order.
    pub fn induced(&self, vertices: &[usize]) -> Self {
        let k = vertices.len();
        Self {
            weights: DMatrix::from_fn(k, k, |a, b| self.weights[(vertices[a], vertices[b])]),
        }
    }
}

/// Graph Laplacian, `l_ij = -w_ij` for `i != j` and `l_ii = sum_j w_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(DMatrix<f64>);

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// `-L`, a Metzler matrix with zero row sums.
    pub fn metzler(&self) -> DMatrix<f64> {
        self.0.map(|v| 0.0 - v)
    }

    pub fn max_row_abs_sum(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Principal submatrix on `vertices`.
    pub fn block(&self, vertices: &[usize]) -> DMatrix<f64> {
        let k = vertices.len();
        DMatrix::from_fn(k, k, |a, b| self.0[(vertices[a], vertices[b])])
    }

    /// `P L P^T` for the renumbering `order` (new index `a` is old vertex `order[a]`).
    pub fn permuted(&self, order: &[usize]) -> DMatrix<f64> {
        self.block(order)
    }
}

pub fn laplacian(g: &WeightedDigraph) -> Laplacian {
    let w = g.weights();
    let n = g.n();
    // `0.0 - w` rather than `-w` so absent edges stay +0.0
    let mut l = w.map(|v| 0.0 - v);
    for i in 0..n {
        l[(i, i)] = w.row(i).iter().sum();
    }
    Laplacian(l)
}

/// Root set `S1`, the rest `S2`, and the renumbering (`S1` first) that puts
/// the Laplacian into block lower-triangular form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootPartition {
    pub roots: Vec<usize>,
    pub non_roots: Vec<usize>,
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpanningTree {
    Rooted(RootPartition),
    /// Two or more source components; each entry lists a source component's vertices.
    None {
        source_components: Vec<Vec<usize>>,
    },
}

impl SpanningTree {
    pub fn partition(&self) -> Option<&RootPartition> {
        match self {
            SpanningTree::Rooted(p) => Some(p),
            SpanningTree::None { .. } => None,
        }
    }

    pub fn exists(&self) -> bool {
        matches!(self, SpanningTree::Rooted(_))
    }
}

/// A spanning tree exists iff the condensation has exactly one source component;
/// that component is the root set.
pub fn root_partition(g: &WeightedDigraph) -> SpanningTree {
    let succ = g.successors();
    let comps = scc::tarjan(&succ);
    let sources = comps.sources(&succ);
    if sources.len() != 1 {
        let mut source_components: Vec<Vec<usize>> =
            sources.iter().map(|&c| comps.members(c)).collect();
        source_components.sort();
        return SpanningTree::None { source_components };
    }
    let roots = comps.members(sources[0]);
    let non_roots: Vec<usize> = (0..g.n()).filter(|v| !roots.contains(v)).collect();
    let permutation = roots.iter().chain(non_roots.iter()).copied().collect();
    SpanningTree::Rooted(RootPartition {
        roots,
        non_roots,
        permutation,
    })
}

/// Normalised positive left null vector of an irreducible Laplacian block.
#[derive(Debug, Clone, PartialEq)]
pub struct RootWeights {
    pub xi: Vec<f64>,
}

/// Solves `xi^T m = 0`, `sum xi = 1` for an irreducible Laplacian `m`.
///
/// The system `m^T xi = 0` has rank `n - 1` and its rows sum to zero, so the
/// last row is replaced by the normalisation and the square system is solved by LU.
pub fn left_null_vector(m: &DMatrix<f64>) -> Result<RootWeights, GraphError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let n = rows;
    if n == 0 {
        return Err(GraphError::Empty);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] > 0.0 {
                return Err(GraphError::NotMetzler {
                    i,
                    j,
                    value: -m[(i, j)],
                });
            }
        }
    }
    let g = WeightedDigraph::from_laplacian(m)?;
    if !g.is_strongly_connected() {
        return Err(GraphError::Reducible);
    }
    if n == 1 {
        return Ok(RootWeights { xi: vec![1.0] });
    }
    let mut a = m.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let xi = a
        .full_piv_lu()
        .solve(&b)
        .ok_or_else(|| GraphError::Solve("bordered system is singular".into()))?;
    let residual = (m.transpose() * &xi).amax();
    if residual > NULL_VECTOR_TOL {
        return Err(GraphError::Solve(format!(
            "residual {residual:e} exceeds tolerance"
        )));
    }
    if xi.iter().any(|&v| !(v > 0.0)) {
        return Err(GraphError::Solve(
            "null vector is not strictly positive".into(),
        ));
    }
    Ok(RootWeights {
        xi: xi.iter().copied().collect(),
    })
}

/// Precomputed weighted root average: `x -> sum_{i in S1} xi_i x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRootAverage {
    pub roots: Vec<usize>,
    pub xi: Vec<f64>,
}

impl WeightedRootAverage {
    pub fn new(g: &WeightedDigraph) -> Result<Self, GraphError> {
        let partition = match root_partition(g) {
            SpanningTree::Rooted(p) => p,
            SpanningTree::None { .. } => return Err(GraphError::NoSpanningTree),
        };
        let l1 = g.laplacian().block(&partition.roots);
        let RootWeights { xi } = left_null_vector(&l1)?;
        Ok(Self {
            roots: partition.roots,
            xi,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.roots
            .iter()
            .zip(&self.xi)
            .map(|(&r, &w)| w * x[r])
            .sum()
    }
}

pub fn wra(x: &[f64], g: &WeightedDigraph) -> Result<f64, GraphError> {
    if x.len() != g.n() {
        return Err(GraphError::DimensionMismatch {
            expected: g.n(),
            got: x.len(),
        });
    }
    Ok(WeightedRootAverage::new(g)?.eval(x))
}

/// Scrambling coefficient `min_{i<j} [ m_ij + m_ji + sum_{k != i,j} min(m_ik, m_jk) ]`.
///
/// Positive iff `m` is scrambling. Diagonal entries never enter. A matrix with
/// fewer than two rows has no vertex pairs and gets 0.
pub fn scrambling_coefficient(m: &DMatrix<f64>) -> Result<f64, GraphError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let n = rows;
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if i != j && !(v >= 0.0) {
                return Err(GraphError::NotMetzler { i, j, value: v });
            }
        }
    }
    if n < 2 {
        return Ok(0.0);
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut term = m[(i, j)] + m[(j, i)];
            for k in 0..n {
                if k != i && k != j {
                    term += m[(i, k)].min(m[(j, k)]);
                }
            }
            best = best.min(term);
        }
    }
    Ok(best)
}

/// Scrambling coefficient of the graph, `eta(-L(g))`.
pub fn graph_scrambling(g: &WeightedDigraph) -> f64 {
    // -L off the diagonal is W, which is Metzler by construction.
    scrambling_coefficient(g.weights()).expect("weights are nonnegative")
}

pub fn is_delta_scrambling(g: &WeightedDigraph, delta: f64) -> Result<bool, GraphError> {
    let dg = g.delta_graph(delta)?;
    Ok(graph_scrambling(&dg) > 0.0)
}
