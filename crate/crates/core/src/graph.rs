//! Superpixel affinity graphs and the combinatorial dominant-set machinery.
//!
//! The recursive node weights defined here are exponential in the size of the
//! vertex set. They are only meant for verifying what the continuous solvers
//! in [`crate::dynamics`] return on small graphs.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::matrix::SquareMatrix;

/// Set of vertex (superpixel) ids.
pub type VertexSet = BTreeSet<usize>;

/// Largest vertex set accepted by [`node_weight`] and [`is_dominant_set`].
pub const NODE_WEIGHT_CAP: usize = 15;

/// Relative threshold used to read the support off a converged simplex point:
/// `x[i] > SUPPORT_THRESHOLD * max(x)`.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("affinity matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("affinity matrix has a self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("weight {value} at ({i}, {j}) is outside [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("non-zero weight at ({0}, {1}) between non-adjacent vertices")]
    NonAdjacentWeight(usize, usize),
    #[error("adjacency pair ({0}, {1}) is invalid for a graph of {2} vertices")]
    BadAdjacency(usize, usize, usize),
    #[error("vertex {vertex} is out of range for a graph of {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("vertex set must not be empty")]
    EmptySet,
    #[error("vertex {0} must belong to the set")]
    NotInSet(usize),
    #[error("vertex {0} must not belong to the set")]
    AlreadyInSet(usize),
    #[error("vertex set of size {size} exceeds the recursion cap of {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("total node weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("node weight of vertex {0} is negative")]
    NegativeWeight(usize),
    #[error("matrix rows do not form a square matrix")]
    NotSquare,
    #[error("not a simplex point: {0}")]
    NotInSimplex(String),
}

/// Symmetric, non-negative similarity matrix over superpixels together with
/// the neighbourhood structure that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    weights: SquareMatrix,
    adjacency: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl AffinityGraph {
    /// Validates and wraps a weight matrix. Adjacency pairs are normalized to
    /// `(min, max)`.
    pub fn new(
        weights: SquareMatrix,
        adjacency: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let n = weights.dim();
        let mut adj = BTreeSet::new();
        for (i, j) in adjacency {
            if i == j || i >= n || j >= n {
                return Err(GraphError::BadAdjacency(i, j, n));
            }
            adj.insert((i.min(j), i.max(j)));
        }
        for i in 0..n {
            if weights.get(i, i) != 0.0 {
                return Err(GraphError::SelfLoop(i));
            }
            for j in 0..n {
                let v = weights.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(GraphError::OutOfRange { i, j, value: v });
                }
                if v != weights.get(j, i) {
                    return Err(GraphError::NotSymmetric(i, j));
                }
                if i < j && v != 0.0 && !adj.contains(&(i, j)) {
                    return Err(GraphError::NonAdjacentWeight(i, j));
                }
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &adj {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            weights,
            adjacency: adj,
            neighbors,
        })
    }

    /// Graph whose adjacency is exactly the set of non-zero off-diagonal
    /// entries.
    pub fn from_weights(weights: SquareMatrix) -> Result<Self, GraphError> {
        let n = weights.dim();
        let adj: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| weights.get(i, j) != 0.0)
            .collect();
        Self::new(weights, adj)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let m = SquareMatrix::from_rows(rows)
            .ok_or(GraphError::NotSquare)?;
        Self::from_weights(m)
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.weights.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn weights(&self) -> &SquareMatrix {
        &self.weights
    }

    pub fn adjacency(&self) -> &BTreeSet<(usize, usize)> {
        &self.adjacency
    }

    /// Sorted neighbours of `i` under the adjacency structure.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Induced subgraph on `vertices` (in the given order).
    pub fn subgraph(&self, vertices: &[usize]) -> AffinityGraph {
        let weights = self.weights.principal_submatrix(vertices);
        let index: HashMap<usize, usize> =
            vertices.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let adjacency = self
            .adjacency
            .iter()
            .filter_map(|(i, j)| Some((*index.get(i)?, *index.get(j)?)))
            .collect::<Vec<_>>();
        // Entries are copied from a valid graph, so validation cannot fail.
        AffinityGraph::new(weights, adjacency).expect("subgraph of a valid graph")
    }

    fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v < self.len() {
            Ok(())
        } else {
            Err(GraphError::VertexOutOfRange {
                vertex: v,
                n: self.len(),
            })
        }
    }
}

/// A point of the standard simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(x: Vec<f64>) -> Result<Self, GraphError> {
        if x.is_empty() {
            return Err(GraphError::NotInSimplex("empty vector".into()));
        }
        if let Some(i) = x.iter().position(|v| !(*v >= 0.0)) {
            return Err(GraphError::NotInSimplex(format!(
                "component {i} is {}",
                x[i]
            )));
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(GraphError::NotInSimplex(format!("components sum to {sum}")));
        }
        Ok(Self(x))
    }

    /// Barycenter of the simplex.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "simplex dimension must be positive");
        Self(vec![1.0 / n as f64; n])
    }

    /// Vertex `e_i` of the simplex.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut x = vec![0.0; n];
        x[i] = 1.0;
        Self(x)
    }

    pub(crate) fn from_raw(x: Vec<f64>) -> Self {
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Support read with the relative [`SUPPORT_THRESHOLD`].
    pub fn support(&self) -> VertexSet {
        let max = self.0.iter().copied().fold(0.0, f64::max);
        let cut = SUPPORT_THRESHOLD * max;
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > cut)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A cluster found either combinatorially or by a simplex solver.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSetResult {
    /// Vertices with non-negligible mass in `chi`.
    pub support: VertexSet,
    /// Weighted characteristic vector (or converged solver state).
    pub chi: SimplexVector,
    /// Cohesiveness `chi' A chi` under the unshifted affinities.
    pub value: f64,
    /// Objective the solver maximized; equals `value` for unconstrained runs.
    pub payoff: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `a_ij - mean_{k in S} a_ik` for `i` in `S` and `j` outside it.
pub fn relative_similarity(
    graph: &AffinityGraph,
    set: &VertexSet,
    i: usize,
    j: usize,
) -> Result<f64, GraphError> {
    graph.check_vertex(i)?;
    graph.check_vertex(j)?;
    if set.is_empty() {
        return Err(GraphError::EmptySet);
    }
    if !set.contains(&i) {
        return Err(GraphError::NotInSet(i));
    }
    if set.contains(&j) {
        return Err(GraphError::AlreadyInSet(j));
    }
    let mean = set.iter().map(|&k| graph.weight(i, k)).sum::<f64>() / set.len() as f64;
    Ok(graph.weight(i, j) - mean)
}

/// Memoized evaluator of the recursive node weights over a small universe of
/// vertices, addressed by bit masks of local indices.
struct WeightOracle<'a> {
    graph: &'a AffinityGraph,
    universe: Vec<usize>,
    memo: HashMap<(u32, u8), f64>,
}

impl<'a> WeightOracle<'a> {
    fn new(graph: &'a AffinityGraph, universe: Vec<usize>) -> Self {
        debug_assert!(universe.len() <= 31);
        Self {
            graph,
            universe,
            memo: HashMap::new(),
        }
    }

    fn a(&self, p: usize, q: usize) -> f64 {
        self.graph.weight(self.universe[p], self.universe[q])
    }

    fn weight(&mut self, mask: u32, i: usize) -> f64 {
        if mask.count_ones() == 1 {
            return 1.0;
        }
        if let Some(&w) = self.memo.get(&(mask, i as u8)) {
            return w;
        }
        let rest = mask & !(1 << i);
        let size = rest.count_ones() as f64;
        let mut total = 0.0;
        for j in bits(rest) {
            let mean = bits(rest).map(|k| self.a(j, k)).sum::<f64>() / size;
            let phi = self.a(j, i) - mean;
            total += phi * self.weight(rest, j);
        }
        self.memo.insert((mask, i as u8), total);
        total
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.universe.len()) - 1
    }
}

fn bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |b| mask & (1 << b) != 0)
}

fn check_set(graph: &AffinityGraph, set: &VertexSet) -> Result<(), GraphError> {
    if set.is_empty() {
        return Err(GraphError::EmptySet);
    }
    if set.len() > NODE_WEIGHT_CAP {
        return Err(GraphError::TooLarge {
            size: set.len(),
            cap: NODE_WEIGHT_CAP,
        });
    }
    set.iter().try_for_each(|&v| graph.check_vertex(v))
}

/// Recursive weight `w_S(i)` of vertex `i` with respect to `S`.
pub fn node_weight(graph: &AffinityGraph, set: &VertexSet, i: usize) -> Result<f64, GraphError> {
    check_set(graph, set)?;
    if !set.contains(&i) {
        return Err(GraphError::NotInSet(i));
    }
    let universe: Vec<usize> = set.iter().copied().collect();
    let local = universe.iter().position(|&v| v == i).unwrap();
    let mut oracle = WeightOracle::new(graph, universe);
    let mask = oracle.full_mask();
    Ok(oracle.weight(mask, local))
}

/// Exact combinatorial test: every member has positive weight and every
/// outsider `i` has negative weight `w_{S ∪ {i}}(i)`.
pub fn is_dominant_set(graph: &AffinityGraph, set: &VertexSet) -> Result<bool, GraphError> {
    check_set(graph, set)?;
    let members: Vec<usize> = set.iter().copied().collect();
    let mut inner = WeightOracle::new(graph, members.clone());
    let mask = inner.full_mask();
    if (0..members.len()).any(|p| inner.weight(mask, p) <= 0.0) {
        return Ok(false);
    }
    for outsider in (0..graph.len()).filter(|v| !set.contains(v)) {
        let mut universe = members.clone();
        universe.push(outsider);
        let mut outer = WeightOracle::new(graph, universe);
        let mask = outer.full_mask();
        if outer.weight(mask, members.len()) >= 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Normalized node weights of `S`, zero elsewhere.
pub fn characteristic_vector(
    graph: &AffinityGraph,
    set: &VertexSet,
) -> Result<SimplexVector, GraphError> {
    check_set(graph, set)?;
    let members: Vec<usize> = set.iter().copied().collect();
    let mut oracle = WeightOracle::new(graph, members.clone());
    let mask = oracle.full_mask();
    let weights: Vec<f64> = (0..members.len()).map(|p| oracle.weight(mask, p)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(GraphError::NonPositiveWeight(total));
    }
    if let Some(p) = weights.iter().position(|w| *w < 0.0) {
        return Err(GraphError::NegativeWeight(members[p]));
    }
    let mut x = vec![0.0; graph.len()];
    for (&v, w) in members.iter().zip(&weights) {
        x[v] = w / total;
    }
    Ok(SimplexVector::from_raw(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two weakly linked cliques {0,1} and {2,3}.
    pub(crate) fn a4() -> AffinityGraph {
        AffinityGraph::from_rows(&[
            vec![0.0, 0.9, 0.1, 0.0],
            vec![0.9, 0.0, 0.0, 0.1],
            vec![0.1, 0.0, 0.0, 0.8],
            vec![0.0, 0.1, 0.8, 0.0],
        ])
        .unwrap()
    }

    fn set(v: &[usize]) -> VertexSet {
        v.iter().copied().collect()
    }

    #[test]
    fn graph_validation() {
        assert_eq!(
            AffinityGraph::from_rows(&[vec![0.0, 0.5], vec![0.4, 0.0]]),
            Err(GraphError::NotSymmetric(0, 1))
        );
        assert_eq!(
            AffinityGraph::from_rows(&[vec![0.1, 0.0], vec![0.0, 0.0]]),
            Err(GraphError::SelfLoop(0))
        );
        let m = SquareMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert_eq!(
            AffinityGraph::new(m.clone(), []),
            Err(GraphError::NonAdjacentWeight(0, 1))
        );
        assert!(AffinityGraph::new(m, [(1, 0)]).is_ok());
        assert!(matches!(
            AffinityGraph::from_rows(&[vec![0.0, 1.5], vec![1.5, 0.0]]),
            Err(GraphError::OutOfRange { .. })
        ));
    }

    #[test]
    fn relative_similarity_cases() {
        let g = a4();
        assert!((relative_similarity(&g, &set(&[0]), 0, 1).unwrap() - 0.9).abs() < 1e-15);
        let phi = relative_similarity(&g, &set(&[0, 1]), 0, 2).unwrap();
        assert!((phi - (0.1 - 0.45)).abs() < 1e-12);

        let c = 0.4;
        let eq = AffinityGraph::from_rows(&[
            vec![0.0, c, c],
            vec![c, 0.0, c],
            vec![c, c, 0.0],
        ])
        .unwrap();
        let phi = relative_similarity(&eq, &set(&[0, 1]), 0, 2).unwrap();
        assert!((phi - c / 2.0).abs() < 1e-15);

        assert_eq!(
            relative_similarity(&g, &set(&[0, 1]), 0, 1),
            Err(GraphError::AlreadyInSet(1))
        );
        assert_eq!(
            relative_similarity(&g, &set(&[0, 1]), 2, 3),
            Err(GraphError::NotInSet(2))
        );
    }

    #[test]
    fn node_weight_cases() {
        let g = a4();
        assert_eq!(node_weight(&g, &set(&[2]), 2).unwrap(), 1.0);
        assert!((node_weight(&g, &set(&[0, 1]), 0).unwrap() - 0.9).abs() < 1e-15);
        let big: VertexSet = (0..16).collect();
        let g16 = AffinityGraph::from_weights(SquareMatrix::zeros(16)).unwrap();
        assert!(matches!(
            node_weight(&g16, &big, 0),
            Err(GraphError::TooLarge { size: 16, .. })
        ));
    }

    #[test]
    fn characteristic_vector_cases() {
        let g = a4();
        assert_eq!(
            characteristic_vector(&g, &set(&[3])).unwrap().as_slice(),
            &[0.0, 0.0, 0.0, 1.0]
        );
        let x = characteristic_vector(&g, &set(&[0, 1])).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 0.5, 0.0, 0.0]);
        let x = characteristic_vector(&g, &set(&[2, 3])).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 0.0, 0.5, 0.5]);
        // {0, 3} has no internal link: both weights are zero.
        assert_eq!(
            characteristic_vector(&g, &set(&[0, 3])),
            Err(GraphError::NonPositiveWeight(0.0))
        );
    }

    #[test]
    fn dominant_set_cases() {
        let g = a4();
        assert!(is_dominant_set(&g, &set(&[0, 1])).unwrap());
        assert!(is_dominant_set(&g, &set(&[2, 3])).unwrap());
        assert!(!is_dominant_set(&g, &set(&[0, 2])).unwrap());
        assert_eq!(is_dominant_set(&g, &set(&[])), Err(GraphError::EmptySet));
    }

    #[test]
    fn simplex_vector_validation() {
        assert!(SimplexVector::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexVector::new(vec![f64::NAN, 1.0]).is_err());
        let x = SimplexVector::new(vec![0.7, 1e-9, 0.3 - 1e-9]).unwrap();
        assert_eq!(x.support(), set(&[0, 2]));
    }

    #[test]
    fn subgraph_keeps_adjacency() {
        let g = a4();
        let s = g.subgraph(&[1, 3]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.weight(0, 1), 0.1);
        assert_eq!(s.adjacency().iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
    }
}
