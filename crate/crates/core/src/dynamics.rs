//! Constrained dominant sets: the alpha-shifted quadratic program over the
//! simplex, its Infection-and-Immunization solver, and the peeling loop that
//! extracts one cluster per uncovered group of seeds.

use std::collections::BTreeSet;

use log::debug;
use thiserror::Error;

use crate::graph::{AffinityGraph, DominantSetResult, GraphError, SimplexVector, VertexSet};
use crate::matrix::{dot, SquareMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("the seed set is empty")]
    NoSeeds,
    #[error("seed {seed} is not a vertex of a graph with {n} vertices")]
    SeedOutOfRange { seed: usize, n: usize },
    #[error("the principal submatrix is empty")]
    EmptySubmatrix,
    #[error("symmetric eigenvalue iteration did not converge")]
    EigenNotConverged,
    #[error("starting point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("seeds {uncovered:?} remain uncovered after {rounds} extraction rounds")]
    SeedsUncovered { uncovered: Vec<usize>, rounds: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Knobs of the constrained solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once no strategy has infectivity above this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// `alpha = alpha_margin * max(lambda_max, alpha_floor)`.
    pub alpha_margin: f64,
    pub alpha_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: 10_000,
            alpha_margin: 1.01,
            alpha_floor: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.tolerance > 0.0) {
            return Err(DynamicsError::InvalidConfig("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(DynamicsError::InvalidConfig("max_iterations must be at least 1"));
        }
        if !(self.alpha_margin > 1.0) {
            return Err(DynamicsError::InvalidConfig("alpha_margin must exceed 1"));
        }
        if !(self.alpha_floor > 0.0) {
            return Err(DynamicsError::InvalidConfig("alpha_floor must be positive"));
        }
        Ok(())
    }
}

const POWER_MAX_ITERATIONS: usize = 10_000;
const POWER_TOLERANCE: f64 = 1e-14;

/// Largest eigenvalue of a symmetric matrix by shifted power iteration.
///
/// The matrix is shifted by its infinity norm so every eigenvalue becomes
/// non-negative and the largest one is also the largest in magnitude. When
/// the two leading eigenvalues are nearly equal the iteration contracts too
/// slowly, and a dense symmetric eigensolver takes over.
pub fn lambda_max(matrix: &SquareMatrix) -> Result<f64, DynamicsError> {
    let n = matrix.dim();
    if n == 0 {
        return Err(DynamicsError::EmptySubmatrix);
    }
    let shift = matrix.max_abs_row_sum();
    if shift == 0.0 {
        return Ok(0.0);
    }
    // Uniform start overlaps the Perron vector of any non-negative matrix; the
    // small ramp breaks exact orthogonality for signed inputs.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * i as f64).collect();
    normalize(&mut v);
    let mut previous = f64::NAN;
    for _ in 0..POWER_MAX_ITERATIONS {
        let mut w = matrix.mul_vec(&v);
        let rayleigh = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rayleigh * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= POWER_TOLERANCE * shift
            || (rayleigh - previous).abs() <= POWER_TOLERANCE * shift
        {
            return Ok(rayleigh);
        }
        previous = rayleigh;
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        normalize(&mut w);
        v = w;
    }
    debug!("power iteration stalled on a {n}x{n} matrix, using the dense solver");
    dense_lambda_max(matrix)
}

fn dense_lambda_max(matrix: &SquareMatrix) -> Result<f64, DynamicsError> {
    let n = matrix.dim();
    let dense = nalgebra::DMatrix::from_row_slice(n, n, matrix.as_slice());
    let eig = nalgebra::SymmetricEigen::try_new(dense, f64::EPSILON, 0)
        .ok_or(DynamicsError::EigenNotConverged)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// `lambda_max` of the principal submatrix indexed by `V \ excluded`.
pub fn lambda_max_principal(
    graph: &AffinityGraph,
    excluded: &VertexSet,
) -> Result<f64, DynamicsError> {
    let rest: Vec<usize> = (0..graph.len()).filter(|v| !excluded.contains(v)).collect();
    if rest.is_empty() {
        return Err(DynamicsError::EmptySubmatrix);
    }
    lambda_max(&graph.weights().principal_submatrix(&rest))
}

/// The alpha-shifted program `max x'(A - alpha I_S) x` over the simplex, where
/// `I_S` has ones on the diagonal entries of non-seed vertices.
#[derive(Debug, Clone)]
pub struct CdsProgram<'a> {
    pub graph: &'a AffinityGraph,
    pub seeds: VertexSet,
    pub alpha: f64,
    pub payoff: SquareMatrix,
}

pub fn build_program<'a>(
    graph: &'a AffinityGraph,
    seeds: &VertexSet,
    cfg: &SolverConfig,
) -> Result<CdsProgram<'a>, DynamicsError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(DynamicsError::NoSeeds);
    }
    let n = graph.len();
    if let Some(&seed) = seeds.iter().find(|&&s| s >= n) {
        return Err(DynamicsError::SeedOutOfRange { seed, n });
    }
    let lambda = if seeds.len() == n {
        0.0
    } else {
        lambda_max_principal(graph, seeds)?
    };
    let alpha = cfg.alpha_margin * lambda.max(cfg.alpha_floor);
    let mut payoff = graph.weights().clone();
    for i in (0..n).filter(|i| !seeds.contains(i)) {
        payoff.set(i, i, -alpha);
    }
    Ok(CdsProgram {
        graph,
        seeds: seeds.clone(),
        alpha,
        payoff,
    })
}

/// Which invader a step selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invader {
    Strategy(usize),
    CoStrategy(usize),
}

/// Infection-and-Immunization dynamics over a symmetric payoff matrix.
///
/// Keeps `B x` up to date in `O(n)` per step; every few hundred steps it is
/// recomputed from scratch to bound round-off drift.
#[derive(Debug, Clone)]
pub struct InImDyn<'a> {
    payoff: &'a SquareMatrix,
    x: Vec<f64>,
    bx: Vec<f64>,
    steps: usize,
}

const REFRESH_EVERY: usize = 256;

impl<'a> InImDyn<'a> {
    pub fn new(payoff: &'a SquareMatrix, x0: &SimplexVector) -> Result<Self, DynamicsError> {
        if x0.len() != payoff.dim() {
            return Err(DynamicsError::DimensionMismatch {
                expected: payoff.dim(),
                got: x0.len(),
            });
        }
        let x = x0.as_slice().to_vec();
        let bx = payoff.mul_vec(&x);
        Ok(Self {
            payoff,
            x,
            bx,
            steps: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn payoff(&self) -> f64 {
        dot(&self.x, &self.bx)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The most infective pure strategy or co-strategy and its infectivity
    /// magnitude `|(Bx)_i - x'Bx|`.
    pub fn most_infective(&self) -> Option<(Invader, f64)> {
        let pi = self.payoff();
        let mut best: Option<(Invader, f64)> = None;
        for (i, (&bxi, &xi)) in self.bx.iter().zip(&self.x).enumerate() {
            let gain = bxi - pi;
            let candidate = if gain > 0.0 {
                Invader::Strategy(i)
            } else if gain < 0.0 && xi > 0.0 && xi < 1.0 {
                Invader::CoStrategy(i)
            } else {
                continue;
            };
            if best.is_none_or(|(_, m)| gain.abs() > m) {
                best = Some((candidate, gain.abs()));
            }
        }
        best
    }

    /// One invasion step. Returns the invader, or `None` at a Nash point.
    pub fn step(&mut self) -> Option<Invader> {
        let (invader, _) = self.most_infective()?;
        let pi = self.payoff();
        match invader {
            Invader::Strategy(j) => {
                // d = e_j - x
                let d_bx = self.bx[j] - pi;
                let d_bd = self.payoff.get(j, j) - 2.0 * self.bx[j] + pi;
                let delta = invasion_share(d_bx, d_bd);
                for (k, (xk, bxk)) in self.x.iter_mut().zip(self.bx.iter_mut()).enumerate() {
                    *xk *= 1.0 - delta;
                    *bxk = (1.0 - delta) * *bxk + delta * self.payoff.get(k, j);
                }
                self.x[j] += delta;
            }
            Invader::CoStrategy(i) => {
                let xi = self.x[i];
                if delta_is_full(self.payoff, &self.bx, pi, i, xi) {
                    // y = (x - x_i e_i) / (1 - x_i): strategy i goes extinct.
                    let scale = 1.0 / (1.0 - xi);
                    for (k, (xk, bxk)) in self.x.iter_mut().zip(self.bx.iter_mut()).enumerate() {
                        *xk *= scale;
                        *bxk = (*bxk - xi * self.payoff.get(k, i)) * scale;
                    }
                    self.x[i] = 0.0;
                } else {
                    // d = mu (x - e_i), mu = x_i / (1 - x_i)
                    let mu = xi / (1.0 - xi);
                    let d_bx = mu * (pi - self.bx[i]);
                    let d_bd = mu * mu * (pi - 2.0 * self.bx[i] + self.payoff.get(i, i));
                    let t = invasion_share(d_bx, d_bd) * mu;
                    for (k, (xk, bxk)) in self.x.iter_mut().zip(self.bx.iter_mut()).enumerate() {
                        *xk *= 1.0 + t;
                        *bxk = (1.0 + t) * *bxk - t * self.payoff.get(k, i);
                    }
                    self.x[i] -= t;
                    if self.x[i] < 0.0 {
                        self.x[i] = 0.0;
                    }
                }
            }
        }
        self.steps += 1;
        if self.steps.is_multiple_of(REFRESH_EVERY) {
            self.bx = self.payoff.mul_vec(&self.x);
        }
        Some(invader)
    }

    pub fn into_state(self) -> SimplexVector {
        SimplexVector::from_raw(self.x)
    }
}

/// Optimal share `delta` in `[0, 1]` for the payoff along `x + delta d`.
fn invasion_share(d_bx: f64, d_bd: f64) -> f64 {
    if d_bd < 0.0 {
        (-d_bx / d_bd).min(1.0)
    } else {
        1.0
    }
}

fn delta_is_full(payoff: &SquareMatrix, bx: &[f64], pi: f64, i: usize, xi: f64) -> bool {
    if xi >= 1.0 {
        return false;
    }
    let mu = xi / (1.0 - xi);
    let d_bx = mu * (pi - bx[i]);
    let d_bd = mu * mu * (pi - 2.0 * bx[i] + payoff.get(i, i));
    invasion_share(d_bx, d_bd) >= 1.0
}

/// A single step from scratch; returns `x` unchanged at a Nash point.
pub fn inimdyn_step(payoff: &SquareMatrix, x: &SimplexVector) -> Result<SimplexVector, DynamicsError> {
    let mut dynamics = InImDyn::new(payoff, x)?;
    dynamics.step();
    Ok(dynamics.into_state())
}

/// Runs the dynamics on `prog` until the largest infectivity drops below the
/// tolerance. Hitting `max_iterations` is not an error: the best state so far
/// is returned with `converged == false`.
pub fn inimdyn_solve(
    prog: &CdsProgram<'_>,
    x0: &SimplexVector,
    cfg: &SolverConfig,
) -> Result<DominantSetResult, DynamicsError> {
    cfg.validate()?;
    let mut dynamics = InImDyn::new(&prog.payoff, x0)?;
    let mut converged = false;
    while dynamics.steps() < cfg.max_iterations {
        match dynamics.most_infective() {
            Some((_, m)) if m > cfg.tolerance => {
                dynamics.step();
            }
            _ => {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        converged = dynamics
            .most_infective()
            .is_none_or(|(_, m)| m <= cfg.tolerance);
    }
    let iterations = dynamics.steps();
    let payoff = dynamics.payoff();
    let chi = dynamics.into_state();
    let value = prog.graph.weights().quadratic_form(chi.as_slice());
    Ok(DominantSetResult {
        support: chi.support(),
        chi,
        value,
        payoff,
        iterations,
        converged,
    })
}

/// Peels constrained dominant sets off the graph until every seed belongs to
/// one of them. Each round solves on the remaining vertices with the
/// remaining seeds, then removes the whole support.
///
/// Results are expressed in the vertex ids of `graph`; `chi` is zero outside
/// the vertices that were still present in that round.
pub fn extract_cds_collection(
    graph: &AffinityGraph,
    seeds: &VertexSet,
    cfg: &SolverConfig,
) -> Result<Vec<DominantSetResult>, DynamicsError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(DynamicsError::NoSeeds);
    }
    let n = graph.len();
    if let Some(&seed) = seeds.iter().find(|&&s| s >= n) {
        return Err(DynamicsError::SeedOutOfRange { seed, n });
    }
    let mut working: Vec<usize> = (0..n).collect();
    let mut remaining: BTreeSet<usize> = seeds.clone();
    let mut found = Vec::new();
    while !remaining.is_empty() {
        if found.len() >= seeds.len() {
            return Err(DynamicsError::SeedsUncovered {
                uncovered: remaining.into_iter().collect(),
                rounds: found.len(),
            });
        }
        let sub = graph.subgraph(&working);
        let local_seeds: VertexSet = working
            .iter()
            .enumerate()
            .filter(|(_, g)| remaining.contains(g))
            .map(|(l, _)| l)
            .collect();
        let prog = build_program(&sub, &local_seeds, cfg)?;
        let local = inimdyn_solve(&prog, &SimplexVector::uniform(sub.len()), cfg)?;
        if !local.converged {
            debug!(
                "constrained solve stopped after {} iterations without converging",
                local.iterations
            );
        }
        let mut chi = vec![0.0; n];
        for (l, &g) in working.iter().enumerate() {
            chi[g] = local.chi.as_slice()[l];
        }
        let support: VertexSet = local.support.iter().map(|&l| working[l]).collect();
        remaining.retain(|s| !support.contains(s));
        working.retain(|v| !support.contains(v));
        found.push(DominantSetResult {
            support,
            chi: SimplexVector::from_raw(chi),
            ..local
        });
        if working.is_empty() {
            break;
        }
    }
    if !remaining.is_empty() {
        return Err(DynamicsError::SeedsUncovered {
            uncovered: remaining.into_iter().collect(),
            rounds: found.len(),
        });
    }
    Ok(found)
}

/// Discrete replicator update `x_i (Ax)_i / x'Ax` for non-negative payoffs.
/// Only used to check fixed points; it is not a production solver.
pub fn replicator_step(payoff: &SquareMatrix, x: &SimplexVector) -> SimplexVector {
    let ax = payoff.mul_vec(x.as_slice());
    let total = dot(x.as_slice(), &ax);
    if total <= 0.0 {
        return x.clone();
    }
    SimplexVector::from_raw(
        x.as_slice()
            .iter()
            .zip(&ax)
            .map(|(xi, axi)| xi * axi / total)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a4() -> AffinityGraph {
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
    fn lambda_max_simple_cases() {
        let zero = AffinityGraph::from_rows(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert_eq!(lambda_max_principal(&zero, &set(&[0])).unwrap(), 0.0);
        let b = 0.35;
        let pair = SquareMatrix::from_rows(&[vec![0.0, b], vec![b, 0.0]]).unwrap();
        assert!((lambda_max(&pair).unwrap() - b).abs() < 1e-12);
        // {1,2,3} of A4 is a path with weights 0.1 and 0.8: lambda = sqrt(0.65).
        let l = lambda_max_principal(&a4(), &set(&[0])).unwrap();
        assert!((l - 0.65f64.sqrt()).abs() < 1e-10, "{l}");
        assert_eq!(
            lambda_max_principal(&a4(), &set(&[0, 1, 2, 3])),
            Err(DynamicsError::EmptySubmatrix)
        );
    }

    #[test]
    fn lambda_max_with_nearly_equal_leading_pair() {
        // Two loosely coupled edges with weights 1 and 1 - 5e-5.
        let mut m = SquareMatrix::zeros(4);
        for (i, j, w) in [(0, 1, 1.0 - 5e-5), (2, 3, 1.0), (1, 2, 1e-40)] {
            m.set(i, j, w);
            m.set(j, i, w);
        }
        assert!((lambda_max(&m).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn alpha_rule() {
        let g = AffinityGraph::from_rows(&[vec![0.0; 2], vec![0.0; 2]]).unwrap();
        let cfg = SolverConfig::default();
        let prog = build_program(&g, &set(&[0]), &cfg).unwrap();
        assert!((prog.alpha - cfg.alpha_margin * cfg.alpha_floor).abs() < 1e-18);

        let l = 0.8;
        let g = AffinityGraph::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, l],
            vec![0.0, l, 0.0],
        ])
        .unwrap();
        let cfg = SolverConfig {
            alpha_margin: 1.1,
            ..SolverConfig::default()
        };
        let prog = build_program(&g, &set(&[0]), &cfg).unwrap();
        assert!((prog.alpha - 0.88).abs() < 1e-9);

        let g = a4();
        let prog = build_program(&g, &set(&[0]), &SolverConfig::default()).unwrap();
        assert!(prog.alpha > 0.65f64.sqrt());
        let diag: Vec<f64> = (0..4).map(|i| prog.payoff.get(i, i)).collect();
        assert_eq!(diag, vec![0.0, -prog.alpha, -prog.alpha, -prog.alpha]);
        assert_eq!(prog.payoff.get(0, 1), 0.9);
    }

    #[test]
    fn build_program_rejects_bad_seeds() {
        let g = a4();
        let cfg = SolverConfig::default();
        assert!(matches!(build_program(&g, &set(&[]), &cfg), Err(DynamicsError::NoSeeds)));
        assert!(matches!(
            build_program(&g, &set(&[7]), &cfg),
            Err(DynamicsError::SeedOutOfRange { seed: 7, n: 4 })
        ));
        let bad = SolverConfig {
            alpha_margin: 1.0,
            ..cfg
        };
        assert!(matches!(
            build_program(&g, &set(&[0]), &bad),
            Err(DynamicsError::InvalidConfig(_))
        ));
    }

    #[test]
    fn single_strategy_is_immediately_converged() {
        let g = AffinityGraph::from_rows(&[vec![0.0]]).unwrap();
        let cfg = SolverConfig::default();
        let prog = build_program(&g, &set(&[0]), &cfg).unwrap();
        let r = inimdyn_solve(&prog, &SimplexVector::uniform(1), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.chi.as_slice(), &[1.0]);
    }

    #[test]
    fn two_strategy_coordination_reaches_barycenter() {
        let b = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x = SimplexVector::vertex(2, 0);
        // From e_0: strategy 1 earns 1 against payoff 0, so it invades with
        // share 1/2, which is the interior equilibrium.
        let y = inimdyn_step(&b, &x).unwrap();
        assert!((y.as_slice()[0] - 0.5).abs() < 1e-15);
        assert!((y.as_slice()[1] - 0.5).abs() < 1e-15);
        let z = inimdyn_step(&b, &y).unwrap();
        assert_eq!(z, y);
    }

    #[test]
    fn a4_seeded_solutions() {
        let g = a4();
        let cfg = SolverConfig::default();
        for (seed, expected) in [(0, set(&[0, 1])), (2, set(&[2, 3]))] {
            let prog = build_program(&g, &set(&[seed]), &cfg).unwrap();
            let r = inimdyn_solve(&prog, &SimplexVector::uniform(4), &cfg).unwrap();
            assert!(r.converged);
            assert_eq!(r.support, expected);
        }
    }

    #[test]
    fn peeling_a4() {
        let g = a4();
        let cfg = SolverConfig::default();
        let found = extract_cds_collection(&g, &set(&[0, 2]), &cfg).unwrap();
        let mut supports: Vec<_> = found.iter().map(|r| r.support.clone()).collect();
        supports.sort();
        assert_eq!(supports, vec![set(&[0, 1]), set(&[2, 3])]);

        let found = extract_cds_collection(&g, &set(&[0, 1]), &cfg).unwrap();
        assert_eq!(found.len(), 1);

        let all = set(&[0, 1, 2, 3]);
        let found = extract_cds_collection(&g, &all, &cfg).unwrap();
        let union: VertexSet = found.iter().flat_map(|r| r.support.iter().copied()).collect();
        assert_eq!(union, all);
    }

    #[test]
    fn replicator_fixed_point_of_clique() {
        let g = a4();
        let x = SimplexVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let y = replicator_step(g.weights(), &x);
        assert_eq!(x, y);
    }
}
