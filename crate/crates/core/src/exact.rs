//! Brute-force exponential-family quantities by full enumeration.
//!
//! These are the ground truth for everything in [`crate::local`] and
//! [`crate::bp`]. Every function walks the joint state space in row-major
//! order (variable 0 slowest), single-threaded, so results are bit-for-bit
//! reproducible.

use petgraph::algo::is_cyclic_undirected;
use petgraph::graph::UnGraph;
use thiserror::Error;

use crate::model::{for_each_assignment, Hypergraph, Model, TableVector};

/// Default bound on the number of joint states the oracle will enumerate.
pub const DEFAULT_STATE_CAP: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("state space has {size} states, above the enumeration cap of {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error("models have different structure")]
    StructureMismatch,
}

/// Exact marginals `m(theta)`: one probability table per variable and
/// hyperedge.
pub type ExactMarginals = TableVector;

/// Enumeration-based oracle with a configurable state-space cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOracle {
    pub cap: u128,
}

impl Default for ExactOracle {
    fn default() -> Self {
        Self { cap: DEFAULT_STATE_CAP }
    }
}

impl ExactOracle {
    pub fn with_cap(cap: u128) -> Self {
        Self { cap }
    }

    /// Disables the cap.
    pub fn unbounded() -> Self {
        Self { cap: u128::MAX }
    }

    fn admit(&self, graph: &Hypergraph) -> Result<(), ExactError> {
        let size = graph.state_space_size();
        if size > self.cap {
            return Err(ExactError::StateSpaceTooLarge { size, cap: self.cap });
        }
        Ok(())
    }

    /// Log-partition function `F(theta)` in nats.
    pub fn log_partition(&self, model: &Model) -> Result<f64, ExactError> {
        self.admit(model.graph())?;
        Ok(log_partition_of(model))
    }

    pub fn marginals(&self, model: &Model) -> Result<ExactMarginals, ExactError> {
        self.admit(model.graph())?;
        let graph = model.graph();
        let log_z = log_partition_of(model);
        let mut mu = TableVector::zeros(graph);
        for_each_assignment(graph, |x| {
            let p = (model.energy_unchecked(x) - log_z).exp();
            for (v, &s) in x.iter().enumerate() {
                mu.unary[v][s] += p;
            }
            for a in 0..graph.num_edges() {
                mu.higher[a][graph.edge_index(a, x)] += p;
            }
        });
        Ok(mu)
    }

    /// Entropy `-sum_x p(x) log p(x)` in nats.
    pub fn entropy(&self, model: &Model) -> Result<f64, ExactError> {
        self.admit(model.graph())?;
        let log_z = log_partition_of(model);
        let mut h = 0.0;
        for_each_assignment(model.graph(), |x| {
            let log_p = model.energy_unchecked(x) - log_z;
            let p = log_p.exp();
            if p > 0.0 {
                h -= p * log_p;
            }
        });
        Ok(h)
    }

    /// `KL(p || q)` between the distributions of two models on the same
    /// hypergraph.
    pub fn kl(&self, p: &Model, q: &Model) -> Result<f64, ExactError> {
        if p.graph() != q.graph() {
            return Err(ExactError::StructureMismatch);
        }
        self.admit(p.graph())?;
        let log_zp = log_partition_of(p);
        let log_zq = log_partition_of(q);
        let mut kl = 0.0;
        for_each_assignment(p.graph(), |x| {
            let log_p = p.energy_unchecked(x) - log_zp;
            let log_q = q.energy_unchecked(x) - log_zq;
            kl += log_p.exp() * (log_p - log_q);
        });
        Ok(kl.max(0.0))
    }
}

// Two passes (max, then shifted sum) keep memory flat at any state count.
fn log_partition_of(model: &Model) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for_each_assignment(model.graph(), |x| max = max.max(model.energy_unchecked(x)));
    let mut sum = 0.0;
    for_each_assignment(model.graph(), |x| sum += (model.energy_unchecked(x) - max).exp());
    max + sum.ln()
}

pub fn log_partition_exact(model: &Model) -> Result<f64, ExactError> {
    ExactOracle::default().log_partition(model)
}

pub fn marginals_exact(model: &Model) -> Result<ExactMarginals, ExactError> {
    ExactOracle::default().marginals(model)
}

pub fn entropy_exact(model: &Model) -> Result<f64, ExactError> {
    ExactOracle::default().entropy(model)
}

pub fn kl_exact(p: &Model, q: &Model) -> Result<f64, ExactError> {
    ExactOracle::default().kl(p, q)
}

/// Whether the bipartite variable/hyperedge incidence graph is a forest.
pub fn is_acyclic(graph: &Hypergraph) -> bool {
    let n = graph.num_vars();
    let mut g = UnGraph::<(), ()>::with_capacity(n + graph.num_edges(), graph.incidence_pairs().len());
    let nodes: Vec<_> = (0..n + graph.num_edges()).map(|_| g.add_node(())).collect();
    for p in graph.incidence_pairs() {
        g.add_edge(nodes[p.var], nodes[n + p.edge], ());
    }
    !is_cyclic_undirected(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hypergraph, Model};

    fn zeros(domains: Vec<usize>, edges: Vec<Vec<usize>>) -> Model {
        Model::zeros(Hypergraph::new(domains, edges).unwrap())
    }

    fn t1_corner() -> Model {
        let m = zeros(vec![2, 2], vec![vec![0, 1]]);
        let mut theta = m.theta().clone();
        theta.higher[0][0] = 1.0;
        m.with_theta(theta).unwrap()
    }

    #[test]
    fn uniform_log_partitions() {
        let t2 = zeros(vec![3], vec![]);
        assert!((log_partition_exact(&t2).unwrap() - 3f64.ln()).abs() < 1e-15);
        let t1 = zeros(vec![2, 2], vec![vec![0, 1]]);
        assert!((log_partition_exact(&t1).unwrap() - 4f64.ln()).abs() < 1e-15);
        let l1 = zeros(vec![2, 2, 2], vec![vec![0, 1], vec![1, 2], vec![0, 2]]);
        assert!((log_partition_exact(&l1).unwrap() - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_marginals() {
        let t1 = zeros(vec![2, 2], vec![vec![0, 1]]);
        let mu = marginals_exact(&t1).unwrap();
        assert_eq!(mu.unary, vec![vec![0.5, 0.5]; 2]);
        assert_eq!(mu.higher, vec![vec![0.25; 4]]);
    }

    #[test]
    fn corner_coupling_marginal() {
        // p ∝ (e, 1, 1, 1)
        let e = std::f64::consts::E;
        let mu = marginals_exact(&t1_corner()).unwrap();
        assert!((mu.unary[0][0] - (e + 1.0) / (e + 3.0)).abs() < 1e-15);
        assert!((mu.unary[0][0] - 0.650244).abs() < 1e-6);
        assert!((mu.higher[0][0] - e / (e + 3.0)).abs() < 1e-15);
    }

    #[test]
    fn entropy_of_uniform_models() {
        let t2 = zeros(vec![3], vec![]);
        assert!((entropy_exact(&t2).unwrap() - 3f64.ln()).abs() < 1e-15);
        let t1 = zeros(vec![2, 2], vec![vec![0, 1]]);
        assert!((entropy_exact(&t1).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        let t1 = zeros(vec![2, 2], vec![vec![0, 1]]);
        assert_eq!(kl_exact(&t1, &t1).unwrap(), 0.0);
        let mut theta = t1.theta().clone();
        theta.unary[0] = vec![1.0, 0.0];
        let q = t1.with_theta(theta).unwrap();
        assert!(kl_exact(&t1, &q).unwrap() > 0.0);
        let other = zeros(vec![2, 3], vec![vec![0, 1]]);
        assert_eq!(kl_exact(&t1, &other).unwrap_err(), ExactError::StructureMismatch);
    }

    #[test]
    fn cap_is_enforced() {
        let m = zeros(vec![4; 12], vec![]);
        let err = log_partition_exact(&m).unwrap_err();
        assert_eq!(err, ExactError::StateSpaceTooLarge { size: 1 << 24, cap: DEFAULT_STATE_CAP });
        let small = ExactOracle::with_cap(3);
        assert!(small.log_partition(&zeros(vec![2, 2], vec![])).is_err());
        assert!(ExactOracle::with_cap(4).log_partition(&zeros(vec![2, 2], vec![])).is_ok());
    }

    #[test]
    fn acyclicity() {
        assert!(is_acyclic(zeros(vec![2, 2], vec![vec![0, 1]]).graph()));
        assert!(!is_acyclic(
            zeros(vec![2, 2, 2], vec![vec![0, 1], vec![1, 2], vec![0, 2]]).graph()
        ));
        assert!(is_acyclic(zeros(vec![2, 2, 2], vec![vec![0, 1], vec![1, 2]]).graph()));
        // two hyperedges sharing two variables close a cycle
        assert!(!is_acyclic(zeros(vec![2, 2, 2], vec![vec![0, 1, 2], vec![0, 1]]).graph()));
        assert!(is_acyclic(zeros(vec![3], vec![]).graph()));
    }
}
