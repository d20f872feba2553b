//! Local distributions and the Bethe quantities built from them.
//!
//! Every variable `v` and every hyperedge `a` carries its own local Gibbs
//! distribution:
//!
//! ```text
//! p^v(x_v) = exp[theta_v(x_v) - F^v]
//! p^a(x_a) = exp[theta_a(x_a) + sum_{v in a} theta_v(x_v) - F^a]
//! ```
//!
//! The belief vector `m~(theta)` collects these tables. The Bethe
//! log-partition function weights the local log-partition functions with
//! counting numbers `1 - n_v` (variables) and `1` (hyperedges):
//!
//! ```text
//! F~(theta) = sum_v (1 - n_v) F^v + sum_a F^a
//! ```
//!
//! and the Bethe entropy is the same combination of local entropies.

use thiserror::Error;

use crate::math::{entropy, log_sum_exp, softmax};
use crate::model::{Hypergraph, Model, ModelError, TableVector};

/// Beliefs `m~(theta)`: a normalized table per variable and per hyperedge.
/// Marginal consistency holds only at BP fixed points.
pub type BeliefVector = TableVector;

/// Largest tolerated deviation from 1 of a table sum handed to the entropy
/// functions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error(transparent)]
    Shape(#[from] ModelError),
    #[error("{table} has non-positive entry {value} at {entry}")]
    NonPositive { table: TableId, entry: usize, value: f64 },
    #[error("{table} sums to {sum}, not 1")]
    NotNormalized { table: TableId, sum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    Var(usize),
    Edge(usize),
}

impl std::fmt::Display for TableId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TableId::Var(v) => write!(f, "table of variable {v}"),
            TableId::Edge(a) => write!(f, "table of hyperedge {a}"),
        }
    }
}

/// Marginal inconsistency `gamma = A mu`, one table per incidence pair:
/// `gamma_av(x_v) = sum_{x_a \ v} mu_a(x_a) - mu_v(x_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGamma {
    pub tables: Vec<Vec<f64>>,
}

impl ResidualGamma {
    pub fn max_abs(&self) -> f64 {
        self.tables.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Which of the two Bethe entropy expressions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyForm {
    /// `sum_v (1 - n_v) H^v + sum_a H^a`.
    Counting,
    /// `sum_v H^v - sum_a J^a`, where `J^a` is the divergence of `mu_a` from
    /// the product of its variables' tables.
    Kl,
}

/// `F^v = logsumexp_{x_v} theta_v(x_v)`.
pub fn local_logz_var(model: &Model, var: usize) -> f64 {
    log_sum_exp(&model.theta().unary[var])
}

/// `F^a = logsumexp_{x_a} [theta_a(x_a) + sum_{v in a} theta_v(x_v)]`.
pub fn local_logz_edge(model: &Model, edge: usize) -> f64 {
    log_sum_exp(&edge_scores(model.graph(), model.theta(), edge))
}

/// Unnormalized log-probabilities of the local hyperedge distribution.
pub(crate) fn edge_scores(graph: &Hypergraph, theta: &TableVector, edge: usize) -> Vec<f64> {
    let vars = graph.edge(edge);
    theta.higher[edge]
        .iter()
        .enumerate()
        .map(|(entry, &t)| {
            t + vars
                .iter()
                .enumerate()
                .map(|(pos, &v)| theta.unary[v][graph.edge_state(edge, entry, pos)])
                .sum::<f64>()
        })
        .collect()
}

pub(crate) fn beliefs_of(graph: &Hypergraph, theta: &TableVector) -> BeliefVector {
    BeliefVector {
        unary: theta.unary.iter().map(|t| softmax(t).0).collect(),
        higher: (0..graph.num_edges())
            .map(|a| softmax(&edge_scores(graph, theta, a)).0)
            .collect(),
    }
}

/// The belief vector `m~(theta)`.
pub fn beliefs(model: &Model) -> BeliefVector {
    beliefs_of(model.graph(), model.theta())
}

/// `A mu` for an arbitrary table vector shaped like `graph`.
pub fn residual_of(graph: &Hypergraph, mu: &TableVector) -> ResidualGamma {
    ResidualGamma {
        tables: graph
            .incidence_pairs()
            .iter()
            .map(|p| {
                let mut g = graph.marginalize(p.edge, p.position, &mu.higher[p.edge]);
                for (gi, m) in g.iter_mut().zip(&mu.unary[p.var]) {
                    *gi -= m;
                }
                g
            })
            .collect(),
    }
}

/// `gamma = A m~(theta)`; zero exactly at BP fixed points.
pub fn residual(model: &Model) -> ResidualGamma {
    residual_of(model.graph(), &beliefs(model))
}

/// The Bethe log-partition function `F~(theta)`.
pub fn bethe_log_partition(model: &Model) -> f64 {
    let graph = model.graph();
    let vars: f64 = (0..graph.num_vars())
        .map(|v| (1.0 - graph.degree(v) as f64) * local_logz_var(model, v))
        .sum();
    let edges: f64 = (0..graph.num_edges()).map(|a| local_logz_edge(model, a)).sum();
    vars + edges
}

fn validate_beliefs(graph: &Hypergraph, mu: &BeliefVector) -> Result<(), LocalError> {
    graph.check_shape(mu)?;
    let tables = mu
        .unary
        .iter()
        .enumerate()
        .map(|(v, t)| (TableId::Var(v), t))
        .chain(mu.higher.iter().enumerate().map(|(a, t)| (TableId::Edge(a), t)));
    for (table, t) in tables {
        if let Some(entry) = t.iter().position(|&p| p <= 0.0 || p.is_nan()) {
            return Err(LocalError::NonPositive { table, entry, value: t[entry] });
        }
        let sum: f64 = t.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(LocalError::NotNormalized { table, sum });
        }
    }
    Ok(())
}

/// The Bethe entropy `H~(mu)` in either form. `mu` must be strictly positive
/// and normalized table by table.
///
/// Hyperedge entropies `H^a` use only `mu_a`; the variables inside a
/// hyperedge have counting number zero there.
pub fn bethe_entropy(
    graph: &Hypergraph,
    mu: &BeliefVector,
    form: EntropyForm,
) -> Result<f64, LocalError> {
    validate_beliefs(graph, mu)?;
    Ok(bethe_entropy_unchecked(graph, mu, form))
}

pub(crate) fn bethe_entropy_unchecked(
    graph: &Hypergraph,
    mu: &BeliefVector,
    form: EntropyForm,
) -> f64 {
    match form {
        EntropyForm::Counting => {
            let vars: f64 = mu
                .unary
                .iter()
                .enumerate()
                .map(|(v, t)| (1.0 - graph.degree(v) as f64) * entropy(t))
                .sum();
            let edges: f64 = mu.higher.iter().map(|t| entropy(t)).sum();
            vars + edges
        }
        EntropyForm::Kl => {
            let vars: f64 = mu.unary.iter().map(|t| entropy(t)).sum();
            let divergences: f64 = (0..graph.num_edges())
                .map(|a| edge_divergence(graph, mu, a))
                .sum();
            vars - divergences
        }
    }
}

/// `J^a = sum_{x_a} mu_a log(mu_a / prod_{v in a} mu_v)`.
fn edge_divergence(graph: &Hypergraph, mu: &BeliefVector, edge: usize) -> f64 {
    let vars = graph.edge(edge);
    mu.higher[edge]
        .iter()
        .enumerate()
        .map(|(entry, &p)| {
            let log_product: f64 = vars
                .iter()
                .enumerate()
                .map(|(pos, &v)| mu.unary[v][graph.edge_state(edge, entry, pos)].ln())
                .sum();
            p * (p.ln() - log_product)
        })
        .sum()
}

/// `theta . mu + H~_counting(mu)`, the negative Bethe free energy.
pub fn bethe_objective(model: &Model, mu: &BeliefVector) -> Result<f64, LocalError> {
    let h = bethe_entropy(model.graph(), mu, EntropyForm::Counting)?;
    Ok(model.theta().dot(mu) + h)
}

/// Largest violations of the local-polytope constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolytopeReport {
    /// `max |sum_x mu(x) - 1|` over all tables.
    pub normalization_violation: f64,
    /// `max |gamma|`.
    pub marginalization_violation: f64,
    /// `max(0, -min mu)`.
    pub positivity_violation: f64,
    pub tolerance: f64,
}

impl PolytopeReport {
    pub fn is_member(&self) -> bool {
        self.normalization_violation <= self.tolerance
            && self.marginalization_violation <= self.tolerance
            && self.positivity_violation <= self.tolerance
    }
}

/// Measures how far `mu` is from `{mu >= 0 | A mu = 0, B mu = 1}`.
pub fn check_local_polytope(
    graph: &Hypergraph,
    mu: &TableVector,
    tolerance: f64,
) -> Result<PolytopeReport, ModelError> {
    graph.check_shape(mu)?;
    let normalization_violation = mu
        .unary
        .iter()
        .chain(&mu.higher)
        .map(|t| (t.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(PolytopeReport {
        normalization_violation,
        marginalization_violation: residual_of(graph, mu).max_abs(),
        positivity_violation: (-mu.min_value()).max(0.0),
        tolerance,
    })
}
