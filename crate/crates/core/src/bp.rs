//! Serial belief propagation as a sequence of elementary reparameterizations.
//!
//! There are no messages. Each update picks an incidence pair `(a, v)` and
//! moves a unary function `alpha_av` from `theta_v` into `theta_a` so that
//!
//! ```text
//! M(x_v) = logsumexp_{x_a \ v} [theta_a(x_a) + sum_{u in a \ v} theta_u(x_u)]
//! ```
//!
//! becomes constant in `x_v`. That makes the hyperedge belief marginalize
//! exactly onto the variable belief for this pair. The free additive
//! constant in `alpha_av` is fixed by `logsumexp_{x_v} alpha_av(x_v) = log d_v`.
//!
//! A sweep visits every incidence pair once. Convergence is declared when
//! `max |A m~(theta)|` drops to the tolerance, checked after each sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::local::{beliefs_of, residual_of};
use crate::math::log_sum_exp;
use crate::model::{shift_pair, Hypergraph, Model, ModelError, ThetaVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite parameter encountered during sweep {sweep}")]
    NonFinite { sweep: usize },
}

/// Order in which a sweep visits incidence pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// [`crate::model::Hypergraph::incidence_pairs`] order, every sweep.
    RoundRobin,
    /// A fresh shuffle per sweep from a ChaCha8 stream seeded once per run.
    RandomPermutation { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    /// Convergence threshold on `max |gamma|`.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub schedule: Schedule,
    /// Fraction in `[0, 1)`; each applied `alpha` is scaled by `1 - damping`.
    pub damping: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_sweeps: 1000,
            schedule: Schedule::RoundRobin,
            damping: 0.0,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<(), BpError> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(BpError::InvalidConfig(format!(
                "tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        if self.max_sweeps == 0 {
            return Err(BpError::InvalidConfig("max_sweeps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(BpError::InvalidConfig(format!(
                "damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    Converged,
    MaxSweepsReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    /// The input model after all applied reparameterizations.
    pub final_model: Model,
    pub status: BpStatus,
    pub sweeps_used: usize,
    /// `max |gamma|` after the last sweep.
    pub final_residual: f64,
    /// `max |gamma|` after each sweep.
    pub residual_trace: Vec<f64>,
}

impl BpResult {
    pub fn converged(&self) -> bool {
        self.status == BpStatus::Converged
    }
}

/// The `alpha_av` that makes the pair `(a, v)` consistent, normalized so
/// that its log-sum-exp is `log d_v`.
pub(crate) fn pair_update(graph: &Hypergraph, theta: &ThetaVector, index: usize) -> Vec<f64> {
    let pair = graph.pair(index);
    let d = graph.domain_size(pair.var);
    let vars = graph.edge(pair.edge);
    let mut groups: Vec<Vec<f64>> = vec![Vec::with_capacity(graph.edge_size(pair.edge) / d); d];
    for (entry, &t) in theta.higher[pair.edge].iter().enumerate() {
        let mut score = t;
        for (pos, &u) in vars.iter().enumerate() {
            if pos != pair.position {
                score += theta.unary[u][graph.edge_state(pair.edge, entry, pos)];
            }
        }
        groups[graph.edge_state(pair.edge, entry, pair.position)].push(score);
    }
    let m: Vec<f64> = groups.iter().map(|g| log_sum_exp(g)).collect();
    let neg_m: Vec<f64> = m.iter().map(|v| -v).collect();
    let c = (d as f64).ln() - log_sum_exp(&neg_m);
    m.iter().map(|&mv| c - mv).collect()
}

/// One BP update at the pair `(edge, var)`.
pub fn bp_update_pair(model: &Model, edge: usize, var: usize) -> Result<Model, BpError> {
    let index = model.graph().pair_index(edge, var)?;
    let alpha = pair_update(model.graph(), model.theta(), index);
    model.apply_elementary_reparam(edge, var, &alpha).map_err(Into::into)
}

/// Runs serial BP until `max |gamma| <= tolerance` or `max_sweeps` sweeps.
///
/// At least one sweep is always performed. Identical inputs give
/// bit-identical results.
pub fn run_bp(model: &Model, config: &BpConfig) -> Result<BpResult, BpError> {
    config.validate()?;
    let graph = model.graph();
    let mut theta = model.theta().clone();
    let mut order: Vec<usize> = (0..graph.incidence_pairs().len()).collect();
    let mut rng = match config.schedule {
        Schedule::RoundRobin => None,
        Schedule::RandomPermutation { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let scale = 1.0 - config.damping;
    let mut trace = Vec::new();
    let mut status = BpStatus::MaxSweepsReached;

    for sweep in 1..=config.max_sweeps {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        for &index in &order {
            let alpha = pair_update(graph, &theta, index);
            shift_pair(graph, &mut theta, index, &alpha, scale);
        }
        if theta.values().any(|v| !v.is_finite()) {
            return Err(BpError::NonFinite { sweep });
        }
        let r = residual_of(graph, &beliefs_of(graph, &theta)).max_abs();
        if !r.is_finite() {
            return Err(BpError::NonFinite { sweep });
        }
        trace.push(r);
        if r <= config.tolerance {
            status = BpStatus::Converged;
            break;
        }
    }

    Ok(BpResult {
        final_model: Model::from_parts_unchecked(graph.clone(), theta),
        status,
        sweeps_used: trace.len(),
        final_residual: *trace.last().expect("at least one sweep"),
        residual_trace: trace,
    })
}

/// Whether `max |A m~(theta)| <= tolerance`.
pub fn is_fixed_point(model: &Model, tolerance: f64) -> bool {
    crate::local::residual(model).max_abs() <= tolerance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::{beliefs, residual};
    use crate::math::log_sum_exp;
    use crate::model::{for_each_assignment, Hypergraph};

    fn t1_corner() -> Model {
        let m = Model::zeros(Hypergraph::new(vec![2, 2], vec![vec![0, 1]]).unwrap());
        let mut theta = m.theta().clone();
        theta.higher[0][0] = 1.0;
        m.with_theta(theta).unwrap()
    }

    fn triangle() -> Model {
        Model::zeros(
            Hypergraph::new(vec![2, 2, 2], vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap(),
        )
    }

    #[test]
    fn update_at_zero_parameters_is_identity() {
        let m = triangle();
        for p in m.incidence_pairs().to_vec() {
            assert_eq!(bp_update_pair(&m, p.edge, p.var).unwrap(), m);
        }
    }

    #[test]
    fn update_enforces_consistency_for_its_pair() {
        let m = t1_corner();
        let r = bp_update_pair(&m, 0, 0).unwrap();
        let g = residual(&r);
        assert!(g.tables[0].iter().all(|v| v.abs() < 1e-12));
        // the other pair is untouched by this update and stays inconsistent
        assert!(g.tables[1][0].abs() > 1e-3);
        for_each_assignment(m.graph(), |x| {
            assert!((r.energy(x).unwrap() - m.energy(x).unwrap()).abs() < 1e-15);
        });
    }

    #[test]
    fn update_normalization_convention() {
        let m = t1_corner();
        let alpha = pair_update(m.graph(), m.theta(), 0);
        assert!((log_sum_exp(&alpha) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn update_rejects_non_incident_pair() {
        assert!(matches!(
            bp_update_pair(&triangle(), 1, 0),
            Err(BpError::Model(ModelError::NotIncident { edge: 1, var: 0 }))
        ));
    }

    #[test]
    fn zero_parameters_converge_in_one_sweep() {
        let m = triangle();
        let r = run_bp(&m, &BpConfig::default()).unwrap();
        assert_eq!(r.status, BpStatus::Converged);
        assert_eq!(r.sweeps_used, 1);
        assert_eq!(r.final_residual, 0.0);
        assert_eq!(r.final_model, m);
    }

    #[test]
    fn single_edge_converges() {
        let r = run_bp(&t1_corner(), &BpConfig::default()).unwrap();
        assert!(r.converged());
        assert!(is_fixed_point(&r.final_model, 1e-9));
        assert_eq!(r.residual_trace.len(), r.sweeps_used);
    }

    #[test]
    fn fixed_point_predicate() {
        assert!(is_fixed_point(&triangle(), 0.0));
        assert!(!is_fixed_point(&t1_corner(), 1e-3));
    }

    #[test]
    fn config_validation() {
        let bad = [
            BpConfig { tolerance: 0.0, ..Default::default() },
            BpConfig { tolerance: f64::NAN, ..Default::default() },
            BpConfig { max_sweeps: 0, ..Default::default() },
            BpConfig { damping: 1.0, ..Default::default() },
            BpConfig { damping: -0.1, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(run_bp(&triangle(), &c), Err(BpError::InvalidConfig(_))));
        }
    }

    #[test]
    fn max_sweeps_terminates_cleanly() {
        let mut theta = triangle().theta().clone();
        for t in &mut theta.higher {
            *t = vec![2.0, -1.0, -1.5, 2.5];
        }
        let m = triangle().with_theta(theta).unwrap();
        let config = BpConfig { max_sweeps: 2, tolerance: 1e-300, ..Default::default() };
        let r = run_bp(&m, &config).unwrap();
        assert_eq!(r.status, BpStatus::MaxSweepsReached);
        assert_eq!(r.sweeps_used, 2);
    }

    #[test]
    fn damping_slows_but_keeps_energies() {
        let m = t1_corner();
        let config = BpConfig { damping: 0.5, ..Default::default() };
        let r = run_bp(&m, &config).unwrap();
        assert!(r.converged());
        assert!(r.sweeps_used > 1);
        for_each_assignment(m.graph(), |x| {
            let (a, b) = (r.final_model.energy(x).unwrap(), m.energy(x).unwrap());
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        });
    }

    #[test]
    fn random_schedule_is_deterministic() {
        let mut theta = triangle().theta().clone();
        theta.higher[0] = vec![0.3, -0.2, 0.1, 0.0];
        theta.unary[2] = vec![0.4, -0.1];
        let m = triangle().with_theta(theta).unwrap();
        let c = BpConfig { schedule: Schedule::RandomPermutation { seed: 7 }, ..Default::default() };
        let a = run_bp(&m, &c).unwrap();
        let b = run_bp(&m, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.converged());
        let rr = run_bp(&m, &BpConfig::default()).unwrap();
        assert!(beliefs(&rr.final_model).max_abs_diff(&beliefs(&a.final_model)) < 1e-6);
    }
}
