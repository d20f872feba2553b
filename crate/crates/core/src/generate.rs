//! Seeded random models for tests, checks and the guide.
//!
//! All generators draw from a ChaCha8 stream, so a seed pins the model
//! exactly across platforms.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Hypergraph, Model, TableVector};

/// Size and parameter ranges of a random hypergraph model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomShape {
    pub num_vars: usize,
    /// Domain sizes are drawn from `2..=max_domain`.
    pub max_domain: usize,
    pub num_edges: usize,
    /// Arities are drawn from `2..=max_arity`.
    pub max_arity: usize,
    /// Unary entries are uniform in `[-unary_scale, unary_scale]`.
    pub unary_scale: f64,
    /// Hyperedge entries are uniform in `[-coupling_scale, coupling_scale]`.
    pub coupling_scale: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        Self {
            num_vars: 5,
            max_domain: 3,
            num_edges: 5,
            max_arity: 3,
            unary_scale: 1.0,
            coupling_scale: 1.0,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        rng.random_range(-scale..=scale)
    }
}

fn fill(graph: Hypergraph, rng: &mut ChaCha8Rng, unary: f64, coupling: f64) -> Model {
    let mut theta = TableVector::zeros(&graph);
    for t in &mut theta.unary {
        t.iter_mut().for_each(|v| *v = uniform(rng, unary));
    }
    for t in &mut theta.higher {
        t.iter_mut().for_each(|v| *v = uniform(rng, coupling));
    }
    Model::from_parts(graph, theta).expect("generated parameters are finite")
}

/// A random hypergraph with distinct hyperedges. If the requested number of
/// distinct hyperedges cannot be found, fewer are returned.
pub fn random_model(shape: &RandomShape, seed: u64) -> Model {
    assert!(shape.num_vars >= 1 && shape.max_domain >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domains: Vec<usize> = (0..shape.num_vars)
        .map(|_| rng.random_range(2.min(shape.max_domain)..=shape.max_domain))
        .collect();
    let max_arity = shape.max_arity.min(shape.num_vars);
    let mut edges: Vec<Vec<usize>> = Vec::new();
    if max_arity >= 2 {
        let mut attempts = 0;
        while edges.len() < shape.num_edges && attempts < 100 * shape.num_edges.max(1) {
            attempts += 1;
            let k = rng.random_range(2..=max_arity);
            let mut e = sample(&mut rng, shape.num_vars, k).into_vec();
            e.sort_unstable();
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    let graph = Hypergraph::new(domains, edges).expect("generated hypergraph is valid");
    fill(graph, &mut rng, shape.unary_scale, shape.coupling_scale)
}

/// A random model whose variable/hyperedge incidence graph is a forest.
///
/// Each hyperedge joins one already-placed variable with fresh ones, so no
/// cycle can form.
pub fn random_acyclic(
    num_vars: usize,
    max_domain: usize,
    max_arity: usize,
    scale: f64,
    seed: u64,
) -> Model {
    assert!(num_vars >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domains: Vec<usize> = (0..num_vars)
        .map(|_| rng.random_range(2.min(max_domain)..=max_domain))
        .collect();
    let mut edges = Vec::new();
    let mut placed = 1;
    while placed < num_vars {
        let anchor = rng.random_range(0..placed);
        let fresh = rng.random_range(1..=(max_arity.max(2) - 1)).min(num_vars - placed);
        let mut e: Vec<usize> = std::iter::once(anchor).chain(placed..placed + fresh).collect();
        e.sort_unstable();
        edges.push(e);
        placed += fresh;
    }
    let graph = Hypergraph::new(domains, edges).expect("generated hypertree is valid");
    fill(graph, &mut rng, scale, scale)
}

/// A binary `rows x cols` grid with Ising-style parameters:
/// `theta_v(x) = h_v s(x)` and `theta_uv(x, y) = J_uv s(x) s(y)` with
/// `s(0) = 1`, `s(1) = -1`, `J ~ U[-coupling, coupling]` and
/// `h ~ U[-field, field]`.
pub fn ising_grid(rows: usize, cols: usize, coupling: f64, field: f64, seed: u64) -> Model {
    assert!(rows * cols >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(vec![id(r, c), id(r, c + 1)]);
            }
            if r + 1 < rows {
                edges.push(vec![id(r, c), id(r + 1, c)]);
            }
        }
    }
    let graph = Hypergraph::new(vec![2; rows * cols], edges).expect("grid is valid");
    let mut theta = TableVector::zeros(&graph);
    for t in &mut theta.unary {
        let h = uniform(&mut rng, field);
        *t = vec![h, -h];
    }
    for t in &mut theta.higher {
        let j = uniform(&mut rng, coupling);
        *t = vec![j, -j, -j, j];
    }
    Model::from_parts(graph, theta).expect("generated parameters are finite")
}

/// Independent uniform draws in `[-scale, scale]` shaped like `graph`'s
/// incidence pairs.
pub fn random_alpha(graph: &Hypergraph, scale: f64, seed: u64) -> crate::model::HomogeneousReparam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = crate::model::HomogeneousReparam::zeros(graph);
    for v in alpha.alpha.iter_mut().flatten() {
        *v = uniform(&mut rng, scale);
    }
    alpha
}

/// Independent uniform constant shifts in `[-scale, scale]`.
pub fn random_shift(graph: &Hypergraph, scale: f64, seed: u64) -> crate::model::ConstantShift {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = crate::model::ConstantShift::zeros(graph);
    for v in beta.var.iter_mut().chain(beta.edge.iter_mut()) {
        *v = uniform(&mut rng, scale);
    }
    beta
}

/// A random parameter vector on a fixed hypergraph.
pub fn random_theta(graph: &Hypergraph, scale: f64, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill(graph.clone(), &mut rng, scale, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::is_acyclic;

    #[test]
    fn seeds_reproduce() {
        let s = RandomShape::default();
        assert_eq!(random_model(&s, 3), random_model(&s, 3));
        assert_ne!(random_model(&s, 3), random_model(&s, 4));
    }

    #[test]
    fn acyclic_generator_is_acyclic() {
        for seed in 0..50 {
            let m = random_acyclic(8, 4, 3, 1.0, seed);
            assert_eq!(m.num_vars(), 8);
            assert!(is_acyclic(m.graph()), "seed {seed}");
        }
    }

    #[test]
    fn grid_shape() {
        let g = ising_grid(3, 3, 0.2, 0.5, 1);
        assert_eq!(g.num_vars(), 9);
        assert_eq!(g.num_edges(), 12);
        assert_eq!(g.graph().degree(4), 4);
        assert!(!is_acyclic(g.graph()));
    }

    #[test]
    fn random_model_respects_shape() {
        let s = RandomShape { num_vars: 6, num_edges: 7, max_arity: 3, max_domain: 4, ..Default::default() };
        for seed in 0..20 {
            let m = random_model(&s, seed);
            assert_eq!(m.num_edges(), 7);
            assert!(m.graph().edges().iter().all(|e| (2..=3).contains(&e.len())));
            assert!(m.graph().domain_sizes().iter().all(|d| (2..=4).contains(d)));
        }
    }
}
