//! Hypergraph Gibbs models in the overcomplete log-domain parameterization.
//!
//! A model is a hypergraph over finite-domain variables together with a
//! parameter vector holding one log-potential table per variable and one per
//! hyperedge. The energy of a joint state `x` is
//!
//! ```text
//! E(x) = sum_v theta_v(x_v) + sum_a theta_a(x_a)
//! ```
//!
//! and the model distribution is `p(x) ∝ exp E(x)`.
//!
//! Hyperedge tables are stored row-major over the ascending variable order,
//! last variable fastest.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model must have at least one variable")]
    NoVariables,
    #[error("expected {expected} domain sizes, got {found}")]
    DomainCount { expected: usize, found: usize },
    #[error("variable {var} has an empty domain")]
    EmptyDomain { var: usize },
    #[error("hyperedge {edge} has arity {arity}; hyperedges need at least two variables")]
    ArityTooSmall { edge: usize, arity: usize },
    #[error("hyperedge {edge} refers to variable {var}, but the model has {num_vars} variables")]
    VariableOutOfRange { edge: usize, var: usize, num_vars: usize },
    #[error("hyperedge {edge} is not strictly ascending")]
    NotAscending { edge: usize },
    #[error("hyperedge {edge} duplicates hyperedge {first}")]
    DuplicateEdge { edge: usize, first: usize },
    #[error("expected {expected} unary tables, got {found}")]
    UnaryCount { expected: usize, found: usize },
    #[error("expected {expected} hyperedge tables, got {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("unary table of variable {var} has {found} entries, expected {expected}")]
    UnaryLength { var: usize, expected: usize, found: usize },
    #[error("table of hyperedge {edge} has {found} entries, expected {expected}")]
    EdgeTableLength { edge: usize, expected: usize, found: usize },
    #[error("non-finite value {value} in unary table of variable {var} at state {state}")]
    NonFiniteUnary { var: usize, state: usize, value: f64 },
    #[error("non-finite value {value} in table of hyperedge {edge} at entry {entry}")]
    NonFiniteEdge { edge: usize, entry: usize, value: f64 },
    #[error("variable {var} does not belong to hyperedge {edge}")]
    NotIncident { edge: usize, var: usize },
    #[error("hyperedge {edge} does not exist")]
    NoSuchEdge { edge: usize },
    #[error("variable {var} does not exist")]
    NoSuchVariable { var: usize },
    #[error("assignment has {found} entries, expected {expected}")]
    AssignmentLength { expected: usize, found: usize },
    #[error("state {state} of variable {var} is outside its domain of size {size}")]
    StateOutOfRange { var: usize, state: usize, size: usize },
    #[error("reparameterization table {index} has {found} entries, expected {expected}")]
    ReparamLength { index: usize, expected: usize, found: usize },
    #[error("reparameterization has {found} tables, expected {expected}")]
    ReparamCount { expected: usize, found: usize },
    #[error("non-finite value in reparameterization table {index}")]
    NonFiniteReparam { index: usize },
}

/// One `(hyperedge, variable)` incidence. `position` is the index of `var`
/// inside the hyperedge's ascending variable list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IncidencePair {
    pub edge: usize,
    pub var: usize,
    pub position: usize,
}

/// Variables, domains and hyperedges, without parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    domain_sizes: Vec<usize>,
    edges: Vec<Vec<usize>>,
    edge_sizes: Vec<usize>,
    strides: Vec<Vec<usize>>,
    pairs: Vec<IncidencePair>,
    pair_offsets: Vec<usize>,
    // per variable: indices into `pairs`, in hyperedge listing order
    incident: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(domain_sizes: Vec<usize>, edges: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        let num_vars = domain_sizes.len();
        if num_vars == 0 {
            return Err(ModelError::NoVariables);
        }
        if let Some(var) = domain_sizes.iter().position(|&d| d == 0) {
            return Err(ModelError::EmptyDomain { var });
        }
        let mut seen = std::collections::HashMap::new();
        for (edge, vars) in edges.iter().enumerate() {
            if vars.len() < 2 {
                return Err(ModelError::ArityTooSmall { edge, arity: vars.len() });
            }
            if let Some(&var) = vars.iter().find(|&&v| v >= num_vars) {
                return Err(ModelError::VariableOutOfRange { edge, var, num_vars });
            }
            if vars.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelError::NotAscending { edge });
            }
            if let Some(&first) = seen.get(vars) {
                return Err(ModelError::DuplicateEdge { edge, first });
            }
            seen.insert(vars.clone(), edge);
        }

        let mut edge_sizes = Vec::with_capacity(edges.len());
        let mut strides = Vec::with_capacity(edges.len());
        let mut pairs = Vec::new();
        let mut pair_offsets = Vec::with_capacity(edges.len());
        let mut incident = vec![Vec::new(); num_vars];
        for (edge, vars) in edges.iter().enumerate() {
            let mut s = vec![0; vars.len()];
            let mut acc = 1usize;
            for (i, &v) in vars.iter().enumerate().rev() {
                s[i] = acc;
                acc *= domain_sizes[v];
            }
            edge_sizes.push(acc);
            strides.push(s);
            pair_offsets.push(pairs.len());
            for (position, &var) in vars.iter().enumerate() {
                incident[var].push(pairs.len());
                pairs.push(IncidencePair { edge, var, position });
            }
        }
        Ok(Self {
            domain_sizes,
            edges,
            edge_sizes,
            strides,
            pairs,
            pair_offsets,
            incident,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.domain_sizes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn domain_sizes(&self) -> &[usize] {
        &self.domain_sizes
    }

    pub fn domain_size(&self, var: usize) -> usize {
        self.domain_sizes[var]
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge(&self, edge: usize) -> &[usize] {
        &self.edges[edge]
    }

    /// Number of joint states of a hyperedge, `|X_a|`.
    pub fn edge_size(&self, edge: usize) -> usize {
        self.edge_sizes[edge]
    }

    /// Number of hyperedges containing `var` (`n_v`).
    pub fn degree(&self, var: usize) -> usize {
        self.incident[var].len()
    }

    /// All incidence pairs: hyperedges in listing order, variables ascending
    /// within each.
    pub fn incidence_pairs(&self) -> &[IncidencePair] {
        &self.pairs
    }

    pub fn pair(&self, index: usize) -> IncidencePair {
        self.pairs[index]
    }

    /// Index of the pair `(edge, var)` in [`Self::incidence_pairs`].
    pub fn pair_index(&self, edge: usize, var: usize) -> Result<usize, ModelError> {
        let vars = self.edges.get(edge).ok_or(ModelError::NoSuchEdge { edge })?;
        let position = vars
            .iter()
            .position(|&u| u == var)
            .ok_or(ModelError::NotIncident { edge, var })?;
        Ok(self.pair_offsets[edge] + position)
    }

    /// Pair indices of the hyperedges containing `var`, in listing order.
    pub fn incident_pairs(&self, var: usize) -> &[usize] {
        &self.incident[var]
    }

    /// Variables with a single-state domain. Permitted but degenerate.
    pub fn degenerate_vars(&self) -> Vec<usize> {
        (0..self.num_vars())
            .filter(|&v| self.domain_sizes[v] == 1)
            .collect()
    }

    /// `prod_v d_v`, saturating.
    pub fn state_space_size(&self) -> u128 {
        self.domain_sizes
            .iter()
            .fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
    }

    /// Position of `x_a` in the hyperedge table for the full assignment `x`.
    pub fn edge_index(&self, edge: usize, x: &[usize]) -> usize {
        self.edges[edge]
            .iter()
            .zip(&self.strides[edge])
            .map(|(&v, &s)| x[v] * s)
            .sum()
    }

    /// State of the variable at `position` within hyperedge table entry `entry`.
    #[inline]
    pub fn edge_state(&self, edge: usize, entry: usize, position: usize) -> usize {
        let v = self.edges[edge][position];
        (entry / self.strides[edge][position]) % self.domain_sizes[v]
    }

    /// Sums a hyperedge table down onto the variable at `position`.
    pub fn marginalize(&self, edge: usize, position: usize, table: &[f64]) -> Vec<f64> {
        let d = self.domain_sizes[self.edges[edge][position]];
        let mut out = vec![0.0; d];
        for (entry, &value) in table.iter().enumerate() {
            out[self.edge_state(edge, entry, position)] += value;
        }
        out
    }

    pub fn check_assignment(&self, x: &[usize]) -> Result<(), ModelError> {
        if x.len() != self.num_vars() {
            return Err(ModelError::AssignmentLength {
                expected: self.num_vars(),
                found: x.len(),
            });
        }
        for (var, (&state, &size)) in x.iter().zip(&self.domain_sizes).enumerate() {
            if state >= size {
                return Err(ModelError::StateOutOfRange { var, state, size });
            }
        }
        Ok(())
    }

    /// Whether `tables` has one table per variable and hyperedge with the
    /// right lengths.
    pub fn check_shape(&self, tables: &TableVector) -> Result<(), ModelError> {
        if tables.unary.len() != self.num_vars() {
            return Err(ModelError::UnaryCount {
                expected: self.num_vars(),
                found: tables.unary.len(),
            });
        }
        if tables.higher.len() != self.num_edges() {
            return Err(ModelError::EdgeCount {
                expected: self.num_edges(),
                found: tables.higher.len(),
            });
        }
        for (var, t) in tables.unary.iter().enumerate() {
            if t.len() != self.domain_sizes[var] {
                return Err(ModelError::UnaryLength {
                    var,
                    expected: self.domain_sizes[var],
                    found: t.len(),
                });
            }
        }
        for (edge, t) in tables.higher.iter().enumerate() {
            if t.len() != self.edge_sizes[edge] {
                return Err(ModelError::EdgeTableLength {
                    edge,
                    expected: self.edge_sizes[edge],
                    found: t.len(),
                });
            }
        }
        Ok(())
    }
}

/// A real vector over the overcomplete index set: one table per variable
/// and one per hyperedge.
///
/// The same layout holds parameters, beliefs, exact marginals, gradients and
/// tangent directions.
#[derive(Debug, Clone, PartialEq)]
pub struct TableVector {
    pub unary: Vec<Vec<f64>>,
    pub higher: Vec<Vec<f64>>,
}

/// Log-potentials `theta`, in nats.
pub type ThetaVector = TableVector;

impl TableVector {
    pub fn zeros(graph: &Hypergraph) -> Self {
        Self {
            unary: graph.domain_sizes.iter().map(|&d| vec![0.0; d]).collect(),
            higher: graph.edge_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.unary.iter().chain(&self.higher).flatten().copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.unary.iter_mut().chain(self.higher.iter_mut()).flatten()
    }

    pub fn len(&self) -> usize {
        self.unary.iter().chain(&self.higher).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().collect()
    }

    /// Refills this vector's tables from a flat slice in [`Self::values`] order.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.len(), "flat vector length mismatch");
        let mut out = self.clone();
        for (dst, &src) in out.values_mut().zip(flat) {
            *dst = src;
        }
        out
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values()
            .zip(other.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `self + t * direction`.
    pub fn offset(&self, t: f64, direction: &Self) -> Self {
        let mut out = self.clone();
        for (dst, d) in out.values_mut().zip(direction.values()) {
            *dst += t * d;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.offset(-1.0, other)
    }

    pub fn min_value(&self) -> f64 {
        self.values().fold(f64::INFINITY, f64::min)
    }
}

/// Coefficients `alpha_av(x_v)` of a homogeneous reparameterization, one
/// table per incidence pair in [`Hypergraph::incidence_pairs`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousReparam {
    pub alpha: Vec<Vec<f64>>,
}

impl HomogeneousReparam {
    pub fn zeros(graph: &Hypergraph) -> Self {
        Self {
            alpha: graph
                .pairs
                .iter()
                .map(|p| vec![0.0; graph.domain_size(p.var)])
                .collect(),
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            alpha: self
                .alpha
                .iter()
                .map(|t| t.iter().map(|v| -v).collect())
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.alpha.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, graph: &Hypergraph) -> Result<(), ModelError> {
        if self.alpha.len() != graph.pairs.len() {
            return Err(ModelError::ReparamCount {
                expected: graph.pairs.len(),
                found: self.alpha.len(),
            });
        }
        for (index, (table, pair)) in self.alpha.iter().zip(&graph.pairs).enumerate() {
            check_unary_table(graph, index, pair.var, table)?;
        }
        Ok(())
    }
}

/// Constants `beta_v`, `beta_a` added to whole tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantShift {
    pub var: Vec<f64>,
    pub edge: Vec<f64>,
}

impl ConstantShift {
    pub fn zeros(graph: &Hypergraph) -> Self {
        Self {
            var: vec![0.0; graph.num_vars()],
            edge: vec![0.0; graph.num_edges()],
        }
    }

    pub fn total(&self) -> f64 {
        self.var.iter().chain(&self.edge).sum()
    }

    pub fn negated(&self) -> Self {
        Self {
            var: self.var.iter().map(|v| -v).collect(),
            edge: self.edge.iter().map(|v| -v).collect(),
        }
    }

    fn check(&self, graph: &Hypergraph) -> Result<(), ModelError> {
        if self.var.len() != graph.num_vars() {
            return Err(ModelError::UnaryCount {
                expected: graph.num_vars(),
                found: self.var.len(),
            });
        }
        if self.edge.len() != graph.num_edges() {
            return Err(ModelError::EdgeCount {
                expected: graph.num_edges(),
                found: self.edge.len(),
            });
        }
        if let Some(index) = self
            .var
            .iter()
            .chain(&self.edge)
            .position(|v| !v.is_finite())
        {
            return Err(ModelError::NonFiniteReparam { index });
        }
        Ok(())
    }
}

fn check_unary_table(
    graph: &Hypergraph,
    index: usize,
    var: usize,
    table: &[f64],
) -> Result<(), ModelError> {
    let expected = graph.domain_size(var);
    if table.len() != expected {
        return Err(ModelError::ReparamLength {
            index,
            expected,
            found: table.len(),
        });
    }
    if table.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteReparam { index });
    }
    Ok(())
}

/// A validated hypergraph together with its parameter vector.
///
/// Models are immutable; every transformation returns a new model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    graph: Hypergraph,
    theta: ThetaVector,
}

impl Model {
    /// Validates and assembles a model.
    pub fn build(
        num_vars: usize,
        domain_sizes: Vec<usize>,
        hyperedges: Vec<Vec<usize>>,
        theta: ThetaVector,
    ) -> Result<Self, ModelError> {
        if domain_sizes.len() != num_vars {
            return Err(ModelError::DomainCount {
                expected: num_vars,
                found: domain_sizes.len(),
            });
        }
        let graph = Hypergraph::new(domain_sizes, hyperedges)?;
        Self::from_parts(graph, theta)
    }

    pub fn from_parts(graph: Hypergraph, theta: ThetaVector) -> Result<Self, ModelError> {
        graph.check_shape(&theta)?;
        for (var, t) in theta.unary.iter().enumerate() {
            if let Some(state) = t.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteUnary { var, state, value: t[state] });
            }
        }
        for (edge, t) in theta.higher.iter().enumerate() {
            if let Some(entry) = t.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteEdge { edge, entry, value: t[entry] });
            }
        }
        Ok(Self { graph, theta })
    }

    /// A model with all-zero parameters.
    pub fn zeros(graph: Hypergraph) -> Self {
        let theta = TableVector::zeros(&graph);
        Self { graph, theta }
    }

    pub(crate) fn from_parts_unchecked(graph: Hypergraph, theta: ThetaVector) -> Self {
        Self { graph, theta }
    }

    pub fn graph(&self) -> &Hypergraph {
        &self.graph
    }

    pub fn theta(&self) -> &ThetaVector {
        &self.theta
    }

    pub fn into_parts(self) -> (Hypergraph, ThetaVector) {
        (self.graph, self.theta)
    }

    /// Same structure, different parameters.
    pub fn with_theta(&self, theta: ThetaVector) -> Result<Self, ModelError> {
        Self::from_parts(self.graph.clone(), theta)
    }

    pub fn num_vars(&self) -> usize {
        self.graph.num_vars()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    pub fn incidence_pairs(&self) -> &[IncidencePair] {
        self.graph.incidence_pairs()
    }

    /// `sum_v theta_v(x_v) + sum_a theta_a(x_a)`, in nats.
    pub fn energy(&self, x: &[usize]) -> Result<f64, ModelError> {
        self.graph.check_assignment(x)?;
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &[usize]) -> f64 {
        let unary: f64 = self.theta.unary.iter().zip(x).map(|(t, &s)| t[s]).sum();
        let higher: f64 = self
            .theta
            .higher
            .iter()
            .enumerate()
            .map(|(a, t)| t[self.graph.edge_index(a, x)])
            .sum();
        unary + higher
    }

    /// Moves the unary function `alpha` from variable `var` into hyperedge
    /// `edge`: `theta_v -= alpha`, `theta_a += alpha`. Energies are unchanged.
    pub fn apply_elementary_reparam(
        &self,
        edge: usize,
        var: usize,
        alpha: &[f64],
    ) -> Result<Self, ModelError> {
        let index = self.graph.pair_index(edge, var)?;
        check_unary_table(&self.graph, index, var, alpha)?;
        let mut theta = self.theta.clone();
        shift_pair(&self.graph, &mut theta, index, alpha, 1.0);
        Ok(Self::from_parts_unchecked(self.graph.clone(), theta))
    }

    /// `theta + alpha A + beta B`.
    pub fn apply_reparam(
        &self,
        alpha: &HomogeneousReparam,
        beta: &ConstantShift,
    ) -> Result<Self, ModelError> {
        alpha.check(&self.graph)?;
        beta.check(&self.graph)?;
        let mut theta = self.theta.clone();
        for (index, table) in alpha.alpha.iter().enumerate() {
            shift_pair(&self.graph, &mut theta, index, table, 1.0);
        }
        for (t, &b) in theta.unary.iter_mut().zip(&beta.var) {
            t.iter_mut().for_each(|v| *v += b);
        }
        for (t, &b) in theta.higher.iter_mut().zip(&beta.edge) {
            t.iter_mut().for_each(|v| *v += b);
        }
        Ok(Self::from_parts_unchecked(self.graph.clone(), theta))
    }
}

/// Applies `scale * alpha` as an elementary reparameterization at pair `index`.
pub(crate) fn shift_pair(
    graph: &Hypergraph,
    theta: &mut ThetaVector,
    index: usize,
    alpha: &[f64],
    scale: f64,
) {
    let pair = graph.pair(index);
    for (t, a) in theta.unary[pair.var].iter_mut().zip(alpha) {
        *t -= scale * a;
    }
    for (entry, t) in theta.higher[pair.edge].iter_mut().enumerate() {
        *t += scale * alpha[graph.edge_state(pair.edge, entry, pair.position)];
    }
}

/// Calls `f` with every joint assignment, row-major with variable 0 slowest.
pub fn for_each_assignment(graph: &Hypergraph, mut f: impl FnMut(&[usize])) {
    let n = graph.num_vars();
    let mut x = vec![0usize; n];
    loop {
        f(&x);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            x[i] += 1;
            if x[i] < graph.domain_size(i) {
                break;
            }
            x[i] = 0;
        }
    }
}
