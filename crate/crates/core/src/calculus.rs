//! Derivatives of the Bethe log-partition function.
//!
//! With `mu = m~(theta)` and `gamma = A mu`, the gradient with respect to the
//! parameters is
//!
//! ```text
//! dF~/dtheta_v(x_v) = mu_v(x_v) + sum_{a ∋ v} gamma_av(x_v)
//! dF~/dtheta_a(x_a) = mu_a(x_a)
//! ```
//!
//! Along homogeneous reparameterizations `theta + alpha A`, evaluated at
//! `alpha = 0`, this collapses to
//!
//! ```text
//! dF~/dalpha_av(x_v) = - sum_{b ∋ v, b != a} gamma_bv(x_v)
//! ```
//!
//! so the gradient vanishes exactly when every `gamma` does (for variables
//! in at least two hyperedges), i.e. at BP fixed points. At such points the
//! partial Hessian over `{alpha_av(x_v) : a ∋ v}` for a fixed `(v, x_v)` has
//! zero diagonal and constant off-diagonal `(mu_v(x_v) - 1) mu_v(x_v)`, which
//! is indefinite whenever `n_v >= 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exact::{ExactError, ExactOracle};
use crate::local::{
    beliefs, beliefs_of, bethe_entropy_unchecked, edge_scores, bethe_log_partition, residual, residual_of,
    EntropyForm, ResidualGamma,
};
use crate::model::{shift_pair, Hypergraph, Model, ModelError, TableVector};

/// Default central-difference step for first derivatives.
pub const FIRST_ORDER_STEP: f64 = 1e-5;
/// Default central-difference step for second derivatives.
pub const SECOND_ORDER_STEP: f64 = 1e-4;

/// Smallest step [`dual_stationarity_check`] will shrink to while keeping
/// the perturbed beliefs positive.
const MIN_DIRECTIONAL_STEP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("not a fixed point: max |gamma| = {residual:e} exceeds {tolerance:e}")]
    NotFixedPoint { residual: f64, tolerance: f64 },
    #[error("variable {var} belongs to no hyperedge")]
    NoIncidentEdges { var: usize },
    #[error("variable {var} belongs to a single hyperedge; its residual is not determined by the alpha-gradient")]
    Underdetermined { var: usize },
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("function is not finite near coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("beliefs leave the positive orthant along direction {direction} even at step {step:e}")]
    StepUnderflow { direction: usize, step: f64 },
}

/// `dF~(theta + alpha A)/dalpha` at `alpha = 0`, one table per incidence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGradient {
    pub tables: Vec<Vec<f64>>,
}

impl AlphaGradient {
    pub fn max_abs(&self) -> f64 {
        self.tables.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.tables
            .iter()
            .flatten()
            .zip(other.tables.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Analytic `dF~/dtheta`, indexed like `theta`.
pub fn grad_bethe_wrt_theta(model: &Model) -> TableVector {
    let graph = model.graph();
    let mu = beliefs(model);
    let gamma = residual_of(graph, &mu);
    let mut grad = mu;
    for (index, g) in gamma.tables.iter().enumerate() {
        let var = graph.pair(index).var;
        for (dst, gv) in grad.unary[var].iter_mut().zip(g) {
            *dst += gv;
        }
    }
    grad
}

/// Analytic `dF~(theta + alpha A)/dalpha` at `alpha = 0` from the residual.
pub fn grad_bethe_wrt_alpha(model: &Model) -> AlphaGradient {
    alpha_gradient_from_residual(model.graph(), &residual(model))
}

fn alpha_gradient_from_residual(graph: &Hypergraph, gamma: &ResidualGamma) -> AlphaGradient {
    let tables = graph
        .incidence_pairs()
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let mut out = vec![0.0; graph.domain_size(p.var)];
            for &other in graph.incident_pairs(p.var) {
                if other != index {
                    for (o, g) in out.iter_mut().zip(&gamma.tables[other]) {
                        *o -= g;
                    }
                }
            }
            out
        })
        .collect();
    AlphaGradient { tables }
}

/// The chain-rule route: `sum_{x_a \ v} g_a(x_a) - g_v(x_v)` for a
/// `theta`-gradient `g`. Agrees with [`grad_bethe_wrt_alpha`] when `g` is
/// [`grad_bethe_wrt_theta`].
pub fn alpha_gradient_via_chain_rule(graph: &Hypergraph, theta_grad: &TableVector) -> AlphaGradient {
    let tables = graph
        .incidence_pairs()
        .iter()
        .map(|p| {
            let mut out = graph.marginalize(p.edge, p.position, &theta_grad.higher[p.edge]);
            for (o, g) in out.iter_mut().zip(&theta_grad.unary[p.var]) {
                *o -= g;
            }
            out
        })
        .collect();
    AlphaGradient { tables }
}

/// Inverts the map `gamma -> alpha-gradient` one `(v, x_v)` at a time.
///
/// For a variable in `n >= 2` hyperedges with gradient components `g_a`,
/// `g_a = -(S - gamma_a)` where `S = sum_b gamma_b`, hence
/// `S = -sum_a g_a / (n - 1)` and `gamma_a = g_a + S`. A zero gradient
/// therefore forces a zero residual.
#[allow(clippy::needless_range_loop)]
pub fn residual_from_alpha_gradient(
    graph: &Hypergraph,
    grad: &AlphaGradient,
) -> Result<ResidualGamma, CalculusError> {
    let mut tables: Vec<Vec<f64>> = grad.tables.clone();
    for var in 0..graph.num_vars() {
        let pairs = graph.incident_pairs(var);
        match pairs.len() {
            0 => continue,
            1 => return Err(CalculusError::Underdetermined { var }),
            n => {
                for state in 0..graph.domain_size(var) {
                    let sum: f64 = pairs.iter().map(|&i| grad.tables[i][state]).sum();
                    let total = -sum / (n as f64 - 1.0);
                    for &i in pairs {
                        tables[i][state] = grad.tables[i][state] + total;
                    }
                }
            }
        }
    }
    Ok(ResidualGamma { tables })
}

/// Central differences `(f(x + s e_i) - f(x - s e_i)) / 2s` for every
/// coordinate.
pub fn finite_diff_gradient<F>(f: F, point: &[f64], step: f64) -> Result<Vec<f64>, CalculusError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(CalculusError::InvalidStep(step));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let plus = f(&x);
        x[i] = point[i] - step;
        let minus = f(&x);
        x[i] = point[i];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(CalculusError::NonFinite { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// `F~` as a function of the flattened parameter vector.
pub fn bethe_of_flat_theta(model: &Model) -> impl Fn(&[f64]) -> f64 + '_ {
    move |flat: &[f64]| {
        let theta = model.theta().with_flat(flat);
        bethe_log_partition(&Model::from_parts_unchecked(model.graph().clone(), theta))
    }
}

/// `F~(theta + alpha A)` where `alpha` is zero except for the listed
/// `(pair index, state, value)` coordinates.
pub fn bethe_along_alpha(model: &Model, coords: &[(usize, usize, f64)]) -> f64 {
    bethe_log_partition(model) + bethe_increment_along_alpha(model, coords)
}

/// `F~(theta + alpha A) - F~(theta)` for the same sparse `alpha` as
/// [`bethe_along_alpha`].
///
/// Each local term is updated as `log(sum p exp(delta))` against the
/// current local distribution `p`, so the result carries no round-off from
/// the magnitude of `F~` itself. Finite differences built on it stay
/// accurate when `theta` is large.
pub fn bethe_increment_along_alpha(model: &Model, coords: &[(usize, usize, f64)]) -> f64 {
    let graph = model.graph();
    let mut delta = TableVector::zeros(graph);
    for &(index, state, value) in coords {
        let mut alpha = vec![0.0; graph.domain_size(graph.pair(index).var)];
        alpha[state] = value;
        shift_pair(graph, &mut delta, index, &alpha, 1.0);
    }
    let mu = beliefs_of(graph, model.theta());
    let term = |p: &[f64], d: &[f64]| -> f64 {
        p.iter().zip(d).map(|(p, d)| p * d.exp_m1()).sum::<f64>().ln_1p()
    };
    let vars: f64 = (0..graph.num_vars())
        .filter(|&v| delta.unary[v].iter().any(|&d| d != 0.0))
        .map(|v| (1.0 - graph.degree(v) as f64) * term(&mu.unary[v], &delta.unary[v]))
        .sum();
    let edges: f64 = (0..graph.num_edges())
        .map(|a| term(&mu.higher[a], &edge_scores(graph, &delta, a)))
        .sum();
    vars + edges
}

/// Central-difference `alpha`-gradient, one coordinate at a time.
pub fn finite_diff_alpha_gradient(model: &Model, step: f64) -> Result<AlphaGradient, CalculusError> {
    let graph = model.graph();
    let mut tables = Vec::with_capacity(graph.incidence_pairs().len());
    for (index, p) in graph.incidence_pairs().iter().enumerate() {
        let mut table = Vec::with_capacity(graph.domain_size(p.var));
        for state in 0..graph.domain_size(p.var) {
            let g = finite_diff_gradient(
                |t: &[f64]| bethe_increment_along_alpha(model, &[(index, state, t[0])]),
                &[0.0],
                step,
            )?;
            table.push(g[0]);
        }
        tables.push(table);
    }
    Ok(AlphaGradient { tables })
}

/// The partial Hessian of `F~(theta + alpha A)` over the coordinates
/// `alpha_av(x_v)`, `a ∋ v`, for one fixed `(v, x_v)`. Only valid at BP
/// fixed points.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlock {
    pub var: usize,
    pub state: usize,
    /// Incident hyperedges in listing order; rows and columns follow it.
    pub edges: Vec<usize>,
    pub belief: f64,
    /// `(mu_v(x_v) - 1) mu_v(x_v)`.
    pub off_diagonal: f64,
}

impl HessianBlock {
    pub fn size(&self) -> usize {
        self.edges.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.off_diagonal
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..n).map(|i| (0..n).map(|j| self.entry(i, j)).collect()).collect()
    }

    /// Eigenvalues of `c (J - I)`, ascending: `-c` with multiplicity
    /// `n - 1` and `c (n - 1)` once.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.size();
        if n == 0 {
            return Vec::new();
        }
        let c = self.off_diagonal;
        let mut ev = vec![-c; n - 1];
        ev.push(c * (n as f64 - 1.0));
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `u^T H u` for a vector `u` of length [`Self::size`].
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let n = self.size();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| u[i] * self.entry(i, j) * u[j])
            .sum()
    }
}

fn require_fixed_point(model: &Model, tolerance: f64) -> Result<(), CalculusError> {
    let r = residual(model).max_abs();
    if r > tolerance {
        return Err(CalculusError::NotFixedPoint { residual: r, tolerance });
    }
    Ok(())
}

/// Closed-form Hessian block at a fixed point.
pub fn hessian_block(
    model: &Model,
    var: usize,
    state: usize,
    fixed_point_tol: f64,
) -> Result<HessianBlock, CalculusError> {
    let graph = model.graph();
    if var >= graph.num_vars() {
        return Err(ModelError::NoSuchVariable { var }.into());
    }
    if state >= graph.domain_size(var) {
        return Err(ModelError::StateOutOfRange { var, state, size: graph.domain_size(var) }.into());
    }
    if graph.degree(var) == 0 {
        return Err(CalculusError::NoIncidentEdges { var });
    }
    require_fixed_point(model, fixed_point_tol)?;
    let belief = beliefs(model).unary[var][state];
    Ok(block_from_belief(graph, var, state, belief))
}

fn block_from_belief(graph: &Hypergraph, var: usize, state: usize, belief: f64) -> HessianBlock {
    HessianBlock {
        var,
        state,
        edges: graph
            .incident_pairs(var)
            .iter()
            .map(|&i| graph.pair(i).edge)
            .collect(),
        belief,
        off_diagonal: (belief - 1.0) * belief,
    }
}

/// Second-order central differences of `F~(theta + alpha A)` over the same
/// coordinates as [`hessian_block`]. Valid anywhere, not only at fixed
/// points.
pub fn finite_diff_hessian_block(
    model: &Model,
    var: usize,
    state: usize,
    step: f64,
) -> Result<Vec<Vec<f64>>, CalculusError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(CalculusError::InvalidStep(step));
    }
    let pairs = model.graph().incident_pairs(var).to_vec();
    let f = |coords: &[(usize, usize, f64)]| bethe_increment_along_alpha(model, coords);
    let f0 = 0.0;
    let n = pairs.len();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        let pi = pairs[i];
        let plus = f(&[(pi, state, step)]);
        let minus = f(&[(pi, state, -step)]);
        h[i][i] = (plus - 2.0 * f0 + minus) / (step * step);
        for j in (i + 1)..n {
            let pj = pairs[j];
            let pp = f(&[(pi, state, step), (pj, state, step)]);
            let pm = f(&[(pi, state, step), (pj, state, -step)]);
            let mp = f(&[(pi, state, -step), (pj, state, step)]);
            let mm = f(&[(pi, state, -step), (pj, state, -step)]);
            let v = (pp - pm - mp + mm) / (4.0 * step * step);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    if h.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CalculusError::NonFinite { coordinate: var });
    }
    Ok(h)
}

/// Smallest magnitude a probe value must reach to count as a sign.
pub const PROBE_MAGNITUDE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEntry {
    pub var: usize,
    pub state: usize,
    pub degree: usize,
    pub belief: f64,
    pub off_diagonal: f64,
    /// `u^T H u` with `u` all ones: `c n (n - 1)`.
    pub negative_direction_value: f64,
    /// `w^T H w` with `w = (1, -1, 0, ...)`: `-2c`.
    pub positive_direction_value: f64,
    pub indefinite: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SaddleReport {
    pub entries: Vec<ProbeEntry>,
}

impl SaddleReport {
    pub fn no_qualifying_blocks(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_indefinite(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.indefinite)
    }
}

/// Evaluates two quadratic forms of every Hessian block with `n_v >= 2` and
/// `0 < mu_v(x_v) < 1`; opposite signs certify a saddle.
pub fn saddle_probe(model: &Model, fixed_point_tol: f64) -> Result<SaddleReport, CalculusError> {
    require_fixed_point(model, fixed_point_tol)?;
    let graph = model.graph();
    let mu = beliefs(model);
    let mut entries = Vec::new();
    for var in 0..graph.num_vars() {
        let n = graph.degree(var);
        if n < 2 {
            continue;
        }
        for (state, &belief) in mu.unary[var].iter().enumerate() {
            if !(belief > 0.0 && belief < 1.0) {
                continue;
            }
            let block = block_from_belief(graph, var, state, belief);
            let u = vec![1.0; n];
            let mut w = vec![0.0; n];
            w[0] = 1.0;
            w[1] = -1.0;
            let neg = block.quadratic_form(&u);
            let pos = block.quadratic_form(&w);
            entries.push(ProbeEntry {
                var,
                state,
                degree: n,
                belief,
                off_diagonal: block.off_diagonal,
                negative_direction_value: neg,
                positive_direction_value: pos,
                indefinite: neg <= -PROBE_MAGNITUDE && pos >= PROBE_MAGNITUDE,
            });
        }
    }
    Ok(SaddleReport { entries })
}

/// Per-direction values of `|grad_nu H~(mu) + theta nu|` at `mu = m~(theta)`.
///
/// Directions are differences of exact marginal vectors of random parameter
/// vectors on the same hypergraph, so they satisfy `A nu = 0` and
/// `B nu = 0`. The directional derivative of the counting-form Bethe entropy
/// is taken by central differences.
pub fn dual_stationarity_deviations(
    model: &Model,
    fixed_point_tol: f64,
    num_directions: usize,
    seed: u64,
) -> Result<Vec<f64>, CalculusError> {
    require_fixed_point(model, fixed_point_tol)?;
    let graph = model.graph();
    let oracle = ExactOracle::default();
    let mu = beliefs_of(graph, model.theta());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_directions);
    for direction in 0..num_directions {
        let a = random_model(graph, &mut rng);
        let b = random_model(graph, &mut rng);
        let nu = oracle.marginals(&a)?.sub(&oracle.marginals(&b)?);
        let mut step = FIRST_ORDER_STEP;
        loop {
            let plus = mu.offset(step, &nu);
            let minus = mu.offset(-step, &nu);
            if plus.min_value() > 0.0 && minus.min_value() > 0.0 {
                let hp = bethe_entropy_unchecked(graph, &plus, EntropyForm::Counting);
                let hm = bethe_entropy_unchecked(graph, &minus, EntropyForm::Counting);
                let derivative = (hp - hm) / (2.0 * step);
                out.push((derivative + model.theta().dot(&nu)).abs());
                break;
            }
            step /= 2.0;
            if step < MIN_DIRECTIONAL_STEP {
                return Err(CalculusError::StepUnderflow { direction, step });
            }
        }
    }
    Ok(out)
}

/// `max |grad_nu H~(mu) + theta nu|` over `num_directions` tangent
/// directions; see [`dual_stationarity_deviations`].
pub fn dual_stationarity_check(
    model: &Model,
    fixed_point_tol: f64,
    num_directions: usize,
    seed: u64,
) -> Result<f64, CalculusError> {
    Ok(dual_stationarity_deviations(model, fixed_point_tol, num_directions, seed)?
        .into_iter()
        .fold(0.0, f64::max))
}

fn random_model(graph: &Hypergraph, rng: &mut ChaCha8Rng) -> Model {
    let mut theta = TableVector::zeros(graph);
    for v in theta.values_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    Model::from_parts_unchecked(graph.clone(), theta)
}
