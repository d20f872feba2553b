//! The `check` subcommand: each check recomputes an identity two ways and
//! records a verdict per comparison.

use clap::ValueEnum;

use super::report::{CommandReport, Node, Value, Verdict};
use crate::bp::{run_bp, BpConfig, BpResult};
use crate::calculus::{
    alpha_gradient_via_chain_rule, bethe_of_flat_theta, dual_stationarity_deviations,
    finite_diff_alpha_gradient, finite_diff_gradient, finite_diff_hessian_block,
    grad_bethe_wrt_alpha, grad_bethe_wrt_theta, hessian_block, residual_from_alpha_gradient,
    saddle_probe, FIRST_ORDER_STEP, SECOND_ORDER_STEP,
};
use crate::exact::ExactOracle;
use crate::generate::{random_alpha, random_shift, random_theta};
use crate::local::{
    beliefs, bethe_entropy, bethe_log_partition, residual, EntropyForm,
};
use crate::model::{for_each_assignment, HomogeneousReparam, ConstantShift, Model, TableVector};

/// Analytic-vs-numeric agreement for first derivatives.
pub const GRADIENT_REL_TOL: f64 = 1e-6;
/// Agreement of the two analytic routes to the alpha-gradient.
pub const ROUTE_TOL: f64 = 1e-10;
/// Size of the alpha-gradient at a converged fixed point.
pub const STATIONARITY_TOL: f64 = 1e-9;
/// Closed-form Hessian blocks against second differences.
pub const HESSIAN_TOL: f64 = 1e-6;
/// Bethe conjugacy identities.
pub const CONJUGACY_TOL: f64 = 1e-9;
/// `dF~/dtheta = m~(theta)` at fixed points.
pub const FIXED_POINT_GRADIENT_TOL: f64 = 1e-8;
/// Directional stationarity of the Bethe objective.
pub const DUAL_TOL: f64 = 1e-5;
pub const DUAL_DIRECTIONS: usize = 20;
/// Invariance of exact quantities under reparameterization.
pub const INVARIANCE_TOL: f64 = 1e-9;
/// Per-assignment energy preservation and other exact-cancellation checks.
pub const CANCELLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Gradient,
    AlphaGradient,
    Hessian,
    Saddle,
    Fenchel,
    Dual,
    Reparam,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Gradient => "gradient",
            CheckKind::AlphaGradient => "alpha-gradient",
            CheckKind::Hessian => "hessian",
            CheckKind::Saddle => "saddle",
            CheckKind::Fenchel => "fenchel",
            CheckKind::Dual => "dual",
            CheckKind::Reparam => "reparam",
        }
    }
}

/// Implementations a check compares against its oracle. Swapping one out
/// makes a negative control.
#[derive(Debug, Clone, Copy)]
pub struct CheckHooks {
    pub theta_gradient: fn(&Model) -> TableVector,
}

impl Default for CheckHooks {
    fn default() -> Self {
        Self { theta_gradient: grad_bethe_wrt_theta }
    }
}

pub struct CheckContext<'a> {
    pub bp: BpConfig,
    pub oracle: ExactOracle,
    pub seed: u64,
    pub hooks: &'a CheckHooks,
}

/// `|a - b| / max(1, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn max_relative_error(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).fold(0.0, |m, (x, y)| m.max(relative_error(x, y)))
}

pub fn run(
    kind: CheckKind,
    model: &Model,
    ctx: &CheckContext<'_>,
    report: &mut CommandReport,
) -> Result<(), String> {
    match kind {
        CheckKind::Gradient => gradient(model, ctx, report),
        CheckKind::AlphaGradient => alpha_gradient(model, ctx, report),
        CheckKind::Hessian => hessian(model, ctx, report),
        CheckKind::Saddle => saddle(model, ctx, report),
        CheckKind::Fenchel => fenchel(model, ctx, report),
        CheckKind::Dual => dual(model, ctx, report),
        CheckKind::Reparam => reparam(model, ctx, report),
    }
}

fn converge(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<BpResult, String> {
    let result = run_bp(model, &ctx.bp).map_err(|e| e.to_string())?;
    report.results.insert("bp_sweeps", result.sweeps_used);
    report.results.insert("bp_residual", result.final_residual);
    report
        .verdicts
        .push(Verdict::at_most("bp_converged", result.final_residual, ctx.bp.tolerance));
    Ok(result)
}

fn gradient(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let analytic = (ctx.hooks.theta_gradient)(model);
    let fd = finite_diff_gradient(bethe_of_flat_theta(model), &model.theta().to_flat(), FIRST_ORDER_STEP)
        .map_err(|e| e.to_string())?;
    let err = max_relative_error(analytic.values(), fd.iter().copied());
    report.results.insert("theta_gradient_max_rel_error", err);
    report
        .verdicts
        .push(Verdict::at_most("theta_gradient_vs_finite_differences", err, GRADIENT_REL_TOL));

    let oracle = ctx.oracle;
    let exact_f = |flat: &[f64]| {
        let m = Model::from_parts(model.graph().clone(), model.theta().with_flat(flat))
            .expect("finite perturbation");
        oracle.log_partition(&m).unwrap_or(f64::NAN)
    };
    let mu = oracle.marginals(model).map_err(|e| e.to_string())?;
    let fd_exact = finite_diff_gradient(exact_f, &model.theta().to_flat(), FIRST_ORDER_STEP)
        .map_err(|e| e.to_string())?;
    let err = mu
        .values()
        .zip(&fd_exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    report.results.insert("exact_gradient_vs_marginals", err);
    report
        .verdicts
        .push(Verdict::at_most("exact_gradient_vs_marginals", err, GRADIENT_REL_TOL));
    Ok(())
}

fn alpha_gradient(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let graph = model.graph();
    let direct = grad_bethe_wrt_alpha(model);
    let chain = alpha_gradient_via_chain_rule(graph, &grad_bethe_wrt_theta(model));
    let route_gap = direct.max_abs_diff(&chain);
    let fd = finite_diff_alpha_gradient(model, FIRST_ORDER_STEP).map_err(|e| e.to_string())?;
    let fd_err = max_relative_error(
        direct.tables.iter().flatten().copied(),
        fd.tables.iter().flatten().copied(),
    );
    let r = &mut report.results;
    r.insert("input_residual", residual(model).max_abs());
    r.insert("input_alpha_gradient_max_abs", direct.max_abs());
    r.insert("route_gap", route_gap);
    r.insert("finite_difference_max_rel_error", fd_err);
    report.verdicts.push(Verdict::at_most("chain_rule_route_agrees", route_gap, ROUTE_TOL));
    report
        .verdicts
        .push(Verdict::at_most("alpha_gradient_vs_finite_differences", fd_err, GRADIENT_REL_TOL));

    match residual_from_alpha_gradient(graph, &direct) {
        Ok(rec) => {
            let gap = rec
                .tables
                .iter()
                .flatten()
                .zip(residual(model).tables.iter().flatten())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            report.results.insert("residual_reconstruction_gap", gap);
            report
                .verdicts
                .push(Verdict::at_most("residual_determined_by_gradient", gap, CONJUGACY_TOL));
        }
        Err(e) => report.results.insert("residual_reconstruction", e.to_string()),
    }

    let fp = converge(model, ctx, report)?;
    let at_fp = grad_bethe_wrt_alpha(&fp.final_model).max_abs();
    report.results.insert("fixed_point_alpha_gradient_max_abs", at_fp);
    report
        .verdicts
        .push(Verdict::at_most("stationary_at_fixed_point", at_fp, STATIONARITY_TOL));
    Ok(())
}

fn hessian(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let fp = converge(model, ctx, report)?;
    let m = &fp.final_model;
    let g = m.graph();
    let mut worst = 0.0f64;
    let mut blocks = Vec::new();
    for var in (0..g.num_vars()).filter(|&v| g.degree(v) >= 1) {
        for state in 0..g.domain_size(var) {
            let block = hessian_block(m, var, state, f64::INFINITY).map_err(|e| e.to_string())?;
            let fd = finite_diff_hessian_block(m, var, state, SECOND_ORDER_STEP)
                .map_err(|e| e.to_string())?;
            let err = fd
                .iter()
                .flatten()
                .zip(block.to_rows().iter().flatten())
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            worst = worst.max(err);
            blocks.push(Value::Map(
                Node::new()
                    .with("var", var)
                    .with("state", state)
                    .with("size", block.size())
                    .with("off_diagonal", block.off_diagonal)
                    .with("eigenvalues", block.eigenvalues().as_slice())
                    .with("finite_difference_error", err),
            ));
        }
    }
    report.results.insert("blocks", Value::List(blocks));
    report.results.insert("max_block_error", worst);
    report
        .verdicts
        .push(Verdict::at_most("closed_form_vs_finite_differences", worst, HESSIAN_TOL));
    Ok(())
}

fn saddle(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let fp = converge(model, ctx, report)?;
    let probe = saddle_probe(&fp.final_model, f64::INFINITY).map_err(|e| e.to_string())?;
    let entries = probe
        .entries
        .iter()
        .map(|e| {
            Value::Map(
                Node::new()
                    .with("var", e.var)
                    .with("state", e.state)
                    .with("degree", e.degree)
                    .with("belief", e.belief)
                    .with("negative_direction_value", e.negative_direction_value)
                    .with("positive_direction_value", e.positive_direction_value)
                    .with("indefinite", e.indefinite),
            )
        })
        .collect();
    report.results.insert("qualifying_blocks", probe.entries.len());
    report.results.insert("no_qualifying_blocks", probe.no_qualifying_blocks());
    report.results.insert("entries", Value::List(entries));
    report.verdicts.push(Verdict::holds(
        "every_qualifying_block_indefinite",
        probe.entries.iter().all(|e| e.indefinite),
    ));
    Ok(())
}

fn fenchel(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let oracle = ctx.oracle;
    let e = |err: crate::exact::ExactError| err.to_string();
    let f = oracle.log_partition(model).map_err(e)?;
    let other = random_theta(model.graph(), 1.0, ctx.seed);
    let mu_other = oracle.marginals(&other).map_err(e)?;
    let gap = f - oracle.entropy(&other).map_err(e)? - model.theta().dot(&mu_other);
    let kl = oracle.kl(&other, model).map_err(e)?;
    let self_gap = f - oracle.entropy(model).map_err(e)? - model.theta().dot(&oracle.marginals(model).map_err(e)?);
    let r = &mut report.results;
    r.insert("fenchel_gap", gap);
    r.insert("kl_divergence", kl);
    r.insert("fenchel_gap_at_own_marginals", self_gap);
    report.verdicts.push(Verdict::at_least("fenchel_gap_nonnegative", gap, -1e-10));
    report
        .verdicts
        .push(Verdict::at_most("fenchel_gap_equals_kl", (gap - kl).abs(), CONJUGACY_TOL));
    report
        .verdicts
        .push(Verdict::at_most("fenchel_equality_at_own_marginals", self_gap.abs(), CONJUGACY_TOL));

    let kl_gap = bethe_gap(model, EntropyForm::Kl)?;
    let counting_gap = bethe_gap(model, EntropyForm::Counting)?;
    report.results.insert("bethe_gap_kl_form", kl_gap);
    report.results.insert("bethe_gap_counting_form", counting_gap);
    report
        .verdicts
        .push(Verdict::at_most("bethe_equality_kl_form", kl_gap.abs(), CONJUGACY_TOL));

    let fp = converge(model, ctx, report)?;
    let fp_gap = bethe_gap(&fp.final_model, EntropyForm::Counting)?;
    let grad_gap = grad_bethe_wrt_theta(&fp.final_model).max_abs_diff(&beliefs(&fp.final_model));
    report.results.insert("fixed_point_bethe_gap_counting_form", fp_gap);
    report.results.insert("fixed_point_gradient_minus_beliefs", grad_gap);
    report
        .verdicts
        .push(Verdict::at_most("bethe_equality_at_fixed_point", fp_gap.abs(), CONJUGACY_TOL));
    report.verdicts.push(Verdict::at_most(
        "gradient_equals_beliefs_at_fixed_point",
        grad_gap,
        FIXED_POINT_GRADIENT_TOL,
    ));
    Ok(())
}

/// `F~(theta) - H~(m~(theta)) - theta . m~(theta)`.
pub fn bethe_gap(model: &Model, form: EntropyForm) -> Result<f64, String> {
    let mu = beliefs(model);
    let h = bethe_entropy(model.graph(), &mu, form).map_err(|e| e.to_string())?;
    Ok(bethe_log_partition(model) - h - model.theta().dot(&mu))
}

fn dual(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let fp = converge(model, ctx, report)?;
    let deviations = dual_stationarity_deviations(&fp.final_model, f64::INFINITY, DUAL_DIRECTIONS, ctx.seed)
        .map_err(|e| e.to_string())?;
    let worst = deviations.iter().copied().fold(0.0, f64::max);
    report.results.insert("directions", DUAL_DIRECTIONS);
    report.results.insert("deviations", deviations.as_slice());
    report.results.insert("max_deviation", worst);
    report
        .verdicts
        .push(Verdict::at_most("objective_stationary_along_tangents", worst, DUAL_TOL));
    Ok(())
}

fn reparam(model: &Model, ctx: &CheckContext<'_>, report: &mut CommandReport) -> Result<(), String> {
    let oracle = ctx.oracle;
    let e = |err: crate::exact::ExactError| err.to_string();
    let graph = model.graph();
    let alpha = random_alpha(graph, 1.0, ctx.seed);
    let beta = random_shift(graph, 1.0, ctx.seed.wrapping_add(1));
    let no_alpha = HomogeneousReparam::zeros(graph);
    let no_beta = ConstantShift::zeros(graph);
    let homogeneous = model.apply_reparam(&alpha, &no_beta).map_err(|e| e.to_string())?;
    let shifted = model.apply_reparam(&no_alpha, &beta).map_err(|e| e.to_string())?;
    let round_trip = model
        .apply_reparam(&alpha, &beta)
        .and_then(|m| m.apply_reparam(&alpha.negated(), &beta.negated()))
        .map_err(|e| e.to_string())?;

    let f = oracle.log_partition(model).map_err(e)?;
    let f_alpha = oracle.log_partition(&homogeneous).map_err(e)?;
    let f_beta = oracle.log_partition(&shifted).map_err(e)?;
    let mu_gap = oracle
        .marginals(model)
        .map_err(e)?
        .max_abs_diff(&oracle.marginals(&homogeneous).map_err(e)?);
    let mut energy_gap = 0.0f64;
    for_each_assignment(graph, |x| {
        let a = model.energy(x).expect("valid assignment");
        let b = homogeneous.energy(x).expect("valid assignment");
        energy_gap = energy_gap.max((a - b).abs());
    });
    let belief_gap = beliefs(model).max_abs_diff(&beliefs(&shifted));
    let trip_gap = round_trip.theta().max_abs_diff(model.theta());

    let r = &mut report.results;
    r.insert("log_partition_gap", (f_alpha - f).abs());
    r.insert("constant_shift_gap", (f_beta - f - beta.total()).abs());
    r.insert("marginal_gap", mu_gap);
    r.insert("energy_gap", energy_gap);
    r.insert("belief_gap_under_shift", belief_gap);
    r.insert("round_trip_gap", trip_gap);
    let v = &mut report.verdicts;
    v.push(Verdict::at_most("log_partition_invariant", (f_alpha - f).abs(), INVARIANCE_TOL));
    v.push(Verdict::at_most("log_partition_shifts_by_beta", (f_beta - f - beta.total()).abs(), INVARIANCE_TOL));
    v.push(Verdict::at_most("marginals_invariant", mu_gap, INVARIANCE_TOL));
    v.push(Verdict::at_most("energy_preserved", energy_gap, CANCELLATION_TOL));
    v.push(Verdict::at_most("beliefs_invariant_under_shift", belief_gap, CANCELLATION_TOL));
    v.push(Verdict::at_most("round_trip_restores_theta", trip_gap, CANCELLATION_TOL));
    Ok(())
}
