use std::path::{Path, PathBuf};

use bethe_bp::cli::format::{parse_model, serialize_model};
use bethe_bp::cli::report::without_wall_time;
use bethe_bp::cli::{run_command, run_command_with, CheckHooks, CommandOutcome, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};
use bethe_bp::calculus::grad_bethe_wrt_theta;
use bethe_bp::model::{Model, TableVector};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> CommandOutcome {
    run_command(std::iter::once("bethe").chain(args.iter().copied()))
}

fn field<'a>(stdout: &'a str, key: &str) -> &'a str {
    let needle = format!("\"{key}\": ");
    let line = stdout
        .lines()
        .find(|l| l.trim_start().starts_with(&needle))
        .unwrap_or_else(|| panic!("no field {key} in\n{stdout}"));
    line.trim_start()[needle.len()..].trim_end_matches(',')
}

fn real(stdout: &str, key: &str) -> f64 {
    field(stdout, key).parse().unwrap()
}

#[test]
fn exact_on_t1() {
    let out = run(&["exact", data("t1.gl").to_str().unwrap()]);
    assert_eq!(out.exit_code, EXIT_PASS, "{}", out.stderr);
    assert_eq!(real(&out.stdout, "log_partition"), 4f64.ln());
    assert!(out.stdout.contains("[5.0000000000000000e-1, 5.0000000000000000e-1]"));
}

#[test]
fn exact_on_edgeless_model() {
    let out = run(&["exact", data("t2.gl").to_str().unwrap()]);
    assert_eq!(out.exit_code, EXIT_PASS);
    assert!((real(&out.stdout, "log_partition") - 3f64.ln()).abs() < 1e-15);
    assert!((real(&out.stdout, "entropy") - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn bp_on_triangle_is_already_converged() {
    let out = run(&["bp", data("l1.gl").to_str().unwrap(), "--tol", "1e-9"]);
    assert_eq!(out.exit_code, EXIT_PASS);
    assert_eq!(field(&out.stdout, "status"), "\"converged\"");
    assert!((real(&out.stdout, "bethe_log_partition") - 8f64.ln()).abs() < 1e-14);
    assert_eq!(field(&out.stdout, "sweeps"), "1");
}

#[test]
fn bp_without_convergence_exits_one() {
    let out = run(&["bp", data("grid3x3.gl").to_str().unwrap(), "--max-sweeps", "1"]);
    assert_eq!(out.exit_code, EXIT_FAIL);
    assert_eq!(field(&out.stdout, "status"), "\"max_sweeps_reached\"");
}

#[test]
fn compare_on_tree_is_exact() {
    let out = run(&["compare", data("t1_corner.gl").to_str().unwrap()]);
    assert_eq!(out.exit_code, EXIT_PASS);
    assert!(real(&out.stdout, "log_partition_abs_error") < 1e-12);
    assert!(real(&out.stdout, "max_belief_error") < 1e-12);
    assert_eq!(field(&out.stdout, "acyclic"), "true");
}

#[test]
fn info_reports_structure() {
    let out = run(&["info", data("grid3x3.gl").to_str().unwrap()]);
    assert_eq!(out.exit_code, EXIT_PASS);
    assert_eq!(field(&out.stdout, "num_vars"), "9");
    assert_eq!(field(&out.stdout, "num_edges"), "12");
    assert_eq!(field(&out.stdout, "2"), "12");
    assert_eq!(field(&out.stdout, "acyclic"), "false");
    assert_eq!(field(&out.stdout, "state_space_size"), "512");
}

#[test]
fn every_check_passes_on_the_grid() {
    for what in ["gradient", "alpha-gradient", "hessian", "saddle", "fenchel", "dual", "reparam"] {
        let out = run(&["check", data("grid3x3.gl").to_str().unwrap(), "--what", what, "--seed", "2"]);
        assert_eq!(out.exit_code, EXIT_PASS, "{what}:\n{}{}", out.stdout, out.stderr);
        assert_eq!(field(&out.stdout, "all_pass"), "true");
    }
}

#[test]
fn saddle_check_on_single_edge_has_no_blocks() {
    let out = run(&["check", data("t1_corner.gl").to_str().unwrap(), "--what", "saddle"]);
    assert_eq!(out.exit_code, EXIT_PASS);
    assert_eq!(field(&out.stdout, "no_qualifying_blocks"), "true");
}

fn perturbed_gradient(model: &Model) -> TableVector {
    let mut g = grad_bethe_wrt_theta(model);
    g.unary[0][0] += 1e-3;
    g
}

#[test]
fn perturbed_gradient_is_caught() {
    let hooks = CheckHooks { theta_gradient: perturbed_gradient };
    let file = data("t1_corner.gl");
    let argv = ["bethe", "check", file.to_str().unwrap(), "--what", "gradient"];
    let bad = run_command_with(argv, &hooks);
    assert_eq!(bad.exit_code, EXIT_FAIL);
    assert_eq!(field(&bad.stdout, "all_pass"), "false");
    let good = run_command(argv);
    assert_eq!(good.exit_code, EXIT_PASS);
}

#[test]
fn unary_hyperedge_is_a_usage_error() {
    let out = run(&["info", data("unary_edge.gl").to_str().unwrap()]);
    assert_eq!(out.exit_code, EXIT_USAGE);
    assert!(out.stderr.contains("line 6"), "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["frobnicate"]).exit_code, EXIT_USAGE);
    assert_eq!(run(&["bp", data("t1.gl").to_str().unwrap(), "--bogus"]).exit_code, EXIT_USAGE);
    assert_eq!(run(&["exact", "/nonexistent.gl"]).exit_code, EXIT_USAGE);
    assert_eq!(run(&["bp", data("t1.gl").to_str().unwrap(), "--damping", "1.5"]).exit_code, EXIT_USAGE);
    assert_eq!(run(&["--help"]).exit_code, EXIT_PASS);
}

#[test]
fn enumeration_cap_needs_force() {
    let file = data("grid3x3.gl");
    let f = file.to_str().unwrap();
    let out = run(&["exact", f, "--cap", "100"]);
    assert_eq!(out.exit_code, EXIT_USAGE);
    assert!(out.stderr.contains("100"));
    assert_eq!(run(&["exact", f, "--cap", "100", "--force"]).exit_code, EXIT_PASS);
}

#[test]
fn reports_are_reproducible() {
    let file = data("grid3x3.gl");
    let args = ["bp", file.to_str().unwrap(), "--schedule", "random", "--seed", "9"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(without_wall_time(&a.stdout), without_wall_time(&b.stdout));
    assert!(a.stdout.contains("\"schedule\": 9"));
}

#[test]
fn golden_files_serialize_idempotently() {
    for name in ["t1.gl", "t2.gl", "l1.gl", "t1_corner.gl", "corner_unary.gl", "grid3x3.gl"] {
        let text = std::fs::read_to_string(data(name)).unwrap();
        let model = parse_model(&text).unwrap();
        let once = serialize_model(&model);
        assert_eq!(parse_model(&once).unwrap(), model, "{name}");
        assert_eq!(serialize_model(&parse_model(&once).unwrap()), once, "{name}");
    }
}
