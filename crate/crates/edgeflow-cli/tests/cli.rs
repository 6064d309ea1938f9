//! End-to-end tests of the `edgeflow` binary: exit codes, manifests,
//! result files, and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edgeflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).expect("manifest.json exists");
    serde_json::from_str(&text).expect("manifest parses")
}

const FEASIBLE_CONE: &str = "\
geometry.f = 1
geometry.link = circle
geometry.link.angle = 0.5235987755982988   # pi/6
";

#[test]
fn audit_flags_the_borderline_sphere_as_a_scientific_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "geometry.f = 2\ngeometry.link = round_sphere\ngeometry.link.radius = 1.0\nscenario = feasibility_audit\n",
    );
    let out = tmp.path().join("run");
    let res = edgeflow(&["audit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let m = manifest(&out);
    assert_eq!(m["pass"], false);
    assert!(m["failure"].as_str().unwrap().contains("infeasible"));
    assert!(m["files"].as_array().unwrap().iter().any(|f| f == "audit.json"));

    let audit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["gap_ok"], false);
    assert_eq!(audit["feasible"], false);
    // lambda_1 = f/r^2 = 2 sits exactly on the borderline lambda_1 > f.
    assert_eq!(audit["lambda1"], 2.0);
}

#[test]
fn audit_passes_on_a_feasible_cone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{FEASIBLE_CONE}scenario = feasibility_audit\n"));
    let out = tmp.path().join("run");
    let res = edgeflow(&["audit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let m = manifest(&out);
    assert_eq!(m["pass"], true);
    assert_eq!(m["manifest_schema"], 1);
    assert_eq!(m["scenario"], "feasibility_audit");
    assert!(m.get("failure").is_none());
    let audit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["feasible"], true);
    // alpha_0 = cot(pi/6) - 1 = sqrt(3) - 1.
    let alpha0 = audit["alpha0"].as_f64().unwrap();
    assert!((alpha0 - (3.0f64.sqrt() - 1.0)).abs() < 1e-12);
}

#[test]
fn config_violations_all_reach_stderr_and_exit_operationally() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "geometry.f = 1\nsolver.alpha = 1.5\nscenario = flow_solve\n",
    );
    let out = tmp.path().join("run");
    let res = edgeflow(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("solver.alpha out of (0,1)"), "{stderr}");
    assert!(stderr.contains("missing geometry.link"), "{stderr}");
    // Even a rejected configuration leaves a manifest naming the reason.
    let m = manifest(&out);
    assert_eq!(m["pass"], false);
    assert!(m["failure"].as_str().unwrap().contains("violation"));
}

#[test]
fn scenario_subcommand_mismatch_is_operational() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{FEASIBLE_CONE}scenario = feasibility_audit\n"));
    let out = tmp.path().join("run");
    let res = edgeflow(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["pass"], false);
    assert!(m["failure"].as_str().unwrap().contains("feasibility_audit"));
}

#[test]
fn flow_solve_writes_all_artifacts_and_reruns_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{FEASIBLE_CONE}\
scenario = flow_solve
solver.t_final = 0.05
grid.n_radial = 16
grid.n_time = 9
"
        ),
    );
    let out1 = tmp.path().join("run1");
    let res = edgeflow(&["flow", "--config", &cfg, "--out", out1.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let m = manifest(&out1);
    assert_eq!(m["pass"], true);
    let files = m["files"].as_array().unwrap();
    for expect in ["trajectory.csv", "iterations.csv", "summary.json"] {
        assert!(files.iter().any(|f| f == expect), "{expect} missing from {files:?}");
        assert!(out1.join(expect).exists());
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["mu"], 0.5);
    assert_eq!(summary["T_final"], 0.05);
    assert!(summary["iters"].as_u64().unwrap() >= 1);

    let trajectory = fs::read_to_string(out1.join("trajectory.csv")).unwrap();
    let mut lines = trajectory.lines();
    assert_eq!(lines.next(), Some("t,x,z_index,u,scal_g_t"));
    // 9 time nodes x 16 radial nodes x 1 angular column.
    assert_eq!(lines.count(), 9 * 16);
    let iterations = fs::read_to_string(out1.join("iterations.csv")).unwrap();
    assert!(iterations.starts_with("iter,diff_norm,ratio\n"));

    // Same config, fresh directory: every result file is byte-identical.
    let out2 = tmp.path().join("run2");
    let res2 = edgeflow(&["flow", "--config", &cfg, "--out", out2.to_str().unwrap()]);
    assert_eq!(res2.status.code(), Some(0));
    for name in ["trajectory.csv", "iterations.csv", "summary.json"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn constant_curvature_preset_matches_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let preset = concat!(env!("CARGO_MANIFEST_DIR"), "/presets/flow_constant_curvature.cfg");
    let out = tmp.path().join("run");
    let res = edgeflow(&["flow", "--config", preset, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    let u_err = summary["sup_u_error_vs_exact"].as_f64().unwrap();
    let scal_err = summary["sup_scal_error_vs_exact"].as_f64().unwrap();
    assert!(u_err <= 1e-4, "u deviates from the closed form by {u_err}");
    assert!(scal_err <= 1e-3, "scal deviates from the closed form by {scal_err}");
}

#[test]
fn kernel_validation_passes_on_the_standard_cone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{FEASIBLE_CONE}scenario = kernel_validation\n"));
    let out = tmp.path().join("run");
    let res = edgeflow(&["kernel", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let m = manifest(&out);
    assert_eq!(m["pass"], true);
    let completeness = fs::read_to_string(out.join("completeness.csv")).unwrap();
    assert!(completeness.starts_with("t,s,integral,defect,refined_defect,panels\n"));
    assert_eq!(completeness.lines().count(), 1 + 4);
    let slopes = fs::read_to_string(out.join("slopes.csv")).unwrap();
    assert_eq!(slopes.lines().count(), 1 + 3);
}

#[test]
fn schauder_ratios_hold_on_a_coarse_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{FEASIBLE_CONE}\
scenario = schauder_ratio
solver.t_final = 0.05
grid.n_radial = 16
grid.n_time = 5
grid.n_link_modes = 3
"
        ),
    );
    let out = tmp.path().join("run");
    let res = edgeflow(&["schauder", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("schauder.csv")).unwrap();
    assert!(csv.starts_with("refinement,ratio_2k_plus_2,ratio_sqrt_t\n"));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn estimate_audit_reports_stable_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{FEASIBLE_CONE}\
scenario = estimate_audit
grid.n_radial = 12
grid.n_time = 7
seed = 20260822
"
        ),
    );
    let out = tmp.path().join("run");
    let res = edgeflow(&["estimates", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let m = manifest(&out);
    assert_eq!(m["pass"], true);
    assert_eq!(m["seed"], 20260822u64 as f64);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"], 12);
    for stat in ["quadratic", "quadratic_lipschitz", "curvature_lipschitz"] {
        assert_eq!(report[stat]["stable"], true, "{stat} not stable: {report}");
        assert!(report[stat]["max_full"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn seed_override_changes_the_recorded_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{FEASIBLE_CONE}\
scenario = estimate_audit
grid.n_radial = 12
grid.n_time = 7
seed = 1
"
        ),
    );
    let out = tmp.path().join("run");
    let res = edgeflow(&[
        "estimates",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(manifest(&out)["seed"], 42);
}

#[test]
fn missing_config_file_exits_operationally() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = edgeflow(&["audit", "--config", "/nonexistent/path.cfg", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    // With --out known, even this failure is recorded in a manifest.
    let m = manifest(&out);
    assert_eq!(m["pass"], false);
}
