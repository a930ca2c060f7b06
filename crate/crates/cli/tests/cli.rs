mod common;

use common::*;
use serde_json::{json, Value};
use tempfile::tempdir;

#[test]
fn small_runs_pass_and_write_summaries() {
    let dir = tempdir().unwrap();
    for (sub, cfg) in [
        ("check-coords", coords_config()),
        ("md", md_config()),
        ("ensemble", ensemble_config()),
        ("quantum", quantum_config()),
    ] {
        let path = write_config(dir.path(), &format!("{sub}.json"), &cfg);
        let out = dir.path().join(sub);
        let r = run(sub, &path, &out, &[]);
        assert_eq!(r.code, 0, "{sub}: {}{}", r.stdout, r.stderr);
        assert!(sub == "ensemble" || r.stdout.contains("PASS"), "{sub}");
        assert!(!r.stdout.contains("FAIL"), "{sub}");
        for f in ["summary.json", "summary.txt", "timing.json"] {
            assert!(out.join(f).is_file(), "{sub}: {f}");
        }
        let summary: Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["command"], sub);
        for check in summary["checks"].as_array().unwrap() {
            assert!(check.get("tolerance").is_some() && check.get("measured").is_some());
        }
    }
}

#[test]
fn unknown_key_is_a_schema_error() {
    let dir = tempdir().unwrap();
    let mut cfg = md_config();
    cfg["integrator"]["dtt"] = json!(0.01);
    let path = write_config(dir.path(), "c.json", &cfg);
    let r = run("md", &path, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("dtt"));

    let mut cfg = md_config();
    cfg["colour"] = json!("red");
    let path = write_config(dir.path(), "c2.json", &cfg);
    assert_eq!(run("md", &path, &dir.path().join("o2"), &[]).code, 2);
}

#[test]
fn single_atom_body_is_rejected() {
    let dir = tempdir().unwrap();
    let mut cfg = md_config();
    cfg["body"]["n_atoms"] = json!(1);
    let path = write_config(dir.path(), "c.json", &cfg);
    let r = run("md", &path, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("n_atoms"));
}

#[test]
fn single_member_ensemble_is_rejected() {
    let dir = tempdir().unwrap();
    let mut cfg = ensemble_config();
    cfg["ensemble"]["n_members"] = json!(1);
    let path = write_config(dir.path(), "c.json", &cfg);
    let r = run("ensemble", &path, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn missing_config_file_is_exit_two() {
    let dir = tempdir().unwrap();
    let r = run("md", &dir.path().join("nope.json"), &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2);
}

#[test]
fn small_quantum_grid_names_the_axis() {
    let dir = tempdir().unwrap();
    let mut cfg = quantum_config();
    cfg["quantum"]["grid"]["extent_x"] = json!(4.0);
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("o");
    let r = run("quantum", &path, &out, &[]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(r.stderr.contains("axis X"), "{}", r.stderr);
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.contains("ERROR"));
}

#[test]
fn runaway_trajectory_is_a_blow_up() {
    let dir = tempdir().unwrap();
    let cfg = json!({
        "body": {"n_atoms": 4, "atom_mass": 1.0, "dim": 1, "lattice_spacing": 1.0},
        "pair": {"kind": "harmonic_spring", "stiffness": 1.0, "rest_length": 1.0},
        "external": {"kind": "quartic", "omega": 0.0, "lambda": 1.0},
        "integrator": {"dt": 0.01, "n_steps": 1000, "record_stride": 10},
        "scenario": {"kind": "quartic_trap", "cm_offset": [0.0], "cm_velocity": [1e4], "temperature": 0.0}
    });
    let path = write_config(dir.path(), "c.json", &cfg);
    let r = run("md", &path, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("step"));
}

#[test]
fn failed_check_is_exit_four() {
    let dir = tempdir().unwrap();
    let mut cfg = md_config();
    cfg["md"] = json!({"energy_tolerance": 1e-15});
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("o");
    let r = run("md", &path, &out, &[]);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("e_total_drift"));
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.contains("FAIL e_total_drift"));
}

#[test]
fn zero_workers_rejected() {
    let dir = tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &ensemble_config());
    assert_eq!(run("ensemble", &path, &dir.path().join("o"), &["--workers", "0"]).code, 2);
}

#[test]
fn workers_fall_back_to_environment() {
    let dir = tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &ensemble_config());
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_emergence-lab"))
        .args(["ensemble", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .env("EMERGENCE_LAB_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let dir = tempdir().unwrap();
    for (sub, cfg) in [
        ("check-coords", coords_config()),
        ("md", md_config()),
        ("ensemble", ensemble_config()),
        ("quantum", quantum_config()),
    ] {
        let path = write_config(dir.path(), &format!("{sub}.json"), &cfg);
        let runs: Vec<_> = [["--workers", "1"], ["--workers", "1"], ["--workers", "4"]]
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let out = dir.path().join(format!("{sub}-{k}"));
                assert_eq!(run(sub, &path, &out, w).code, 0, "{sub}");
                outputs(&out)
            })
            .collect();
        assert!(runs[0].len() >= 2);
        assert_eq!(runs[0], runs[1], "{sub}: repeat");
        assert_eq!(runs[0], runs[2], "{sub}: workers");
    }
}

#[test]
fn seed_override_changes_results_and_is_recorded() {
    let dir = tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &ensemble_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("ensemble", &path, &a, &[]).code, 0);
    assert_eq!(run("ensemble", &path, &b, &["--seed", "12345"]).code, 0);
    let ea = std::fs::read(a.join("ensemble.csv")).unwrap();
    let eb = std::fs::read(b.join("ensemble.csv")).unwrap();
    assert_ne!(ea, eb);
    let s: Value = serde_json::from_slice(&std::fs::read(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["seed"], 12345);
}

#[test]
fn config_hash_ignores_output_location() {
    let dir = tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &md_config());
    let mut with_dir = md_config();
    with_dir["output_dir"] = json!(dir.path().join("elsewhere"));
    let path2 = write_config(dir.path(), "c2.json", &with_dir);
    let a = run("md", &path, &dir.path().join("a"), &[]);
    let b = run("md", &path2, &dir.path().join("b"), &[]);
    let first = |s: &str| s.lines().next().unwrap().to_string();
    assert_eq!(first(&a.stdout), first(&b.stdout));
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        emergence_cli::ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
