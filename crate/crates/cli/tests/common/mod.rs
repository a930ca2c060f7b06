#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

pub fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Outcome {
    let o = Command::new(env!("CARGO_BIN_EXE_emergence-lab"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("EMERGENCE_LAB_WORKERS")
        .output()
        .expect("binary runs");
    Outcome {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

/// Every output file except `timing.json`, which holds wall-clock times.
pub fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn body(n: usize) -> Value {
    json!({"n_atoms": n, "atom_mass": 1.0, "dim": 1, "lattice_spacing": 1.0})
}

fn spring() -> Value {
    json!({"kind": "harmonic_spring", "stiffness": 1.0, "rest_length": 1.0})
}

pub fn coords_config() -> Value {
    json!({
        "body": body(2), "pair": spring(),
        "external": {"kind": "harmonic", "omega": 1.0},
        "seed": 3,
        "coords": {"n_list": [2, 3, 17, 64], "random_states": 10, "bracket_max_n": 17}
    })
}

pub fn md_config() -> Value {
    json!({
        "body": body(16), "pair": spring(),
        "external": {"kind": "harmonic", "omega": 0.05},
        "integrator": {"dt": null, "n_steps": 3000, "record_stride": 30},
        "scenario": {"kind": "harmonic_trap", "cm_offset": [3.0], "cm_velocity": [0.0], "temperature": 0.01},
        "seed": 5
    })
}

pub fn ensemble_config() -> Value {
    json!({
        "body": body(16), "pair": spring(),
        "external": {"kind": "quartic", "omega": 0.05, "lambda": 1e-5},
        "integrator": {"dt": 0.01, "n_steps": 0},
        "scenario": {"kind": "quartic_trap", "cm_offset": [2.0], "cm_velocity": [0.0], "temperature": 0.01},
        "seed": 11,
        "ensemble": {"n_members": 12, "sample_times": [0.0, 0.3], "n_blocks": 2}
    })
}

pub fn quantum_config() -> Value {
    json!({
        "body": body(2), "pair": spring(),
        "external": {"kind": "quartic", "omega": 1.0, "lambda": 0.1},
        "quantum": {
            "dt": 0.002, "n_steps": 200, "sample_stride": 20,
            "grid": {"points_x": 128, "points_xi": 128, "extent_x": 16.0, "extent_xi": 24.0},
            "initial": {"x0": 1.0, "sigma_x": 0.5, "k0": 0.0, "xi0": 0.0, "sigma_xi": 0.76},
            "energy_tolerance": 1e-4,
            "purity_threshold": 0.99999
        }
    })
}
