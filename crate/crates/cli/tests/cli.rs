use std::process::{Command, Output};

fn verify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verify"))
        .args(args)
        .env_remove("G2VERIFY_SAMPLES")
        .env_remove("G2VERIFY_TOL")
        .output()
        .expect("spawn verify")
}

#[test]
fn flat_passes_with_zero_exit() {
    let out = verify(&["flat", "--samples", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("flat") && l.contains("PASS")));
}

#[test]
fn json_is_reproducible_byte_for_byte() {
    let args = [
        "lauret_GJ",
        "neg_m1_flat",
        "--samples",
        "8",
        "--seed",
        "7",
        "--format",
        "json",
    ];
    let a = verify(&args);
    let b = verify(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["entries"].as_array().unwrap().len(), 2);
    assert!(v["entries"][0].get("wall_ms").is_none());
}

#[test]
fn tiny_tolerance_gives_nonzero_exit() {
    let out = verify(&["lauret_GJ", "--samples", "4", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn env_overrides_defaults() {
    let out = Command::new(env!("CARGO_BIN_EXE_verify"))
        .args(["lauret_GJ", "--format", "json"])
        .env("G2VERIFY_SAMPLES", "3")
        .env("G2VERIFY_TOL", "1e-30")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["samples"], 3);
}

#[test]
fn unknown_id_is_a_usage_error() {
    let out = verify(&["no_such_entry"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_writes_a_model_spec() {
    let out = verify(&["--dump", "lauret_GJ"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = g2verify::Model::from_json(&v).unwrap();
    assert_eq!(m.dim(), 7);
}

#[test]
fn list_shows_every_entry() {
    let out = verify(&["--list"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), g2verify::list_entries().len());
    assert!(text.contains("stretch"));
}
