use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbd")).args(args).output().expect("binary runs")
}

fn run_bundled(name: &str, out: &Path) -> Value {
    let o = hbd(&["run", name, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap()
}

fn experiment<'a>(summary: &'a Value, name: &str) -> &'a Value {
    summary["experiments"].as_array().unwrap().iter().find(|e| e["name"] == name).expect("experiment listed")
}

#[test]
fn list_scenarios_is_sorted() {
    let o = hbd(&["list-scenarios"]);
    assert!(o.status.success());
    let names: Vec<String> =
        String::from_utf8(o.stdout).unwrap().lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    assert!(names.len() >= 6);
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn bundled_scenarios_validate() {
    for s in hbd_cli::scenarios::CATALOG {
        let o = hbd(&["validate", s.name]);
        assert!(o.status.success(), "{}: {}", s.name, String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        ("syntax.toml", "name = \"x\"\nversion = [".to_string()),
        ("unknown.toml", hbd_cli::scenarios::find("product-state-flat").unwrap().text.replace("seed = 11", "seed = 11\nbogus = 1")),
        ("masses.toml", hbd_cli::scenarios::find("product-state-flat").unwrap().text.replace("masses = [1.0, 1.0]", "masses = [1.0]")),
    ];
    for (file, text) in cases {
        let path = dir.path().join(file);
        fs::write(&path, text).unwrap();
        let o = hbd(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{file}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
        assert!(!out.exists(), "{file} left artifacts");
    }
    assert_eq!(hbd(&["run", "no-such-scenario"]).status.code(), Some(2));
}

#[test]
fn product_state_is_pure() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_bundled("product-state-flat", dir.path());
    assert_eq!(summary["all_pass"], true);
    let purity = experiment(&summary, "wcond")["metrics"]["purity"].as_f64().unwrap();
    assert!((purity - 1.0).abs() < 1e-6, "{purity}");
    assert_eq!(experiment(&summary, "effective-wave")["metrics"]["present"], true);
    assert!(dir.path().join("run_meta.json").exists());
}

#[test]
fn bell_pair_is_maximally_mixed_and_equivariant() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_bundled("bell-curved-foliation", dir.path());
    let purity = experiment(&summary, "wcond")["metrics"]["purity"].as_f64().unwrap();
    assert!((purity - 0.5).abs() < 1e-3, "{purity}");
    assert_eq!(experiment(&summary, "effective-wave")["metrics"]["present"], false);
    assert_eq!(experiment(&summary, "equivariance")["pass"], true);
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = hbd(&["run", "product-state-flat", "--seed", "99", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 99);
}
