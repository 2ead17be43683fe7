use std::path::Path;
use std::process::{Command, Output};

use cmeta::symbols::SymbolField;
use cmeta::symplectic_core::ComplexSymplectic;
use cmeta::C64;

fn cmeta(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmeta"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn table_reports_match_and_mismatch_cells() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmeta(&["table", "--name", "annb1", "--t", "0.25", "--out", "t.md"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("| MATCH |"));
    assert!(text.contains("| MISMATCH |"));
    assert_eq!(std::fs::read_to_string(dir.path().join("t.md")).unwrap().trim(), text.trim());
}

#[test]
fn verify_core_passes_and_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmeta(&["verify", "--suite", "core", "--json", "--out", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["environment"]["grid_points"], 512);
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["status"] == "pass"));
    assert!(checks.iter().all(|c| c["status"] != "fail"));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(saved["checks"], v["checks"]);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmeta(&["verify", "--suite", "nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(cmeta(&["verify", "--grid-N", "100"], dir.path()).status.code(), Some(2));
    let missing = cmeta(&["propagate", "--s-file", "absent.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(cmeta(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn identity_propagation_keeps_the_label() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), ComplexSymplectic::identity(1).to_json()).unwrap();
    let o = cmeta(
        &[
            "propagate", "--s-file", "s.json", "--alpha", "0,1", "--z", "0.5,-0.25", "--grid-N", "256", "--grid-L",
            "10", "--out", "prop",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("prop/fit.json")).unwrap()).unwrap();
    let w: Vec<f64> = serde_json::from_value(fit["w"].clone()).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-8 && (w[1] + 0.25).abs() < 1e-8, "{w:?}");
    let beta = &fit["beta"][0];
    assert!((beta[0].as_f64().unwrap()).abs() < 1e-8 && (beta[1].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(dir.path().join("prop/propagated.csv").exists());
    let cmp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("prop/comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["families"].as_array().unwrap().len(), 6);
}

#[test]
fn quantized_identity_round_trips_through_wigner() {
    let dir = tempfile::tempdir().unwrap();
    let h = 0.5;
    std::fs::write(dir.path().join("one.json"), SymbolField::constant(C64::new(1.0, 0.0), h).to_json()).unwrap();
    let grid = ["--grid-N", "128", "--grid-L", "8", "--hbar", "0.5", "--radius", "4"];
    let mut args = vec!["quantize", "--symbol", "one.json", "--alpha", "0,1", "--out", "op.mkop"];
    args.extend(grid);
    let o = cmeta(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("expectation"));
    let o = cmeta(&["wigner", "--operator", "op.mkop", "--out", "w.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let back = SymbolField::read_csv(dir.path().join("w.csv"), h).unwrap();
    // well inside the quadrature disc the Weyl symbol of Op(1) is close to 1
    let v = back.eval(0.0, 0.0);
    assert!((v - 1.0).norm() < 1e-2, "{v}");
}
