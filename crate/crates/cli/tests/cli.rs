use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gpp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GPP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--spec", "constant", "--omega0", "1", "--n", "1000", "--seed", "7",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(gpp(&args, &a).status.success());
    assert!(gpp(&args, &b).status.success());
    for f in ["samples.csv", "radii.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let m = manifest(&a);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["version"].is_string());
}

#[test]
fn different_seed_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(gpp(&["simulate", "--n", "50", "--seed", "1"], &a)
        .status
        .success());
    assert!(gpp(&["simulate", "--n", "50", "--seed", "2"], &b)
        .status
        .success());
    assert_ne!(
        fs::read(a.join("samples.csv")).unwrap(),
        fs::read(b.join("samples.csv")).unwrap()
    );
    assert_ne!(manifest(&a)["config_sha256"], manifest(&b)["config_sha256"]);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"seed": 5, "grid": {"sites": 6}, "simulate": {"n": 40}}"#,
    )
    .unwrap();
    let out = tmp.path().join("o");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--n", "10"];
    assert!(gpp(&args, &out).status.success());
    let m = manifest(&out);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["simulate"]["n"], 10);
    assert_eq!(m["config"]["grid"]["sites"], 6);
    let rows = fs::read_to_string(out.join("samples.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 10 * 6);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("o");
    assert_eq!(gpp(&["simulate", "--n", "5"], &o).status.code(), Some(2));
    assert_eq!(
        gpp(&["simulate", "--seed", "1", "--spec", "nope"], &o)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        gpp(&["simulate", "--seed", "1", "--sites", "1"], &o)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(gpp(&["lift", "--seed", "1"], &o).status.code(), Some(2));
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"sede": 1}"#).unwrap();
    assert_eq!(
        gpp(&["simulate", "--config", bad.to_str().unwrap()], &o)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn scenario_emits_both_figure_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let r = gpp(
        &["scenario43", "--n", "20", "--t0", "10", "--seed", "1"],
        &out,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["figure_normalized.csv", "figure_lifted.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("sample_id,site_index,s,value"));
        assert!(text.lines().count() > 1, "{f} is empty");
    }
    let m = manifest(&out);
    assert_eq!(m["t0"], 10.0);
    assert_eq!(m["n_fields"], 20);
}

#[test]
fn simulate_then_lift() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, l) = (tmp.path().join("g"), tmp.path().join("l"));
    let sim = [
        "simulate",
        "--seed",
        "3",
        "--n",
        "2000",
        "--sites",
        "8",
        "--gp-mu",
        "0",
        "--gp-sigma",
        "1",
        "--gp-gamma",
        "0.2",
    ];
    assert!(gpp(&sim, &g).status.success());
    let input = g.join("generalized.csv");
    let r = gpp(
        &[
            "lift",
            "--input",
            input.to_str().unwrap(),
            "--k",
            "100",
            "--t0",
            "5",
        ],
        &l,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = manifest(&l);
    assert_eq!(m["k"], 100);
    assert!(!m["selected_ids"].as_array().unwrap().is_empty());
    assert!(l.join("lifted.csv").exists() && l.join("norming.json").exists());
}

#[test]
fn battery_and_maxstable_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, m) = (tmp.path().join("d"), tmp.path().join("m"));
    assert!(gpp(
        &[
            "df-battery",
            "--seed",
            "2",
            "--sites",
            "8",
            "--n-mc",
            "2000",
            "--n-oracle",
            "2000"
        ],
        &d
    )
    .status
    .success());
    assert_eq!(
        fs::read_to_string(d.join("battery.csv"))
            .unwrap()
            .lines()
            .count(),
        6
    );
    let args = [
        "maxstable-check",
        "--seed",
        "4",
        "--sites",
        "6",
        "--n",
        "500",
        "--n-rep",
        "500",
        "--t",
        "100",
    ];
    assert!(gpp(&args, &m).status.success());
    let checks: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(m.join("checks.json")).unwrap()).unwrap();
    assert_eq!(checks["doa"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_all_quick_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let r = gpp(&["verify-all", "--quick"], &out);
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert_eq!(r.status.code(), Some(0), "{stdout}");
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("[PASS]")).count(),
        9
    );
    assert!(out.join("figures/figure_lifted.csv").exists());
}
