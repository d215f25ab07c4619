//! End-to-end checks of the `gpme` binary: exit codes, output layout and
//! byte-for-byte reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gpme(args: &[&str], outdir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpme"))
        .args(args)
        .arg("--outdir")
        .arg(outdir)
        .output()
        .expect("failed to launch gpme")
}

fn bare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpme"))
        .args(args)
        .output()
        .expect("failed to launch gpme")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PROBE_RUN: &[&str] = &[
    "run",
    "--model",
    "pme",
    "--m",
    "3",
    "--n",
    "50",
    "--avg",
    "harmonic",
    "--dt-factor",
    "16",
    "--t-end",
    "0.1",
    "--snapshot",
    "0.08",
    "--probe",
    "0.12",
];

#[test]
fn usage_errors_exit_with_code_two() {
    assert_eq!(bare(&[]).status.code(), Some(2));
    assert_eq!(bare(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(bare(&["run", "--n"]).status.code(), Some(2));
    assert_eq!(bare(&["run", "--avg", "geometric"]).status.code(), Some(2));
    assert_eq!(bare(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_configurations_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--avg", "arithmetic", "--mhm"][..],
        &["run", "--avg", "mhm", "--scheme", "be"],
        &["run", "--m", "0.5"],
        &["run", "--n", "2"],
        &["run", "--snapshot", "0.9", "--t-end", "0.5"],
        &["convergence", "--ns", "100,300"],
    ] {
        let o = gpme(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"n": 50, "unknown_key": 1}"#).unwrap();
    let o = gpme(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_explicit_run_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpme(
        &["run", "--m", "3", "--dt-factor", "1", "--t-end", "0.01"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_writes_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpme(PROBE_RUN, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("front-pme3-n50-harmonic-fe");
    for name in [
        "snapshot_t0.08.csv",
        "probe.csv",
        "oscillations.json",
        "predictor.csv",
        "meta.json",
    ] {
        assert!(run.join(name).is_file(), "missing {name}");
    }
    let snapshot = fs::read_to_string(run.join("snapshot_t0.08.csv")).unwrap();
    let mut lines = snapshot.lines();
    assert_eq!(lines.next(), Some("x,p"));
    assert_eq!(lines.count(), 51);
    assert!(fs::read_to_string(run.join("probe.csv"))
        .unwrap()
        .starts_with("t,p\n"));
    assert!(fs::read_to_string(run.join("predictor.csv"))
        .unwrap()
        .starts_with("t,min_effective_diffusion,n_violating_nodes\n"));

    let osc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("oscillations.json")).unwrap()).unwrap();
    assert!(osc["n_minima"].as_u64().unwrap() >= 3);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["dt_factor"], 16.0);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(meta["files"].as_object().unwrap().len(), 4);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = gpme(PROBE_RUN, d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let id = "front-pme3-n50-harmonic-fe";
    for name in [
        "snapshot_t0.08.csv",
        "probe.csv",
        "oscillations.json",
        "predictor.csv",
    ] {
        let x = fs::read(a.path().join(id).join(name)).unwrap();
        let y = fs::read(b.path().join(id).join(name)).unwrap();
        assert!(x == y, "{name} differs between reruns");
    }
    let meta = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join(id).join("meta.json")).unwrap()).unwrap()
    };
    assert_eq!(meta(a.path())["config_hash"], meta(b.path())["config_hash"]);
    assert_eq!(meta(a.path())["files"], meta(b.path())["files"]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"m": 2.0, "n": 20, "averaging": "arithmetic", "t_end": 0.01, "run_id": "from-file"}"#,
    )
    .unwrap();
    let o = gpme(
        &["run", "--config", cfg.to_str().unwrap(), "--n", "40"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("from-file/meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["n"], 40);
    assert_eq!(meta["config"]["m"], 2.0);
    assert_eq!(meta["config"]["averaging"], "arithmetic");
    assert_eq!(meta["config"]["dt_factor"], 8.0);
}

#[test]
fn tlp_harmonic_run_locks() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpme(&["run", "--preset", "tlp", "--avg", "harmonic"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("tlp-pme3-n50-harmonic-fe/meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["config"]["t_end"], 0.7);
    let moved = meta["final_front"].as_f64().unwrap() - meta["initial_front"].as_f64().unwrap();
    assert!(moved < 0.05, "harmonic front moved {moved}");
}

#[test]
fn compare_overlays_schemes_on_one_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpme(
        &[
            "compare",
            "--m",
            "3",
            "--n",
            "50",
            "--avgs",
            "arithmetic,harmonic,mhm",
            "--t-end",
            "0.02",
            "--snapshot",
            "0.02",
            "--probe",
            "0.12",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir.path().join("compare-front-pme3-n50");
    let snap = fs::read_to_string(root.join("compare_snapshot_t0.02.csv")).unwrap();
    assert!(snap.starts_with("x,arithmetic-fe,harmonic-fe,mhm-fe\n"));
    assert_eq!(snap.lines().count(), 52);
    let probe = fs::read_to_string(root.join("compare_probe.csv")).unwrap();
    assert!(probe.starts_with("t,arithmetic-fe,harmonic-fe,mhm-fe\n"));
    for variant in ["arithmetic-fe", "harmonic-fe", "mhm-fe"] {
        assert!(root.join(variant).join("meta.json").is_file());
    }

    // step sizes differ, so the probe falls back to per-variant time columns
    let o = gpme(
        &[
            "compare",
            "--m",
            "3",
            "--n",
            "50",
            "--schemes",
            "fe,be,rk2",
            "--t-end",
            "0.04",
            "--probe",
            "0.12",
            "--run-id",
            "temporal",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let probe = fs::read_to_string(dir.path().join("temporal/compare_probe.csv")).unwrap();
    assert!(probe.starts_with(
        "t_harmonic-fe,p_harmonic-fe,t_harmonic-be,p_harmonic-be,t_harmonic-rk2,p_harmonic-rk2\n"
    ));
}

#[test]
fn convergence_on_locking_problem_uses_exact_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpme(
        &[
            "convergence",
            "--preset",
            "tlp",
            "--ns",
            "50,100",
            "--schemes",
            "harmonic,mhm",
            "--t-end",
            "0.2",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir.path().join("convergence-tlp-pme3");
    let csv = fs::read_to_string(root.join("convergence_mhm.csv")).unwrap();
    assert!(csv.starts_with("N,l1,l2,linf\n50,"));
    assert_eq!(csv.lines().count(), 3);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(report["reference"], "exact");
    assert!(report["reports"][0]["order_l2"].is_number());

    let o = gpme(
        &[
            "convergence",
            "--preset",
            "tlp",
            "--ns",
            "50",
            "--schemes",
            "mhm",
            "--t-end",
            "0.2",
            "--run-id",
            "single",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("single/convergence.json")).unwrap(),
    )
    .unwrap();
    assert!(report["reports"][0]["order_l2"].is_null());
}

#[test]
fn mismatched_compare_grids_are_rejected() {
    use gpme::cli::{cmd_compare, RunConfig};
    let dir = tempfile::tempdir().unwrap();
    let a = RunConfig {
        n: 50,
        t_end: Some(0.01),
        ..RunConfig::default()
    };
    let b = RunConfig {
        n: 100,
        t_end: Some(0.01),
        ..RunConfig::default()
    };
    let err = cmd_compare(&[a, b], dir.path(), "mismatch").unwrap_err();
    assert!(matches!(err, gpme::GpmeError::Argument(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}
