use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn vorwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vorwave"))
        .current_dir(dir)
        .env_remove("VORWAVE_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &[&str] = &["--n-phi", "4", "--n-modes", "16"];

#[test]
fn dispersion_rows_per_sign() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vorwave(tmp.path(), &["dispersion", "--jmax", "16", "--out", "d"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(tmp.path().join("d/dispersion.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.starts_with('-')).count(), 16);
    assert_eq!(rows.len(), 32);
    let m = json(&tmp.path().join("d/manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_then_validate_and_reduce() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut args = vec!["solve", "--epsilon", "1e-2", "--out", "s"];
    args.extend(SMALL);
    assert_eq!(vorwave(dir, &args).status.code(), Some(0));
    let report = json(&dir.join("s/solve_report.json"));
    assert_eq!(report["report"]["converged"], true);

    let out = vorwave(dir, &["validate", "--snapshot", "s/torus.json", "--periods", "2", "--out", "v"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.join("v/validate.json"));
    assert!(v["validation"]["max_deviation"].as_f64().unwrap() < 1e-8);

    assert_eq!(vorwave(dir, &["normalform", "--snapshot", "s/torus.json", "--out", "n"]).status.code(), Some(0));
    let nf = json(&dir.join("n/normalform.json"));
    assert!(nf["max_residual"].as_f64().unwrap() < 1e-8);
    let mu = std::fs::read_to_string(dir.join("n/mu.csv")).unwrap();
    assert_eq!(mu.lines().next(), Some("j,Omega_j,mu_j"));

    // The reduction feeds back into the measure estimate.
    let measure = |ups: &str, out: &str| {
        let o = vorwave(
            dir,
            &[
                "measure", "--normal-form", "n/normalform.json", "--upsilon", ups, "--tau", "1.5", "--ellmax", "4",
                "--jcut", "12", "--grid", "20000", "--out", out,
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        json(&dir.join(out).join("measure.json"))["total"].as_f64().unwrap()
    };
    assert!(measure("5e-2", "m1") < measure("1e-1", "m0"));
}

#[test]
fn identical_config_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for out in ["a", "b"] {
        let mut args = vec!["solve", "--out", out, "--threads", "2"];
        args.extend(SMALL);
        assert_eq!(vorwave(dir, &args).status.code(), Some(0));
    }
    let (a, b) = (json(&dir.join("a/manifest.json")), json(&dir.join("b/manifest.json")));
    assert_eq!(a["artifacts"], b["artifacts"]);
    assert_eq!(a["config_sha256"], b["config_sha256"]);
    assert_eq!(a["threads"], 2);
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.json"), r#"{"physics": {"g": 1, "kappa": 1, "gamma": 0, "depth": "inf", "rho": 2}}"#)
        .unwrap();
    assert_eq!(vorwave(dir, &["dispersion", "--config", "bad.json"]).status.code(), Some(1));
    assert_eq!(vorwave(dir, &["dispersion", "--kappa", "-1"]).status.code(), Some(1));
    assert_eq!(vorwave(dir, &["dispersion", "--threads", "0"]).status.code(), Some(1));
    assert_eq!(vorwave(dir, &["normalform", "--out", "n"]).status.code(), Some(1));
    assert_eq!(vorwave(dir, &["nonsense"]).status.code(), Some(1));
}

#[test]
fn refused_solve_exits_with_two_and_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"solver": {"n_phi": 3, "n_modes": 12, "min_divisor": 10.0}, "torus": {"xi": [1.0, 0.5], "epsilon": 0.01}}"#,
    )
    .unwrap();
    let out = vorwave(dir, &["solve", "--config", "cfg.json", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));
    let f = json(&dir.join("s/failure.json"));
    assert_eq!(f["kind"], "numerical");
    assert!(f["reason"].as_str().unwrap().contains("small divisor"));
    assert_eq!(json(&dir.join("s/manifest.json"))["status"], "failed");
}

#[test]
fn threads_fall_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vorwave"))
        .current_dir(tmp.path())
        .env("VORWAVE_THREADS", "3")
        .args(["dispersion", "--out", "d"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&tmp.path().join("d/manifest.json"))["threads"], 3);
}
