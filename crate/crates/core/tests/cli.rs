use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn isoflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoflow"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("ISOFLOW_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn flow_rank2_matches_closed_form_time() {
    let dir = tempfile::tempdir().unwrap();
    let th: f64 = 0.2617993877991494;
    let out = isoflow(&["flow", "--family", "I2", "--g", "3", "--m", "1", "--theta", "0.2617993877991494"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert!(lines.next().unwrap().starts_with("# version: isoflow "));
    assert_eq!(lines.next().unwrap(), "t,x1,x2,norm_sq,min_wall_gap,radial_residual");
    assert!(last_row(&csv)[4] < 1e-7);

    let report = json(&dir.path().join("collapse.json"));
    let want = (1.0 - (3.0 * th).cos().abs().powf(2.0 / 3.0)) / 6.0;
    assert!((report["T"].as_f64().unwrap() - want).abs() < 1e-8);
    assert_eq!(report["config"]["spec"]["family"], "I2");
    assert!(report["version"].as_str().unwrap().starts_with("isoflow"));
    for key in ["T", "x_limit", "active_walls", "fiber_dim", "rate_estimate", "typeI_estimate", "top_stratum"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn flow_from_minimal_point_collapses_to_origin() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoflow(&["flow", "--family", "B", "--k", "2", "--m1", "1", "--m2", "2", "--initial", "minimal"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("collapse.json"));
    assert!(report["x_limit"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
    assert!((report["T"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-6);
}

#[test]
fn malformed_spec_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    for spec in [r#"{"family":"A","k":2}"#, r#"{"family":"A","k":2,"m":1,"x":3}"#, "not json"] {
        let out = isoflow(&["flow", "--spec", spec], &target);
        assert_eq!(out.status.code(), Some(1), "{spec}");
        assert!(!out.stderr.is_empty());
    }
    assert!(!target.exists());
}

#[test]
fn usage_and_runtime_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoflow(&["flow", "--family", "A", "--k", "2", "--m", "1", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = isoflow(&["flow", "--family", "A", "--k", "2", "--m", "1", "--initial", "1,0,-1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = isoflow(&["collapse", "--family", "A", "--k", "2", "--m", "1", "--t-end", "1e-6"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_isoflow"))
        .args(["minimal", "--family", "A", "--k", "2", "--m", "1"])
        .env("ISOFLOW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn spec_file_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"family":"D","k":4,"m":1}"#).unwrap();
    let a = isoflow(&["collapse", "--spec", spec.to_str().unwrap()], dir.path());
    let b = isoflow(&["collapse", "--family", "D", "--k", "4", "--m", "1"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(serde_json::to_string(&v["config"]["spec"]).unwrap(), r#"{"family":"D","k":4,"m":1}"#);
}

#[test]
fn exact_with_rational_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoflow(&["exact", "--family", "A", "--k", "2", "--m", "1", "--initial=-1/2,-1/4,3/4", "--samples", "8"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("invariants.json"));
    assert_eq!(v["exact"], true);
    // sigma_2 = -|x|^2 / 2 + 3t for A2 with m = 1
    assert_eq!(v["coordinates"][1], serde_json::json!(["-7/16", "3"]));
    let csv = fs::read_to_string(dir.path().join("recovered.csv")).unwrap();
    let first: Vec<f64> = csv.lines().nth(3).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(&first[..4], &[0.0, -0.5, -0.25, 0.75]);
}

#[test]
fn verify_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    let fams: [&[&str]; 2] = [
        &["--family", "A", "--k", "2", "--m", "1"],
        &["--family", "B", "--k", "2", "--m1", "1", "--m2", "2"],
    ];
    for fam in fams {
        let mut args = vec!["verify"];
        args.extend_from_slice(fam);
        let out = isoflow(&args, dir.path());
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(out.status.code(), Some(0), "{text}");
        assert!(text.contains("PASS  exact vs numeric invariants"));
        assert!(!text.contains("FAIL"));
    }
}

#[test]
fn portraits_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("a3", vec!["portrait", "--family", "A", "--k", "3", "--m", "2", "--samples", "120", "--seed", "3"]),
        ("g4", vec!["portrait", "--family", "I2", "--g", "4", "--m1", "1", "--m2", "2"]),
    ] {
        let a = dir.path().join(format!("{name}-a"));
        let b = dir.path().join(format!("{name}-b"));
        assert_eq!(isoflow(&args, &a).status.code(), Some(0));
        assert_eq!(isoflow(&args, &b).status.code(), Some(0));
        for f in ["portrait.csv", "portrait.svg"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{name}/{f}");
        }
        let svg = fs::read_to_string(a.join("portrait.svg")).unwrap();
        assert!(svg.starts_with("<?xml") && svg.contains("<!-- config: {"));
        assert!(svg.contains("<polyline"));
    }
    let csv = fs::read_to_string(dir.path().join("a3-a/portrait.csv")).unwrap();
    let regions: std::collections::BTreeSet<&str> = csv.lines().skip(3).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(regions.into_iter().collect::<Vec<_>>(), ["D1", "D2", "D3"]);
}

#[test]
fn portrait_rejects_other_families() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoflow(&["portrait", "--family", "B", "--k", "3", "--m", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
