use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LOCKING_LAW: &str = "0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)";
const NESTED_SQRT: &str = "sqrt(1.43*(exp(sqrt(sqrt(exp(0.067*I1)))) + 2.22) + (I1 + I2 - 1.01)/1.87)";
const KEY_VAR: &str = "HYPERLAW_AGENT_API_KEY";
const SENTINEL: &str = "sk-test-sentinel-6e1d0c";

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn hyperlaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperlaw"))
        .args(args)
        .env(KEY_VAR, SENTINEL)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_discover(out: &Path) -> Output {
    let data = data_dir();
    hyperlaw(&[
        "discover",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--iterations",
        "2",
        "--populations",
        "2",
        "--population-size",
        "24",
        "--reproducible",
    ])
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let b = fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), b));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn discover_writes_reproducible_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = small_discover(&a);
    assert!(matches!(code(&first), 0 | 2), "{}", stderr(&first));
    let second = small_discover(&b);
    assert_eq!(code(&first), code(&second));
    for f in ["manifest.json", "front.csv", "front.json", "recommended.json", "search.json", "plots/front.svg", "plots/fit.svg", "plots/hessian.svg"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert_eq!(read_all(&a), read_all(&b));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["started_at"], 0);
    assert_eq!(manifest["rng_seed"], 7);
    assert_eq!(manifest["datasets"].as_array().unwrap().len(), 3);
    assert!(!manifest["skill"]["name"].as_str().unwrap().is_empty());

    let report = hyperlaw(&["report", a.to_str().unwrap()]);
    assert_eq!(code(&report), 0, "{}", stderr(&report));
    let html = fs::read_to_string(a.join("report.html")).unwrap();
    for svg in ["plots/front.svg", "plots/fit.svg", "plots/hessian.svg"] {
        assert!(html.contains(&format!("id=\"{svg}\"")), "{svg} not in report");
    }
    assert!(html.contains("id=\"manifest\""));
    assert!(!html.contains("integrity-warning"));

    for (path, bytes) in read_all(tmp.path()) {
        assert!(!String::from_utf8_lossy(&bytes).contains(SENTINEL), "key leaked into {}", path.display());
    }
}

#[test]
fn report_flags_tampering_and_rejects_empty_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("audit");
    assert_eq!(code(&hyperlaw(&["audit", "--expr", LOCKING_LAW, "--out", out.to_str().unwrap(), "--reproducible"])), 0);
    fs::write(out.join("audit.json"), "{}").unwrap();
    let r = hyperlaw(&["report", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert!(stderr(&r).contains("hash mismatch"));
    assert!(fs::read_to_string(out.join("report.html")).unwrap().contains("integrity-warning"));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&hyperlaw(&["report", empty.to_str().unwrap()])), 1);
    assert_eq!(code(&hyperlaw(&["report", tmp.path().join("missing").to_str().unwrap()])), 1);

    fs::remove_file(out.join("plots/stiffness.svg")).unwrap();
    assert_eq!(code(&hyperlaw(&["report", out.to_str().unwrap()])), 1);
}

#[test]
fn missing_mode_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    for f in ["treloar_ut.csv", "treloar_ps.csv"] {
        fs::copy(data_dir().join(f), data.join(f)).unwrap();
    }
    let o = hyperlaw(&["discover", "--data", data.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ET"), "{}", stderr(&o));
}

#[test]
fn audit_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    let data = data_dir();

    let ok = hyperlaw(&["audit", "--expr", LOCKING_LAW, "--data", data.to_str().unwrap(), "--out", &dir("ok")]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("ok/audit.json")).unwrap()).unwrap();
    assert_eq!(report["audit"]["convexity"], "certified_analytic");
    let min_k = report["stiffness"]["min_ut_stiffness"].as_f64().unwrap();
    assert!((min_k - 0.30).abs() < 0.05, "{min_k}");
    let lock = report["stiffness"]["locking_stretch"]["UT"].as_f64().unwrap();
    assert!((8.6..=8.9).contains(&lock), "{lock}");

    let bad = hyperlaw(&["audit", "--expr", NESTED_SQRT, "--data", data.to_str().unwrap(), "--out", &dir("bad")]);
    assert_eq!(code(&bad), 2);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("bad/audit.json")).unwrap()).unwrap();
    assert_eq!(report["audit"]["convexity"], "violated");
    assert_eq!(report["operators_outside_whitelist"], serde_json::json!(["sqrt"]));

    assert_eq!(code(&hyperlaw(&["audit", "--expr", "0.2*I1 +", "--out", &dir("parse")])), 1);
    assert_eq!(code(&hyperlaw(&["audit", "--baseline", "yeoh3", "--params", "1,2", "--out", &dir("count")])), 1);
    assert_eq!(code(&hyperlaw(&["audit", "--out", &dir("none")])), 1);
}

#[test]
fn ogden_audit_writes_forensic_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ogden");
    let o = hyperlaw(&[
        "audit",
        "--baseline",
        "ogden3",
        "--params",
        "0.6,0.001,-0.01,1.3,5,-3.18",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("forensic.csv")).unwrap();
    let row = table.lines().nth(3).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    let amp: f64 = cols[3].parse().unwrap();
    assert!((340.0..=380.0).contains(&amp), "{amp}");
    assert!(cols[4].parse::<f64>().unwrap() > 1e4);
}

#[test]
fn calibrate_writes_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mr");
    let data = data_dir();
    let o = hyperlaw(&["calibrate", "mooney-rivlin", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--reproducible"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c: serde_json::Value = serde_json::from_slice(&fs::read(out.join("calibration.json")).unwrap()).unwrap();
    assert!(c["parameters"]["c10"].is_f64() && c["parameters"]["c01"].is_f64());
    assert!(c["holdout_mse_per_mode"]["PS"].is_f64());
    assert!(out.join("plots/fit.svg").exists());
}
