use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn run(args: &[&str]) -> (Output, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_kahler-radial")).args(args).output().expect("binary runs");
    (out, start.elapsed())
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).expect("valid JSON")
}

#[test]
fn classify_extremal_example() {
    let (out, took) = run(&["classify", "--psi", "y - y^2 + y^3", "--dim", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(took < Duration::from_secs(5));
    let v = json(&out);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["extremal", "kcsck", "ke", "krs", "notes"]);
    let p = &v["extremal"]["params"];
    assert_eq!(
        [p["A"].as_f64(), p["B"].as_f64(), p["C"].as_f64(), p["D"].as_f64()],
        [Some(0.0), Some(0.0), Some(1.0), Some(-1.0)]
    );
    assert_eq!(v["extremal"]["member"], true);
    assert_eq!(v["ke"]["member"], false);
    assert_eq!(v["krs"]["member"], false);
}

#[test]
fn scan_hsc_example() {
    let (out, took) = run(&["scan-hsc", "--psi", "y - y^2 + y^3", "--dim", "2", "--y-range", "0.05:1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(took < Duration::from_secs(5));
    let v = json(&out);
    let brackets = v["brackets"].as_array().unwrap();
    assert_eq!(brackets.len(), 1);
    assert!((brackets[0]["root"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!((brackets[0]["psi_at_root"].as_f64().unwrap() - 7.0 / 27.0).abs() < 1e-12);
}

#[test]
fn potential_flat_example() {
    let (out, took) = run(&["potential", "--psi", "y", "--dim", "2", "--y0", "1", "--t0", "0", "--t-range", "-2:2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(took < Duration::from_secs(5));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,r,y,f,f_prime"));
    let mut count = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (r, f) = (cols[1], cols[3]);
        assert!((f - (r - 1.0)).abs() <= 1e-9 * r.max(1.0), "{line}");
        count += 1;
    }
    assert_eq!(count, 801);
    assert!(!text.contains('\r'));
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        &["oracle", "--psi", "y - y^2 + y^3", "--dim", "2", "--seed", "4"][..],
        &["verify", "--random", "3", "--seed", "9"][..],
        &["rho", "--psi", "y - 0.3*y^2", "--dim", "3", "--format", "csv"][..],
    ] {
        let (a, _) = run(args);
        let (b, _) = run(args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn oracle_command_passes_on_examples() {
    for (psi, dim) in [("y - y^2 + y^3", "2"), ("-y + 12*y^-2 - 12*y^-1 + 6", "3"), ("y - 0.2*y^2", "4")] {
        let (out, _) = run(&["oracle", "--psi", psi, "--dim", dim, "--strict"]);
        let v = json(&out);
        assert_eq!(out.status.code(), Some(0), "{psi}: {v}");
        let reports = v["reports"].as_array().unwrap();
        assert_eq!(reports.len(), 3);
        for r in reports {
            for key in ["quantity", "max_rel_err", "pass", "points"] {
                assert!(r.get(key).is_some(), "{key} missing in {r}");
            }
        }
    }
}

#[test]
fn verify_reports_implications() {
    let (out, _) = run(&["verify", "--psi", "-y + 12*y^-2 - 12*y^-1 + 6", "--dim", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let imps = v["implications"].as_array().unwrap();
    assert!(!imps.is_empty());
    assert!(imps.iter().all(|i| i["status"] != "VIOLATED"));
    assert!(v["classification"]["krs"]["member"].as_bool().unwrap());
}

#[test]
fn strict_exit_codes() {
    // not in any family
    let args = ["classify", "--psi", "y + 0.1*y^4", "--dim", "2"];
    assert_eq!(run(&args).0.status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict).0.status.code(), Some(1));
    // constant rho_3 is a positive result
    let ok = ["rho", "--psi", "0.3333333333333333*y + 0.2*y^-2", "--dim", "3", "--k", "3", "--strict"];
    assert_eq!(run(&ok).0.status.code(), Some(0));
    let no = ["rho", "--psi", "0.3333333333333333*y + 0.2*y^-2", "--dim", "3", "--k", "1", "--strict"];
    assert_eq!(run(&no).0.status.code(), Some(1));
}

#[test]
fn errors_exit_with_two() {
    let (out, _) = run(&["classify", "--psi", "y ^^ 2", "--dim", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("expr"), "{err}");
    assert_eq!(run(&["classify", "--psi", "y"]).0.status.code(), Some(2));
    assert_eq!(run(&["bogus"]).0.status.code(), Some(2));
    assert_eq!(run(&["scan-hsc", "--psi", "y - y^2", "--dim", "1", "--y-range", "0.5:2"]).0.status.code(), Some(2));
    assert_eq!(run(&["classify", "--psi", "y", "--dim", "2", "--format", "csv"]).0.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("kahler-radial-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("rho.json");
    let (out, _) = run(&["rho", "--psi", "y - 0.5*y^2", "--dim", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let rho1 = &v["rho"][0];
    assert_eq!(rho1["constant"], true);
    assert!((rho1["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn curvature_integrates_y_from_anchor() {
    // flat: y = r, so the anchor y0 = 1 at t0 = 0 gives y(|z|^2) = |z|^2
    let (out, _) = run(&["curvature", "--psi", "y", "--dim", "2", "--z", "0.6,0.3i", "--y0", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["y"].as_f64().unwrap() - 0.45).abs() < 1e-10);
    assert!(v["riemann_axis"].is_null());
    let ric = v["ricci"].as_array().unwrap();
    assert!(ric.iter().flat_map(|row| row.as_array().unwrap()).all(|c| c[0].as_f64().unwrap().abs() < 1e-12));
}

#[test]
fn text_format() {
    let (out, _) = run(&["scan-hsc", "--psi", "y - y^2 + y^3", "--dim", "2", "--y-range", "0.05:1", "--format", "text"]);
    let text = stdout(&out);
    assert!(text.contains("count = 1\n"));
    assert!(text.lines().any(|l| l.starts_with("brackets.0.root = 0.333333333")));
}
