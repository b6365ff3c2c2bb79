use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const JULIA: &str = r#"{ "seed": 7, "system": { "kind": "julia", "c_re": -3.0, "c_im": 1.0 } }"#;

const TWO_MAP: &str = r#"{
  "seed": 5,
  "system": { "kind": "similarity2d", "maps": [
    { "ratio": 0.3333333333333333, "angle_rad": 1.0, "translation": [0.0, 0.0] },
    { "ratio": 0.3333333333333333, "angle_rad": 1.0, "translation": [1.0, 0.0] } ] },
  "potential": { "kind": "bernoulli", "p": [0.5, 0.5] },
  "sampling": { "depth": 20, "n": 20000 },
  "radii": { "r_max": 0.012345679012345678, "r_min": 0.00015241579027587258, "count": 5 },
  "sweep": { "directions": 8 },
  "eq": { "q": [2, 3], "rotations": 8 }
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn confdim(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confdim"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("CONFDIM_LOG", "error")
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_julia_minus_three_plus_i() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "julia.json", JULIA);
    let out = tmp.path().join("out");
    let o = confdim(&["validate"], &cfg, &out);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}{}", stderr(&o));
    for check in ["A0: f_i(U) in U", "A0: injective", "A0: conformal", "A1: r* < 1", "bounded distortion"] {
        assert!(text.contains(&format!("PASS {check}")), "{check} missing in\n{text}");
    }
    assert!(text.contains("orbit diagnostic consistent-with-dense"), "{text}");
    let m = manifest(&out);
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["subcommand"], "validate");
    for f in m["outputs"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn validate_rejects_julia_zero_and_expanding_maps() {
    let tmp = TempDir::new().unwrap();
    let c0 = write_config(tmp.path(), "c0.json", r#"{ "seed": 1, "system": { "kind": "julia", "c_re": 0.0, "c_im": 0.0 } }"#);
    let o = confdim(&["validate"], &c0, &tmp.path().join("c0"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL julia |c| threshold"));
    let big = write_config(
        tmp.path(),
        "big.json",
        r#"{ "seed": 1, "system": { "kind": "similarity2d", "maps": [
            { "ratio": 1.1, "angle_rad": 0.0, "translation": [0.0, 0.0] },
            { "ratio": 0.5, "angle_rad": 0.0, "translation": [1.0, 0.0] } ] } }"#,
    );
    let o = confdim(&["validate"], &big, &tmp.path().join("big"));
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL A1"));
}

#[test]
fn bad_configs_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("syntax.json", "{ \"seed\": 1,\n  \"system\": { \"kind\": \"julia\" \"c_re\": 1 } }", "line 2"),
        ("unknown.json", r#"{ "seed": 1, "sytem": {} }"#, "sytem"),
        ("noseed.json", r#"{ "system": { "kind": "julia", "c_re": -3.0, "c_im": 1.0 } }"#, "seed"),
        ("depth.json", r#"{ "seed": 1, "system": { "kind": "julia", "c_re": -3.0, "c_im": 1.0 }, "sampling": { "n": 10 } }"#, "depth"),
    ];
    for (name, text, needle) in cases {
        let cfg = write_config(tmp.path(), name, text);
        let o = confdim(&["dimension"], &cfg, &out);
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let cfg = write_config(tmp.path(), "julia.json", JULIA);
    assert_eq!(confdim(&["pressure"], &cfg, &out).status.code(), Some(1), "missing potential block");
    assert_eq!(confdim(&["frobnicate"], &cfg, &out).status.code(), Some(1), "unknown subcommand");
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_byte_identical_and_leave_the_config_alone() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "two_map.json", TWO_MAP);
    for sub in ["pressure", "dimension", "orbit", "sweep", "eq", "distance"] {
        let a = tmp.path().join(format!("{sub}_a"));
        let b = tmp.path().join(format!("{sub}_b"));
        assert_eq!(confdim(&[sub], &cfg, &a).status.code(), Some(0), "{sub}");
        assert_eq!(confdim(&[sub], &cfg, &b).status.code(), Some(0), "{sub}");
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{sub}");
        assert_eq!(manifest(&a)["config_digest"], manifest(&b)["config_digest"]);
    }
    assert_eq!(fs::read_to_string(&cfg).unwrap(), TWO_MAP);
}

#[test]
fn seed_override_changes_samples_and_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "two_map.json", TWO_MAP);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(confdim(&["dimension"], &cfg, &a).status.code(), Some(0));
    assert_eq!(confdim(&["dimension", "--seed", "99"], &cfg, &b).status.code(), Some(0));
    assert_ne!(fs::read(a.join("entropy.csv")).unwrap(), fs::read(b.join("entropy.csv")).unwrap());
    let m = manifest(&b);
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["seed"], 99);
    assert_ne!(manifest(&a)["config_digest"], m["config_digest"]);
}

#[test]
fn manifest_digest_ignores_key_order() {
    let tmp = TempDir::new().unwrap();
    let reordered = r#"{
      "eq": { "rotations": 8, "q": [2, 3] },
      "sweep": { "directions": 8 },
      "radii": { "count": 5, "r_min": 0.00015241579027587258, "r_max": 0.012345679012345678 },
      "sampling": { "n": 20000, "depth": 20 },
      "potential": { "p": [0.5, 0.5], "kind": "bernoulli" },
      "system": { "maps": [
        { "translation": [0.0, 0.0], "angle_rad": 1.0, "ratio": 0.3333333333333333 },
        { "translation": [1.0, 0.0], "angle_rad": 1.0, "ratio": 0.3333333333333333 } ], "kind": "similarity2d" },
      "seed": 5
    }"#;
    let a = write_config(tmp.path(), "a.json", TWO_MAP);
    let b = write_config(tmp.path(), "b.json", reordered);
    let (oa, ob) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(confdim(&["pressure"], &a, &oa).status.code(), Some(0));
    assert_eq!(confdim(&["pressure"], &b, &ob).status.code(), Some(0));
    assert_eq!(manifest(&oa)["config_digest"], manifest(&ob)["config_digest"]);
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "two_map.json", TWO_MAP);
    let first = tmp.path().join("first");
    assert_eq!(confdim(&["dimension", "--seed", "3"], &cfg, &first).status.code(), Some(0));
    let replay = write_config(tmp.path(), "replay.json", &manifest(&first)["config"].to_string());
    let second = tmp.path().join("second");
    assert_eq!(confdim(&["dimension"], &replay, &second).status.code(), Some(0));
    assert_eq!(csv_files(&first), csv_files(&second));
}

#[test]
fn gibbs_check_reports_failed_certificates_with_exit_two() {
    let tmp = TempDir::new().unwrap();
    let bern = write_config(tmp.path(), "bern.json", TWO_MAP);
    let o = confdim(&["gibbs-check"], &bern, &tmp.path().join("bern"));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    // depth-2 Markov weights carry an eigenvector factor the Var_n certificate
    // does not cover
    let markov = TWO_MAP.replace(r#""kind": "bernoulli", "p": [0.5, 0.5]"#, r#""kind": "markov", "table": [[0.0, -1.0], [-0.5, 0.2]]"#);
    let cfg = write_config(tmp.path(), "markov.json", &markov);
    let out = tmp.path().join("markov");
    assert_eq!(confdim(&["gibbs-check"], &cfg, &out).status.code(), Some(2));
    assert!(out.join("sandwich.csv").exists() && out.join("quasi_bernoulli.csv").exists());
}
