//! End-to-end runs of the binary: exit codes, output shapes, byte-identical
//! reruns and schema validity of every JSON report.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn spec(name: &str) -> String {
    format!("{}/../../specs/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scorelab"))
}

fn run(args: &[&str]) -> i32 {
    bin().args(args).output().expect("spawn").status.code().expect("exit code")
}

fn validate(path: &Path) -> Value {
    let schema: Value = serde_json::from_str(scorelab::cli::REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    if let Err(errors) = compiled.validate(&report) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{} fails the schema: {msgs:?}", path.display());
    }
    report
}

fn out(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["--bogus"]), 1);
    assert_eq!(run(&["scan", "--density", &spec("mix2"), "--nonsense"]), 1);
    assert_eq!(run(&["verify", "no-such-claim", "--density", &spec("mix2")]), 1);
    assert_eq!(run(&["verify", "thm1"]), 1);
    assert_eq!(run(&["score-eval", "--density", "/does/not/exist", "--t", "1", "--x", "0"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn help_prints_the_schema() {
    let o = bin().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("\"$schema\"") && text.contains("claim_report"));
    assert!(text.contains("SCORELAB_WORKERS"));
}

#[test]
fn scan_grid_has_200_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (out(&dir, "a.csv"), out(&dir, "b.csv"));
    for p in [&a, &b] {
        let code = run(&["scan", "--density", &spec("mix2"), "--tmin", "1e-4", "--tmax", "10", "--probes", "32", "--out", p.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    let body = std::fs::read(&a).unwrap();
    assert_eq!(body, std::fs::read(&b).unwrap());
    let text = String::from_utf8(body).unwrap();
    assert_eq!(text.lines().count(), 201);
    assert!(text.starts_with("t,sup_lmax_plus_id,inf_lmin,sup_opnorm,argmax_x1,n_probes\n"));
    let meta = validate(&PathBuf::from(format!("{}.json", a.display())));
    assert_eq!(meta["config"]["command"]["per_decade"], 40);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for (k, workers) in ["1", "3"].iter().enumerate() {
        let p = out(&dir, &format!("s{k}.csv"));
        let st = bin()
            .env("SCORELAB_WORKERS", workers)
            .args(["sample", "--density", &spec("mix2"), "--paths", "500", "--steps", "50", "--out", p.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
        bodies.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bin().env("SCORELAB_WORKERS", "zero").args(["probe", "moments"]).status().unwrap().code(), Some(1));
}

#[test]
fn gaussian_one_sided_claim_is_degenerate_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = out(&dir, "g.json");
    assert_eq!(run(&["verify", "thm1", "--density", &spec("gauss"), "--probes", "32", "--out", p.to_str().unwrap()]), 0);
    let r = validate(&p);
    assert_eq!(r["result"]["verdict"], "degenerate: zero series");
    assert_eq!(r["result"]["claim"], "thm1");
}

#[test]
fn failing_verdict_exits_two_and_still_writes() {
    // Compact blow-up on a smooth mixture is unsupported (exit 1). The
    // uniform density's ‖∇s‖ grows like 1/t, failing the −0.5 Lipschitz target.
    let dir = tempfile::tempdir().unwrap();
    let p = out(&dir, "u.json");
    assert_eq!(run(&["verify", "prop-compact", "--density", &spec("mix2"), "--out", p.to_str().unwrap()]), 1);
    let code = run(&["verify", "cor-lipschitz", "--density", &spec("uniform"), "--probes", "32", "--out", p.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(validate(&p)["result"]["verdict"], "fail");
}

#[test]
fn json_reports_validate() {
    let dir = tempfile::tempdir().unwrap();
    let e = out(&dir, "e.json");
    assert_eq!(run(&["score-eval", "--density", &spec("beta05"), "--t", "0.01", "--x", "-0.3", "--order", "3", "--check-fd", "--out", e.to_str().unwrap()]), 0);
    let r = validate(&e);
    assert_eq!(r["result"]["method"], "tilted_quadrature");
    assert_eq!(r["config"]["command"]["quad"]["nodes"], 64);

    let m = out(&dir, "m.json");
    assert_eq!(run(&["probe", "moments", "--out", m.to_str().unwrap()]), 0);
    validate(&m);

    let t = out(&dir, "t.csv");
    assert_eq!(run(&["transport", "--density", &spec("mix2"), "--pairs", "50", "--out", t.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read_to_string(&t).unwrap().lines().count(), 51);
    validate(&PathBuf::from(format!("{}.json", t.display())));

    let cfg = out(&dir, "stab.toml");
    std::fs::write(&cfg, format!("density = \"{}\"\npaths = 400\nsteps = 100\n", spec("mix2"))).unwrap();
    let s = out(&dir, "s.json");
    assert_eq!(run(&["stability", "--config", cfg.to_str().unwrap(), "--out", s.to_str().unwrap()]), 0);
    assert_eq!(validate(&s)["result"]["claim"], "prop-stability");
}
