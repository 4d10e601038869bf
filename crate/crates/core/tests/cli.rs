use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{"version": 1, "sim": {"n_cameras": 4, "warmup_slots": 50, "horizon_slots": 300},
    "harness": {"replications": 2}}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoi-sched"))
        .args(args)
        .env_remove("AOI_SCHED_SEED")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(run(&["simulate", "--config", missing.to_str().unwrap()]).status.code(), Some(4));

    let bad_version = write_config(dir.path(), r#"{"version": 2}"#);
    assert_eq!(run(&["simulate", "--config", &bad_version]).status.code(), Some(2));

    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out").to_string_lossy().into_owned();
    let too_large = run(&["simulate", "--config", &cfg, "--omega", "1000", "--out", &out]);
    assert_eq!(too_large.status.code(), Some(2));
    let embedding = run(&["sweep", "--config", &cfg, "--policy", "embedding", "--out", &out]);
    assert_eq!(embedding.status.code(), Some(2));
    assert_eq!(run(&["emit-curves", "--in", dir.path().to_str().unwrap(), "--out", &out]).status.code(), Some(4));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn sweep_then_emit_curves_reproduces_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sweep = run(&[
        "sweep", "--config", &cfg, "--omega-min", "5", "--omega-max", "25", "--step", "10", "--policy", "wait", "--out",
        a.to_str().unwrap(),
    ]);
    assert!(sweep.status.success(), "{}", String::from_utf8_lossy(&sweep.stderr));
    let emit = run(&["emit-curves", "--in", a.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(emit.status.success(), "{}", String::from_utf8_lossy(&emit.stderr));
    for name in ["curves_wait_ge.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("curves_wait_ge.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
