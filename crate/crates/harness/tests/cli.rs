use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hostpar"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn every_subcommand_writes_headed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("luchsinger_linear.json");
    for (cmd, file) in [
        ("simulate", "simulate.csv"),
        ("ode", "ode.csv"),
        ("tilde", "tilde.csv"),
        ("couple", "couple.csv"),
    ] {
        let out = tmp.path().join(cmd);
        let o = run(&[cmd, "--replicas", "5", "--n", "40"], &cfg, &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let head = first_line(&out.join(file));
        assert!(head.starts_with("# hostpar "), "{head}");
        assert!(head.contains("config_sha256=") && head.contains("seed=7"), "{head}");
        assert!(out.join("metadata.json").exists());
    }
}

#[test]
fn baseline_only_certifies_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["certify", "--replicas", "20"], &configs().join("baseline_only.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let summary = std::fs::read_to_string(tmp.path().join("certify_summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| l.contains(",pass,")).count(), 12, "{summary}");
}

#[test]
fn halved_envelope_is_a_hard_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["certify"], &configs().join("fault_injection.json"), tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let summary = std::fs::read_to_string(tmp.path().join("certify_summary.csv")).unwrap();
    assert!(summary.contains("moment_bound,hard,"), "{summary}");
}

#[test]
fn invalid_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"model": {"name": "null"}, "initial": {"family": "unit_mass", "load": 0}, "sim": {"n": [10, 5]}}"#,
    )
    .unwrap();
    let o = run(&["simulate"], &bad, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly increasing"));
}

#[test]
fn seed_override_changes_hash_but_not_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("luchsinger_linear.json");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["simulate"], &cfg, &a).status.success());
    assert!(Command::new(env!("CARGO_BIN_EXE_hostpar"))
        .args(["simulate", "--seed", "8", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .status()
        .unwrap()
        .success());
    let (ha, hb) = (first_line(&a.join("simulate.csv")), first_line(&b.join("simulate.csv")));
    assert_ne!(ha, hb);
    let second = |p: &Path| std::fs::read_to_string(p).unwrap().lines().nth(1).unwrap().to_string();
    assert_eq!(second(&a.join("simulate.csv")), second(&b.join("simulate.csv")));
}
