use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[geometry]
dim = 2
n = 4
topology = "disconnected"
inclusion = { kind = "box", lo = [0.25, 0.25], hi = [0.75, 0.75] }
eps = [0.25]

[coefficients]
sigma_int = 1.0
sigma_out = 1.0
sigma_dis = 3.0

[interface]
alpha = 1.0
beta = 1.0
ell = 0.5

[ionic]
variant = "affine_hh"

[data]
f1 = "sin(3*x1)"
horizon = 0.1

[numerics]
dt = 0.05
macro_n = 8
"#;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bidomain-homog"))
        .current_dir(dir)
        .env_remove("BIDOMAIN_HOMOG_CACHE")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tensors_twice_hits_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("config.toml"), CONFIG).unwrap();
    let first = cli(tmp.path(), &["tensors"]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).starts_with("cache miss"));
    let second = cli(tmp.path(), &["tensors"]);
    assert_eq!(second.status.code(), Some(0));
    assert!(stdout(&second).starts_with("cache hit"));
    assert!(tmp.path().join(".bidomain-cache").is_dir());
    assert!(tmp.path().join("out/tensors.txt").is_file());
}

#[test]
fn run_writes_samples_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("config.toml"), CONFIG).unwrap();
    for solver in ["micro", "macro"] {
        let o = cli(tmp.path(), &["run", "--solver", solver, "--out", "res", "--cache", "c", "--threads", "1"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(tmp.path().join(format!("res/{solver}_t0.100000.csv")).is_file());
        let report = fs::read_to_string(tmp.path().join("res/report.json")).unwrap();
        assert!(report.contains(&format!("\"solver\": \"{solver}\"")));
    }
}

#[test]
fn invalid_config_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("config.toml"), CONFIG.replace("ell = 0.5", "ell = -3.0")).unwrap();
    let o = cli(tmp.path(), &["tensors"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ℓ ≥ −1"));
}

#[test]
fn missing_config_exits_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cli(tmp.path(), &["--config", "nope.toml", "tensors"]);
    assert_eq!(o.status.code(), Some(4));
}
