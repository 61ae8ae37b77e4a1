use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_biorefinery");

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel).display().to_string()
}

/// Writes a tiny-profile config with absolute paths plus `extra` lines.
fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "problem = \"tiny\"\nnetwork = \"{}\"\nequipment = \"{}\"\ninventory = \"{}\"\ndistributions = \"{}\"\n\
         sequence = \"{}\"\nhorizon = 8\nperiod_minutes = 2.0\ntau_minutes = 8.0\nsamples = 20\neval_samples = 2000\n\
         replications = 2\noutput = \"{}\"\n{extra}",
        data("tiny_network.csv"),
        data("equipment.txt"),
        data("tiny_inventory.csv"),
        data("distributions"),
        data("sequences/tiny.txt"),
        dir.join("out").display(),
    );
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("BIOREFINERY_BACKEND_PATH").env_remove("BIOREFINERY_POOL_SIZE");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_succeeds_and_usage_errors_are_config_errors() {
    assert_eq!(run(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"], &[]).status.code(), Some(3));
    assert_eq!(run(&["solve"], &[]).status.code(), Some(3));
}

#[test]
fn missing_or_malformed_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve", "/no/such/file.toml"], &[]).status.code(), Some(3));
    let cfg = tiny_config(dir.path(), "horizn = 4\n");
    let out = run(&["solve", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn bad_pool_size_from_environment_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = run(&["sequence", cfg.to_str().unwrap()], &[("BIOREFINERY_POOL_SIZE", "many")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sequence_prints_the_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = run(&["sequence", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let bales: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && l.contains(',')).collect();
    assert_eq!(bales.len(), 3, "{text}");
}

#[test]
fn build_reports_model_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = run(&["build", cfg.to_str().unwrap(), "--stats", "--variant", "deterministic"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).lines().any(|l| l == "binaries,24"), "{}", stdout(&out));
    let lp = dir.path().join("m.lp");
    let out = run(&["build", cfg.to_str().unwrap(), "--out", lp.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(lp).unwrap().starts_with("\\"));
}

#[test]
fn unsatisfiable_blend_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "variant = \"all-samples\"\nf_star = 0.95\n");
    let out = run(&["solve", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_external_solver_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "backend = \"external\"\n");
    let out = run(&["solve", cfg.to_str().unwrap()], &[("BIOREFINERY_BACKEND_PATH", "/no/such/solver")]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn external_backend_path_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let direct = tiny_config(dir.path(), "variant = \"deterministic\"\n");
    let a = run(&["solve", direct.to_str().unwrap()], &[]);
    assert_eq!(a.status.code(), Some(0));

    let ext_dir = dir.path().join("ext");
    std::fs::create_dir(&ext_dir).unwrap();
    let external = tiny_config(
        &ext_dir,
        "variant = \"deterministic\"\nbackend = \"external\"\nbackend_args = [\"solve-lp\", \"{lp}\", \"{sol}\"]\n",
    );
    let b = run(&["solve", external.to_str().unwrap()], &[("BIOREFINERY_BACKEND_PATH", BIN)]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn report_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let ran = run(&["run", cfg.to_str().unwrap()], &[("BIOREFINERY_POOL_SIZE", "2")]);
    assert_eq!(ran.status.code(), Some(0), "{}", String::from_utf8_lossy(&ran.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let replications = std::fs::read_to_string(out_dir.join("replications.csv")).unwrap();
    assert_eq!(stdout(&ran), summary);
    for file in ["plot.csv", "ordering.csv", "solutions/rep-000.sol", "penalty/rep-001.csv"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }

    let rep = run(&["report", cfg.to_str().unwrap()], &[]);
    assert_eq!(rep.status.code(), Some(0), "{}", String::from_utf8_lossy(&rep.stderr));
    assert_eq!(stdout(&rep), format!("{summary}{replications}"));
}

#[test]
fn bounds_print_both_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "gamma_hat = 0.15\n");
    let out = run(&["bounds", cfg.to_str().unwrap(), "--kind", "lower"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("kind = lower") && text.contains("samples = 922"), "{text}");
}
