use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sada-bench")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[instance]\ndim = 4\nloss = \"squared\"\n\n[method]\nname = \"sada\"\n\n[run]\nn = 4000\n";

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn same_seed_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let traces: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|o| {
            let out = dir.path().join(o);
            let r = bench(&["run", "--config", &cfg, "--seed", "7", "--replicates", "1", "--out", out.to_str().unwrap(), "--quiet"]);
            assert!(r.status.success(), "{}", stderr(&r));
            std::fs::read(out.join("trace.csv")).unwrap()
        })
        .collect();
    assert_eq!(traces[0], traces[1]);
    assert!(traces[0].starts_with(b"samples,excess_risk,stderr,outer_k,wall_time_s\n"));
}

#[test]
fn missing_loss_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[instance]\ndim = 4\n\n[method]\nname = \"sada\"\n");
    let r = bench(&["constants", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("loss"), "{}", stderr(&r));
}

#[test]
fn step_above_the_bound_is_refused_with_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[instance]\ndim = 5\nloss = \"squared\"\n\n[method]\nname = \"sada\"\n");
    let r = bench(&["constants", "--config", &cfg, "--eta", "0.01"]);
    assert_eq!(r.status.code(), Some(2));
    // 1/(16·15) for the identity in five dimensions
    assert!(stderr(&r).contains("0.004166666666666667"), "{}", stderr(&r));
}

#[test]
fn constants_for_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[instance]\ndim = 5\nloss = \"squared\"\n\n[method]\nname = \"sada\"\n");
    let r = bench(&["constants", "--config", &cfg]);
    assert!(r.status.success(), "{}", stderr(&r));
    let out = stdout(&r);
    for line in ["kappa=15", "kappa_tilde=15", "alpha=1", "r_sq=15"] {
        assert!(out.lines().any(|l| l == line), "missing {line} in\n{out}");
    }
    let get = |k: &str| out.lines().find_map(|l| l.strip_prefix(&format!("{k}="))).unwrap().parse::<f64>().unwrap();
    let want = get("eta") / (16.0 * get("kappa_tilde"));
    assert!((get("theta_gamma_product") - want).abs() <= 1e-15 * want);
}

#[test]
fn manifest_reruns_to_the_same_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let first = dir.path().join("first");
    let r = bench(&["run", "--config", &cfg, "--seed", "3", "--out", first.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "{}", stderr(&r));
    let manifest = first.join("manifest.txt");
    assert!(std::fs::read_to_string(&manifest).unwrap().contains("seed = 3"));
    let second = dir.path().join("second");
    let r = bench(&["run", "--config", manifest.to_str().unwrap(), "--out", second.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(std::fs::read(first.join("trace.csv")).unwrap(), std::fs::read(second.join("trace.csv")).unwrap());
}

#[test]
fn oracle_check_refuses_large_dimensions() {
    let r = bench(&["oracle-check", "--dim", "9"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("dim"));
}

#[test]
fn oracle_check_passes_at_reduced_budget() {
    let r = bench(&["oracle-check", "--budget", "20000"]);
    assert!(r.status.success(), "{}{}", stdout(&r), stderr(&r));
    assert_eq!(stdout(&r).lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn empty_sweep_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}\n[sweep]\naxis = \"n\"\nn = []\n"));
    let out = dir.path().join("out");
    let r = bench(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert!(stderr(&r).contains("no points"));
}

#[test]
fn method_sweep_writes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}\n[sweep]\naxis = \"method\"\nmethods = [\"sada\", \"sgd\", \"erm\"]\n"));
    let out = dir.path().join("out");
    let r = bench(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "{}", stderr(&r));
    for m in ["sada", "sgd", "erm"] {
        assert!(out.join(format!("method_{m}")).join("trace.csv").exists());
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}typo = 1\n"));
    let r = bench(&["run", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("typo"));
}
