use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn symla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symla")).args(args).output().expect("spawn symla")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A three-step training config small enough for a debug test run.
fn tiny_config(dir: &Path, kind: &str, env: &str) -> PathBuf {
    let text = format!(
        r#"
[experiment]
name = "tiny-{kind}"
seed = 5
out_dir = "{out}"

[agent]
kind = "{kind}"

[env]
train = [{{ name = "{env}" }}]
lifetime = 20

[es]
sigma = 0.1
population = 4
evals_per_sample = 1
lr = 0.05
outer_steps = 3
checkpoint_every = 1

[meta_test]
runs = 6
lifetime = 20
"#,
        out = dir.join("runs").display()
    );
    let path = dir.join(format!("{kind}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

fn train(cfg: &Path) -> PathBuf {
    let out = symla(&["meta-train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    let path = line.split_whitespace().nth(3).expect("checkpoint path in output");
    PathBuf::from(path)
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "symla", "bandit.easy_dep");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("sigma = 0.1", "sigma = -1.0");
    std::fs::write(&cfg, text).unwrap();
    let out = symla(&["meta-train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("es.sigma"), "{}", stderr(&out));

    let text = std::fs::read_to_string(&cfg).unwrap().replace("sigma = -1.0", "sigma = 0.1\nsigmaa = 1.0");
    std::fs::write(&cfg, text).unwrap();
    let out = symla(&["meta-train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigmaa"), "{}", stderr(&out));
}

#[test]
fn meta_test_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(&tiny_config(dir.path(), "symla", "bandit.easy_dep"));
    let outs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("test{i}"))).collect();
    for o in &outs {
        let r = symla(&["meta-test", "--ckpt", ck.to_str().unwrap(), "--runs", "8", "--out", o.to_str().unwrap()]);
        assert!(r.status.success(), "{}", stderr(&r));
        assert!(stdout(&r).contains("cum regret"));
    }
    for f in ["results.csv", "runs.csv", "curves.csv", "summary.json"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn arms_override_resizes_only_symla() {
    let dir = tempfile::tempdir().unwrap();
    let s = train(&tiny_config(dir.path(), "symla", "bandit.indep_k"));
    let out = dir.path().join("arms");
    let r = symla(&[
        "meta-test", "--ckpt", s.to_str().unwrap(), "--arms", "7", "--runs", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"arms\": 7"), "{summary}");

    let dir = tempfile::tempdir().unwrap();
    let m = train(&tiny_config(dir.path(), "metarnn", "bandit.indep_k"));
    let r = symla(&["meta-test", "--ckpt", m.to_str().unwrap(), "--arms", "7", "--runs", "3"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("cannot be resized"), "{}", stderr(&r));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let ck_full = train(&tiny_config(full.path(), "symla", "bandit.uniform_dep"));

    let part = tempfile::tempdir().unwrap();
    let cfg = tiny_config(part.path(), "symla", "bandit.uniform_dep");
    let short = part.path().join("short.toml");
    std::fs::write(&short, std::fs::read_to_string(&cfg).unwrap().replace("outer_steps = 3", "outer_steps = 1"))
        .unwrap();
    let ck_part = train(&short);
    let r = symla(&["meta-train", "--config", cfg.to_str().unwrap(), "--resume", ck_part.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));

    assert_eq!(std::fs::read(&ck_full).unwrap(), std::fs::read(&ck_part).unwrap());
}

#[test]
fn resume_rejects_other_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(&tiny_config(dir.path(), "symla", "bandit.easy_dep"));
    let other = tiny_config(dir.path(), "metarnn", "bandit.easy_dep");
    let r = symla(&["meta-train", "--config", other.to_str().unwrap(), "--resume", ck.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn sequential_flag_gives_same_checkpoint() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ck_a = train(&tiny_config(a.path(), "metarnn", "bandit.medium_dep"));
    let cfg_b = tiny_config(b.path(), "metarnn", "bandit.medium_dep");
    let r = symla(&["--sequential", "meta-train", "--config", cfg_b.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    let ck_b = PathBuf::from(stdout(&r).split_whitespace().nth(3).unwrap());
    assert_eq!(std::fs::read(ck_a).unwrap(), std::fs::read(ck_b).unwrap());
}

#[test]
fn invariants_quick_passes() {
    let r = symla(&["invariants", "--quick"]);
    assert!(r.status.success(), "{}{}", stdout(&r), stderr(&r));
    assert!(!stdout(&r).contains("FAIL"));
}

#[test]
fn envs_lists_registry() {
    let r = symla(&["envs"]);
    assert!(r.status.success());
    for name in ["bandit.easy_dep", "cartpole", "grid.heart_trap"] {
        assert!(stdout(&r).contains(name), "{name}");
    }
}

#[test]
fn bad_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("x.bin");
    std::fs::write(&bogus, b"not a checkpoint").unwrap();
    let r = symla(&["meta-test", "--ckpt", bogus.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("error:"));
}
