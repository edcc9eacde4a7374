use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn adamve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adamve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_eval_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# short threeroom run\nmodel = threeroom\nalgorithm = adamve\nseeds = 0\ntotal_steps = 4000\noutput_dir = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = adamve(&["train", "--config", path(&cfg), "--set", "reference_policy=conservative"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(out.join("seed_0/learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(fs::read_to_string(out.join("config.txt"))
        .unwrap()
        .contains("reference_policy = conservative"));

    let run = out.join("seed_0");
    let o = adamve(&["eval", "--config", path(&cfg), "--run", path(&run), "--episodes", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("over 4 episodes"));

    let maps = dir.path().join("maps");
    let o = adamve(&[
        "heatmap",
        "--config",
        path(&cfg),
        "--set",
        "reference_policy=conservative",
        "--run",
        path(&run),
        "--out",
        path(&maps),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(maps.join("horizon.csv")).unwrap().lines().count(), 362);
    assert!(fs::read_to_string(maps.join("horizon.pgm")).unwrap().starts_with("P2\n19 19\n255\n"));
}

#[test]
fn dp_check_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = adamve(&[
        "dp-check",
        "--set",
        "model=nowall",
        "--policy",
        "always-right",
        "--horizon",
        "3",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("bound_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 329);
    assert!(dir.path().join("bound_summary.txt").exists());
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--set", "no_such_key=1"],
        vec!["train", "--set", "seeds"],
        vec!["train", "--config", "/nonexistent/run.cfg"],
        vec!["dp-check", "--set", "model=learned", "--out", path(dir.path())],
        vec!["dp-check", "--horizon", "11", "--out", path(dir.path())],
        vec!["eval", "--run", path(dir.path())],
        vec!["transfer", "--set", "algorithm=adamve", "--set", "total_steps=2000"],
    ];
    for args in cases {
        let o = adamve(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        let err = stderr(&o);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{args:?}: {err}");
    }
}
