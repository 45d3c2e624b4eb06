use std::fs;
use std::path::Path;
use std::process::Command;

use pgmcts::harness::{run_experiment, RunConfig};

fn config(out: &Path, runs: usize) -> RunConfig {
    RunConfig::from_text(&format!(
        "env.n_obs = 3\nenv.n_actions = 2\nenv.tmax = 3\nagent.kind = pg_mcts_fixed\n\
         run.episodes = 120\nrun.runs = {runs}\nrun.eval_every = 40\nrun.eval_episodes = 10\n\
         run.seed = 11\nrun.out = {}\n",
        out.display()
    ))
    .unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn outputs_are_byte_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(a.path(), 3), 1).unwrap();
    run_experiment(&config(b.path(), 3), 2).unwrap();
    for name in ["aggregate.csv", "run_000.csv", "run_001.csv", "run_002.csv", "curve.dat"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name} differs");
    }
}

#[test]
fn aggregate_is_recomputable_from_run_files() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config(dir.path(), 4), 1).unwrap();
    let mut by_episode: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for id in 0..4 {
        let text = read(&dir.path().join(format!("run_{id:03}.csv")));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("run_id,episode,metric,value"));
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[0].parse::<usize>().unwrap(), id);
            assert_eq!(f[2], "mean_return");
            by_episode.entry(f[1].parse().unwrap()).or_default().push(f[3].parse().unwrap());
        }
    }
    let agg = read(&dir.path().join("aggregate.csv"));
    let mut lines = agg.lines();
    assert_eq!(lines.next(), Some("episode,mean,stderr,n_runs"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), by_episode.len());
    for (row, (ep, vals)) in rows.iter().zip(&by_episode) {
        let f: Vec<&str> = row.split(',').collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_eq!(f[0].parse::<u64>().unwrap(), *ep);
        approx::assert_relative_eq!(f[1].parse::<f64>().unwrap(), mean, epsilon = 1e-12, max_relative = 1e-12);
        approx::assert_relative_eq!(f[2].parse::<f64>().unwrap(), (var / n).sqrt(), epsilon = 1e-12, max_relative = 1e-10);
        assert_eq!(f[3], "4");
    }
}

#[test]
fn single_run_has_zero_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&config(dir.path(), 1), 1).unwrap();
    assert!(res.aggregate.iter().all(|p| p.stderr == 0.0 && p.n_runs == 1));
}

#[test]
fn cli_rejects_bad_config_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "agent.lambda = 1.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pgmcts"))
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("agent.lambda"));

    let out = Command::new(env!("CARGO_BIN_EXE_pgmcts"))
        .args(["run", "--set", "env.bogus=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("env.bogus"));
}

#[test]
fn cli_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pgmcts"))
        .args(["run", "--runs", "2", "--episodes", "60", "--seed", "3", "--workers", "1"])
        .args(["--set", "env.n_obs=2", "--set", "env.tmax=2", "--set", "run.eval_every=30", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = read(&dir.path().join("aggregate.csv"));
    assert_eq!(agg.lines().count(), 4);
    assert!(read(&dir.path().join("config.txt")).contains("run.seed = 3"));
}
