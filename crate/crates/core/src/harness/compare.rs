//! Paired comparisons of several agents on identical environment seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::run::{curve_dat, run_experiment, write_atomic, ExperimentResult};
use crate::error::{Error, Result};
use crate::numerics::mean_stderr;

#[derive(Clone, Debug)]
pub struct AgentSummary {
    pub name: String,
    /// Final-window mean of each run, indexed by run id.
    pub final_means: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl AgentSummary {
    pub fn from_result(name: &str, result: &ExperimentResult) -> Self {
        let mut curves: Vec<_> = result.curves.iter().collect();
        curves.sort_by_key(|c| c.run_id);
        let final_means: Vec<f64> = curves.iter().map(|c| c.final_window_mean()).collect();
        let (mean, stderr) = mean_stderr(&final_means);
        AgentSummary {
            name: name.to_string(),
            final_means,
            mean,
            stderr,
        }
    }

    /// `(self.mean - other.mean) / sqrt(se_a^2 + se_b^2)`.
    pub fn margin_over(&self, other: &AgentSummary) -> f64 {
        let pooled = self.stderr.hypot(other.stderr);
        (self.mean - other.mean) / pooled
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub agents: Vec<AgentSummary>,
}

impl Comparison {
    pub fn get(&self, name: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Paired differences of every agent against every other, as
    /// `(a, b, mean of a - b, stderr)`.
    pub fn paired(&self) -> Vec<(String, String, f64, f64)> {
        let mut out = Vec::new();
        for a in &self.agents {
            for b in &self.agents {
                if a.name == b.name {
                    continue;
                }
                let d: Vec<f64> = a.final_means.iter().zip(&b.final_means).map(|(x, y)| x - y).collect();
                let (m, se) = mean_stderr(&d);
                out.push((a.name.clone(), b.name.clone(), m, se));
            }
        }
        out
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let mut ranked: Vec<&AgentSummary> = self.agents.iter().collect();
        ranked.sort_by(|a, b| b.mean.total_cmp(&a.mean));
        let _ = writeln!(s, "{:<20} {:>14} {:>12}", "agent", "final mean", "stderr");
        for a in ranked {
            let _ = writeln!(s, "{:<20} {:>14.6} {:>12.6}", a.name, a.mean, a.stderr);
        }
        let _ = writeln!(s, "\npaired differences (row - column):");
        for (a, b, m, se) in self.paired() {
            let _ = writeln!(s, "{a:>20} - {b:<20} {m:>12.6} +- {se:.6}");
        }
        s
    }
}

/// Refuses comparisons whose runs would not meet the same environments.
pub fn check_comparable(configs: &[RunConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    for c in &configs[1..] {
        let mismatch = if c.env != first.env {
            Some("env")
        } else if c.seed != first.seed {
            Some("run.seed")
        } else if c.runs != first.runs {
            Some("run.runs")
        } else if c.episodes != first.episodes {
            Some("run.episodes")
        } else if c.eval_every != first.eval_every || c.eval_episodes != first.eval_episodes {
            Some("run.eval_every")
        } else {
            None
        };
        if let Some(field) = mismatch {
            return Err(Error::config(field, "compared configurations must agree on the environment and run layout"));
        }
    }
    Ok(())
}

/// Agent names for output files; repeated kinds get a numeric suffix.
pub fn series_names(configs: &[RunConfig]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for c in configs {
        let base = c.agent.kind.to_string();
        let mut name = base.clone();
        let mut k = 2;
        while names.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        names.push(name);
    }
    names
}

/// Runs every configuration into `out/<agent>/` and writes a summary table,
/// per-run final values and plot data.
pub fn compare_agents(configs: &[RunConfig], out: &Path, workers: usize) -> Result<Comparison> {
    check_comparable(configs)?;
    fs::create_dir_all(out)?;
    let mut agents = Vec::new();
    for (c, name) in configs.iter().zip(series_names(configs)) {
        let mut c = c.clone();
        c.out = out.join(&name);
        let result = run_experiment(&c, workers)?;
        write_atomic(&out.join(format!("{name}.dat")), &curve_dat(&result.aggregate))?;
        agents.push(AgentSummary::from_result(&name, &result));
    }
    let cmp = Comparison { agents };
    let mut csv = String::from("agent,run_id,final_mean\n");
    for a in &cmp.agents {
        for (i, v) in a.final_means.iter().enumerate() {
            let _ = writeln!(csv, "{},{i},{v:.16e}", a.name);
        }
    }
    write_atomic(&out.join("compare.csv"), &csv)?;
    write_atomic(&out.join("summary.txt"), &cmp.report())?;
    let names: Vec<&str> = cmp.agents.iter().map(|a| a.name.as_str()).collect();
    write_atomic(
        &out.join("plot.gp"),
        &plot_script(&names, configs[0].env.metric_name()),
    )?;
    Ok(cmp)
}

/// A gnuplot script drawing `<name>.dat` curves with standard-error bands.
pub fn plot_script(names: &[&str], ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output 'curves.png'");
    let _ = writeln!(s, "set xlabel 'episode'");
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    let _ = writeln!(s, "set key bottom right");
    let _ = writeln!(s, "set style fill transparent solid 0.2 noborder");
    let parts: Vec<String> = names
        .iter()
        .enumerate()
        .flat_map(|(i, n)| {
            let lt = i + 1;
            [
                format!("'{n}.dat' using 1:($2-$3):($2+$3) with filledcurves lt {lt} notitle"),
                format!("'{n}.dat' using 1:2 with lines lt {lt} lw 2 title '{n}'"),
            ]
        })
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentKind, AgentSpec};
    use crate::harness::EnvSpec;

    fn base() -> RunConfig {
        RunConfig::from_text("env.n_obs = 2\nenv.n_actions = 2\nenv.tmax = 2\nrun.episodes = 30\nrun.runs = 2\nrun.eval_every = 10\nrun.eval_episodes = 4\n").unwrap()
    }

    #[test]
    fn refuses_mismatched_environments() {
        let a = base();
        let mut b = base();
        b.agent = AgentSpec::synth(AgentKind::Reinforce);
        b.seed = 7;
        assert!(matches!(check_comparable(&[a.clone(), b.clone()]), Err(Error::Config { field, .. }) if field == "run.seed"));
        b.seed = a.seed;
        assert!(check_comparable(&[a.clone(), b]).is_ok());
        let mut t = base();
        t.env = EnvSpec::TMaze(crate::env::TMazeConfig::new(5, 0));
        assert!(matches!(check_comparable(&[a, t]), Err(Error::Config { field, .. }) if field == "env"));
    }

    #[test]
    fn identical_agents_have_zero_paired_difference() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = base();
        a.agent = AgentSpec::synth(AgentKind::Reinforce);
        let cmp = compare_agents(&[a.clone(), a], dir.path(), 1).unwrap();
        assert_eq!(cmp.agents[1].name, "reinforce_2");
        for (_, _, m, se) in cmp.paired() {
            assert_eq!((m, se), (0.0, 0.0));
        }
    }

    #[test]
    fn compare_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let a = base();
        let mut b = base();
        b.agent = AgentSpec::synth(AgentKind::Reinforce);
        let cmp = compare_agents(&[a, b], dir.path(), 1).unwrap();
        assert_eq!(cmp.agents.len(), 2);
        assert_eq!(cmp.paired().len(), 2);
        for f in ["compare.csv", "summary.txt", "plot.gp", "reinforce.dat", "pg_mcts_fixed/aggregate.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn margin_uses_pooled_stderr() {
        let a = AgentSummary { name: "a".into(), final_means: vec![], mean: 2.0, stderr: 0.3 };
        let b = AgentSummary { name: "b".into(), final_means: vec![], mean: 1.5, stderr: 0.4 };
        assert!((a.margin_over(&b) - 1.0).abs() < 1e-12);
    }
}
