use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgmcts::env::SynthHdp;
use pgmcts::harness::{self, checks, EnvSpec, KeyValues, RunConfig, RunSeeds};
use pgmcts::hdp::{evaluate_exact, solve_optimal, TabularHdp, UniformPolicy};
use pgmcts::{Error, Result};

#[derive(Parser)]
#[command(name = "pgmcts", version, about = "Policy gradient guided by lazy tree search: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Training episodes per run.
    #[arg(long)]
    episodes: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every run of one configuration.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Repeat one configuration over a range of base seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Seed range, `first..last` (inclusive).
        #[arg(long)]
        seeds: String,
    },
    /// Compare agents on shared environment seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated agent kinds; defaults to the five synthesized-task agents.
        #[arg(long, value_delimiter = ',')]
        agents: Vec<String>,
    },
    /// Exact optimal and uniform-policy values of tiny instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Solve a tabular instance file instead of generating instances.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Write each generated instance as a table into `--out`.
        #[arg(long)]
        dump_tables: bool,
    },
    /// Run the built-in invariant checks.
    Check,
    /// Write a gnuplot script for the `.dat` files in a directory.
    PlotScript {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<KeyValues> {
    let mut kv = match &common.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    kv.apply_env(std::env::vars());
    if let Some(s) = common.seed {
        kv.set("run.seed", s);
    }
    if let Some(r) = common.runs {
        kv.set("run.runs", r);
    }
    if let Some(e) = common.episodes {
        kv.set("run.episodes", e);
    }
    if let Some(o) = &common.out {
        kv.set("run.out", o.display());
    }
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{s}`")))?;
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn print_final(result: &harness::ExperimentResult) {
    if let Some(p) = result.aggregate.last() {
        println!("episode {}: mean {:.6} stderr {:.6} over {} runs", p.episode, p.mean, p.stderr, p.n_runs);
    }
}

fn parse_range(s: &str) -> Result<(u64, u64)> {
    let bad = || Error::InvalidArgument(format!("seed range must look like `0..9`, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a, b))
}

fn oracle(common: &Common, table: Option<&Path>, dump: bool) -> Result<()> {
    if let Some(path) = table {
        let mut env = TabularHdp::read_text(std::fs::File::open(path).map(std::io::BufReader::new)?)?;
        let n_actions = env.shape.n_actions;
        let (opt, _) = solve_optimal(&mut env)?;
        let uni = evaluate_exact(&mut env, &UniformPolicy { n_actions })?;
        println!("optimal {opt:.16e}");
        println!("uniform {uni:.16e}");
        return Ok(());
    }
    let config = RunConfig::from_key_values(&load(common)?)?;
    let EnvSpec::Synth(sc) = &config.env else {
        return Err(Error::config("env.kind", "the oracle solves synthesized instances only"));
    };
    if dump {
        std::fs::create_dir_all(&config.out)?;
    }
    println!("run_id,optimal,uniform");
    for id in 0..config.runs {
        let mut env = SynthHdp::with_config(RunSeeds::new(config.seed, id).env, sc.clone())?;
        let (opt, _) = solve_optimal(&mut env)?;
        let uni = evaluate_exact(&mut env, &UniformPolicy { n_actions: sc.n_actions })?;
        println!("{id},{opt:.16e},{uni:.16e}");
        if dump {
            let t = TabularHdp::from_env(&mut env)?;
            std::fs::write(config.out.join(format!("instance_{id:03}.txt")), t.to_text())?;
        }
    }
    Ok(())
}

fn plot_script(dir: &Path) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension()? == "dat").then(|| p.file_stem()?.to_str().map(String::from))?
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!("no .dat files in {}", dir.display())));
    }
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let path = dir.join("plot.gp");
    std::fs::write(&path, harness::plot_script(&refs, "value"))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, workers: w } => {
            let config = RunConfig::from_key_values(&load(&common)?)?;
            print_final(&harness::run_experiment(&config, workers(w))?);
        }
        Command::Sweep {
            common,
            workers: w,
            seeds,
        } => {
            let (first, last) = parse_range(&seeds)?;
            let base = RunConfig::from_key_values(&load(&common)?)?;
            for s in first..=last {
                let mut c = base.clone();
                c.seed = s;
                c.out = base.out.join(format!("seed_{s}"));
                print!("seed {s}: ");
                print_final(&harness::run_experiment(&c, workers(w))?);
            }
        }
        Command::Compare {
            common,
            workers: w,
            agents,
        } => {
            let kv = load(&common)?;
            let agents = if agents.is_empty() {
                ["reinforce", "lazy_mcts", "lazy_alphazero", "naive_mixture", "pg_mcts_fixed"]
                    .map(String::from)
                    .to_vec()
            } else {
                agents
            };
            let configs = agents
                .iter()
                .map(|a| {
                    let mut kv = kv.clone();
                    kv.set("agent.kind", a);
                    RunConfig::from_key_values(&kv)
                })
                .collect::<Result<Vec<_>>>()?;
            let out = configs[0].out.clone();
            let cmp = harness::compare_agents(&configs, &out, workers(w))?;
            print!("{}", cmp.report());
        }
        Command::Oracle {
            common,
            table,
            dump_tables,
        } => oracle(&common, table.as_deref(), dump_tables)?,
        Command::Check => {
            let mut ok = true;
            for c in checks::run_all() {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
        Command::PlotScript { out } => plot_script(&out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
