//! Training runs and their learning curves.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::config::{EnvSpec, RunConfig};
use crate::agents::Learner;
use crate::env::{SynthHdp, TMaze};
use crate::error::{Error, Result};
use crate::numerics::mean_stderr;
use crate::policy::{FeatureSoftmaxPolicy, LstmConfig, LstmPolicy};
use crate::rng::{self, domain, Rng};

/// Evaluation points `(episode, metric)` of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurve {
    pub run_id: usize,
    pub points: Vec<(u64, f64)>,
}

impl RunCurve {
    /// Mean metric over the evaluation points in the last 10% of the run.
    pub fn final_window_mean(&self) -> f64 {
        let last = self.points.last().map_or(0, |p| p.0);
        let start = last - last / 10;
        let vals: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.0 >= start)
            .map(|p| p.1)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

/// One row of the across-run aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatePoint {
    pub episode: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n_runs: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub curves: Vec<RunCurve>,
    pub aggregate: Vec<AggregatePoint>,
}

/// Seeds of one run. They depend only on the base seed and the run index, so
/// every agent compared under the same base seed meets the same environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub env: u64,
    pub agent: u64,
    pub eval: u64,
    pub weights: u64,
}

impl RunSeeds {
    pub fn new(base: u64, run_id: usize) -> Self {
        let k = |d| rng::fold_key(base, d, [run_id as u64]);
        RunSeeds {
            env: k(domain::ENV),
            agent: k(domain::AGENT),
            eval: k(domain::EVAL),
            weights: k(domain::INIT_WEIGHTS),
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum Inner {
    Synth(SynthHdp, Learner<FeatureSoftmaxPolicy>),
    TMaze(TMaze, Learner<LstmPolicy>),
}

/// One agent paired with its environment instance and random streams.
pub struct Session {
    inner: Inner,
    agent_rng: Rng,
    eval_rng: Rng,
}

impl Session {
    pub fn new(config: &RunConfig, run_id: usize) -> Result<Self> {
        let seeds = RunSeeds::new(config.seed, run_id);
        let inner = match &config.env {
            EnvSpec::Synth(c) => {
                let env = SynthHdp::with_config(seeds.env, c.clone())?;
                let model = FeatureSoftmaxPolicy::new(c.n_obs, c.n_actions);
                Inner::Synth(env, Learner::new(config.agent.clone(), model, c.n_obs)?)
            }
            EnvSpec::TMaze(c) => {
                let env = TMaze::new(c.clone())?;
                let lstm = LstmConfig {
                    n_inputs: 4,
                    n_actions: 4,
                    ..config.lstm.clone()
                };
                let model = LstmPolicy::new(lstm, seeds.weights);
                Inner::TMaze(env, Learner::new(config.agent.clone(), model, 4)?)
            }
        };
        Ok(Session {
            inner,
            agent_rng: rng::seeded(seeds.agent),
            eval_rng: rng::seeded(seeds.eval),
        })
    }

    pub fn train(&mut self, episodes: u64) -> Result<()> {
        for _ in 0..episodes {
            match &mut self.inner {
                Inner::Synth(e, l) => l.train_episode(e, &mut self.agent_rng)?,
                Inner::TMaze(e, l) => l.train_episode(e, &mut self.agent_rng)?,
            };
        }
        Ok(())
    }

    /// Mean metric over `n` evaluation episodes: the return on the synthesized
    /// task, the success rate on the T-maze.
    pub fn evaluate(&mut self, n: usize) -> Result<f64> {
        let v = match &mut self.inner {
            Inner::Synth(e, l) => l.evaluate(e, n, &mut self.eval_rng, |_, t| t.total_return())?,
            Inner::TMaze(e, l) => l.evaluate(e, n, &mut self.eval_rng, |e: &TMaze, t| {
                f64::from(u8::from(e.is_success(t)))
            })?,
        };
        Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
    }

    pub fn episodes(&self) -> u64 {
        match &self.inner {
            Inner::Synth(_, l) => l.episodes(),
            Inner::TMaze(_, l) => l.episodes(),
        }
    }
}

/// Trains one run and returns its learning curve.
pub fn train_run(config: &RunConfig, run_id: usize) -> Result<RunCurve> {
    let mut session = Session::new(config, run_id)?;
    let mut points = vec![(0, session.evaluate(config.eval_episodes)?)];
    let mut n = 0;
    while n < config.episodes {
        let step = config.eval_every.min(config.episodes - n);
        session.train(step)?;
        n += step;
        let m = session.evaluate(config.eval_episodes)?;
        points.push((n, m));
        if config.stop_at.is_some_and(|s| m >= s) {
            break;
        }
    }
    Ok(RunCurve { run_id, points })
}

/// Mean and standard error across runs at every evaluated episode. Runs that
/// stopped early contribute only to the episodes they reached.
pub fn aggregate(curves: &[RunCurve]) -> Vec<AggregatePoint> {
    let mut episodes: Vec<u64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
    episodes.sort_unstable();
    episodes.dedup();
    episodes
        .into_iter()
        .map(|ep| {
            let vals: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.points.iter().find(|p| p.0 == ep).map(|p| p.1))
                .collect();
            let (mean, stderr) = mean_stderr(&vals);
            AggregatePoint {
                episode: ep,
                mean,
                stderr,
                n_runs: vals.len(),
            }
        })
        .collect()
}

/// Writes `contents` to `path` through a temporary file so readers never see
/// a partial file.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn run_csv(curve: &RunCurve, metric: &str) -> String {
    let mut s = String::from("run_id,episode,metric,value\n");
    for (ep, v) in &curve.points {
        s.push_str(&format!("{},{ep},{metric},{v:.16e}\n", curve.run_id));
    }
    s
}

pub fn aggregate_csv(points: &[AggregatePoint]) -> String {
    let mut s = String::from("episode,mean,stderr,n_runs\n");
    for p in points {
        s.push_str(&format!("{},{:.16e},{:.16e},{}\n", p.episode, p.mean, p.stderr, p.n_runs));
    }
    s
}

/// Plot data: `episode mean stderr` per line.
pub fn curve_dat(points: &[AggregatePoint]) -> String {
    let mut s = String::from("# episode mean stderr\n");
    for p in points {
        s.push_str(&format!("{} {:.16e} {:.16e}\n", p.episode, p.mean, p.stderr));
    }
    s
}

/// Runs every seed of `config` on a pool of `workers` threads, writing one CSV
/// per finished run plus the aggregate into `config.out`. A failing run does not
/// stop the others; the first failure is returned after all runs end.
pub fn run_experiment(config: &RunConfig, workers: usize) -> Result<ExperimentResult> {
    let out = &config.out;
    fs::create_dir_all(out)?;
    write_atomic(&out.join("config.txt"), &config.to_text())?;
    let metric = config.env.metric_name();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<Result<RunCurve>> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|id| {
                let curve = train_run(config, id)?;
                write_atomic(&out.join(format!("run_{id:03}.csv")), &run_csv(&curve, metric))?;
                Ok(curve)
            })
            .collect()
    });
    let mut curves = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(c) => curves.push(c),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let agg = aggregate(&curves);
    write_atomic(&out.join("aggregate.csv"), &aggregate_csv(&agg))?;
    write_atomic(&out.join("curve.dat"), &curve_dat(&agg))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(ExperimentResult {
            curves,
            aggregate: agg,
        }),
    }
}
