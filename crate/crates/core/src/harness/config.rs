//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! env.kind = synth
//! agent.kind = pg_mcts_fixed
//! run.episodes = 200000
//! ```
//!
//! Any key can be overridden from the environment: `PGMCTS_AGENT__ALPHA=0.05`
//! sets `agent.alpha` (dots become double underscores, letters upper case).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::{AgentKind, AgentSpec};
use crate::env::{InitialDistribution, SynthConfig, TMazeConfig};
use crate::error::{Error, Result};
use crate::mixture::{FloorSchedule, Schedule};
use crate::numerics::GpConfig;
use crate::policy::LstmConfig;

pub const ENV_PREFIX: &str = "PGMCTS_";

/// Raw key-value pairs in file order of precedence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("bad key `{key}`"),
                });
            }
            map.insert(key.to_string(), v.trim().to_string());
        }
        Ok(KeyValues { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    /// Applies `PGMCTS_*` overrides from `vars`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (k, v) in vars {
            if let Some(rest) = k.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                self.map.insert(key, v);
            }
        }
    }

    fn take<T: FromStr>(&self, used: &mut Vec<String>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        used.push(key.to_string());
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Synth(SynthConfig),
    TMaze(TMazeConfig),
}

impl EnvSpec {
    pub fn metric_name(&self) -> &'static str {
        match self {
            EnvSpec::Synth(_) => "mean_return",
            EnvSpec::TMaze(_) => "success_rate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub agent: AgentSpec,
    pub lstm: LstmConfig,
    pub episodes: u64,
    pub runs: usize,
    pub seed: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Stop a run once an evaluation reaches this value.
    pub stop_at: Option<f64>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut used = Vec::new();
        let u = &mut used;

        let env_kind: String = kv.take(u, "env.kind")?.unwrap_or_else(|| "synth".into());
        let env = match env_kind.as_str() {
            "synth" => {
                let d = SynthConfig::default();
                let dg = GpConfig::default();
                let initial = match kv.take::<String>(u, "env.initial")?.as_deref() {
                    None | Some("dirichlet") => InitialDistribution::Dirichlet,
                    Some("uniform") => InitialDistribution::Uniform,
                    Some(other) => {
                        return Err(Error::config("env.initial", format!("unknown `{other}`")))
                    }
                };
                EnvSpec::Synth(SynthConfig {
                    n_obs: kv.take(u, "env.n_obs")?.unwrap_or(d.n_obs),
                    n_actions: kv.take(u, "env.n_actions")?.unwrap_or(d.n_actions),
                    tmax: kv.take(u, "env.tmax")?.unwrap_or(d.tmax),
                    dirichlet_alpha: kv.take(u, "env.dirichlet_alpha")?.unwrap_or(d.dirichlet_alpha),
                    initial,
                    sequence_weight: kv.take(u, "env.sequence_weight")?.unwrap_or(d.sequence_weight),
                    gp: GpConfig {
                        length_scale: kv.take(u, "env.gp.length_scale")?.unwrap_or(dg.length_scale),
                        cutoff: kv.take(u, "env.gp.cutoff")?.unwrap_or(dg.cutoff),
                        max_neighbors: kv.take(u, "env.gp.max_neighbors")?.unwrap_or(dg.max_neighbors),
                        eager_limit: kv.take(u, "env.gp.eager_limit")?.unwrap_or(dg.eager_limit),
                    },
                })
            }
            "tmaze" => {
                let length = kv.take(u, "env.length")?.unwrap_or(10);
                let start = kv.take(u, "env.start")?.unwrap_or(0);
                let d = TMazeConfig::new(length, start);
                EnvSpec::TMaze(TMazeConfig {
                    gamma: kv.take(u, "env.gamma")?.unwrap_or(d.gamma),
                    goal_reward: kv.take(u, "env.goal_reward")?.unwrap_or(d.goal_reward),
                    penalty: kv.take(u, "env.penalty")?.unwrap_or(d.penalty),
                    wall_penalty: kv.take(u, "env.wall_penalty")?.unwrap_or(d.wall_penalty),
                    tmax: kv.take(u, "env.tmax")?,
                    ..d
                })
            }
            other => return Err(Error::config("env.kind", format!("unknown environment `{other}`"))),
        };

        let kind: AgentKind = kv
            .take::<String>(u, "agent.kind")?
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(AgentKind::PgMctsFixed);
        let default_preset = match env {
            EnvSpec::Synth(_) => "synth",
            EnvSpec::TMaze(_) => "tmaze",
        };
        let preset: String = kv.take(u, "agent.preset")?.unwrap_or_else(|| default_preset.into());
        let base = match preset.as_str() {
            "synth" => AgentSpec::synth(kind),
            "tmaze" => AgentSpec::tmaze(kind, false),
            "tmaze_long" => AgentSpec::tmaze(kind, true),
            other => return Err(Error::config("agent.preset", format!("unknown preset `{other}`"))),
        };
        let base_alpha = match base.schedule {
            Schedule::Constant { alpha } => alpha,
            Schedule::Convergent { alpha0, .. } => alpha0,
        };
        let schedule = match kv.take::<String>(u, "agent.schedule")?.as_deref() {
            None | Some("constant") => Schedule::Constant {
                alpha: kv.take(u, "agent.alpha")?.unwrap_or(base_alpha),
            },
            Some("convergent") => Schedule::Convergent {
                alpha0: kv.take(u, "agent.alpha")?.unwrap_or(1.0),
                c: kv.take(u, "agent.schedule_c")?.unwrap_or(1.0),
            },
            Some(other) => {
                return Err(Error::config("agent.schedule", format!("unknown schedule `{other}`")))
            }
        };
        let floor0: f64 = kv.take(u, "agent.floor")?.unwrap_or(0.1);
        let floor = match kv.take::<String>(u, "agent.floor_mode")?.as_deref() {
            None | Some("decaying") => FloorSchedule::Decaying {
                floor0,
                horizon: kv.take(u, "agent.floor_horizon")?.unwrap_or(1e4),
            },
            Some("constant") => FloorSchedule::Constant(floor0),
            Some(other) => {
                return Err(Error::config("agent.floor_mode", format!("unknown mode `{other}`")))
            }
        };
        let agent = AgentSpec {
            kind,
            schedule,
            c: kv.take(u, "agent.c")?.unwrap_or(base.c),
            lambda: kv.take(u, "agent.lambda")?.unwrap_or(base.lambda),
            max_kappa: kv.take(u, "agent.max_kappa")?.unwrap_or(base.max_kappa),
            beta: kv.take(u, "agent.beta")?.unwrap_or(base.beta),
            floor,
            bernoulli_gate: kv.take(u, "agent.bernoulli_gate")?.unwrap_or(false),
            clip: match kv.take::<String>(u, "agent.clip")?.as_deref() {
                None => base.clip,
                Some("none") => None,
                Some(v) => Some(
                    v.parse()
                        .map_err(|e| Error::config("agent.clip", format!("cannot parse `{v}`: {e}")))?,
                ),
            },
            baseline_decay: kv.take(u, "agent.baseline_decay")?.unwrap_or(base.baseline_decay),
            q_init: kv.take(u, "agent.q_init")?.unwrap_or(base.q_init),
        };
        agent.validate()?;

        let dl = LstmConfig::default();
        let lstm = LstmConfig {
            hidden: kv.take(u, "lstm.hidden")?.unwrap_or(dl.hidden),
            init_scale: kv.take(u, "lstm.init_scale")?.unwrap_or(dl.init_scale),
            forget_bias: kv.take(u, "lstm.forget_bias")?.unwrap_or(dl.forget_bias),
            ..dl
        };

        let config = RunConfig {
            env,
            agent,
            lstm,
            episodes: kv.take(u, "run.episodes")?.unwrap_or(10_000),
            runs: kv.take(u, "run.runs")?.unwrap_or(10),
            seed: kv.take(u, "run.seed")?.unwrap_or(0),
            eval_every: kv.take(u, "run.eval_every")?.unwrap_or(1000),
            eval_episodes: kv.take(u, "run.eval_episodes")?.unwrap_or(100),
            stop_at: kv.take(u, "run.stop_at")?,
            out: kv
                .take::<String>(u, "run.out")?
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        if let Some(unknown) = kv.map.keys().find(|k| !used.contains(k)) {
            return Err(Error::config(unknown, "unknown key"));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("run.runs", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("run.eval_every", "must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("run.eval_episodes", "must be at least 1"));
        }
        match &self.env {
            EnvSpec::TMaze(t) if t.start >= t.length => {
                Err(Error::config("env.start", "must be smaller than env.length"))
            }
            _ => Ok(()),
        }
    }

    /// Serializes every setting; parsing the result reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.env {
            EnvSpec::Synth(c) => {
                kv("env.kind", "synth".into());
                kv("env.n_obs", c.n_obs.to_string());
                kv("env.n_actions", c.n_actions.to_string());
                kv("env.tmax", c.tmax.to_string());
                kv("env.dirichlet_alpha", c.dirichlet_alpha.to_string());
                let init = match c.initial {
                    InitialDistribution::Dirichlet => "dirichlet",
                    InitialDistribution::Uniform => "uniform",
                };
                kv("env.initial", init.into());
                kv("env.sequence_weight", c.sequence_weight.to_string());
                kv("env.gp.length_scale", c.gp.length_scale.to_string());
                kv("env.gp.cutoff", c.gp.cutoff.to_string());
                kv("env.gp.max_neighbors", c.gp.max_neighbors.to_string());
                kv("env.gp.eager_limit", c.gp.eager_limit.to_string());
            }
            EnvSpec::TMaze(c) => {
                kv("env.kind", "tmaze".into());
                kv("env.length", c.length.to_string());
                kv("env.start", c.start.to_string());
                kv("env.gamma", c.gamma.to_string());
                kv("env.goal_reward", c.goal_reward.to_string());
                kv("env.penalty", c.penalty.to_string());
                kv("env.wall_penalty", c.wall_penalty.to_string());
                if let Some(t) = c.tmax {
                    kv("env.tmax", t.to_string());
                }
            }
        }
        let a = &self.agent;
        kv("agent.kind", a.kind.to_string());
        match a.schedule {
            Schedule::Constant { alpha } => {
                kv("agent.schedule", "constant".into());
                kv("agent.alpha", alpha.to_string());
            }
            Schedule::Convergent { alpha0, c } => {
                kv("agent.schedule", "convergent".into());
                kv("agent.alpha", alpha0.to_string());
                kv("agent.schedule_c", c.to_string());
            }
        }
        kv("agent.c", a.c.to_string());
        kv("agent.lambda", a.lambda.to_string());
        kv("agent.max_kappa", a.max_kappa.to_string());
        kv("agent.beta", a.beta.to_string());
        match a.floor {
            FloorSchedule::Constant(v) => {
                kv("agent.floor_mode", "constant".into());
                kv("agent.floor", v.to_string());
            }
            FloorSchedule::Decaying { floor0, horizon } => {
                kv("agent.floor_mode", "decaying".into());
                kv("agent.floor", floor0.to_string());
                kv("agent.floor_horizon", horizon.to_string());
            }
        }
        kv("agent.bernoulli_gate", a.bernoulli_gate.to_string());
        kv("agent.clip", a.clip.map_or("none".into(), |c| c.to_string()));
        kv("agent.baseline_decay", a.baseline_decay.to_string());
        kv("agent.q_init", a.q_init.to_string());
        if let EnvSpec::TMaze(_) = self.env {
            kv("lstm.hidden", self.lstm.hidden.to_string());
            kv("lstm.init_scale", self.lstm.init_scale.to_string());
            kv("lstm.forget_bias", self.lstm.forget_bias.to_string());
        }
        kv("run.episodes", self.episodes.to_string());
        kv("run.runs", self.runs.to_string());
        kv("run.seed", self.seed.to_string());
        kv("run.eval_every", self.eval_every.to_string());
        kv("run.eval_episodes", self.eval_episodes.to_string());
        if let Some(v) = self.stop_at {
            kv("run.stop_at", v.to_string());
        }
        kv("run.out", self.out.display().to_string());
        s
    }
}
