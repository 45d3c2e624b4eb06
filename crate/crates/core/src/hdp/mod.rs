//! History-based decision processes: histories, environments, episodes and
//! Monte-Carlo policy evaluation.

mod exact;
mod keys;
mod table;

use std::fmt;
use std::str::FromStr;

pub use exact::{evaluate_exact, solve_optimal, OptimalPolicy, LEAF_LIMIT};
pub use keys::{HistoryId, KeySpace, PrefixId, StepKeys, TrieInterner};
pub use table::TabularHdp;

use crate::error::{Error, Result};
use crate::numerics::{mean_stderr, sample_index};
use crate::rng::Rng;

/// `h_t = [o_0, a_0, ..., o_{t-1}, a_{t-1}, o_t]`, stored as the alternating
/// symbol sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    symbols: Vec<u16>,
}

impl History {
    pub fn new(obs: usize) -> Self {
        History {
            symbols: vec![obs as u16],
        }
    }

    /// Time step `t`, i.e. the number of actions taken so far.
    pub fn t(&self) -> usize {
        self.symbols.len() / 2
    }

    pub fn tail(&self) -> usize {
        *self.symbols.last().unwrap() as usize
    }

    pub fn obs(&self, k: usize) -> usize {
        self.symbols[2 * k] as usize
    }

    pub fn action(&self, k: usize) -> usize {
        self.symbols[2 * k + 1] as usize
    }

    pub fn push(&mut self, action: usize, obs: usize) {
        self.symbols.push(action as u16);
        self.symbols.push(obs as u16);
    }

    /// Removes the last `(action, obs)` pair.
    pub fn pop(&mut self) {
        debug_assert!(self.symbols.len() >= 3);
        self.symbols.truncate(self.symbols.len() - 2);
    }

    pub fn observations(&self) -> impl Iterator<Item = usize> + '_ {
        self.symbols.iter().step_by(2).map(|&s| s as usize)
    }

    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.symbols.iter().skip(1).step_by(2).map(|&s| s as usize)
    }

    pub fn symbols(&self) -> &[u16] {
        &self.symbols
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for History {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .split('.')
            .map(|p| {
                p.parse::<u16>()
                    .map_err(|e| Error::InvalidArgument(format!("bad history `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if symbols.len() % 2 != 1 {
            return Err(Error::InvalidArgument(format!(
                "history `{s}` must have an odd number of symbols"
            )));
        }
        Ok(History { symbols })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvShape {
    pub n_obs: usize,
    pub n_actions: usize,
    /// Last time step `tmax`; an episode has at most `tmax + 1` decisions.
    pub tmax: usize,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Next {
    Obs(usize),
    Terminal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub next: Next,
}

pub trait Environment {
    fn shape(&self) -> EnvShape;

    /// Starts an episode and returns `o_0`.
    fn reset(&mut self, rng: &mut Rng) -> usize;

    /// Applies `action` at `history` (the current episode's history).
    fn step(&mut self, history: &History, action: usize, rng: &mut Rng) -> Result<Transition>;
}

/// Exact one-step model of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    /// Next-observation distribution; empty when the episode ends.
    pub next: Vec<(usize, f64)>,
}

pub trait Enumerable: Environment {
    fn initial_distribution(&mut self) -> Vec<f64>;

    fn outcome(&mut self, history: &History, action: usize) -> Result<Outcome>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Pg,
    Tree,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub obs: usize,
    pub action: usize,
    pub reward: f64,
    /// Probability of `action` under the full behaviour policy.
    pub behavior_prob: f64,
    pub component: Component,
    /// Mixing probability `lambda(h_t)` at decision time.
    pub lambda: f64,
    /// `pi_1(a_t | h_t)` at decision time.
    pub pg_prob: f64,
    /// `pi_2(a_t | h_t)` at decision time.
    pub tree_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub records: Vec<StepRecord>,
    pub returns: Vec<f64>,
    pub gamma: f64,
}

/// `g_T = r_T`, `g_t = r_t + gamma * g_{t+1}`.
pub fn compute_returns(rewards: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut next: Option<f64> = None;
    for (i, r) in rewards.enumerate().rev() {
        let g = match next {
            Some(g1) => r + gamma * g1,
            None => r,
        };
        out[i] = g;
        next = Some(g);
    }
    out
}

impl EpisodeTrace {
    pub fn new(records: Vec<StepRecord>, gamma: f64) -> Self {
        let returns = compute_returns(records.iter().map(|r| r.reward), gamma);
        EpisodeTrace {
            records,
            returns,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `g_0`.
    pub fn total_return(&self) -> f64 {
        self.returns.first().copied().unwrap_or(0.0)
    }

    /// The history `h_t` at which record `t` was decided.
    pub fn history(&self, t: usize) -> History {
        let mut h = History::new(self.records[0].obs);
        for k in 0..t {
            h.push(self.records[k].action, self.records[k + 1].obs);
        }
        h
    }

    pub fn actions(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.action).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub behavior_prob: f64,
    pub component: Component,
    pub lambda: f64,
    pub pg_prob: f64,
    pub tree_prob: f64,
}

impl Decision {
    pub fn plain(action: usize, prob: f64) -> Self {
        Decision {
            action,
            behavior_prob: prob,
            component: Component::Pg,
            lambda: 0.0,
            pg_prob: prob,
            tree_prob: 0.0,
        }
    }
}

/// A decision rule that acts along one episode at a time.
///
/// `decide` is called with `h_0, h_1, ...` of a single episode in order; a call
/// with `t = 0` starts a new episode.
pub trait Actor {
    fn decide(&mut self, history: &History, rng: &mut Rng) -> Result<Decision>;
}

/// A stateless history-dependent policy.
pub trait HistoryPolicy {
    fn n_actions(&self) -> usize;

    fn action_probs(&self, history: &History, out: &mut [f64]) -> Result<()>;
}

impl<P: HistoryPolicy + ?Sized> HistoryPolicy for &P {
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn action_probs(&self, history: &History, out: &mut [f64]) -> Result<()> {
        (**self).action_probs(history, out)
    }
}

/// Acts by sampling from a [`HistoryPolicy`].
pub struct Sampler<P> {
    pub policy: P,
    buf: Vec<f64>,
}

impl<P: HistoryPolicy> Sampler<P> {
    pub fn new(policy: P) -> Self {
        let buf = vec![0.0; policy.n_actions()];
        Sampler { policy, buf }
    }
}

impl<P: HistoryPolicy> Actor for Sampler<P> {
    fn decide(&mut self, history: &History, rng: &mut Rng) -> Result<Decision> {
        self.policy.action_probs(history, &mut self.buf)?;
        let a = sample_index(&self.buf, rng);
        Ok(Decision::plain(a, self.buf[a]))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl HistoryPolicy for UniformPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_probs(&self, _: &History, out: &mut [f64]) -> Result<()> {
        out.fill(1.0 / self.n_actions as f64);
        Ok(())
    }
}

/// Plays a fixed action sequence, repeating the last action when exhausted.
#[derive(Clone, Debug)]
pub struct OpenLoopPolicy {
    pub n_actions: usize,
    pub actions: Vec<usize>,
}

impl HistoryPolicy for OpenLoopPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_probs(&self, history: &History, out: &mut [f64]) -> Result<()> {
        let t = history.t().min(self.actions.len() - 1);
        out.fill(0.0);
        out[self.actions[t]] = 1.0;
        Ok(())
    }
}

/// Runs one episode.
pub fn rollout<E, A>(env: &mut E, actor: &mut A, rng: &mut Rng) -> Result<EpisodeTrace>
where
    E: Environment + ?Sized,
    A: Actor + ?Sized,
{
    let shape = env.shape();
    let mut history = History::new(env.reset(rng));
    let mut records = Vec::with_capacity(shape.tmax + 1);
    loop {
        let d = actor.decide(&history, rng)?;
        let tr = env.step(&history, d.action, rng)?;
        let t = history.t();
        if !tr.reward.is_finite() {
            return Err(Error::NonFiniteReward {
                t,
                reward: tr.reward,
            });
        }
        records.push(StepRecord {
            obs: history.tail(),
            action: d.action,
            reward: tr.reward,
            behavior_prob: d.behavior_prob,
            component: d.component,
            lambda: d.lambda,
            pg_prob: d.pg_prob,
            tree_prob: d.tree_prob,
        });
        match tr.next {
            Next::Obs(o) if t < shape.tmax => history.push(d.action, o),
            _ => break,
        }
    }
    Ok(EpisodeTrace::new(records, shape.gamma))
}

/// Mean of `g_0` over `n_episodes` rollouts and its standard error.
pub fn evaluate_monte_carlo<E, A>(
    env: &mut E,
    actor: &mut A,
    n_episodes: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)>
where
    E: Environment + ?Sized,
    A: Actor + ?Sized,
{
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let returns = (0..n_episodes)
        .map(|_| rollout(env, actor, rng).map(|t| t.total_return()))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_stderr(&returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// One decision, one action, reward 1.
    struct OneStep;

    impl Environment for OneStep {
        fn shape(&self) -> EnvShape {
            EnvShape {
                n_obs: 1,
                n_actions: 1,
                tmax: 0,
                gamma: 1.0,
            }
        }
        fn reset(&mut self, _: &mut Rng) -> usize {
            0
        }
        fn step(&mut self, _: &History, _: usize, _: &mut Rng) -> Result<Transition> {
            Ok(Transition {
                reward: 1.0,
                next: Next::Terminal,
            })
        }
    }

    /// Three steps, reward 1 each.
    struct Constant;

    impl Environment for Constant {
        fn shape(&self) -> EnvShape {
            EnvShape {
                n_obs: 2,
                n_actions: 3,
                tmax: 2,
                gamma: 1.0,
            }
        }
        fn reset(&mut self, rng: &mut Rng) -> usize {
            use rand::Rng as _;
            rng.random_range(0..2)
        }
        fn step(&mut self, _: &History, _: usize, rng: &mut Rng) -> Result<Transition> {
            use rand::Rng as _;
            Ok(Transition {
                reward: 1.0,
                next: Next::Obs(rng.random_range(0..2)),
            })
        }
    }

    struct Broken;

    impl Environment for Broken {
        fn shape(&self) -> EnvShape {
            OneStep.shape()
        }
        fn reset(&mut self, _: &mut Rng) -> usize {
            0
        }
        fn step(&mut self, _: &History, _: usize, _: &mut Rng) -> Result<Transition> {
            Ok(Transition {
                reward: f64::NAN,
                next: Next::Terminal,
            })
        }
    }

    #[test]
    fn history_accessors_and_text() {
        let mut h = History::new(3);
        h.push(1, 4);
        h.push(0, 2);
        assert_eq!(h.t(), 2);
        assert_eq!(h.tail(), 2);
        assert_eq!(h.observations().collect::<Vec<_>>(), vec![3, 4, 2]);
        assert_eq!(h.actions().collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(h.to_string(), "3.1.4.0.2");
        assert_eq!("3.1.4.0.2".parse::<History>().unwrap(), h);
        assert!("3.1".parse::<History>().is_err());
        h.pop();
        assert_eq!(h.to_string(), "3.1.4");
    }

    #[test]
    fn single_step_trace() {
        let mut r = rng::seeded(0);
        let mut actor = Sampler::new(UniformPolicy { n_actions: 1 });
        let tr = rollout(&mut OneStep, &mut actor, &mut r).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.returns, vec![1.0]);
    }

    #[test]
    fn returns_recursion_holds_exactly() {
        let rewards = [0.3, -1.25, 2.0, 0.1];
        let g = compute_returns(rewards.iter().copied(), 0.98);
        assert_eq!(g[3], 0.1);
        for t in 0..3 {
            assert_eq!(g[t] - (rewards[t] + 0.98 * g[t + 1]), 0.0);
        }
    }

    #[test]
    fn constant_reward_has_zero_stderr() {
        let mut r = rng::seeded(4);
        let mut actor = Sampler::new(UniformPolicy { n_actions: 3 });
        for n in [1, 2, 50] {
            let (m, s) = evaluate_monte_carlo(&mut Constant, &mut actor, n, &mut r).unwrap();
            assert_eq!(m, 3.0);
            assert_eq!(s, 0.0);
        }
        assert!(evaluate_monte_carlo(&mut Constant, &mut actor, 0, &mut r).is_err());
    }

    #[test]
    fn non_finite_reward_is_fatal() {
        let mut r = rng::seeded(0);
        let mut actor = Sampler::new(UniformPolicy { n_actions: 1 });
        let err = rollout(&mut Broken, &mut actor, &mut r).unwrap_err();
        assert!(matches!(err, Error::NonFiniteReward { t: 0, .. }));
    }

    #[test]
    fn trace_history_reconstruction() {
        let mut r = rng::seeded(9);
        let mut actor = Sampler::new(UniformPolicy { n_actions: 3 });
        let tr = rollout(&mut Constant, &mut actor, &mut r).unwrap();
        assert_eq!(tr.len(), 3);
        let h = tr.history(2);
        assert_eq!(h.t(), 2);
        assert_eq!(h.actions().collect::<Vec<_>>(), tr.actions()[..2].to_vec());
    }
}
