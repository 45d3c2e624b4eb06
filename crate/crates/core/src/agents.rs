//! Training loops for every agent: plain policy gradient, lazy tree search, a
//! prior-guided tree search, the naive mixture and the corrected mixture with
//! fixed or learned mixing probability.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hdp::{
    rollout, Actor, Component, Decision, Environment, EpisodeTrace, History, HistoryPolicy,
    KeySpace, StepKeys,
};
use crate::mcts::{Backprop, Selection, TreeStats};
use crate::mixture::{
    importance_weight, mixing_coefficient, mixture_probs, FloorSchedule, MixingFunction, Schedule,
};
use crate::numerics::sample_index;
use crate::policy::{PgModel, RunningMeanBaseline};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Reinforce,
    LazyMcts,
    LazyAlphaZero,
    NaiveMixture,
    PgMctsFixed,
    PgMctsAdaptive,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Reinforce,
        AgentKind::LazyMcts,
        AgentKind::LazyAlphaZero,
        AgentKind::NaiveMixture,
        AgentKind::PgMctsFixed,
        AgentKind::PgMctsAdaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Reinforce => "reinforce",
            AgentKind::LazyMcts => "lazy_mcts",
            AgentKind::LazyAlphaZero => "lazy_alphazero",
            AgentKind::NaiveMixture => "naive_mixture",
            AgentKind::PgMctsFixed => "pg_mcts_fixed",
            AgentKind::PgMctsAdaptive => "pg_mcts_adaptive",
        }
    }

    fn uses_pg(self) -> bool {
        self != AgentKind::LazyMcts
    }

    fn uses_tree(self) -> bool {
        self != AgentKind::Reinforce
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("agent.kind", format!("unknown agent `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub kind: AgentKind,
    /// Step size of the parametric policy (or of the prior, for the
    /// prior-guided search).
    pub schedule: Schedule,
    /// Exploration constant of the tree policy.
    pub c: f64,
    /// Mixing probability; the starting value when it is learned.
    pub lambda: f64,
    /// Bound on the tree update multiplier.
    pub max_kappa: f64,
    /// Inverse temperature of the softmax tree policy.
    pub beta: f64,
    pub floor: FloorSchedule,
    pub bernoulli_gate: bool,
    pub clip: Option<f64>,
    pub baseline_decay: f64,
    pub q_init: f64,
}

impl AgentSpec {
    pub fn new(kind: AgentKind) -> Self {
        AgentSpec {
            kind,
            schedule: Schedule::Constant { alpha: 0.01 },
            c: 5.0,
            lambda: 0.2,
            max_kappa: 50_000.0,
            beta: 1.0,
            floor: FloorSchedule::default(),
            bernoulli_gate: false,
            clip: None,
            baseline_decay: 0.99,
            q_init: 0.0,
        }
    }

    /// Settings used on the synthesized task.
    pub fn synth(kind: AgentKind) -> Self {
        let base = AgentSpec::new(kind);
        match kind {
            AgentKind::LazyAlphaZero => AgentSpec {
                schedule: Schedule::Constant { alpha: 0.0067 },
                c: 15.0,
                ..base
            },
            _ => base,
        }
    }

    /// Settings used on the T-maze; `long` selects the longer corridor values.
    pub fn tmaze(kind: AgentKind, long: bool) -> Self {
        let alpha = if long { 0.1 } else { 0.2 };
        let base = AgentSpec {
            schedule: Schedule::Constant { alpha },
            max_kappa: if long { 5000.0 } else { 3000.0 },
            // Plain gradient steps at these rates blow up the recurrent
            // model within a few hundred episodes without a norm cap.
            clip: Some(1.0),
            ..AgentSpec::new(kind)
        };
        match kind {
            AgentKind::LazyMcts => AgentSpec { c: 0.3, ..base },
            AgentKind::LazyAlphaZero => AgentSpec {
                schedule: Schedule::Constant {
                    alpha: if long { 0.01 } else { 0.02 },
                },
                c: 1.0,
                ..base
            },
            _ => AgentSpec { c: 0.1, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let alpha0 = match self.schedule {
            Schedule::Constant { alpha } => alpha,
            Schedule::Convergent { alpha0, c } => {
                if !(c >= 0.0) {
                    return Err(Error::config("agent.schedule_c", "must be non-negative"));
                }
                alpha0
            }
        };
        if !(alpha0 >= 0.0 && alpha0.is_finite()) {
            return Err(Error::config("agent.alpha", "must be a finite non-negative number"));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::config("agent.c", "must be a finite non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("agent.lambda", "must be in [0, 1]"));
        }
        if self.kind == AgentKind::PgMctsAdaptive && !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::config("agent.lambda", "a learned mixing value must start in (0, 1)"));
        }
        if !(self.max_kappa > 0.0) {
            return Err(Error::config("agent.max_kappa", "must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("agent.beta", "must be a finite non-negative number"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::config("agent.clip", "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::config("agent.baseline_decay", "must be in [0, 1)"));
        }
        Ok(())
    }

    fn selection(&self) -> Selection {
        match self.kind {
            AgentKind::LazyAlphaZero => Selection::Puct { c: self.c },
            AgentKind::PgMctsFixed | AgentKind::PgMctsAdaptive => Selection::SoftUct {
                c: self.c,
                beta: self.beta,
            },
            _ => Selection::Uct { c: self.c },
        }
    }

    fn backprop(&self) -> Backprop {
        match self.kind {
            AgentKind::PgMctsFixed | AgentKind::PgMctsAdaptive => Backprop::Reformulated {
                max_kappa: self.max_kappa,
                bernoulli: self.bernoulli_gate,
            },
            _ => Backprop::Classic,
        }
    }

    fn mixing(&self, n_obs: usize) -> Result<MixingFunction> {
        match self.kind {
            AgentKind::Reinforce => MixingFunction::constant(0.0),
            AgentKind::LazyMcts | AgentKind::LazyAlphaZero => MixingFunction::constant(1.0),
            AgentKind::NaiveMixture | AgentKind::PgMctsFixed => MixingFunction::constant(self.lambda),
            AgentKind::PgMctsAdaptive => MixingFunction::learned(n_obs, self.lambda),
        }
    }
}

/// Per-step buffers of the episode in progress.
#[derive(Clone, Debug, Default)]
struct Scratch {
    keys: Vec<StepKeys>,
    pg: Vec<f64>,
    tree: Vec<f64>,
}

/// One agent: a parametric policy, a tree and the mixing function between
/// them, updated once per episode.
#[derive(Clone)]
pub struct Learner<M: PgModel> {
    spec: AgentSpec,
    model: M,
    tree: TreeStats,
    keys: KeySpace,
    mixing: MixingFunction,
    baseline: RunningMeanBaseline,
    episodes: u64,
    tape: M::Tape,
    scratch: Scratch,
    frozen: bool,
}

impl<M: PgModel> Learner<M> {
    pub fn new(spec: AgentSpec, model: M, n_obs: usize) -> Result<Self> {
        spec.validate()?;
        let n_actions = model.n_actions();
        let mixing = spec.mixing(n_obs)?;
        Ok(Learner {
            tree: TreeStats::with_initial_q(n_actions, spec.q_init),
            baseline: RunningMeanBaseline::new(spec.baseline_decay),
            spec,
            model,
            keys: KeySpace::new(),
            mixing,
            episodes: 0,
            tape: M::Tape::default(),
            scratch: Scratch {
                pg: vec![0.0; n_actions],
                tree: vec![0.0; n_actions],
                keys: Vec::new(),
            },
            frozen: false,
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    pub fn tree(&self) -> &TreeStats {
        &self.tree
    }

    pub fn keys(&self) -> &KeySpace {
        &self.keys
    }

    pub fn keys_mut(&mut self) -> &mut KeySpace {
        &mut self.keys
    }

    pub fn mixing(&self) -> &MixingFunction {
        &self.mixing
    }

    /// Number of completed training episodes.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    fn step_keys(&mut self, h: &History) -> StepKeys {
        let t = h.t();
        let keys = if t == 0 {
            if self.frozen {
                self.keys.find_root(h.tail())
            } else {
                self.keys.root(h.tail())
            }
        } else {
            let parent = self.scratch.keys[t - 1];
            let (a, o) = (h.action(t - 1), h.tail());
            if self.frozen {
                self.keys.find_extension(&parent, a, o)
            } else {
                self.keys.extend(&parent, a, o)
            }
        };
        self.scratch.keys.truncate(t);
        self.scratch.keys.push(keys);
        keys
    }

    /// Writes the component distributions at `keys` into the scratch buffers
    /// and returns `lambda(h)`.
    fn component_probs(&mut self, keys: &StepKeys) -> Result<f64> {
        let kind = self.spec.kind;
        let lambda = self.mixing.value(keys.obs);
        if kind.uses_pg() {
            self.model.advance(&mut self.tape, keys, &mut self.scratch.pg)?;
        }
        if kind.uses_tree() && lambda > 0.0 {
            let prior = (kind == AgentKind::LazyAlphaZero).then_some(&self.scratch.pg[..]);
            self.tree
                .policy_probs(keys, self.spec.selection(), prior, &mut self.scratch.tree)?;
        }
        Ok(lambda)
    }

    fn update(&mut self, trace: &EpisodeTrace, rng: &mut Rng) -> Result<()> {
        self.episodes += 1;
        let n = self.episodes;
        let kind = self.spec.kind;
        let (alpha, _) = self.spec.schedule.rates(n)?;
        let len = trace.len();

        if kind.uses_pg() {
            let floor = self.spec.floor.value(n);
            let actions = trace.actions();
            let mut score = vec![0.0; len];
            let mut value = vec![0.0; len];
            let mut lambda_coeff = vec![0.0; len];
            for (t, rec) in trace.records.iter().enumerate() {
                let head = self.model.baseline(&self.tape, t);
                let b = head.unwrap_or_else(|| self.baseline.value(t));
                let adv = trace.returns[t] - b;
                if head.is_some() {
                    value[t] = adv;
                }
                score[t] = match kind {
                    AgentKind::LazyAlphaZero => 1.0,
                    AgentKind::Reinforce | AgentKind::NaiveMixture => adv,
                    _ => {
                        importance_weight(rec.pg_prob, rec.behavior_prob, rec.lambda, floor) * adv
                    }
                };
                if kind == AgentKind::PgMctsAdaptive {
                    lambda_coeff[t] = mixing_coefficient(rec.pg_prob, rec.tree_prob, rec.behavior_prob, adv);
                }
            }
            if kind == AgentKind::LazyAlphaZero {
                value.fill(0.0);
            }
            let grad = self.model.gradient(&self.tape, &actions, &score, &value);
            self.model
                .apply(&grad, alpha, self.spec.clip)
                .map_err(|e| e.at_episode(n))?;
            if self.mixing.is_learned() {
                let obs: Vec<usize> = trace.records.iter().map(|r| r.obs).collect();
                self.mixing.apply(&obs, &lambda_coeff, alpha)?;
            }
            if self.model.baseline(&self.tape, 0).is_none() {
                self.baseline.observe_all(&trace.returns);
            }
        }

        if kind.uses_tree() {
            let keys = std::mem::take(&mut self.scratch.keys);
            let out = self.tree.backprop(trace, &keys, self.spec.backprop(), n, rng);
            self.scratch.keys = keys;
            out.map_err(|e| e.at_episode(n))?;
        }
        Ok(())
    }

    /// Runs one episode under the current mixture and updates both components.
    pub fn train_episode<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        rng: &mut Rng,
    ) -> Result<EpisodeTrace> {
        self.frozen = false;
        let trace = rollout(env, self, rng).map_err(|e| e.at_episode(self.episodes + 1))?;
        self.update(&trace, rng)?;
        Ok(trace)
    }

    /// Runs `n` episodes without learning and applies `metric` to each.
    pub fn evaluate<E, F>(&mut self, env: &mut E, n: usize, rng: &mut Rng, mut metric: F) -> Result<Vec<f64>>
    where
        E: Environment + ?Sized,
        F: FnMut(&E, &EpisodeTrace) -> f64,
    {
        self.frozen = true;
        let out = (0..n)
            .map(|_| rollout(env, self, rng).map(|t| metric(env, &t)))
            .collect();
        self.frozen = false;
        out
    }

    /// The current mixture as a stateless policy, for exact evaluation.
    pub fn policy(&self) -> MixturePolicy<'_, M> {
        MixturePolicy { learner: self }
    }
}

impl<M: PgModel> Actor for Learner<M> {
    fn decide(&mut self, history: &History, rng: &mut Rng) -> Result<Decision> {
        if history.t() == 0 {
            self.model.begin(&mut self.tape);
        }
        let keys = self.step_keys(history);
        let lambda = self.component_probs(&keys)?;
        let kind = self.spec.kind;
        // The draw is skipped at 0 and 1 so pure agents consume no randomness here.
        let component = if lambda <= 0.0 {
            Component::Pg
        } else if lambda >= 1.0 || rng.random::<f64>() < lambda {
            Component::Tree
        } else {
            Component::Pg
        };
        let s = &mut self.scratch;
        let action = match component {
            Component::Pg => sample_index(&s.pg, rng),
            Component::Tree => sample_index(&s.tree, rng),
        };
        let pg_prob = if kind.uses_pg() { s.pg[action] } else { 0.0 };
        let tree_prob = if lambda > 0.0 { s.tree[action] } else { 0.0 };
        let behavior_prob = if lambda <= 0.0 {
            pg_prob
        } else if lambda >= 1.0 {
            tree_prob
        } else {
            (1.0 - lambda) * pg_prob + lambda * tree_prob
        };
        Ok(Decision {
            action,
            behavior_prob,
            component,
            lambda,
            pg_prob,
            tree_prob,
        })
    }
}

/// Read-only view of a learner's mixture policy.
pub struct MixturePolicy<'a, M: PgModel> {
    learner: &'a Learner<M>,
}

impl<M: PgModel> HistoryPolicy for MixturePolicy<'_, M> {
    fn n_actions(&self) -> usize {
        self.learner.model.n_actions()
    }

    fn action_probs(&self, history: &History, out: &mut [f64]) -> Result<()> {
        let l = self.learner;
        let kind = l.spec.kind;
        let keys = l.keys.lookup(history);
        let last = *keys.last().unwrap();
        let na = out.len();
        let mut pg = vec![0.0; na];
        if kind.uses_pg() {
            let mut tape = M::Tape::default();
            l.model.begin(&mut tape);
            for k in &keys {
                l.model.advance(&mut tape, k, &mut pg)?;
            }
        }
        let lambda = l.mixing.value(last.obs);
        let mut tree = vec![0.0; na];
        if kind.uses_tree() && lambda > 0.0 {
            let prior = (kind == AgentKind::LazyAlphaZero).then_some(&pg[..]);
            l.tree.policy_probs(&last, l.spec.selection(), prior, &mut tree)?;
        }
        if lambda <= 0.0 {
            out.copy_from_slice(&pg);
            Ok(())
        } else if lambda >= 1.0 {
            out.copy_from_slice(&tree);
            Ok(())
        } else {
            mixture_probs(&pg, &tree, lambda, out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SynthHdp;
    use crate::policy::FeatureSoftmaxPolicy;
    use crate::rng;

    fn learner(kind: AgentKind, lambda: f64) -> Learner<FeatureSoftmaxPolicy> {
        let spec = AgentSpec {
            lambda,
            ..AgentSpec::synth(kind)
        };
        Learner::new(spec, FeatureSoftmaxPolicy::new(2, 3), 2).unwrap()
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in AgentKind::ALL {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!("alphago".parse::<AgentKind>().is_err());
    }

    #[test]
    fn table_presets() {
        let s = AgentSpec::synth(AgentKind::PgMctsFixed);
        assert_eq!(s.schedule, Schedule::Constant { alpha: 0.01 });
        assert_eq!((s.c, s.lambda, s.max_kappa), (5.0, 0.2, 50_000.0));
        let t = AgentSpec::tmaze(AgentKind::PgMctsFixed, false);
        assert_eq!(t.schedule, Schedule::Constant { alpha: 0.2 });
        assert_eq!((t.c, t.lambda, t.max_kappa), (0.1, 0.2, 3000.0));
        let z = AgentSpec::tmaze(AgentKind::LazyAlphaZero, true);
        assert_eq!((z.schedule, z.c), (Schedule::Constant { alpha: 0.01 }, 1.0));
    }

    #[test]
    fn validation_names_the_field() {
        let bad = AgentSpec {
            lambda: 1.5,
            ..AgentSpec::synth(AgentKind::PgMctsFixed)
        };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "agent.lambda"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixture_never_assigns_zero() {
        let mut env = SynthHdp::tiny(1, 2, 3, 3).unwrap();
        let mut l = learner(AgentKind::PgMctsFixed, 0.2);
        let mut r = rng::seeded(0);
        for _ in 0..300 {
            let tr = l.train_episode(&mut env, &mut r).unwrap();
            assert!(tr.records.iter().all(|x| x.behavior_prob > 0.0));
        }
    }

    #[test]
    fn component_frequency_matches_lambda() {
        let mut env = SynthHdp::tiny(2, 2, 3, 3).unwrap();
        let mut l = learner(AgentKind::PgMctsFixed, 0.2);
        let mut r = rng::seeded(1);
        let (mut tree, mut total) = (0usize, 0usize);
        while total < 100_000 {
            let tr = l.train_episode(&mut env, &mut r).unwrap();
            total += tr.len();
            tree += tr.records.iter().filter(|x| x.component == Component::Tree).count();
        }
        assert!((tree as f64 / total as f64 - 0.2).abs() < 0.01);
    }

    #[test]
    fn same_seed_same_learning() {
        let run = || {
            let mut env = SynthHdp::tiny(3, 2, 3, 3).unwrap();
            let mut l = learner(AgentKind::PgMctsAdaptive, 0.2);
            let mut r = rng::seeded(4);
            (0..200)
                .map(|_| l.train_episode(&mut env, &mut r).unwrap().total_return())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tmaze_preset_stays_finite() {
        use crate::env::{TMaze, TMazeConfig};
        use crate::policy::{LstmConfig, LstmPolicy};
        let mut env = TMaze::new(TMazeConfig::new(10, 0)).unwrap();
        let spec = AgentSpec::tmaze(AgentKind::Reinforce, false);
        let mut l = Learner::new(spec, LstmPolicy::new(LstmConfig::default(), 1), 4).unwrap();
        let mut r = rng::seeded(0);
        for _ in 0..500 {
            l.train_episode(&mut env, &mut r).unwrap();
        }
        assert!(l.model().params().iter().all(|x| x.is_finite()));
    }
}
