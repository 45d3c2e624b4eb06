//! Randomly synthesized history-dependent task.
//!
//! Observation rows are Dirichlet draws per `(t, o, a)`. The reward is a local
//! term `x(o, a) / tmax` before the last step and `y(h) + 10 z(o_0..o_tmax)` at
//! the last step, where `x` and `y` are standard normal and `z` is a Gaussian
//! process over observation sequences. Every table is sampled lazily from keyed
//! streams, so its contents do not depend on the order of access.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::hdp::{EnvShape, Enumerable, Environment, History, Next, Outcome, Transition, LEAF_LIMIT};
use crate::numerics::{sample_dirichlet, sample_index, standard_normal, GpConfig, LazyGpField};
use crate::rng::{self, domain, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialDistribution {
    /// One Dirichlet draw per environment, like the transition rows.
    Dirichlet,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_obs: usize,
    pub n_actions: usize,
    pub tmax: usize,
    pub dirichlet_alpha: f64,
    pub initial: InitialDistribution,
    /// Weight of the sequence term in the final reward.
    pub sequence_weight: f64,
    pub gp: GpConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_obs: 5,
            n_actions: 10,
            tmax: 15,
            dirichlet_alpha: 0.2,
            initial: InitialDistribution::Dirichlet,
            sequence_weight: 10.0,
            gp: GpConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthHdp {
    seed: u64,
    config: SynthConfig,
    initial: Vec<f64>,
    rows: Vec<Option<Box<[f64]>>>,
    local: Vec<Option<f64>>,
    pinned_history: FxHashMap<History, f64>,
    field: LazyGpField,
    max_abs_reward: f64,
    seq_buf: Vec<usize>,
}

impl SynthHdp {
    /// Full-size instance: 5 observations, 10 actions, `tmax = 15`.
    pub fn new(seed: u64) -> Result<Self> {
        Self::with_config(seed, SynthConfig::default())
    }

    /// Shrunk instance for exact oracles; refuses sizes the enumerator would.
    pub fn tiny(seed: u64, n_obs: usize, n_actions: usize, tmax: usize) -> Result<Self> {
        let leaves = (n_obs as f64).powi(tmax as i32 + 1) * (n_actions as f64).powi(tmax as i32);
        if leaves > LEAF_LIMIT {
            return Err(Error::TooLarge {
                leaves,
                limit: LEAF_LIMIT,
            });
        }
        Self::with_config(
            seed,
            SynthConfig {
                n_obs,
                n_actions,
                tmax,
                ..SynthConfig::default()
            },
        )
    }

    pub fn with_config(seed: u64, config: SynthConfig) -> Result<Self> {
        if config.n_obs == 0 || config.n_actions == 0 || config.tmax == 0 {
            return Err(Error::config("env", "synth needs n_obs, n_actions and tmax >= 1"));
        }
        if config.n_obs > u16::MAX as usize || config.n_actions > u16::MAX as usize {
            return Err(Error::config("env", "too many observations or actions"));
        }
        if !(config.dirichlet_alpha > 0.0) {
            return Err(Error::config("env.dirichlet_alpha", "must be positive"));
        }
        let initial = match config.initial {
            InitialDistribution::Uniform => vec![1.0 / config.n_obs as f64; config.n_obs],
            InitialDistribution::Dirichlet => {
                let mut r = rng::keyed(seed, domain::INITIAL, []);
                sample_dirichlet(&vec![config.dirichlet_alpha; config.n_obs], &mut r)?
            }
        };
        let field = LazyGpField::new(seed, config.n_obs, config.tmax + 1, config.gp.clone())?;
        let n_rows = config.tmax * config.n_obs * config.n_actions;
        Ok(SynthHdp {
            seed,
            initial,
            rows: vec![None; n_rows],
            local: vec![None; config.n_obs * config.n_actions],
            pinned_history: FxHashMap::default(),
            field,
            max_abs_reward: 0.0,
            seq_buf: Vec::with_capacity(config.tmax + 1),
            config,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Next-observation distribution for `(t, o, a)`, `t < tmax`.
    pub fn transition_row(&mut self, t: usize, obs: usize, action: usize) -> Result<&[f64]> {
        let c = &self.config;
        let idx = (t * c.n_obs + obs) * c.n_actions + action;
        if self.rows[idx].is_none() {
            let mut r = rng::keyed(
                self.seed,
                domain::TRANSITION,
                [t as u64, obs as u64, action as u64],
            );
            let row = sample_dirichlet(&vec![c.dirichlet_alpha; c.n_obs], &mut r)?;
            self.rows[idx] = Some(row.into_boxed_slice());
        }
        Ok(self.rows[idx].as_deref().unwrap())
    }

    /// `x(o, a)`.
    pub fn local_reward(&mut self, obs: usize, action: usize) -> f64 {
        let idx = obs * self.config.n_actions + action;
        *self.local[idx].get_or_insert_with(|| {
            let mut r = rng::keyed(self.seed, domain::LOCAL_REWARD, [obs as u64, action as u64]);
            standard_normal(&mut r)
        })
    }

    /// `y(h)` for a history of length `tmax`.
    pub fn history_reward(&self, h: &History) -> f64 {
        if let Some(&v) = self.pinned_history.get(h) {
            return v;
        }
        let words = h.symbols().iter().map(|&s| s as u64);
        standard_normal(&mut rng::keyed(self.seed, domain::HISTORY_REWARD, words))
    }

    /// `z(o_0, ..., o_tmax)`.
    pub fn sequence_value(&mut self, observations: &[usize]) -> Result<f64> {
        self.field.query(observations)
    }

    pub fn pin_local_reward(&mut self, obs: usize, action: usize, value: f64) {
        self.local[obs * self.config.n_actions + action] = Some(value);
    }

    pub fn pin_history_reward(&mut self, h: History, value: f64) {
        self.pinned_history.insert(h, value);
    }

    pub fn pin_sequence_value(&mut self, observations: &[usize], value: f64) -> Result<()> {
        self.field.pin(observations, value)
    }

    pub fn field(&self) -> &LazyGpField {
        &self.field
    }

    /// Largest reward magnitude returned so far.
    pub fn reward_bound(&self) -> f64 {
        self.max_abs_reward
    }

    fn reward(&mut self, h: &History, action: usize) -> Result<f64> {
        let t = h.t();
        let r = if t < self.config.tmax {
            self.local_reward(h.tail(), action) / self.config.tmax as f64
        } else {
            self.seq_buf.clear();
            self.seq_buf.extend(h.observations());
            let seq = std::mem::take(&mut self.seq_buf);
            let z = self.field.query(&seq);
            self.seq_buf = seq;
            self.history_reward(h) + self.config.sequence_weight * z?
        };
        self.max_abs_reward = self.max_abs_reward.max(r.abs());
        Ok(r)
    }

    fn check(&self, h: &History, action: usize) -> Result<()> {
        if action >= self.config.n_actions {
            return Err(Error::InvalidArgument(format!("action {action} out of range")));
        }
        if h.t() > self.config.tmax {
            return Err(Error::InvalidArgument("history longer than tmax".into()));
        }
        Ok(())
    }
}

impl Environment for SynthHdp {
    fn shape(&self) -> EnvShape {
        EnvShape {
            n_obs: self.config.n_obs,
            n_actions: self.config.n_actions,
            tmax: self.config.tmax,
            gamma: 1.0,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> usize {
        sample_index(&self.initial, rng)
    }

    fn step(&mut self, h: &History, action: usize, rng: &mut Rng) -> Result<Transition> {
        self.check(h, action)?;
        let reward = self.reward(h, action)?;
        let t = h.t();
        let next = if t < self.config.tmax {
            Next::Obs(sample_index(self.transition_row(t, h.tail(), action)?, rng))
        } else {
            Next::Terminal
        };
        Ok(Transition { reward, next })
    }
}

impl Enumerable for SynthHdp {
    fn initial_distribution(&mut self) -> Vec<f64> {
        self.initial.clone()
    }

    fn outcome(&mut self, h: &History, action: usize) -> Result<Outcome> {
        self.check(h, action)?;
        let reward = self.reward(h, action)?;
        let t = h.t();
        let next = if t < self.config.tmax {
            self.transition_row(t, h.tail(), action)?
                .iter()
                .copied()
                .enumerate()
                .collect()
        } else {
            Vec::new()
        };
        Ok(Outcome { reward, next })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdp::{evaluate_exact, rollout, solve_optimal, OpenLoopPolicy, Sampler, UniformPolicy};

    #[test]
    fn full_size_shape() {
        let env = SynthHdp::new(1).unwrap();
        let s = env.shape();
        assert_eq!((s.n_obs, s.n_actions, s.tmax), (5, 10, 15));
        assert!(!env.field().is_eager());
    }

    #[test]
    fn same_seed_same_rewards() {
        let mut a = SynthHdp::new(5).unwrap();
        let mut b = SynthHdp::new(5).unwrap();
        let pol = OpenLoopPolicy {
            n_actions: 10,
            actions: vec![3, 1, 4, 1, 5, 9, 2, 6],
        };
        for i in 0..5 {
            let ta = rollout(&mut a, &mut Sampler::new(&pol), &mut rng::seeded(i)).unwrap();
            let tb = rollout(&mut b, &mut Sampler::new(&pol), &mut rng::seeded(i)).unwrap();
            assert_eq!(ta, tb);
            assert_eq!(ta.len(), 16);
        }
    }

    #[test]
    fn local_step_reward_formula() {
        let mut env = SynthHdp::new(2).unwrap();
        env.pin_local_reward(3, 7, 1.5);
        let tr = env.step(&History::new(3), 7, &mut rng::seeded(0)).unwrap();
        assert!((tr.reward - 0.1).abs() < 1e-15);
        assert!(matches!(tr.next, Next::Obs(_)));
    }

    #[test]
    fn terminal_reward_formula() {
        let mut env = SynthHdp::tiny(2, 2, 2, 1).unwrap();
        let mut h = History::new(0);
        h.push(1, 1);
        env.pin_history_reward(h.clone(), 0.3);
        let z = env.sequence_value(&[0, 1]).unwrap();
        let tr = env.step(&h, 0, &mut rng::seeded(0)).unwrap();
        assert_eq!(tr.next, Next::Terminal);
        assert!((tr.reward - (0.3 + 10.0 * z)).abs() < 1e-12);

        let config = SynthConfig {
            gp: GpConfig {
                eager_limit: 0,
                ..GpConfig::default()
            },
            ..SynthConfig::default()
        };
        let mut env = SynthHdp::with_config(4, config).unwrap();
        let mut h = History::new(0);
        for _ in 0..15 {
            h.push(0, 0);
        }
        env.pin_history_reward(h.clone(), 0.3);
        env.pin_sequence_value(&[0; 16], -0.2).unwrap();
        let tr = env.step(&h, 0, &mut rng::seeded(0)).unwrap();
        assert!((tr.reward - (-1.7)).abs() < 1e-12);
    }

    #[test]
    fn rows_are_memoized_and_access_order_free() {
        let mut a = SynthHdp::new(8).unwrap();
        let mut b = SynthHdp::new(8).unwrap();
        let first = a.transition_row(4, 2, 9).unwrap().to_vec();
        assert_eq!(a.transition_row(4, 2, 9).unwrap(), &first[..]);
        b.transition_row(0, 0, 0).unwrap();
        assert_eq!(b.transition_row(4, 2, 9).unwrap(), &first[..]);
        assert!((first.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_instance_oracles() {
        let mut env = SynthHdp::tiny(3, 2, 2, 1).unwrap();
        let (v, pol) = solve_optimal(&mut env).unwrap();
        let u = evaluate_exact(&mut env, &UniformPolicy { n_actions: 2 }).unwrap();
        assert!(u <= v);
        assert!((evaluate_exact(&mut env, &pol).unwrap() - v).abs() < 1e-12);
        let (v2, _) = solve_optimal(&mut SynthHdp::tiny(3, 2, 2, 1).unwrap()).unwrap();
        assert_eq!(v, v2);
        assert!(SynthHdp::tiny(0, 5, 10, 15).is_err());
    }

    #[test]
    fn rejects_bad_actions() {
        let mut env = SynthHdp::tiny(0, 2, 2, 1).unwrap();
        assert!(env.step(&History::new(0), 2, &mut rng::seeded(0)).is_err());
    }
}
