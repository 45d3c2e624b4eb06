//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng as _;

use pgmcts::hdp::{Enumerable, History, KeySpace, StepKeys};
use pgmcts::numerics::standard_normal;
use pgmcts::policy::{FeatureSoftmaxPolicy, LstmConfig, LstmPolicy, PgModel};
use pgmcts::rng::{self, Rng};

pub const FD_STEP: f64 = 1e-5;

/// Relative error `|a - b| / max(|a|, |b|)`; both values below `1e-9` in
/// magnitude count as agreeing (central differences cannot resolve them).
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `sum_t score[t] log pi(a_t | h_t) + sum_t value[t] b(h_t)` by a fresh
/// forward pass.
pub fn objective<M: PgModel>(model: &M, keys: &[StepKeys], actions: &[usize], score: &[f64], value: &[f64]) -> f64 {
    let mut tape = M::Tape::default();
    model.begin(&mut tape);
    let mut probs = vec![0.0; model.n_actions()];
    let mut f = 0.0;
    for (t, k) in keys.iter().enumerate() {
        model.advance(&mut tape, k, &mut probs).unwrap();
        f += score[t] * probs[actions[t]].ln();
        if let Some(b) = model.baseline(&tape, t) {
            f += value[t] * b;
        }
    }
    f
}

pub fn tape_for<M: PgModel>(model: &M, keys: &[StepKeys]) -> M::Tape {
    let mut tape = M::Tape::default();
    model.begin(&mut tape);
    let mut probs = vec![0.0; model.n_actions()];
    for k in keys {
        model.advance(&mut tape, k, &mut probs).unwrap();
    }
    tape
}

fn random_history(r: &mut Rng, n_obs: usize, n_actions: usize, len: usize) -> History {
    let mut h = History::new(r.random_range(0..n_obs));
    for _ in 1..len {
        h.push(r.random_range(0..n_actions), r.random_range(0..n_obs));
    }
    h
}

/// Parameter coordinate of the tabular policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Coord {
    Obs(usize, usize),
    Prefix(u32, usize),
    History(u32, usize),
}

fn coord_mut(m: &mut FeatureSoftmaxPolicy, c: Coord) -> &mut f64 {
    match c {
        Coord::Obs(o, a) => &mut m.obs_weights_mut(o)[a],
        Coord::Prefix(id, a) => &mut m.prefix_weights_mut(pgmcts::hdp::PrefixId(id))[a],
        Coord::History(id, a) => &mut m.history_weights_mut(pgmcts::hdp::HistoryId(id))[a],
    }
}

/// Largest relative error between the analytic gradient of the tabular policy
/// and central differences over `episodes` random episodes.
pub fn tabular_fd_error(seed: u64, episodes: usize) -> f64 {
    let (n_obs, n_actions) = (5, 10);
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..episodes {
        let len = r.random_range(1..=10);
        let h = random_history(&mut r, n_obs, n_actions, len);
        let mut ks = KeySpace::new();
        let keys = ks.intern(&h);
        let mut actions: Vec<usize> = h.actions().collect();
        actions.push(r.random_range(0..n_actions));
        let score: Vec<f64> = (0..len).map(|_| standard_normal(&mut r)).collect();
        let value = vec![0.0; len];

        let mut model = FeatureSoftmaxPolicy::new(n_obs, n_actions);
        let mut coords = Vec::new();
        for k in &keys {
            for a in 0..n_actions {
                coords.push(Coord::Obs(k.obs, a));
                coords.push(Coord::Prefix(k.prefix.unwrap().0, a));
                coords.push(Coord::History(k.history.unwrap().0, a));
            }
        }
        coords.sort();
        coords.dedup();
        for &c in &coords {
            *coord_mut(&mut model, c) = 0.7 * standard_normal(&mut r);
        }

        let tape = tape_for(&model, &keys);
        let g = model.gradient(&tape, &actions, &score, &value);
        let mut analytic: BTreeMap<Coord, f64> = BTreeMap::new();
        for (i, v) in g.by_obs.iter().enumerate() {
            *analytic.entry(Coord::Obs(i / n_actions, i % n_actions)).or_default() += v;
        }
        for (id, row) in &g.by_prefix {
            for (a, v) in row.iter().enumerate() {
                *analytic.entry(Coord::Prefix(id.0, a)).or_default() += v;
            }
        }
        for (id, row) in &g.by_history {
            for (a, v) in row.iter().enumerate() {
                *analytic.entry(Coord::History(id.0, a)).or_default() += v;
            }
        }

        for &c in &coords {
            let x = *coord_mut(&mut model, c);
            *coord_mut(&mut model, c) = x + FD_STEP;
            let fp = objective(&model, &keys, &actions, &score, &value);
            *coord_mut(&mut model, c) = x - FD_STEP;
            let fm = objective(&model, &keys, &actions, &score, &value);
            *coord_mut(&mut model, c) = x;
            let fd = (fp - fm) / (2.0 * FD_STEP);
            let an = analytic.get(&c).copied().unwrap_or(0.0);
            worst = worst.max(rel_err(an, fd));
        }
    }
    worst
}

/// Same check for the LSTM policy, including its value head.
pub fn lstm_fd_error(seed: u64, episodes: usize) -> f64 {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for e in 0..episodes {
        let config = LstmConfig {
            init_scale: 0.5,
            ..LstmConfig::default()
        };
        let mut model = LstmPolicy::new(config.clone(), seed ^ e as u64);
        let len = r.random_range(1..=12);
        let keys: Vec<StepKeys> = (0..len)
            .map(|t| StepKeys {
                t,
                obs: r.random_range(0..config.n_inputs),
                history: None,
                prefix: None,
            })
            .collect();
        let actions: Vec<usize> = (0..len).map(|_| r.random_range(0..config.n_actions)).collect();
        let score: Vec<f64> = (0..len).map(|_| standard_normal(&mut r)).collect();
        let value: Vec<f64> = (0..len).map(|_| standard_normal(&mut r)).collect();
        let tape = tape_for(&model, &keys);
        let g = model.gradient(&tape, &actions, &score, &value);
        for (i, &gi) in g.iter().enumerate() {
            let x = model.params()[i];
            model.params_mut()[i] = x + FD_STEP;
            let fp = objective(&model, &keys, &actions, &score, &value);
            model.params_mut()[i] = x - FD_STEP;
            let fm = objective(&model, &keys, &actions, &score, &value);
            model.params_mut()[i] = x;
            worst = worst.max(rel_err(gi, (fp - fm) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Exact expected REINFORCE direction `E[sum_t grad log pi(a_t|h_t) (g_t - b)]`
/// of a tabular policy on an enumerable environment, keyed by
/// `(table, row id, column)`.
pub fn exact_reinforce_gradient<E: Enumerable>(
    env: &mut E,
    model: &FeatureSoftmaxPolicy,
    baseline: f64,
) -> BTreeMap<(u8, u32, usize), f64> {
    let shape = env.shape();
    let mut ks = KeySpace::new();
    let mut acc = BTreeMap::new();
    let init = env.initial_distribution();
    for (o, &p) in init.iter().enumerate() {
        if p > 0.0 {
            let h = History::new(o);
            let keys = vec![ks.root(o)];
            walk(env, model, &mut ks, h, keys, vec![], vec![], p, baseline, shape.gamma, &mut acc);
        }
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn walk<E: Enumerable>(
    env: &mut E,
    model: &FeatureSoftmaxPolicy,
    ks: &mut KeySpace,
    h: History,
    keys: Vec<StepKeys>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    prob: f64,
    baseline: f64,
    gamma: f64,
    acc: &mut BTreeMap<(u8, u32, usize), f64>,
) {
    let tape = tape_for(model, &keys);
    let pi = model.recorded_probs(&tape, keys.len() - 1).to_vec();
    let tmax = env.shape().tmax;
    for (a, &pa) in pi.iter().enumerate() {
        let out = env.outcome(&h, a).unwrap();
        let mut acts = actions.clone();
        acts.push(a);
        let mut rs = rewards.clone();
        rs.push(out.reward);
        if h.t() == tmax || out.next.is_empty() {
            // Leaf: accumulate prob * sum_t grad log pi * (g_t - b).
            let returns = pgmcts::hdp::compute_returns(rs.iter().copied(), gamma);
            let score: Vec<f64> = returns.iter().map(|g| g - baseline).collect();
            let value = vec![0.0; score.len()];
            let grad = model.gradient(&tape, &acts, &score, &value);
            let w = prob * pa;
            for (i, v) in grad.by_obs.iter().enumerate() {
                *acc.entry((0, i as u32, 0)).or_default() += w * v;
            }
            for (id, row) in &grad.by_prefix {
                for (k, v) in row.iter().enumerate() {
                    *acc.entry((1, id.0, k)).or_default() += w * v;
                }
            }
            for (id, row) in &grad.by_history {
                for (k, v) in row.iter().enumerate() {
                    *acc.entry((2, id.0, k)).or_default() += w * v;
                }
            }
            continue;
        }
        for &(o, po) in &out.next {
            if po == 0.0 {
                continue;
            }
            let mut h2 = h.clone();
            h2.push(a, o);
            let mut k2 = keys.clone();
            let last = *k2.last().unwrap();
            k2.push(ks.extend(&last, a, o));
            walk(env, model, ks, h2, k2, acts.clone(), rs.clone(), prob * pa * po, baseline, gamma, acc);
        }
    }
}

/// Fills the observation table of `model` with normal noise.
pub fn random_obs_weights(model: &mut FeatureSoftmaxPolicy, n_obs: usize, seed: u64) {
    let mut r = rng::seeded(seed);
    for o in 0..n_obs {
        for w in model.obs_weights_mut(o) {
            *w = standard_normal(&mut r);
        }
    }
}
