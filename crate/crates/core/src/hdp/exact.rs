//! Exact evaluation and optimal control by enumerating the history tree.

use std::collections::HashMap;

use super::{Enumerable, History, HistoryPolicy};
use crate::error::{Error, Result};

/// Largest `|O|^(tmax+1) * |A|^tmax` accepted for enumeration.
pub const LEAF_LIMIT: f64 = 1e6;

fn guard<E: Enumerable + ?Sized>(env: &E) -> Result<()> {
    let s = env.shape();
    let leaves = (s.n_obs as f64).powi(s.tmax as i32 + 1) * (s.n_actions as f64).powi(s.tmax as i32);
    if leaves > LEAF_LIMIT {
        return Err(Error::TooLarge {
            leaves,
            limit: LEAF_LIMIT,
        });
    }
    Ok(())
}

/// `J(pi) = E[G_0]` computed exactly.
pub fn evaluate_exact<E, P>(env: &mut E, policy: &P) -> Result<f64>
where
    E: Enumerable + ?Sized,
    P: HistoryPolicy + ?Sized,
{
    guard(env)?;
    let init = env.initial_distribution();
    let mut total = 0.0;
    for (o, &p) in init.iter().enumerate() {
        if p > 0.0 {
            let mut h = History::new(o);
            total += p * policy_value(env, policy, &mut h)?;
        }
    }
    Ok(total)
}

fn policy_value<E, P>(env: &mut E, policy: &P, h: &mut History) -> Result<f64>
where
    E: Enumerable + ?Sized,
    P: HistoryPolicy + ?Sized,
{
    let shape = env.shape();
    let mut probs = vec![0.0; shape.n_actions];
    policy.action_probs(h, &mut probs)?;
    let mut v = 0.0;
    for (a, &pa) in probs.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        let out = env.outcome(h, a)?;
        let mut q = out.reward;
        if h.t() < shape.tmax {
            for &(o, po) in &out.next {
                if po > 0.0 {
                    h.push(a, o);
                    q += shape.gamma * po * policy_value(env, policy, h)?;
                    h.pop();
                }
            }
        }
        v += pa * q;
    }
    Ok(v)
}

/// A deterministic history-dependent policy. Histories absent from the table
/// take action 0.
#[derive(Clone, Debug, Default)]
pub struct OptimalPolicy {
    pub n_actions: usize,
    pub actions: HashMap<History, usize>,
}

impl OptimalPolicy {
    pub fn action(&self, h: &History) -> usize {
        self.actions.get(h).copied().unwrap_or(0)
    }
}

impl HistoryPolicy for OptimalPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_probs(&self, history: &History, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        out[self.action(history)] = 1.0;
        Ok(())
    }
}

/// Backward induction over all histories. Ties go to the lowest action id.
pub fn solve_optimal<E: Enumerable + ?Sized>(env: &mut E) -> Result<(f64, OptimalPolicy)> {
    guard(env)?;
    let shape = env.shape();
    let init = env.initial_distribution();
    let mut policy = OptimalPolicy {
        n_actions: shape.n_actions,
        actions: HashMap::new(),
    };
    let mut total = 0.0;
    for (o, &p) in init.iter().enumerate() {
        let mut h = History::new(o);
        let v = optimal_value(env, &mut h, &mut policy)?;
        if p > 0.0 {
            total += p * v;
        }
    }
    Ok((total, policy))
}

fn optimal_value<E: Enumerable + ?Sized>(
    env: &mut E,
    h: &mut History,
    policy: &mut OptimalPolicy,
) -> Result<f64> {
    let shape = env.shape();
    let mut best = f64::NEG_INFINITY;
    let mut best_action = 0;
    for a in 0..shape.n_actions {
        let out = env.outcome(h, a)?;
        let mut q = out.reward;
        if h.t() < shape.tmax {
            for &(o, po) in &out.next {
                if po > 0.0 {
                    h.push(a, o);
                    q += shape.gamma * po * optimal_value(env, h, policy)?;
                    h.pop();
                }
            }
        }
        if q > best {
            best = q;
            best_action = a;
        }
    }
    policy.actions.insert(h.clone(), best_action);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdp::{EnvShape, Environment, Next, Outcome, Transition, UniformPolicy};
    use crate::rng::Rng;

    /// One decision between two arms.
    struct Bandit(Vec<f64>);

    impl Environment for Bandit {
        fn shape(&self) -> EnvShape {
            EnvShape {
                n_obs: 1,
                n_actions: self.0.len(),
                tmax: 0,
                gamma: 1.0,
            }
        }
        fn reset(&mut self, _: &mut Rng) -> usize {
            0
        }
        fn step(&mut self, _: &History, a: usize, _: &mut Rng) -> Result<Transition> {
            Ok(Transition {
                reward: self.0[a],
                next: Next::Terminal,
            })
        }
    }

    impl Enumerable for Bandit {
        fn initial_distribution(&mut self) -> Vec<f64> {
            vec![1.0]
        }
        fn outcome(&mut self, _: &History, a: usize) -> Result<Outcome> {
            Ok(Outcome {
                reward: self.0[a],
                next: vec![],
            })
        }
    }

    struct Huge;

    impl Environment for Huge {
        fn shape(&self) -> EnvShape {
            EnvShape {
                n_obs: 5,
                n_actions: 10,
                tmax: 15,
                gamma: 1.0,
            }
        }
        fn reset(&mut self, _: &mut Rng) -> usize {
            0
        }
        fn step(&mut self, _: &History, _: usize, _: &mut Rng) -> Result<Transition> {
            unreachable!()
        }
    }

    impl Enumerable for Huge {
        fn initial_distribution(&mut self) -> Vec<f64> {
            vec![0.2; 5]
        }
        fn outcome(&mut self, _: &History, _: usize) -> Result<Outcome> {
            unreachable!()
        }
    }

    #[test]
    fn bandit_optimum() {
        let mut env = Bandit(vec![0.2, 0.9]);
        let (v, pol) = solve_optimal(&mut env).unwrap();
        assert_eq!(v, 0.9);
        assert_eq!(pol.action(&History::new(0)), 1);
        assert_eq!(evaluate_exact(&mut env, &pol).unwrap(), 0.9);
        let u = evaluate_exact(&mut env, &UniformPolicy { n_actions: 2 }).unwrap();
        assert!((u - 0.55).abs() < 1e-15);
    }

    #[test]
    fn ties_take_lowest_action() {
        let mut env = Bandit(vec![1.0, 1.0, 0.5]);
        let (_, pol) = solve_optimal(&mut env).unwrap();
        assert_eq!(pol.action(&History::new(0)), 0);
    }

    #[test]
    fn refuses_large_instances() {
        assert!(matches!(
            evaluate_exact(&mut Huge, &UniformPolicy { n_actions: 10 }),
            Err(Error::TooLarge { .. })
        ));
        assert!(matches!(solve_optimal(&mut Huge), Err(Error::TooLarge { .. })));
    }
}
