//! Fast self-checks of core invariants, run by the `check` subcommand.

use rand::Rng as _;

use crate::agents::{AgentKind, AgentSpec, Learner};
use crate::env::SynthHdp;
use crate::error::Result;
use crate::hdp::{evaluate_exact, evaluate_monte_carlo, Sampler, UniformPolicy};
use crate::mcts::{Backprop, TreeStats};
use crate::mixture::{importance_weight, FloorSchedule};
use crate::policy::FeatureSoftmaxPolicy;
use crate::rng;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest statistic gap between classic and reformulated tree updates.
#[derive(Clone, Copy, Debug)]
pub struct TreeGap {
    pub max_q_diff: f64,
    /// Entries where `1/z` does not round to the visit count.
    pub count_mismatches: usize,
    /// Largest `|1/z - m|`.
    pub max_count_drift: f64,
    pub entries: usize,
}

/// Drives a UCT learner with classic updates and feeds the same episodes into
/// a second tree with reformulated updates and an unreachable step bound.
pub fn tree_equivalence(seed: u64, n_obs: usize, n_actions: usize, tmax: usize, episodes: u64) -> Result<TreeGap> {
    let mut env = SynthHdp::tiny(seed, n_obs, n_actions, tmax)?;
    let spec = AgentSpec::synth(AgentKind::LazyMcts);
    let mut learner = Learner::new(spec, FeatureSoftmaxPolicy::new(n_obs, n_actions), n_obs)?;
    let mut other = TreeStats::new(n_actions);
    let mut r = rng::seeded(seed);
    let mode = Backprop::Reformulated {
        max_kappa: 1e9,
        bernoulli: false,
    };
    for n in 1..=episodes {
        let trace = learner.train_episode(&mut env, &mut r)?;
        let keys = learner.keys().lookup(&trace.history(trace.len() - 1));
        other.backprop(&trace, &keys, mode, n, &mut r)?;
    }
    let tree = learner.tree();
    let mut gap = TreeGap {
        max_q_diff: 0.0,
        count_mismatches: 0,
        max_count_drift: 0.0,
        entries: 0,
    };
    for id in 0..learner.keys().n_histories() {
        let id = Some(crate::hdp::HistoryId(id as u32));
        let (Some(a), Some(b)) = (tree.node(id), other.node(id)) else {
            if tree.contains(id) != other.contains(id) {
                gap.count_mismatches += 1;
            }
            continue;
        };
        for k in 0..n_actions {
            gap.entries += 1;
            gap.max_q_diff = gap.max_q_diff.max((tree.q(a, k) - other.q(b, k)).abs());
            let inv = 1.0 / other.z(b, k);
            let m = tree.visits(a, k);
            gap.max_count_drift = gap.max_count_drift.max((inv - m as f64).abs());
            if inv.round() as u64 != m {
                gap.count_mismatches += 1;
            }
        }
    }
    Ok(gap)
}

/// Counts violations of the importance-weight bounds over random triples.
pub fn weight_violations(samples: usize, seed: u64) -> usize {
    let mut r = rng::seeded(seed);
    let mut bad = 0;
    for i in 0..samples {
        let pg: f64 = r.random_range(1e-12..=1.0);
        let tree: f64 = r.random_range(0.0..=1.0);
        let lambda: f64 = if i % 10 == 0 { 0.0 } else { r.random_range(0.0..=1.0) };
        let floor = FloorSchedule::default().value(r.random_range(0..1_000_000));
        let mix = (1.0 - lambda) * pg + lambda * tree;
        if mix <= 0.0 {
            continue;
        }
        let raw = importance_weight(pg, mix, lambda, 0.0);
        let floored = importance_weight(pg, mix, lambda, floor);
        let ok = raw > 0.0
            && raw <= 1.0
            && floored >= floor
            && floored <= 1.0
            && (lambda != 0.0 || raw == 1.0);
        bad += usize::from(!ok);
    }
    bad
}

/// Trains the given spec and plain REINFORCE from the same seed and reports
/// whether the learned parameters match bit for bit.
pub fn reduces_to_reinforce(spec: AgentSpec, seed: u64, episodes: u64) -> Result<bool> {
    let train = |spec: AgentSpec| -> Result<String> {
        let mut env = SynthHdp::tiny(seed, 2, 3, 3)?;
        let mut l = Learner::new(spec, FeatureSoftmaxPolicy::new(2, 3), 2)?;
        let mut r = rng::seeded(seed);
        for _ in 0..episodes {
            l.train_episode(&mut env, &mut r)?;
        }
        Ok(l.model().to_checkpoint(l.keys()).to_text())
    };
    let reinforce = AgentSpec {
        kind: AgentKind::Reinforce,
        ..spec.clone()
    };
    Ok(train(spec)? == train(reinforce)?)
}

pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut push = |name, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(CheckOutcome { name, passed, detail });
    };

    push(
        "tree updates agree",
        tree_equivalence(1, 2, 2, 4, 2000).map(|g| {
            (
                g.max_q_diff <= 1e-9 && g.count_mismatches == 0,
                format!("max |dq| = {:.3e}, count mismatches = {}", g.max_q_diff, g.count_mismatches),
            )
        }),
    );

    let bad = weight_violations(100_000, 2);
    push("importance weight bounds", Ok((bad == 0, format!("{bad} violations"))));

    let spec = AgentSpec {
        lambda: 0.0,
        floor: FloorSchedule::Constant(0.0),
        ..AgentSpec::synth(AgentKind::PgMctsFixed)
    };
    push(
        "zero mixing reduces to REINFORCE",
        reduces_to_reinforce(spec, 3, 300).map(|same| (same, format!("identical = {same}"))),
    );

    push(
        "exact evaluation matches sampling",
        (|| {
            let mut env = SynthHdp::tiny(4, 2, 3, 3)?;
            let exact = evaluate_exact(&mut env, &UniformPolicy { n_actions: 3 })?;
            let mut actor = Sampler::new(UniformPolicy { n_actions: 3 });
            let (m, se) = evaluate_monte_carlo(&mut env, &mut actor, 20_000, &mut rng::seeded(4))?;
            Ok(((m - exact).abs() <= 4.0 * se, format!("exact {exact:.4}, sampled {m:.4} +- {se:.4}")))
        })(),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
