//! Lazy tree search statistics.
//!
//! One node per expanded history, each holding a return estimate `q` and an
//! inverse visit count `z = 1/m` for every action. The tree is never searched
//! with a simulator: it is read to act and updated once per real episode.

use std::io::Write;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hdp::{EpisodeTrace, HistoryId, KeySpace, StepKeys};
use crate::numerics::softmax_stable;
use crate::rng::Rng;

const ABSENT: u32 = u32::MAX;

/// How the tree turns statistics into an action distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// Upper confidence bound; ties share the mass.
    Uct { c: f64 },
    /// Softmax over UCB-style scores built from `z`.
    SoftUct { c: f64, beta: f64 },
    /// Prior-weighted exploration; needs the prior's probabilities.
    Puct { c: f64 },
}

/// How episode returns are folded into the statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Backprop {
    /// Incremental mean with integer visit counts.
    Classic,
    /// Stochastic-approximation form with rate `1/n` and a bounded step
    /// multiplier. With `bernoulli` the inclusion probability gates the update
    /// through a coin flip instead of scaling it.
    Reformulated { max_kappa: f64, bernoulli: bool },
}

#[derive(Clone, Debug)]
pub struct TreeStats {
    n_actions: usize,
    q_init: f64,
    index: Vec<u32>,
    nodes: Vec<HistoryId>,
    q: Vec<f64>,
    z: Vec<f64>,
    count: Vec<u64>,
}

impl TreeStats {
    pub fn new(n_actions: usize) -> Self {
        Self::with_initial_q(n_actions, 0.0)
    }

    /// Tree whose fresh entries start at `q_init` instead of 0.
    pub fn with_initial_q(n_actions: usize, q_init: f64) -> Self {
        TreeStats {
            n_actions,
            q_init,
            index: Vec::new(),
            nodes: Vec::new(),
            q: Vec::new(),
            z: Vec::new(),
            count: Vec::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Slot of the node for `id`, if expanded.
    pub fn node(&self, id: Option<HistoryId>) -> Option<usize> {
        let id = id?;
        match self.index.get(id.0 as usize) {
            Some(&s) if s != ABSENT => Some(s as usize),
            _ => None,
        }
    }

    pub fn contains(&self, id: Option<HistoryId>) -> bool {
        self.node(id).is_some()
    }

    /// Expands the node for `id` with fresh entries for every action.
    pub fn expand(&mut self, id: HistoryId) -> usize {
        let i = id.0 as usize;
        if self.index.len() <= i {
            self.index.resize(i + 1, ABSENT);
        }
        if self.index[i] == ABSENT {
            self.index[i] = self.nodes.len() as u32;
            self.nodes.push(id);
            let a = self.n_actions;
            self.q.resize(self.q.len() + a, self.q_init);
            self.z.resize(self.z.len() + a, 1.0);
            self.count.resize(self.count.len() + a, 1);
        }
        self.index[i] as usize
    }

    pub fn q(&self, slot: usize, action: usize) -> f64 {
        self.q[slot * self.n_actions + action]
    }

    pub fn z(&self, slot: usize, action: usize) -> f64 {
        self.z[slot * self.n_actions + action]
    }

    /// One plus the number of updates of the entry; the visit count `m` under
    /// classic updates.
    pub fn visits(&self, slot: usize, action: usize) -> u64 {
        self.count[slot * self.n_actions + action]
    }

    pub fn q_row(&self, slot: usize) -> &[f64] {
        &self.q[slot * self.n_actions..(slot + 1) * self.n_actions]
    }

    pub fn z_row(&self, slot: usize) -> &[f64] {
        &self.z[slot * self.n_actions..(slot + 1) * self.n_actions]
    }

    /// Number of distinct root histories.
    pub fn n_roots(&self, keys: &KeySpace) -> usize {
        self.nodes
            .iter()
            .filter(|&&id| keys.history(id).t() == 0)
            .count()
    }

    pub fn set_entry(&mut self, slot: usize, action: usize, q: f64, z: f64) {
        let i = slot * self.n_actions + action;
        self.q[i] = q;
        self.z[i] = z;
    }

    /// UCB scores `q + c sqrt(ln sum_b m_b / m_a)` with `m = 1/z`.
    pub fn uct_scores(&self, slot: usize, c: f64, out: &mut [f64]) {
        let z = self.z_row(slot);
        let q = self.q_row(slot);
        let total: f64 = z.iter().map(|z| 1.0 / z).sum();
        let log_total = total.ln();
        for a in 0..self.n_actions {
            out[a] = q[a] + c * (log_total * z[a]).sqrt();
        }
    }

    /// Maximizer of the UCB score, ties broken uniformly at random.
    pub fn uct_select(&self, slot: usize, c: f64, rng: &mut Rng) -> usize {
        let mut scores = vec![0.0; self.n_actions];
        self.uct_scores(slot, c, &mut scores);
        argmax_random_tie(&scores, rng)
    }

    /// Softmax-UCT: `pi(a) ∝ exp(beta (q_a + c sqrt(z_a ln sum_b 1/z_b)))`.
    pub fn softuct_probs(&self, slot: usize, c: f64, beta: f64, out: &mut [f64]) -> Result<()> {
        let mut scores = vec![0.0; self.n_actions];
        self.uct_scores(slot, c, &mut scores);
        scores.iter_mut().for_each(|s| *s *= beta);
        softmax_stable(&scores, out)
    }

    /// `q_a + c prior_a sqrt(sum_b m_b) / (1 + m_a)`.
    pub fn puct_scores(&self, slot: usize, c: f64, prior: &[f64], out: &mut [f64]) {
        let z = self.z_row(slot);
        let q = self.q_row(slot);
        let total: f64 = z.iter().map(|z| 1.0 / z).sum();
        let root = total.sqrt();
        for a in 0..self.n_actions {
            out[a] = q[a] + c * prior[a] * root / (1.0 + 1.0 / z[a]);
        }
    }

    /// Action distribution of the tree component at `keys`. Off the tree this
    /// is uniform (or the prior, for PUCT). Deterministic rules spread their
    /// mass evenly over tied maximizers.
    pub fn policy_probs(
        &self,
        keys: &StepKeys,
        selection: Selection,
        prior: Option<&[f64]>,
        out: &mut [f64],
    ) -> Result<()> {
        let Some(slot) = self.node(keys.history) else {
            match (selection, prior) {
                (Selection::Puct { .. }, Some(p)) => out.copy_from_slice(p),
                _ => out.fill(1.0 / self.n_actions as f64),
            }
            return Ok(());
        };
        match selection {
            Selection::SoftUct { c, beta } => self.softuct_probs(slot, c, beta, out),
            Selection::Uct { c } => {
                let mut scores = vec![0.0; self.n_actions];
                self.uct_scores(slot, c, &mut scores);
                argmax_mass(&scores, out);
                Ok(())
            }
            Selection::Puct { c } => {
                let prior = prior.ok_or_else(|| {
                    Error::InvalidArgument("PUCT selection needs prior probabilities".into())
                })?;
                let mut scores = vec![0.0; self.n_actions];
                self.puct_scores(slot, c, prior, &mut scores);
                argmax_mass(&scores, out);
                Ok(())
            }
        }
    }

    /// Folds one episode into the statistics. `keys[t]` must hold the interned
    /// id of `h_t`; `n >= 1` is the global episode counter.
    pub fn backprop(
        &mut self,
        trace: &EpisodeTrace,
        keys: &[StepKeys],
        mode: Backprop,
        n: u64,
        rng: &mut Rng,
    ) -> Result<()> {
        match mode {
            Backprop::Classic => {
                self.backprop_classic(trace, keys);
                Ok(())
            }
            Backprop::Reformulated {
                max_kappa,
                bernoulli,
            } => self.backprop_reformulated(trace, keys, n, max_kappa, bernoulli.then_some(rng)),
        }
    }

    /// `m += 1`, `q += (g - q) / m_old` along the trace. A history is inside the
    /// tree once the edge leading to it has been visited, whatever observation
    /// followed; the walk therefore stops after the first edge that was fresh at
    /// the start of the update.
    pub fn backprop_classic(&mut self, trace: &EpisodeTrace, keys: &[StepKeys]) {
        let a = self.n_actions;
        let len = trace.len();
        let mut slot = self.expand(keys[0].history.expect("interned root"));
        for t in 0..len {
            let i = slot * a + trace.records[t].action;
            let m_old = self.count[i];
            self.q[i] += (trace.returns[t] - self.q[i]) / m_old as f64;
            self.count[i] = m_old + 1;
            self.z[i] = 1.0 / (m_old + 1) as f64;
            if t + 1 == len {
                break;
            }
            slot = self.expand(keys[t + 1].history.expect("interned history"));
            if m_old == 1 {
                break;
            }
        }
    }

    fn backprop_reformulated(
        &mut self,
        trace: &EpisodeTrace,
        keys: &[StepKeys],
        n: u64,
        max_kappa: f64,
        mut gate: Option<&mut Rng>,
    ) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("episode counter starts at 1".into()));
        }
        let rate = 1.0 / n as f64;
        let a = self.n_actions;
        let mut parent_z = f64::NAN;
        for t in 0..trace.len() {
            let mut p = if t == 0 {
                1.0
            } else {
                (1.0 / parent_z - 1.0).min(1.0)
            };
            if p <= 0.0 {
                // The parent edge was never updated, so nothing deeper was either.
                break;
            }
            if let Some(r) = gate.as_deref_mut() {
                p = if p >= 1.0 || r.random::<f64>() < p { 1.0 } else { 0.0 };
            }
            let id = keys[t].history.expect("interned history");
            let slot = self.expand(id);
            let i = slot * a + trace.records[t].action;
            let z = self.z[i];
            parent_z = z;
            if p == 0.0 {
                continue;
            }
            let kappa = (p * z / rate).min(max_kappa);
            let z_new = z + rate * kappa * (-z / (z + 1.0));
            if !(z_new > 0.0 && z_new <= 1.0) {
                return Err(Error::Invariant(format!(
                    "inverse visit count left (0, 1]: {z_new} at step {t}"
                )));
            }
            self.z[i] = z_new;
            self.q[i] += rate * kappa * (trace.returns[t] - self.q[i]);
            self.count[i] += 1;
            if t + 1 < trace.len() {
                self.expand(keys[t + 1].history.expect("interned history"));
            }
        }
        Ok(())
    }

    /// Writes `history action q z m` rows, one per entry.
    pub fn dump(&self, keys: &KeySpace, mut w: impl Write) -> Result<()> {
        writeln!(w, "history action q z m")?;
        for (slot, &id) in self.nodes.iter().enumerate() {
            let h = keys.history(id);
            for a in 0..self.n_actions {
                let z = self.z(slot, a);
                writeln!(w, "{h} {a} {} {} {}", self.q(slot, a), z, 1.0 / z)?;
            }
        }
        Ok(())
    }
}

fn argmax_random_tie(scores: &[f64], rng: &mut Rng) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&a| scores[a] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

fn argmax_mass(scores: &[f64], out: &mut [f64]) {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = scores.iter().filter(|&&s| s == best).count() as f64;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = if s == best { 1.0 / n } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdp::{Component, History, StepRecord};
    use crate::rng;

    fn node_with(q: &[f64], z: &[f64]) -> (TreeStats, usize) {
        let mut tree = TreeStats::new(q.len());
        let slot = tree.expand(HistoryId(0));
        for a in 0..q.len() {
            tree.set_entry(slot, a, q[a], z[a]);
        }
        (tree, slot)
    }

    fn trace(obs: &[usize], actions: &[usize], rewards: &[f64]) -> EpisodeTrace {
        let records = (0..actions.len())
            .map(|t| StepRecord {
                obs: obs[t],
                action: actions[t],
                reward: rewards[t],
                behavior_prob: 1.0,
                component: Component::Pg,
                lambda: 0.0,
                pg_prob: 1.0,
                tree_prob: 0.0,
            })
            .collect();
        EpisodeTrace::new(records, 1.0)
    }

    #[test]
    fn pure_exploitation() {
        let (tree, s) = node_with(&[0.2, 0.9, 0.1], &[1.0; 3]);
        assert_eq!(tree.uct_select(s, 0.0, &mut rng::seeded(0)), 1);
    }

    #[test]
    fn exploration_prefers_fewer_visits() {
        let (tree, s) = node_with(&[0.5, 0.5], &[0.1, 1.0]);
        for c in [1e-6, 0.3, 5.0] {
            assert_eq!(tree.uct_select(s, c, &mut rng::seeded(0)), 1);
        }
    }

    #[test]
    fn fresh_node_ties_are_fair() {
        let (tree, s) = node_with(&[0.0; 4], &[1.0; 4]);
        let mut r = rng::seeded(5);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[tree.uct_select(s, 1.0, &mut r)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn softuct_closed_forms() {
        let (tree, s) = node_with(&[0.0, 3f64.ln()], &[1.0; 2]);
        let mut p = [0.0; 2];
        tree.softuct_probs(s, 0.0, 1.0, &mut p).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-14 && (p[1] - 0.75).abs() < 1e-14);
        tree.softuct_probs(s, 2.0, 0.0, &mut p).unwrap();
        assert_eq!(p, [0.5, 0.5]);
        let (fresh, s) = node_with(&[0.0; 3], &[1.0; 3]);
        let mut p = [0.0; 3];
        fresh.softuct_probs(s, 7.0, 3.0, &mut p).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn softuct_saturates() {
        let (tree, s) = node_with(&[1.0, 0.0, 0.0], &[0.5, 0.5, 0.5]);
        let mut p = [0.0; 3];
        tree.softuct_probs(s, 0.1, 50.0, &mut p).unwrap();
        assert!(p[0] >= 0.99);
    }

    #[test]
    fn off_tree_is_uniform() {
        let tree = TreeStats::new(10);
        let keys = StepKeys {
            t: 0,
            obs: 0,
            history: Some(HistoryId(3)),
            prefix: None,
        };
        let mut p = [0.0; 10];
        tree.policy_probs(&keys, Selection::SoftUct { c: 1.0, beta: 1.0 }, None, &mut p)
            .unwrap();
        assert!(p.iter().all(|&x| x == 0.1));
    }

    #[test]
    fn classic_running_mean() {
        let mut ks = KeySpace::new();
        let h = History::new(0);
        let keys = ks.intern(&h);
        let mut tree = TreeStats::new(2);
        tree.backprop_classic(&trace(&[0], &[1], &[2.0]), &keys);
        let s = tree.node(keys[0].history).unwrap();
        assert_eq!((tree.q(s, 1), tree.visits(s, 1)), (2.0, 2));
        let mut tree = TreeStats::new(2);
        tree.backprop_classic(&trace(&[0], &[1], &[1.0]), &keys);
        tree.backprop_classic(&trace(&[0], &[1], &[3.0]), &keys);
        assert_eq!((tree.q(s, 1), tree.visits(s, 1)), (2.0, 3));
    }

    #[test]
    fn one_expansion_per_episode() {
        let mut ks = KeySpace::new();
        let mut h = History::new(0);
        h.push(0, 0);
        h.push(0, 0);
        let keys = ks.intern(&h);
        let tr = trace(&[0, 0, 0], &[0, 0, 0], &[0.0, 0.0, 1.0]);
        let mut tree = TreeStats::new(2);
        // The root is created on its first visit; one more node per episode.
        for n in 1..=5u64 {
            tree.backprop_classic(&tr, &keys);
            assert_eq!(tree.n_nodes() as u64, (n + 1).min(3));
        }
        let root = tree.node(keys[0].history).unwrap();
        assert_eq!(tree.visits(root, 0), 6);
    }

    #[test]
    fn sibling_observation_is_inside_the_tree() {
        let mut ks = KeySpace::new();
        let mut a = History::new(0);
        a.push(1, 0);
        let mut b = History::new(0);
        b.push(1, 1);
        let ka = ks.intern(&a);
        let kb = ks.intern(&b);
        let mut tree = TreeStats::new(2);
        tree.backprop_classic(&trace(&[0, 0], &[1, 0], &[0.0, 1.0]), &ka);
        // The edge (root, 1) has been visited, so the unseen sibling is updated.
        tree.backprop_classic(&trace(&[0, 1], &[1, 0], &[0.0, 3.0]), &kb);
        let s = tree.node(kb[1].history).unwrap();
        assert_eq!((tree.visits(s, 0), tree.q(s, 0)), (2, 3.0));
    }

    #[test]
    fn reformulated_first_visit_and_gate() {
        let mut ks = KeySpace::new();
        let mut h = History::new(0);
        h.push(1, 1);
        let keys = ks.intern(&h);
        let tr = trace(&[0, 1], &[1, 0], &[0.0, 2.0]);
        let mut tree = TreeStats::new(2);
        let mode = Backprop::Reformulated {
            max_kappa: 1e9,
            bernoulli: false,
        };
        tree.backprop(&tr, &keys, mode, 1, &mut rng::seeded(0)).unwrap();
        let root = tree.node(keys[0].history).unwrap();
        assert_eq!((tree.z(root, 1), tree.q(root, 1)), (0.5, 2.0));
        // The child was gated off by its never-updated parent edge.
        let child = tree.node(keys[1].history).unwrap();
        assert_eq!((tree.z(child, 0), tree.q(child, 0)), (1.0, 0.0));
    }

    #[test]
    fn bounded_kappa_limits_the_step() {
        let mut ks = KeySpace::new();
        let keys = ks.intern(&History::new(0));
        let tr = trace(&[0], &[0], &[100.0]);
        let mut tree = TreeStats::new(1);
        let mode = Backprop::Reformulated {
            max_kappa: 3.0,
            bernoulli: false,
        };
        let n = 50;
        tree.backprop(&tr, &keys, mode, n, &mut rng::seeded(0)).unwrap();
        let s = tree.node(keys[0].history).unwrap();
        assert!(tree.q(s, 0) <= 3.0 / n as f64 * 100.0 + 1e-12);
        assert!(1.0 - tree.z(s, 0) <= 3.0 / n as f64);
    }
}
