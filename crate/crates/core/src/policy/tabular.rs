//! Softmax policy with a redundant tabular parameterization.
//!
//! The logit of `a` at `h_t` is the sum of three table entries keyed by
//! `(o_t, a)`, by `(o_0..o_t, a)` and by `(h_t, a)`. Entries that were never
//! updated are zero and take no memory.

use super::{clip_scale, Checkpoint, Group, PgModel};
use crate::error::{Error, Result};
use crate::hdp::{HistoryId, KeySpace, PrefixId, StepKeys};
use crate::numerics::softmax_stable;

const ABSENT: u32 = u32::MAX;

/// Rows of width `width`, indexed by dense interned ids.
#[derive(Clone, Debug, Default)]
struct LazyRows {
    width: usize,
    index: Vec<u32>,
    data: Vec<f64>,
}

impl LazyRows {
    fn new(width: usize) -> Self {
        LazyRows {
            width,
            ..Default::default()
        }
    }

    fn get(&self, id: u32) -> Option<&[f64]> {
        match self.index.get(id as usize) {
            Some(&slot) if slot != ABSENT => {
                let s = slot as usize * self.width;
                Some(&self.data[s..s + self.width])
            }
            _ => None,
        }
    }

    fn get_or_insert(&mut self, id: u32) -> &mut [f64] {
        let i = id as usize;
        if self.index.len() <= i {
            self.index.resize(i + 1, ABSENT);
        }
        if self.index[i] == ABSENT {
            self.index[i] = (self.data.len() / self.width) as u32;
            self.data.resize(self.data.len() + self.width, 0.0);
        }
        let s = self.index[i] as usize * self.width;
        &mut self.data[s..s + self.width]
    }

    fn rows(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.index
            .iter()
            .enumerate()
            .filter(|(_, &slot)| slot != ABSENT)
            .map(move |(id, &slot)| {
                let s = slot as usize * self.width;
                (id as u32, &self.data[s..s + self.width])
            })
    }

    fn len(&self) -> usize {
        self.data.len() / self.width.max(1)
    }
}

#[derive(Clone, Debug)]
pub struct FeatureSoftmaxPolicy {
    n_obs: usize,
    n_actions: usize,
    by_obs: Vec<f64>,
    by_prefix: LazyRows,
    by_history: LazyRows,
}

#[derive(Clone, Debug, Default)]
pub struct TabularTape {
    keys: Vec<StepKeys>,
    probs: Vec<f64>,
}

/// Gradient with the `(o, a)` group dense and one row per step for the other
/// two groups.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularGrad {
    pub by_obs: Vec<f64>,
    pub by_prefix: Vec<(PrefixId, Vec<f64>)>,
    pub by_history: Vec<(HistoryId, Vec<f64>)>,
}

impl FeatureSoftmaxPolicy {
    pub fn new(n_obs: usize, n_actions: usize) -> Self {
        FeatureSoftmaxPolicy {
            n_obs,
            n_actions,
            by_obs: vec![0.0; n_obs * n_actions],
            by_prefix: LazyRows::new(n_actions),
            by_history: LazyRows::new(n_actions),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// Number of materialized rows in the prefix and history groups.
    pub fn materialized_rows(&self) -> (usize, usize) {
        (self.by_prefix.len(), self.by_history.len())
    }

    pub fn obs_weights_mut(&mut self, obs: usize) -> &mut [f64] {
        let a = self.n_actions;
        &mut self.by_obs[obs * a..(obs + 1) * a]
    }

    pub fn prefix_weights_mut(&mut self, id: PrefixId) -> &mut [f64] {
        self.by_prefix.get_or_insert(id.0)
    }

    pub fn history_weights_mut(&mut self, id: HistoryId) -> &mut [f64] {
        self.by_history.get_or_insert(id.0)
    }

    pub fn logits(&self, keys: &StepKeys, out: &mut [f64]) {
        let a = self.n_actions;
        out.copy_from_slice(&self.by_obs[keys.obs * a..(keys.obs + 1) * a]);
        if let Some(row) = keys.prefix.and_then(|p| self.by_prefix.get(p.0)) {
            out.iter_mut().zip(row).for_each(|(o, r)| *o += r);
        }
        if let Some(row) = keys.history.and_then(|h| self.by_history.get(h.0)) {
            out.iter_mut().zip(row).for_each(|(o, r)| *o += r);
        }
    }

    pub fn probs(&self, keys: &StepKeys, out: &mut [f64]) -> Result<()> {
        self.logits(keys, out);
        let logits = out.to_vec();
        softmax_stable(&logits, out)
    }

    pub fn to_checkpoint(&self, keys: &KeySpace) -> Checkpoint {
        let mut prefix = Group::new("prefix", self.n_actions);
        for (id, row) in self.by_prefix.rows() {
            let p = keys.prefix(PrefixId(id));
            let key = p.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(".");
            prefix.rows.push((key, row.to_vec()));
        }
        let mut history = Group::new("history", self.n_actions);
        for (id, row) in self.by_history.rows() {
            history
                .rows
                .push((keys.history(HistoryId(id)).to_string(), row.to_vec()));
        }
        Checkpoint {
            groups: vec![Group::dense("obs", self.n_actions, &self.by_obs), prefix, history],
        }
    }

    /// Restores a policy, interning every stored key into `keys`.
    pub fn from_checkpoint(ck: &Checkpoint, n_obs: usize, keys: &mut KeySpace) -> Result<Self> {
        let obs = ck.group("obs")?;
        let n_actions = obs.cols;
        let mut policy = FeatureSoftmaxPolicy::new(n_obs, n_actions);
        let flat = obs.flatten();
        if flat.len() != policy.by_obs.len() {
            return Err(Error::InvalidArgument("obs group has the wrong size".into()));
        }
        policy.by_obs = flat;
        for (key, row) in &ck.group("prefix")?.rows {
            let syms = key
                .split('.')
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("bad prefix `{key}`: {e}")))?;
            // A prefix is interned through any history with those observations.
            let mut h = crate::hdp::History::new(syms[0]);
            for &o in &syms[1..] {
                h.push(0, o);
            }
            let id = keys.intern(&h).last().unwrap().prefix.unwrap();
            policy.by_prefix.get_or_insert(id.0).copy_from_slice(row);
        }
        for (key, row) in &ck.group("history")?.rows {
            let h: crate::hdp::History = key.parse()?;
            let id = keys.intern(&h).last().unwrap().history.unwrap();
            policy.by_history.get_or_insert(id.0).copy_from_slice(row);
        }
        Ok(policy)
    }
}

impl PgModel for FeatureSoftmaxPolicy {
    type Tape = TabularTape;
    type Grad = TabularGrad;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn begin(&self, tape: &mut TabularTape) {
        tape.keys.clear();
        tape.probs.clear();
    }

    fn advance(&self, tape: &mut TabularTape, keys: &StepKeys, probs: &mut [f64]) -> Result<()> {
        self.probs(keys, probs)?;
        tape.keys.push(*keys);
        tape.probs.extend_from_slice(probs);
        Ok(())
    }

    fn recorded_probs<'a>(&self, tape: &'a TabularTape, t: usize) -> &'a [f64] {
        &tape.probs[t * self.n_actions..(t + 1) * self.n_actions]
    }

    fn baseline(&self, _: &TabularTape, _: usize) -> Option<f64> {
        None
    }

    fn gradient(&self, tape: &TabularTape, actions: &[usize], score: &[f64], _: &[f64]) -> TabularGrad {
        let na = self.n_actions;
        let mut grad = TabularGrad {
            by_obs: vec![0.0; self.by_obs.len()],
            by_prefix: Vec::new(),
            by_history: Vec::new(),
        };
        let mut row = vec![0.0; na];
        for (t, keys) in tape.keys.iter().enumerate() {
            let c = score[t];
            if c == 0.0 {
                continue;
            }
            // d log pi(a) / d logit(b) = [a == b] - pi(b)
            let p = self.recorded_probs(tape, t);
            for b in 0..na {
                row[b] = -c * p[b];
            }
            row[actions[t]] += c;
            let o = keys.obs;
            grad.by_obs[o * na..(o + 1) * na]
                .iter_mut()
                .zip(&row)
                .for_each(|(g, r)| *g += r);
            if let Some(id) = keys.prefix {
                grad.by_prefix.push((id, row.clone()));
            }
            if let Some(id) = keys.history {
                grad.by_history.push((id, row.clone()));
            }
        }
        grad
    }

    fn apply(&mut self, grad: &TabularGrad, alpha: f64, clip: Option<f64>) -> Result<()> {
        let step = alpha * clip_scale(Self::grad_norm(grad), clip);
        let check = |group: &'static str, key: String, g: &[f64]| -> Result<()> {
            match g.iter().find(|v| !(step * **v).is_finite()) {
                Some(&v) => Err(Error::NonFiniteUpdate {
                    group,
                    key,
                    magnitude: step * v,
                }),
                None => Ok(()),
            }
        };
        check("obs", "*".into(), &grad.by_obs)?;
        for (id, g) in &grad.by_prefix {
            check("prefix", id.0.to_string(), g)?;
        }
        for (id, g) in &grad.by_history {
            check("history", id.0.to_string(), g)?;
        }
        if step == 0.0 {
            return Ok(());
        }
        self.by_obs
            .iter_mut()
            .zip(&grad.by_obs)
            .for_each(|(x, g)| *x += step * g);
        for (id, g) in &grad.by_prefix {
            let row = self.by_prefix.get_or_insert(id.0);
            row.iter_mut().zip(g).for_each(|(x, g)| *x += step * g);
        }
        for (id, g) in &grad.by_history {
            let row = self.by_history.get_or_insert(id.0);
            row.iter_mut().zip(g).for_each(|(x, g)| *x += step * g);
        }
        Ok(())
    }

    fn grad_norm(grad: &TabularGrad) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut total = sq(&grad.by_obs);
        // Prefix and history ids along one episode are distinct.
        total += grad.by_prefix.iter().map(|(_, g)| sq(g)).sum::<f64>();
        total += grad.by_history.iter().map(|(_, g)| sq(g)).sum::<f64>();
        total.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdp::History;

    fn keys_for(ks: &mut KeySpace, h: &History) -> Vec<StepKeys> {
        ks.intern(h)
    }

    #[test]
    fn fresh_policy_is_uniform() {
        let pol = FeatureSoftmaxPolicy::new(5, 10);
        let mut ks = KeySpace::new();
        let k = keys_for(&mut ks, &History::new(2));
        let mut p = vec![0.0; 10];
        pol.probs(&k[0], &mut p).unwrap();
        assert!(p.iter().all(|&x| (x - 0.1).abs() < 1e-15));
    }

    #[test]
    fn closed_form_single_weight() {
        let mut pol = FeatureSoftmaxPolicy::new(5, 10);
        pol.obs_weights_mut(1)[4] = 9f64.ln();
        let mut ks = KeySpace::new();
        let k = keys_for(&mut ks, &History::new(1));
        let mut p = vec![0.0; 10];
        pol.probs(&k[0], &mut p).unwrap();
        assert!((p[4] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn two_action_score_function() {
        let pol = FeatureSoftmaxPolicy::new(1, 2);
        let mut ks = KeySpace::new();
        let k = keys_for(&mut ks, &History::new(0));
        let mut tape = TabularTape::default();
        let mut p = vec![0.0; 2];
        pol.advance(&mut tape, &k[0], &mut p).unwrap();
        let g = pol.gradient(&tape, &[0], &[1.0], &[0.0]);
        assert_eq!(g.by_obs, vec![0.5, -0.5]);
        assert_eq!(g.by_history[0].1, vec![0.5, -0.5]);
        let zero = pol.gradient(&tape, &[0], &[0.0], &[0.0]);
        assert_eq!(FeatureSoftmaxPolicy::grad_norm(&zero), 0.0);
    }

    #[test]
    fn ascent_on_bandit_raises_better_arm() {
        // Exact expected gradient with rewards (0, 1) from uniform: 0.5 * (e_1 - pi).
        let mut pol = FeatureSoftmaxPolicy::new(1, 2);
        let mut ks = KeySpace::new();
        let k = keys_for(&mut ks, &History::new(0));
        let mut tape = TabularTape::default();
        let mut p = vec![0.0; 2];
        pol.advance(&mut tape, &k[0], &mut p).unwrap();
        let g = pol.gradient(&tape, &[1], &[0.5], &[0.0]);
        pol.apply(&g, 0.1, None).unwrap();
        pol.probs(&k[0], &mut p).unwrap();
        assert!(p[1] > 0.5);
    }

    #[test]
    fn clip_bounds_the_step() {
        let mut pol = FeatureSoftmaxPolicy::new(1, 3);
        let before = pol.clone();
        let mut ks = KeySpace::new();
        let k = keys_for(&mut ks, &History::new(0));
        let mut tape = TabularTape::default();
        let mut p = vec![0.0; 3];
        pol.advance(&mut tape, &k[0], &mut p).unwrap();
        let g = pol.gradient(&tape, &[2], &[50.0], &[0.0]);
        pol.apply(&g, 0.3, Some(1.0)).unwrap();
        let mut delta = 0.0;
        for (a, b) in pol.by_obs.iter().zip(&before.by_obs) {
            delta += (a - b).powi(2);
        }
        for (_, row) in pol.by_history.rows() {
            delta += row.iter().map(|x| x * x).sum::<f64>();
        }
        assert!(delta.sqrt() <= 0.3 + 1e-12);
        let unchanged = before.clone();
        let mut frozen = before;
        frozen.apply(&g, 0.0, None).unwrap();
        assert_eq!(frozen.by_obs, unchanged.by_obs);
        assert_eq!(frozen.materialized_rows(), (0, 0));
    }

    #[test]
    fn non_finite_update_is_reported() {
        let mut pol = FeatureSoftmaxPolicy::new(1, 2);
        let mut ks = KeySpace::new();
        let k = keys_for(&mut ks, &History::new(0));
        let mut tape = TabularTape::default();
        let mut p = vec![0.0; 2];
        pol.advance(&mut tape, &k[0], &mut p).unwrap();
        let g = pol.gradient(&tape, &[0], &[f64::INFINITY], &[0.0]);
        assert!(matches!(pol.apply(&g, 1.0, None), Err(Error::NonFiniteUpdate { .. })));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut ks = KeySpace::new();
        let mut h = History::new(1);
        h.push(2, 0);
        let k = ks.intern(&h);
        let mut pol = FeatureSoftmaxPolicy::new(2, 3);
        pol.obs_weights_mut(0)[1] = 0.1 + 0.2;
        pol.prefix_weights_mut(k[1].prefix.unwrap())[2] = -1.0 / 3.0;
        pol.history_weights_mut(k[1].history.unwrap())[0] = 1e-300;
        let text = pol.to_checkpoint(&ks).to_text();
        let mut ks2 = KeySpace::new();
        let back = FeatureSoftmaxPolicy::from_checkpoint(
            &Checkpoint::from_text(&text).unwrap(),
            2,
            &mut ks2,
        )
        .unwrap();
        let k2 = ks2.intern(&h);
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        pol.logits(&k[1], &mut a);
        back.logits(&k2[1], &mut b);
        assert_eq!(a, b);
        assert_eq!(back.to_checkpoint(&ks2).to_text(), text);
    }
}
