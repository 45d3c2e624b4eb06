//! Interning of histories and observation prefixes.
//!
//! Histories form a trie: `h_{t+1} = [h_t, a_t, o_{t+1}]`, so a history id is
//! the child of its parent id under the symbol `(a_t, o_{t+1})`. Extending a
//! history by one step is a single hash lookup.

use rustc_hash::FxHashMap;

use super::History;

const ROOT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefixId(pub u32);

#[derive(Clone, Debug, Default)]
pub struct TrieInterner {
    edges: FxHashMap<(u32, u32), u32>,
    nodes: Vec<(u32, u32)>,
}

impl TrieInterner {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn child(&mut self, parent: Option<u32>, symbol: u32) -> u32 {
        let key = (parent.unwrap_or(ROOT), symbol);
        let next = self.nodes.len() as u32;
        *self.edges.entry(key).or_insert_with(|| {
            self.nodes.push(key);
            next
        })
    }

    pub fn find(&self, parent: Option<u32>, symbol: u32) -> Option<u32> {
        self.edges.get(&(parent.unwrap_or(ROOT), symbol)).copied()
    }

    /// Symbols on the path from the root to `id`.
    pub fn path(&self, id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut cur = id;
        loop {
            let (parent, symbol) = self.nodes[cur as usize];
            out.push(symbol);
            if parent == ROOT {
                break;
            }
            cur = parent;
        }
        out.reverse();
        out
    }
}

#[inline]
fn step_symbol(action: usize, obs: usize) -> u32 {
    ((action as u32) << 16) | obs as u32
}

/// Joint interner for full histories and observation prefixes.
#[derive(Clone, Debug, Default)]
pub struct KeySpace {
    histories: TrieInterner,
    prefixes: TrieInterner,
}

/// Interned keys of one history `h_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepKeys {
    pub t: usize,
    pub obs: usize,
    pub history: Option<HistoryId>,
    pub prefix: Option<PrefixId>,
}

impl KeySpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_histories(&self) -> usize {
        self.histories.len()
    }

    pub fn n_prefixes(&self) -> usize {
        self.prefixes.len()
    }

    pub fn root(&mut self, obs: usize) -> StepKeys {
        StepKeys {
            t: 0,
            obs,
            history: Some(HistoryId(self.histories.child(None, obs as u32))),
            prefix: Some(PrefixId(self.prefixes.child(None, obs as u32))),
        }
    }

    /// Keys of `[h, action, obs]` given the keys of `h`. Both parent keys must
    /// be interned.
    pub fn extend(&mut self, parent: &StepKeys, action: usize, obs: usize) -> StepKeys {
        let h = parent.history.expect("parent history must be interned");
        let p = parent.prefix.expect("parent prefix must be interned");
        StepKeys {
            t: parent.t + 1,
            obs,
            history: Some(HistoryId(
                self.histories.child(Some(h.0), step_symbol(action, obs)),
            )),
            prefix: Some(PrefixId(self.prefixes.child(Some(p.0), obs as u32))),
        }
    }

    /// Read-only counterpart of [`KeySpace::extend`].
    pub fn find_extension(&self, parent: &StepKeys, action: usize, obs: usize) -> StepKeys {
        StepKeys {
            t: parent.t + 1,
            obs,
            history: parent.history.and_then(|h| {
                self.histories
                    .find(Some(h.0), step_symbol(action, obs))
                    .map(HistoryId)
            }),
            prefix: parent
                .prefix
                .and_then(|p| self.prefixes.find(Some(p.0), obs as u32).map(PrefixId)),
        }
    }

    pub fn find_root(&self, obs: usize) -> StepKeys {
        StepKeys {
            t: 0,
            obs,
            history: self.histories.find(None, obs as u32).map(HistoryId),
            prefix: self.prefixes.find(None, obs as u32).map(PrefixId),
        }
    }

    /// Interns every prefix `h_0, ..., h_t` of `history`.
    pub fn intern(&mut self, history: &History) -> Vec<StepKeys> {
        let mut out = Vec::with_capacity(history.t() + 1);
        let mut cur = self.root(history.obs(0));
        out.push(cur);
        for k in 0..history.t() {
            cur = self.extend(&cur, history.action(k), history.obs(k + 1));
            out.push(cur);
        }
        out
    }

    /// Keys of every prefix without interning; unseen keys are `None`.
    pub fn lookup(&self, history: &History) -> Vec<StepKeys> {
        let mut out = Vec::with_capacity(history.t() + 1);
        let mut cur = self.find_root(history.obs(0));
        out.push(cur);
        for k in 0..history.t() {
            cur = self.find_extension(&cur, history.action(k), history.obs(k + 1));
            out.push(cur);
        }
        out
    }

    pub fn history(&self, id: HistoryId) -> History {
        let path = self.histories.path(id.0);
        let mut h = History::new(path[0] as usize);
        for &sym in &path[1..] {
            h.push((sym >> 16) as usize, (sym & 0xFFFF) as usize);
        }
        h
    }

    pub fn prefix(&self, id: PrefixId) -> Vec<usize> {
        self.prefixes.path(id.0).into_iter().map(|s| s as usize).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_histories_share_ids() {
        let mut ks = KeySpace::new();
        let mut h = History::new(1);
        h.push(2, 0);
        h.push(1, 1);
        let a = ks.intern(&h);
        let b = ks.intern(&h.clone());
        assert_eq!(a, b);
        assert_eq!(ks.n_histories(), 3);
        assert_eq!(ks.history(a[2].history.unwrap()), h);
        assert_eq!(ks.prefix(a[2].prefix.unwrap()), vec![1, 0, 1]);
    }

    #[test]
    fn prefixes_ignore_actions() {
        let mut ks = KeySpace::new();
        let mut h1 = History::new(0);
        h1.push(0, 1);
        let mut h2 = History::new(0);
        h2.push(1, 1);
        let k1 = ks.intern(&h1);
        let k2 = ks.intern(&h2);
        assert_ne!(k1[1].history, k2[1].history);
        assert_eq!(k1[1].prefix, k2[1].prefix);
    }

    #[test]
    fn lookup_does_not_intern() {
        let mut ks = KeySpace::new();
        let mut h = History::new(0);
        ks.intern(&h);
        h.push(3, 1);
        let keys = ks.lookup(&h);
        assert!(keys[0].history.is_some());
        assert!(keys[1].history.is_none());
        assert!(keys[1].prefix.is_none());
        assert_eq!(ks.n_histories(), 1);
    }
}
