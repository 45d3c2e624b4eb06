//! Fully tabulated tiny HDPs and their plain-text form.
//!
//! ```text
//! # comment
//! meta <n_obs> <n_actions> <tmax> <gamma>
//! init <obs> <prob>
//! reward <history> <action> <value>
//! trans <history> <action> <next_obs> <prob>
//! ```
//!
//! Histories are written as dot-separated symbols, `o0.a0.o1`. A
//! `(history, action)` pair without `trans` rows ends the episode.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use super::{EnvShape, Enumerable, Environment, History, Next, Outcome, Transition};
use crate::error::{Error, Result};
use crate::numerics::sample_index;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularHdp {
    pub shape: EnvShape,
    pub initial: Vec<f64>,
    pub outcomes: HashMap<(History, usize), Outcome>,
}

impl TabularHdp {
    /// Tabulates every reachable `(history, action)` pair of `env`.
    pub fn from_env<E: Enumerable + ?Sized>(env: &mut E) -> Result<Self> {
        let shape = env.shape();
        let leaves = (shape.n_obs as f64).powi(shape.tmax as i32 + 1)
            * (shape.n_actions as f64).powi(shape.tmax as i32);
        if leaves > super::LEAF_LIMIT {
            return Err(Error::TooLarge {
                leaves,
                limit: super::LEAF_LIMIT,
            });
        }
        let initial = env.initial_distribution();
        let mut outcomes = HashMap::new();
        let mut stack: Vec<History> = (0..shape.n_obs)
            .filter(|&o| initial[o] > 0.0)
            .map(History::new)
            .collect();
        while let Some(h) = stack.pop() {
            for a in 0..shape.n_actions {
                let mut out = env.outcome(&h, a)?;
                if h.t() >= shape.tmax {
                    out.next.clear();
                }
                for &(o, p) in &out.next {
                    if p > 0.0 {
                        let mut child = h.clone();
                        child.push(a, o);
                        stack.push(child);
                    }
                }
                outcomes.insert((h.clone(), a), out);
            }
        }
        Ok(TabularHdp {
            shape,
            initial,
            outcomes,
        })
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.shape;
        writeln!(w, "meta {} {} {} {}", s.n_obs, s.n_actions, s.tmax, s.gamma)?;
        for (o, p) in self.initial.iter().enumerate() {
            writeln!(w, "init {o} {p}")?;
        }
        let sorted: BTreeMap<_, _> = self.outcomes.iter().collect();
        for ((h, a), out) in sorted {
            writeln!(w, "reward {h} {a} {}", out.reward)?;
            for (o, p) in &out.next {
                writeln!(w, "trans {h} {a} {o} {p}")?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut shape = None;
        let mut initial = Vec::new();
        let mut outcomes: HashMap<(History, usize), Outcome> = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let bad = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let text = line.split('#').next().unwrap().trim();
            if text.is_empty() {
                continue;
            }
            let fields: Vec<&str> = text.split_whitespace().collect();
            let num = |k: usize| -> Result<f64> {
                fields
                    .get(k)
                    .ok_or_else(|| bad(format!("missing field {k}")))?
                    .parse::<f64>()
                    .map_err(|e| bad(e.to_string()))
            };
            let int = |k: usize| -> Result<usize> {
                fields
                    .get(k)
                    .ok_or_else(|| bad(format!("missing field {k}")))?
                    .parse::<usize>()
                    .map_err(|e| bad(e.to_string()))
            };
            match fields[0] {
                "meta" => {
                    let s = EnvShape {
                        n_obs: int(1)?,
                        n_actions: int(2)?,
                        tmax: int(3)?,
                        gamma: num(4)?,
                    };
                    initial = vec![0.0; s.n_obs];
                    shape = Some(s);
                }
                "init" | "reward" | "trans" if shape.is_none() => {
                    return Err(bad("`meta` must come first".into()));
                }
                "init" => {
                    let o = int(1)?;
                    *initial
                        .get_mut(o)
                        .ok_or_else(|| bad(format!("observation {o} out of range")))? = num(2)?;
                }
                "reward" | "trans" => {
                    let h: History = fields
                        .get(1)
                        .ok_or_else(|| bad("missing history".into()))?
                        .parse()
                        .map_err(|e: Error| bad(e.to_string()))?;
                    let a = int(2)?;
                    let entry = outcomes.entry((h, a)).or_insert(Outcome {
                        reward: 0.0,
                        next: Vec::new(),
                    });
                    if fields[0] == "reward" {
                        entry.reward = num(3)?;
                    } else {
                        entry.next.push((int(3)?, num(4)?));
                    }
                }
                other => return Err(bad(format!("unknown row kind `{other}`"))),
            }
        }
        let shape = shape.ok_or(Error::Parse {
            line: 0,
            message: "missing `meta` row".into(),
        })?;
        Ok(TabularHdp {
            shape,
            initial,
            outcomes,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }

    fn lookup(&self, h: &History, a: usize) -> Result<&Outcome> {
        self.outcomes
            .get(&(h.clone(), a))
            .ok_or_else(|| Error::InvalidArgument(format!("no table row for ({h}, {a})")))
    }
}

impl Environment for TabularHdp {
    fn shape(&self) -> EnvShape {
        self.shape
    }

    fn reset(&mut self, rng: &mut Rng) -> usize {
        sample_index(&self.initial, rng)
    }

    fn step(&mut self, history: &History, action: usize, rng: &mut Rng) -> Result<Transition> {
        let out = self.lookup(history, action)?;
        let next = if out.next.is_empty() {
            Next::Terminal
        } else {
            let probs: Vec<f64> = out.next.iter().map(|x| x.1).collect();
            Next::Obs(out.next[sample_index(&probs, rng)].0)
        };
        Ok(Transition {
            reward: out.reward,
            next,
        })
    }
}

impl Enumerable for TabularHdp {
    fn initial_distribution(&mut self) -> Vec<f64> {
        self.initial.clone()
    }

    fn outcome(&mut self, history: &History, action: usize) -> Result<Outcome> {
        self.lookup(history, action).cloned()
    }
}
