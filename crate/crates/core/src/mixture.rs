//! Mixing a parametric policy with the tree policy: mixture probabilities,
//! importance weights, the mixing function and the two-timescale schedules.

use crate::error::{Error, Result};
use crate::numerics::sigmoid;

/// `(1 - lambda) pg + lambda tree`.
pub fn mixture_probs(pg: &[f64], tree: &[f64], lambda: f64, out: &mut [f64]) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("mixing probability {lambda} outside [0, 1]")));
    }
    for ((o, &p), &q) in out.iter_mut().zip(pg).zip(tree) {
        *o = (1.0 - lambda) * p + lambda * q;
    }
    Ok(())
}

/// Weight `max(floor, (1 - lambda) pg / mix)` of a step of the parametric
/// policy's update. Exactly 1 when `lambda = 0`.
pub fn importance_weight(pg_prob: f64, mix_prob: f64, lambda: f64, floor: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0f64.max(floor);
    }
    assert!(mix_prob > 0.0, "behaviour probability must be positive");
    let rho = ((1.0 - lambda) * pg_prob / mix_prob).min(1.0);
    rho.max(floor)
}

/// Coefficient of `d lambda(h_t) / d w` in the ascent direction of the mixing
/// weights for one step: `(tree - pg) / behaviour * advantage`. Its expectation
/// under the mixture is the derivative of the expected return in `lambda`.
pub fn mixing_coefficient(pg_prob: f64, tree_prob: f64, behavior_prob: f64, advantage: f64) -> f64 {
    (tree_prob - pg_prob) / behavior_prob * advantage
}

/// Probability `lambda(h)` of acting with the tree policy.
#[derive(Clone, Debug, PartialEq)]
pub enum MixingFunction {
    Constant(f64),
    /// `sigmoid(bias + weights[o_t])`, learned jointly with the policy.
    Learned { bias: f64, weights: Vec<f64> },
}

impl MixingFunction {
    pub fn constant(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config("agent.lambda", "must be in [0, 1]"));
        }
        Ok(MixingFunction::Constant(lambda))
    }

    /// Learned mixing that starts at `initial` for every observation.
    pub fn learned(n_obs: usize, initial: f64) -> Result<Self> {
        if !(initial > 0.0 && initial < 1.0) {
            return Err(Error::config("agent.lambda", "initial learned value must be in (0, 1)"));
        }
        Ok(MixingFunction::Learned {
            bias: (initial / (1.0 - initial)).ln(),
            weights: vec![0.0; n_obs],
        })
    }

    pub fn value(&self, obs: usize) -> f64 {
        match self {
            MixingFunction::Constant(l) => *l,
            MixingFunction::Learned { bias, weights } => sigmoid(bias + weights[obs]),
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, MixingFunction::Learned { .. })
    }

    /// Ascent step on the mixing weights. For each step, `coeffs[t]` multiplies
    /// `d lambda(h_t) / d w`.
    pub fn apply(&mut self, obs: &[usize], coeffs: &[f64], alpha: f64) -> Result<()> {
        let MixingFunction::Learned { bias, weights } = self else {
            return Ok(());
        };
        let mut d_bias = 0.0;
        let mut d_w = vec![0.0; weights.len()];
        for (&o, &c) in obs.iter().zip(coeffs) {
            let l = sigmoid(*bias + weights[o]);
            let d = c * l * (1.0 - l);
            d_bias += d;
            d_w[o] += d;
        }
        let nb = *bias + alpha * d_bias;
        if !nb.is_finite() {
            return Err(Error::NonFiniteUpdate {
                group: "lambda",
                key: "bias".into(),
                magnitude: alpha * d_bias,
            });
        }
        for (o, d) in d_w.iter().enumerate() {
            if !(weights[o] + alpha * d).is_finite() {
                return Err(Error::NonFiniteUpdate {
                    group: "lambda",
                    key: o.to_string(),
                    magnitude: alpha * d,
                });
            }
        }
        *bias = nb;
        weights.iter_mut().zip(&d_w).for_each(|(w, d)| *w += alpha * d);
        Ok(())
    }
}

/// Step sizes `(alpha_n, beta_n)` of the parametric and tree updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// `alpha_n = alpha`, `beta_n = 1/n`.
    Constant { alpha: f64 },
    /// `alpha_n = alpha0 / (1 + c n ln(1 + n))`, `beta_n = 1/n`.
    Convergent { alpha0: f64, c: f64 },
}

impl Schedule {
    pub fn rates(&self, n: u64) -> Result<(f64, f64)> {
        if n == 0 {
            return Err(Error::InvalidArgument("schedules are indexed from n = 1".into()));
        }
        let nf = n as f64;
        let alpha = match *self {
            Schedule::Constant { alpha } => alpha,
            Schedule::Convergent { alpha0, c } => alpha0 / (1.0 + c * nf * nf.ln_1p()),
        };
        Ok((alpha, 1.0 / nf))
    }

    pub fn alpha(&self, n: u64) -> Result<f64> {
        self.rates(n).map(|r| r.0)
    }
}

/// Lower bound on the importance weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FloorSchedule {
    Constant(f64),
    /// `floor0 / (1 + n / horizon)`.
    Decaying { floor0: f64, horizon: f64 },
}

impl FloorSchedule {
    pub fn value(&self, n: u64) -> f64 {
        match *self {
            FloorSchedule::Constant(v) => v,
            FloorSchedule::Decaying { floor0, horizon } => floor0 / (1.0 + n as f64 / horizon),
        }
    }
}

impl Default for FloorSchedule {
    fn default() -> Self {
        FloorSchedule::Decaying {
            floor0: 0.1,
            horizon: 1e4,
        }
    }
}
