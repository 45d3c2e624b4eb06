//! Single-layer LSTM policy with a linear action head and baseline head,
//! differentiated by backpropagation through the whole episode.

use rand::Rng as _;

use super::{clip_scale, Checkpoint, Group, PgModel};
use crate::error::{Error, Result};
use crate::hdp::StepKeys;
use crate::numerics::{sigmoid, softmax_stable};
use crate::rng::{self, domain};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmConfig {
    pub n_inputs: usize,
    pub hidden: usize,
    pub n_actions: usize,
    /// Recurrent weights start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub forget_bias: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            n_inputs: 4,
            hidden: 8,
            n_actions: 4,
            init_scale: 0.1,
            forget_bias: 1.0,
        }
    }
}

/// Offsets of the parameter groups inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
struct Layout {
    gates_w: usize,
    gates_b: usize,
    head_w: usize,
    head_b: usize,
    value_w: usize,
    value_b: usize,
    len: usize,
}

impl Layout {
    fn new(c: &LstmConfig) -> Self {
        let h = c.hidden;
        let z = c.n_inputs + h;
        let f = h + c.n_inputs;
        let gates_w = 0;
        let gates_b = gates_w + 4 * h * z;
        let head_w = gates_b + 4 * h;
        let head_b = head_w + c.n_actions * f;
        let value_w = head_b + c.n_actions;
        let value_b = value_w + f;
        Layout {
            gates_w,
            gates_b,
            head_w,
            head_b,
            value_w,
            value_b,
            len: value_b + 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LstmPolicy {
    config: LstmConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Activations of one step.
#[derive(Clone, Debug, Default)]
struct Step {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations `[i, f, o, g]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<f64>,
    value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LstmTape {
    steps: Vec<Step>,
}

pub type LstmGrad = Vec<f64>;

impl LstmPolicy {
    pub fn new(config: LstmConfig, seed: u64) -> Self {
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.len];
        let mut r = rng::keyed(seed, domain::INIT_WEIGHTS, []);
        let s = config.init_scale;
        for w in &mut params[layout.gates_w..layout.gates_b] {
            *w = if s > 0.0 { r.random_range(-s..s) } else { 0.0 };
        }
        let h = config.hidden;
        for b in &mut params[layout.gates_b + h..layout.gates_b + 2 * h] {
            *b = config.forget_bias;
        }
        LstmPolicy {
            config,
            layout,
            params,
        }
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn features(&self) -> usize {
        self.config.hidden + self.config.n_inputs
    }

    fn forward(&self, step: &mut Step, probs: &mut [f64]) -> Result<()> {
        let c = &self.config;
        let (h, ni) = (c.hidden, c.n_inputs);
        let zw = ni + h;
        let l = self.layout;
        step.gates.resize(4 * h, 0.0);
        for r in 0..4 * h {
            let row = &self.params[l.gates_w + r * zw..l.gates_w + (r + 1) * zw];
            let mut z = self.params[l.gates_b + r];
            z += row[..ni].iter().zip(&step.input).map(|(w, x)| w * x).sum::<f64>();
            z += row[ni..].iter().zip(&step.h_prev).map(|(w, x)| w * x).sum::<f64>();
            step.gates[r] = if r < 3 * h { sigmoid(z) } else { z.tanh() };
        }
        step.c = (0..h)
            .map(|j| step.gates[h + j] * step.c_prev[j] + step.gates[j] * step.gates[3 * h + j])
            .collect();
        step.tanh_c = step.c.iter().map(|x| x.tanh()).collect();
        step.h = (0..h).map(|j| step.gates[2 * h + j] * step.tanh_c[j]).collect();

        let f = self.features();
        let phi: Vec<f64> = step.h.iter().chain(&step.input).copied().collect();
        let mut logits = vec![0.0; c.n_actions];
        for (a, logit) in logits.iter_mut().enumerate() {
            let row = &self.params[l.head_w + a * f..l.head_w + (a + 1) * f];
            *logit = self.params[l.head_b + a] + row.iter().zip(&phi).map(|(w, x)| w * x).sum::<f64>();
        }
        softmax_stable(&logits, probs)?;
        step.probs = probs.to_vec();
        let vw = &self.params[l.value_w..l.value_w + f];
        step.value = self.params[l.value_b] + vw.iter().zip(&phi).map(|(w, x)| w * x).sum::<f64>();
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let l = self.layout;
        let f = self.features();
        let mut meta = Group::new("lstm.shape", 3);
        meta.rows.push((
            "0".into(),
            vec![c.n_inputs as f64, c.hidden as f64, c.n_actions as f64],
        ));
        Checkpoint {
            groups: vec![
                meta,
                Group::dense("lstm.gates_w", c.n_inputs + c.hidden, &self.params[l.gates_w..l.gates_b]),
                Group::dense("lstm.gates_b", 4 * c.hidden, &self.params[l.gates_b..l.head_w]),
                Group::dense("lstm.head_w", f, &self.params[l.head_w..l.head_b]),
                Group::dense("lstm.head_b", c.n_actions, &self.params[l.head_b..l.value_w]),
                Group::dense("lstm.value_w", f, &self.params[l.value_w..l.value_b]),
                Group::dense("lstm.value_b", 1, &self.params[l.value_b..]),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let shape = ck.group("lstm.shape")?.flatten();
        if shape.len() != 3 {
            return Err(Error::InvalidArgument("bad lstm.shape group".into()));
        }
        let config = LstmConfig {
            n_inputs: shape[0] as usize,
            hidden: shape[1] as usize,
            n_actions: shape[2] as usize,
            ..LstmConfig::default()
        };
        let mut policy = LstmPolicy::new(config, 0);
        let mut params = Vec::with_capacity(policy.params.len());
        for name in [
            "lstm.gates_w",
            "lstm.gates_b",
            "lstm.head_w",
            "lstm.head_b",
            "lstm.value_w",
            "lstm.value_b",
        ] {
            params.extend(ck.group(name)?.flatten());
        }
        if params.len() != policy.params.len() {
            return Err(Error::InvalidArgument("LSTM checkpoint has the wrong size".into()));
        }
        policy.params = params;
        Ok(policy)
    }
}

impl PgModel for LstmPolicy {
    type Tape = LstmTape;
    type Grad = LstmGrad;

    fn n_actions(&self) -> usize {
        self.config.n_actions
    }

    fn begin(&self, tape: &mut LstmTape) {
        tape.steps.clear();
    }

    fn advance(&self, tape: &mut LstmTape, keys: &StepKeys, probs: &mut [f64]) -> Result<()> {
        let h = self.config.hidden;
        if keys.obs >= self.config.n_inputs {
            return Err(Error::InvalidArgument(format!(
                "observation {} exceeds the LSTM input width",
                keys.obs
            )));
        }
        let (h_prev, c_prev) = match tape.steps.last() {
            Some(s) => (s.h.clone(), s.c.clone()),
            None => (vec![0.0; h], vec![0.0; h]),
        };
        let mut input = vec![0.0; self.config.n_inputs];
        input[keys.obs] = 1.0;
        let mut step = Step {
            input,
            h_prev,
            c_prev,
            ..Step::default()
        };
        self.forward(&mut step, probs)?;
        tape.steps.push(step);
        Ok(())
    }

    fn recorded_probs<'a>(&self, tape: &'a LstmTape, t: usize) -> &'a [f64] {
        &tape.steps[t].probs
    }

    fn baseline(&self, tape: &LstmTape, t: usize) -> Option<f64> {
        Some(tape.steps[t].value)
    }

    fn gradient(&self, tape: &LstmTape, actions: &[usize], score: &[f64], value: &[f64]) -> LstmGrad {
        let c = &self.config;
        let (h, ni, na) = (c.hidden, c.n_inputs, c.n_actions);
        let zw = ni + h;
        let f = self.features();
        let l = self.layout;
        let p = &self.params;
        let mut grad = vec![0.0; l.len];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..tape.steps.len()).rev() {
            let s = &tape.steps[t];
            let phi: Vec<f64> = s.h.iter().chain(&s.input).copied().collect();
            let mut dphi = vec![0.0; f];
            // Action head: d log pi(a) / d logit(b) = [a == b] - pi(b).
            if score[t] != 0.0 {
                for b in 0..na {
                    let dl = score[t] * (f64::from(u8::from(b == actions[t])) - s.probs[b]);
                    grad[l.head_b + b] += dl;
                    for k in 0..f {
                        grad[l.head_w + b * f + k] += dl * phi[k];
                        dphi[k] += dl * p[l.head_w + b * f + k];
                    }
                }
            }
            if value[t] != 0.0 {
                grad[l.value_b] += value[t];
                for k in 0..f {
                    grad[l.value_w + k] += value[t] * phi[k];
                    dphi[k] += value[t] * p[l.value_w + k];
                }
            }
            let (gi, gf, go, gg) = (&s.gates[..h], &s.gates[h..2 * h], &s.gates[2 * h..3 * h], &s.gates[3 * h..]);
            for j in 0..h {
                let dh = dphi[j] + dh_next[j];
                let d_o = dh * s.tanh_c[j];
                let dc = dh * go[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                dz[j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                dz[h + j] = dc * s.c_prev[j] * gf[j] * (1.0 - gf[j]);
                dz[2 * h + j] = d_o * go[j] * (1.0 - go[j]);
                dz[3 * h + j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
                dc_next[j] = dc * gf[j];
            }
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..4 * h {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                grad[l.gates_b + r] += d;
                let base = l.gates_w + r * zw;
                for k in 0..ni {
                    grad[base + k] += d * s.input[k];
                }
                for k in 0..h {
                    grad[base + ni + k] += d * s.h_prev[k];
                    dh_next[k] += d * p[base + ni + k];
                }
            }
        }
        grad
    }

    fn apply(&mut self, grad: &LstmGrad, alpha: f64, clip: Option<f64>) -> Result<()> {
        let step = alpha * clip_scale(Self::grad_norm(grad), clip);
        if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !(step * **g).is_finite()) {
            return Err(Error::NonFiniteUpdate {
                group: "lstm",
                key: i.to_string(),
                magnitude: step * g,
            });
        }
        for (x, g) in self.params.iter_mut().zip(grad) {
            *x += step * g;
        }
        Ok(())
    }

    fn grad_norm(grad: &LstmGrad) -> f64 {
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}
