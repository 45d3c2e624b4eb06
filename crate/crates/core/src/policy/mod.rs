//! Differentiable policies and baselines.

mod baseline;
mod checkpoint;
mod lstm;
mod tabular;

pub use baseline::RunningMeanBaseline;
pub use checkpoint::{Checkpoint, Group};
pub use lstm::{LstmConfig, LstmGrad, LstmPolicy, LstmTape};
pub use tabular::{FeatureSoftmaxPolicy, TabularGrad, TabularTape};

use crate::error::Result;
use crate::hdp::StepKeys;

/// A softmax policy over histories that is walked forward one step at a time
/// and differentiated over a whole episode.
pub trait PgModel: Clone + Send {
    /// Forward record of one episode.
    type Tape: Default + Clone + Send;
    type Grad;

    fn n_actions(&self) -> usize;

    /// Clears `tape` for a new episode.
    fn begin(&self, tape: &mut Self::Tape);

    /// Moves to the next history of the episode and writes its action
    /// probabilities into `probs`.
    fn advance(&self, tape: &mut Self::Tape, keys: &StepKeys, probs: &mut [f64]) -> Result<()>;

    /// Action probabilities recorded for step `t`.
    fn recorded_probs<'a>(&self, tape: &'a Self::Tape, t: usize) -> &'a [f64];

    /// Prediction of a learned baseline head at step `t`, if the model has one.
    fn baseline(&self, tape: &Self::Tape, t: usize) -> Option<f64>;

    /// `sum_t score[t] * grad log pi(a_t | h_t) + sum_t value[t] * grad b(h_t)`.
    fn gradient(
        &self,
        tape: &Self::Tape,
        actions: &[usize],
        score: &[f64],
        value: &[f64],
    ) -> Self::Grad;

    /// `x += alpha * grad`, after rescaling `grad` to norm at most `clip`.
    fn apply(&mut self, grad: &Self::Grad, alpha: f64, clip: Option<f64>) -> Result<()>;

    /// Euclidean norm of a gradient.
    fn grad_norm(grad: &Self::Grad) -> f64;
}

/// Scale factor implementing the optional max-norm contract.
pub(crate) fn clip_scale(norm: f64, clip: Option<f64>) -> f64 {
    match clip {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    }
}
