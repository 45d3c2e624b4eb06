/// Per-timestep exponential running mean of observed returns.
///
/// The value used for an episode is the mean before that episode's returns are
/// folded in; a timestep that has never been observed has baseline 0.
#[derive(Clone, Debug)]
pub struct RunningMeanBaseline {
    decay: f64,
    means: Vec<Option<f64>>,
}

impl RunningMeanBaseline {
    pub fn new(decay: f64) -> Self {
        RunningMeanBaseline {
            decay,
            means: Vec::new(),
        }
    }

    pub fn value(&self, t: usize) -> f64 {
        self.means.get(t).copied().flatten().unwrap_or(0.0)
    }

    pub fn observe(&mut self, t: usize, ret: f64) {
        if self.means.len() <= t {
            self.means.resize(t + 1, None);
        }
        let slot = &mut self.means[t];
        *slot = Some(match *slot {
            None => ret,
            Some(m) => self.decay * m + (1.0 - self.decay) * ret,
        });
    }

    /// Folds in every return of an episode.
    pub fn observe_all(&mut self, returns: &[f64]) {
        for (t, &g) in returns.iter().enumerate() {
            self.observe(t, g);
        }
    }
}

impl Default for RunningMeanBaseline {
    fn default() -> Self {
        Self::new(0.99)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_return_initializes() {
        let mut b = RunningMeanBaseline::new(0.9);
        assert_eq!(b.value(3), 0.0);
        b.observe(3, 2.0);
        assert_eq!(b.value(3), 2.0);
        b.observe(3, 12.0);
        assert!((b.value(3) - 3.0).abs() < 1e-12);
        assert_eq!(b.value(0), 0.0);
    }
}
