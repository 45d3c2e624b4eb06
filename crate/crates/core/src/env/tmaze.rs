//! T-maze with a long-term dependency.
//!
//! The agent starts at `start` in a corridor whose T-junction is at position
//! `length`. Only the first observation reveals on which side of the junction
//! the goal lies.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hdp::{EnvShape, Enumerable, Environment, EpisodeTrace, History, Next, Outcome, Transition};
use crate::rng::Rng;

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;

/// Sign `1000`: goal to the north.
pub const OBS_SIGN_NORTH: usize = 0;
/// Sign `0100`: goal to the south.
pub const OBS_SIGN_SOUTH: usize = 1;
/// `0010`.
pub const OBS_CORRIDOR: usize = 2;
/// `0001`.
pub const OBS_JUNCTION: usize = 3;

/// 4-bit code of an observation id, most significant bit first.
pub fn observation_bits(obs: usize) -> [f64; 4] {
    let mut v = [0.0; 4];
    v[obs] = 1.0;
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct TMazeConfig {
    pub length: usize,
    pub start: usize,
    pub gamma: f64,
    pub goal_reward: f64,
    pub penalty: f64,
    /// Reward for walking into the west wall at position 0.
    pub wall_penalty: f64,
    /// Defaults to `4 * length + 20`.
    pub tmax: Option<usize>,
}

impl TMazeConfig {
    pub fn new(length: usize, start: usize) -> Self {
        TMazeConfig {
            length,
            start,
            gamma: 0.98,
            goal_reward: 4.0,
            penalty: -0.1,
            wall_penalty: -0.1,
            tmax: None,
        }
    }

    pub fn tmax(&self) -> usize {
        self.tmax.unwrap_or(4 * self.length + 20)
    }
}

#[derive(Clone, Debug)]
pub struct TMaze {
    config: TMazeConfig,
    goal_north: bool,
    position: usize,
}

impl TMaze {
    pub fn new(config: TMazeConfig) -> Result<Self> {
        if config.length == 0 {
            return Err(Error::config("env.length", "must be at least 1"));
        }
        if config.start >= config.length {
            return Err(Error::config("env.start", "must lie in the corridor, before the junction"));
        }
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(Error::config("env.gamma", "must be in [0, 1]"));
        }
        let position = config.start;
        Ok(TMaze {
            config,
            goal_north: true,
            position,
        })
    }

    pub fn config(&self) -> &TMazeConfig {
        &self.config
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn goal_north(&self) -> bool {
        self.goal_north
    }

    /// Starts an episode with a chosen goal side.
    pub fn reset_to(&mut self, goal_north: bool) -> usize {
        self.goal_north = goal_north;
        self.position = self.config.start;
        if goal_north {
            OBS_SIGN_NORTH
        } else {
            OBS_SIGN_SOUTH
        }
    }

    /// Current observation for `t > 0`.
    pub fn observe(&self) -> usize {
        if self.position == self.config.length {
            OBS_JUNCTION
        } else {
            OBS_CORRIDOR
        }
    }

    /// Applies `action` to the maze state.
    pub fn apply(&mut self, action: usize) -> Result<Transition> {
        let c = &self.config;
        let at_junction = self.position == c.length;
        let (reward, terminal) = match action {
            NORTH | SOUTH if at_junction => {
                let correct = (action == NORTH) == self.goal_north;
                (if correct { c.goal_reward } else { c.penalty }, true)
            }
            NORTH | SOUTH => (c.penalty, false),
            EAST if at_junction => (c.wall_penalty, false),
            EAST => {
                self.position += 1;
                (0.0, false)
            }
            WEST if self.position == 0 => (c.wall_penalty, false),
            WEST => {
                self.position -= 1;
                (0.0, false)
            }
            _ => return Err(Error::InvalidArgument(format!("T-maze action {action} out of range"))),
        };
        let next = if terminal {
            Next::Terminal
        } else {
            Next::Obs(self.observe())
        };
        Ok(Transition { reward, next })
    }

    /// Rebuilds the maze state at the end of `h`.
    fn replay(&mut self, h: &History) -> Result<()> {
        self.reset_to(h.obs(0) == OBS_SIGN_NORTH);
        for a in h.actions() {
            if let Next::Terminal = self.apply(a)?.next {
                return Err(Error::InvalidArgument(format!("history {h} continues past the end")));
            }
        }
        Ok(())
    }

    /// Whether the episode ended with a correct turn at the junction.
    pub fn is_success(&self, trace: &EpisodeTrace) -> bool {
        trace
            .records
            .last()
            .is_some_and(|r| r.reward == self.config.goal_reward)
    }
}

impl Environment for TMaze {
    fn shape(&self) -> EnvShape {
        EnvShape {
            n_obs: 4,
            n_actions: 4,
            tmax: self.config.tmax(),
            gamma: self.config.gamma,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> usize {
        let north = rng.random_bool(0.5);
        self.reset_to(north)
    }

    fn step(&mut self, _: &History, action: usize, _: &mut Rng) -> Result<Transition> {
        self.apply(action)
    }
}

impl Enumerable for TMaze {
    fn initial_distribution(&mut self) -> Vec<f64> {
        vec![0.5, 0.5, 0.0, 0.0]
    }

    fn outcome(&mut self, h: &History, action: usize) -> Result<Outcome> {
        self.replay(h)?;
        let tr = self.apply(action)?;
        let next = match tr.next {
            Next::Obs(o) => vec![(o, 1.0)],
            Next::Terminal => Vec::new(),
        };
        Ok(Outcome {
            reward: tr.reward,
            next,
        })
    }
}

/// Expected discounted return, with no step cap, of the policy that walks east
/// or west with equal probability in the corridor and turns north or south with
/// equal probability at the junction.
///
/// Solves the tridiagonal system for the value of each corridor position.
pub fn random_walk_value(config: &TMazeConfig) -> f64 {
    let n = config.length;
    let g = config.gamma;
    let turn = 0.5 * (config.goal_reward + config.penalty);
    // Unknowns V(0..n-1); the junction value is the immediate turn payoff.

    // Row p: -0.5 g V(p-1) + V(p) - 0.5 g V(p+1) = 0, with the west wall at 0:
    // V(0) = 0.5 g V(1) + 0.5 (wall + g V(0)).
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for p in 0..n {
        if p == 0 {
            diag[p] = 1.0 - 0.5 * g;
            rhs[p] = 0.5 * config.wall_penalty;
        } else {
            lower[p] = -0.5 * g;
        }
        if p + 1 < n {
            upper[p] = -0.5 * g;
        } else {
            rhs[p] += 0.5 * g * turn;
        }
    }
    let v = solve_tridiagonal(&lower, &diag, &upper, &rhs);
    v[config.start]
}

/// Thomas algorithm for a diagonally dominant tridiagonal system.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdp::{rollout, solve_optimal, OpenLoopPolicy, Sampler};
    use crate::rng;

    #[test]
    fn correct_turn_pays_four() {
        let mut m = TMaze::new(TMazeConfig::new(3, 0)).unwrap();
        assert_eq!(m.reset_to(true), OBS_SIGN_NORTH);
        for _ in 0..2 {
            assert_eq!(m.apply(EAST).unwrap().next, Next::Obs(OBS_CORRIDOR));
        }
        assert_eq!(m.apply(EAST).unwrap().next, Next::Obs(OBS_JUNCTION));
        let tr = m.apply(NORTH).unwrap();
        assert_eq!(tr.reward, 4.0);
        assert_eq!(tr.next, Next::Terminal);
    }

    #[test]
    fn wrong_turn_ends_cheaply() {
        let mut m = TMaze::new(TMazeConfig::new(1, 0)).unwrap();
        m.reset_to(false);
        m.apply(EAST).unwrap();
        let tr = m.apply(NORTH).unwrap();
        assert_eq!((tr.reward, tr.next), (-0.1, Next::Terminal));
    }

    #[test]
    fn corridor_moves() {
        let mut m = TMaze::new(TMazeConfig::new(10, 3)).unwrap();
        m.reset_to(true);
        let tr = m.apply(SOUTH).unwrap();
        assert_eq!((tr.reward, m.position()), (-0.1, 3));
        let tr = m.apply(EAST).unwrap();
        assert_eq!((tr.reward, m.position()), (0.0, 4));
        assert_eq!(tr.next, Next::Obs(OBS_CORRIDOR));
        assert!(m.apply(4).is_err());
    }

    #[test]
    fn west_wall_penalty() {
        let mut m = TMaze::new(TMazeConfig::new(5, 0)).unwrap();
        m.reset_to(true);
        let tr = m.apply(WEST).unwrap();
        assert_eq!((tr.reward, m.position()), (-0.1, 0));
        assert_eq!(m.observe(), OBS_CORRIDOR);
    }

    #[test]
    fn optimal_value_small_mazes() {
        for length in 1..=4 {
            let mut cfg = TMazeConfig::new(length, 0);
            cfg.tmax = Some(4);
            let mut m = TMaze::new(cfg).unwrap();
            let (v, _) = solve_optimal(&mut m).unwrap();
            let expected = 0.98f64.powi(length as i32) * 4.0;
            assert!((v - expected).abs() < 1e-12, "L={length}: {v} vs {expected}");
        }
    }

    #[test]
    fn success_detection() {
        let mut m = TMaze::new(TMazeConfig::new(2, 0)).unwrap();
        let pol = OpenLoopPolicy {
            n_actions: 4,
            actions: vec![EAST, EAST, NORTH],
        };
        let mut r = rng::seeded(3);
        let mut wins = 0;
        for _ in 0..200 {
            let tr = rollout(&mut m, &mut Sampler::new(&pol), &mut r).unwrap();
            assert_eq!(tr.len(), 3);
            if m.is_success(&tr) {
                wins += 1;
                assert!((tr.total_return() - 0.98f64.powi(2) * 4.0).abs() < 1e-12);
            }
        }
        assert!((60..140).contains(&wins));
    }

    /// Value iteration on the same chain.
    fn random_walk_by_iteration(cfg: &TMazeConfig) -> f64 {
        let n = cfg.length;
        let g = cfg.gamma;
        let mut v = vec![0.0; n + 1];
        for _ in 0..20_000 {
            let mut next = vec![0.0; n + 1];
            for p in 0..=n {
                let east = if p == n { 0.0 } else { g * v[p + 1] };
                let west = if p == 0 { cfg.wall_penalty + g * v[0] } else { g * v[p - 1] };
                next[p] = if p == n {
                    0.5 * (cfg.goal_reward + cfg.penalty)
                } else {
                    0.5 * east + 0.5 * west
                };
            }
            v = next;
        }
        v[cfg.start]
    }

    #[test]
    fn random_walk_value_matches_iteration() {
        for (l, s) in [(1, 0), (4, 2), (10, 5), (10, 0)] {
            let cfg = TMazeConfig::new(l, s);
            let a = random_walk_value(&cfg);
            let b = random_walk_by_iteration(&cfg);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn random_walk_is_a_plateau() {
        let cfg = TMazeConfig::new(10, 5);
        let v = random_walk_value(&cfg);
        let optimal = 4.0 * 0.98f64.powi(5);
        let all_wrong = -0.1 * 0.98f64.powi(5);
        assert!(all_wrong < v && v < optimal);
    }
}
