use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNavConfig {
    /// Lower coordinate bound of the square domain (both axes).
    pub low: f64,
    pub high: f64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub max_episode_steps: usize,
    /// Whether reaching the goal counts as an absorbing terminal state for bootstrapping.
    pub terminal_on_goal: bool,
}

impl Default for PointNavConfig {
    fn default() -> Self {
        Self {
            low: 0.0,
            high: 10.0,
            start: [1.0, 1.0],
            goal: [10.0, 10.0],
            goal_radius: 0.5,
            max_episode_steps: 50,
            terminal_on_goal: false,
        }
    }
}

/// A point moving by `(dx, dy) in [-1, 1]^2` per step inside a clamped square,
/// rewarded with the negative distance to the goal.
#[derive(Debug, Clone)]
pub struct PointNav2D<T> {
    config: PointNavConfig,
    spec: EnvSpec<T>,
    position: [T; 2],
    step_count: usize,
}

impl<T: Scalar> PointNav2D<T> {
    pub fn new(config: PointNavConfig) -> Result<Self> {
        if !(config.low < config.high) {
            return Err(Error::InvalidConfig("point-nav domain needs low < high".into()));
        }
        let inside = |p: [f64; 2]| p.iter().all(|&c| c >= config.low && c <= config.high);
        if !inside(config.start) || !inside(config.goal) {
            return Err(Error::InvalidConfig("start and goal must lie in the domain".into()));
        }
        if config.max_episode_steps == 0 {
            return Err(Error::InvalidConfig("max_episode_steps must be positive".into()));
        }
        let spec = EnvSpec {
            observation_dim: 2,
            action_dim: 2,
            action_low: vec![-T::one(); 2],
            action_high: vec![T::one(); 2],
            max_episode_steps: config.max_episode_steps,
        };
        let position = [T::lit(config.start[0]), T::lit(config.start[1])];
        Ok(Self {
            config,
            spec,
            position,
            step_count: 0,
        })
    }

    pub fn config(&self) -> &PointNavConfig {
        &self.config
    }

    pub fn position(&self) -> [T; 2] {
        self.position
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Starts an episode from an arbitrary in-domain position.
    pub fn reset_to(&mut self, position: [T; 2]) -> Vec<T> {
        self.position = [self.clamp(position[0]), self.clamp(position[1])];
        self.step_count = 0;
        self.position.to_vec()
    }

    fn clamp(&self, v: T) -> T {
        v.max(T::lit(self.config.low)).min(T::lit(self.config.high))
    }

    fn distance(&self, x: T, y: T) -> T {
        let dx = x - T::lit(self.config.goal[0]);
        let dy = y - T::lit(self.config.goal[1]);
        (dx * dx + dy * dy).sqrt()
    }
}

impl<T: Scalar> Environment<T> for PointNav2D<T> {
    fn name(&self) -> &'static str {
        "point_nav_2d"
    }

    fn spec(&self) -> &EnvSpec<T> {
        &self.spec
    }

    fn reset(&mut self) -> Vec<T> {
        self.reset_to([T::lit(self.config.start[0]), T::lit(self.config.start[1])])
    }

    fn step(&mut self, action: &[T]) -> Result<StepOutcome<T>> {
        if action.len() != 2 {
            return Err(Error::dims("point-nav action", 2, action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite action".into()));
        }
        let unit = |a: T| a.max(-T::one()).min(T::one());
        self.position = [
            self.clamp(self.position[0] + unit(action[0])),
            self.clamp(self.position[1] + unit(action[1])),
        ];
        self.step_count += 1;
        let observation = self.position.to_vec();
        let reward = self.ground_truth_reward(&observation, action);
        let at_goal = -reward <= T::lit(self.config.goal_radius);
        let out_of_time = self.step_count >= self.config.max_episode_steps;
        Ok(StepOutcome {
            observation,
            reward,
            done: at_goal || out_of_time,
            terminal: at_goal && self.config.terminal_on_goal,
        })
    }

    /// `-||state - goal||`. The action is ignored: a step is scored by the state it reaches.
    fn ground_truth_reward(&self, state: &[T], _action: &[T]) -> T {
        -self.distance(state[0], state[1])
    }

    fn goal_distance(&self, observation: &[T]) -> Option<T> {
        Some(self.distance(observation[0], observation[1]))
    }
}
