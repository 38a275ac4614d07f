//! Environments: the 2D point-navigation task and finite MDPs for exact analysis.

mod point_nav;
pub mod tabular;

pub use point_nav::{PointNav2D, PointNavConfig};
pub use tabular::{exact_policy_evaluation, visitation_distribution, TabularMdp};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec<T> {
    pub observation_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<T>,
    pub action_high: Vec<T>,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub observation: Vec<T>,
    pub reward: T,
    /// The episode ended (goal reached or step budget exhausted).
    pub done: bool,
    /// The episode ended in a state whose value is zero by definition; only these
    /// transitions cut the bootstrap in the critic target.
    pub terminal: bool,
}

/// Single-threaded environment state machine.
pub trait Environment<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    fn spec(&self) -> &EnvSpec<T>;

    fn reset(&mut self) -> Vec<T>;

    fn step(&mut self, action: &[T]) -> Result<StepOutcome<T>>;

    /// Hand-engineered reward used by the scripted overseer and for evaluation.
    fn ground_truth_reward(&self, state: &[T], action: &[T]) -> T;

    /// Distance from an observation to the task goal, when the task has one.
    fn goal_distance(&self, _observation: &[T]) -> Option<T> {
        None
    }

    /// 2D coordinates used to draw a state for a human overseer.
    fn render_point(&self, state: &[T]) -> [f64; 2] {
        [
            state.first().map_or(0.0, |v| v.as_f64()),
            state.get(1).map_or(0.0, |v| v.as_f64()),
        ]
    }
}
