//! Experience stores: the replay buffer, the policy-aligned buffer of recent
//! trajectories, and the preference buffer, plus segment extraction and sampling.

pub mod checkpoint;
mod policy_aligned;
mod preference;
mod replay;

pub use policy_aligned::{pa_share, sample_hybrid, HybridBatch, PolicyAlignedBuffer};
pub use preference::{PreferenceBuffer, PreferenceRecord, SegmentPair};
pub use replay::{push_transition, relabel_all, sample_uniform, ReplayBuffer};

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    /// Output of the learned reward model; rewritten on every relabel.
    pub predicted_reward: T,
    /// Hand-engineered reward. Read only by the scripted overseer and diagnostics.
    pub ground_truth_reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
    pub terminal: bool,
    pub trajectory_id: u64,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub id: u64,
    pub transitions: Vec<Transition<T>>,
    pub complete: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(id: u64) -> Self {
        Self {
            id,
            transitions: Vec::new(),
            complete: false,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// The contiguous slice `[start, start + length)` as a segment.
    pub fn segment(&self, start: usize, length: usize) -> Result<Segment<T>> {
        if length == 0 || start + length > self.len() {
            return Err(Error::InvalidInput(format!(
                "segment [{start}, {}) outside trajectory {} of length {}",
                start + length,
                self.id,
                self.len()
            )));
        }
        let slice = &self.transitions[start..start + length];
        Ok(Segment::new(
            self.id,
            start,
            slice.iter().map(|t| t.state.clone()).collect(),
            slice.iter().map(|t| t.action.clone()).collect(),
            slice.iter().map(|t| t.ground_truth_reward).collect(),
        ))
    }

    pub fn relabel_with<F>(&mut self, mut reward: F)
    where
        F: FnMut(&[T], &[T]) -> T,
    {
        for t in &mut self.transitions {
            t.predicted_reward = reward(&t.state, &t.action);
        }
    }
}

/// Uniformly placed slice of `length` steps from `trajectory`.
pub fn sample_segment<T: Scalar, R: Rng + ?Sized>(
    trajectory: &Trajectory<T>,
    length: usize,
    rng: &mut R,
) -> Result<Segment<T>> {
    if length == 0 {
        return Err(Error::InvalidInput("segment length must be positive".into()));
    }
    if trajectory.len() < length {
        return Err(Error::InsufficientData {
            buffer: "trajectory",
            detail: format!(
                "trajectory {} has {} steps, segment needs {length}",
                trajectory.id,
                trajectory.len()
            ),
        });
    }
    let start = rng.random_range(0..=trajectory.len() - length);
    trajectory.segment(start, length)
}

/// A contiguous run of `(state, action)` steps from one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub trajectory_id: u64,
    pub start: usize,
    pub states: Vec<Vec<T>>,
    pub actions: Vec<Vec<T>>,
    ground_truth_rewards: Vec<T>,
    ground_truth_return: T,
}

impl<T: Scalar> Segment<T> {
    pub fn new(
        trajectory_id: u64,
        start: usize,
        states: Vec<Vec<T>>,
        actions: Vec<Vec<T>>,
        ground_truth_rewards: Vec<T>,
    ) -> Self {
        assert_eq!(states.len(), actions.len(), "segment states/actions length");
        assert_eq!(states.len(), ground_truth_rewards.len(), "segment reward length");
        let ground_truth_return = ground_truth_rewards.iter().copied().sum();
        Self {
            trajectory_id,
            start,
            states,
            actions,
            ground_truth_rewards,
            ground_truth_return,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Sum of hand-engineered rewards over the segment (oracle-only).
    pub fn ground_truth_return(&self) -> T {
        self.ground_truth_return
    }

    pub fn ground_truth_rewards(&self) -> &[T] {
        &self.ground_truth_rewards
    }

    /// Sub-slice `[offset, offset + length)` relative to this segment.
    pub fn snippet(&self, offset: usize, length: usize) -> Result<Segment<T>> {
        if length == 0 || offset + length > self.len() {
            return Err(Error::InvalidInput(format!(
                "snippet [{offset}, {}) outside segment of length {}",
                offset + length,
                self.len()
            )));
        }
        let range = offset..offset + length;
        Ok(Segment::new(
            self.trajectory_id,
            self.start + offset,
            self.states[range.clone()].to_vec(),
            self.actions[range.clone()].to_vec(),
            self.ground_truth_rewards[range].to_vec(),
        ))
    }

    /// Row `t` is `state_t ++ action_t`, the reward network's input layout.
    pub fn state_action_matrix(&self) -> Array2<T> {
        let width = self.states.first().map_or(0, Vec::len) + self.actions.first().map_or(0, Vec::len);
        let mut m = Array2::zeros((self.len(), width));
        for (mut row, (s, a)) in m.rows_mut().into_iter().zip(self.states.iter().zip(&self.actions)) {
            for (dst, src) in row.iter_mut().zip(s.iter().chain(a)) {
                *dst = *src;
            }
        }
        m
    }
}

pub(crate) fn state_action_row<T: Scalar>(state: &[T], action: &[T]) -> Vec<T> {
    state.iter().chain(action).copied().collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A trajectory whose step `k` has state `(id, k)`, action `(k, -k)` and
    /// ground-truth reward `k + id / 10`.
    pub fn trajectory(id: u64, len: usize, complete: bool) -> Trajectory<f64> {
        let transitions = (0..len)
            .map(|k| transition(id, k, complete && k + 1 == len))
            .collect();
        Trajectory {
            id,
            transitions,
            complete,
        }
    }

    pub fn transition(id: u64, k: usize, done: bool) -> Transition<f64> {
        Transition {
            state: vec![id as f64, k as f64],
            action: vec![k as f64, -(k as f64)],
            predicted_reward: 0.0,
            ground_truth_reward: k as f64 + id as f64 / 10.0,
            next_state: vec![id as f64, k as f64 + 1.0],
            done,
            terminal: false,
            trajectory_id: id,
            step_index: k,
        }
    }
}
