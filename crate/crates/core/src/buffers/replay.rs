use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;

use super::{state_action_row, PolicyAlignedBuffer, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Contiguous run of one trajectory's transitions, addressed by insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) struct Span {
    pub(super) id: u64,
    pub(super) first_seq: u64,
    pub(super) len: usize,
    pub(super) starts_at_zero: bool,
    pub(super) complete: bool,
}

/// Fixed-capacity ring of transitions with FIFO eviction.
///
/// The buffer also indexes which trajectories are still fully retained so that
/// query selection can draw whole trajectories from it.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    pub(super) capacity: usize,
    pub(super) storage: Vec<Transition<T>>,
    /// Total transitions ever pushed; the next sequence number.
    pub(super) pushed: u64,
    pub(super) spans: VecDeque<Span>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
            spans: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    fn oldest_seq(&self) -> u64 {
        self.pushed - self.storage.len() as u64
    }

    fn at_seq(&self, seq: u64) -> &Transition<T> {
        &self.storage[(seq % self.capacity as u64) as usize]
    }

    /// Transition by age: index 0 is the oldest retained.
    pub fn get(&self, index: usize) -> Option<&Transition<T>> {
        (index < self.len()).then(|| self.at_seq(self.oldest_seq() + index as u64))
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> + '_ {
        (0..self.len()).map(move |i| self.at_seq(self.oldest_seq() + i as u64))
    }

    pub fn push(&mut self, transition: Transition<T>) {
        let seq = self.pushed;
        match self.spans.back_mut() {
            Some(span) if span.id == transition.trajectory_id && !span.complete => {
                span.len += 1;
                span.complete = transition.done;
            }
            _ => self.spans.push_back(Span {
                id: transition.trajectory_id,
                first_seq: seq,
                len: 1,
                starts_at_zero: transition.step_index == 0,
                complete: transition.done,
            }),
        }
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            let slot = (seq % self.capacity as u64) as usize;
            self.storage[slot] = transition;
        }
        self.pushed += 1;
        let oldest = self.oldest_seq();
        while self.spans.front().is_some_and(|s| s.first_seq < oldest) {
            self.spans.pop_front();
        }
    }

    /// Copies of the most recent fully retained trajectories (oldest first).
    ///
    /// `window` bounds how many of the newest trajectories are considered;
    /// `None` means the whole buffer. Trajectories shorter than `min_len` are skipped,
    /// and the in-progress trajectory is included only when `include_partial` is set.
    pub fn trajectories(&self, window: Option<usize>, min_len: usize, include_partial: bool) -> Vec<Trajectory<T>> {
        let eligible: Vec<&Span> = self
            .spans
            .iter()
            .filter(|s| s.starts_at_zero && (s.complete || include_partial))
            .collect();
        let skip = window.map_or(0, |w| eligible.len().saturating_sub(w));
        eligible[skip..]
            .iter()
            .filter(|s| s.len >= min_len)
            .map(|s| Trajectory {
                id: s.id,
                transitions: (0..s.len as u64).map(|k| self.at_seq(s.first_seq + k).clone()).collect(),
                complete: s.complete,
            })
            .collect()
    }

    pub fn relabel<F>(&mut self, mut reward: F)
    where
        F: FnMut(&[T], &[T]) -> T,
    {
        for t in &mut self.storage {
            t.predicted_reward = reward(&t.state, &t.action);
        }
    }

    /// Relabels in chunks: `reward` receives a matrix whose rows are `state ++ action`
    /// and returns one reward per row.
    pub fn relabel_batched<F>(&mut self, chunk: usize, mut reward: F)
    where
        F: FnMut(&Array2<T>) -> Vec<T>,
    {
        for block in self.storage.chunks_mut(chunk.max(1)) {
            let rows = state_action_matrix(block.iter());
            for (t, r) in block.iter_mut().zip(reward(&rows)) {
                t.predicted_reward = r;
            }
        }
    }
}

pub(crate) fn state_action_matrix<'a, T: Scalar + 'a>(transitions: impl Iterator<Item = &'a Transition<T>>) -> Array2<T> {
    let rows: Vec<Vec<T>> = transitions.map(|t| state_action_row(&t.state, &t.action)).collect();
    let width = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((rows.len(), width), rows.concat()).expect("uniform row width")
}

/// Stores `transition` in both the replay buffer and the policy-aligned buffer.
pub fn push_transition<T: Scalar>(replay: &mut ReplayBuffer<T>, pa: &mut PolicyAlignedBuffer<T>, transition: Transition<T>) {
    pa.push(transition.clone());
    replay.push(transition);
}

/// `batch_size` i.i.d. draws with replacement.
pub fn sample_uniform<'a, T: Scalar, R: Rng + ?Sized>(
    replay: &'a ReplayBuffer<T>,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition<T>>> {
    if replay.is_empty() {
        return Err(Error::EmptyBuffer { buffer: "replay buffer" });
    }
    let n = replay.len();
    Ok((0..batch_size).map(|_| &replay.storage[rng.random_range(0..n)]).collect())
}

/// Overwrites every stored `predicted_reward` with `reward(state, action)`.
pub fn relabel_all<T: Scalar, F>(replay: &mut ReplayBuffer<T>, reward: F)
where
    F: FnMut(&[T], &[T]) -> T,
{
    replay.relabel(reward);
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{trajectory, transition};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn filled(n: usize, capacity: usize) -> ReplayBuffer<f64> {
        let mut r = ReplayBuffer::new(capacity).unwrap();
        for k in 0..n {
            r.push(transition(0, k, false));
        }
        r
    }

    #[test]
    fn ring_evicts_oldest() {
        let r = filled(6, 5);
        assert_eq!(r.len(), 5);
        assert_eq!(r.get(0).unwrap().step_index, 1);
        assert_eq!(r.iter().map(|t| t.step_index).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn uniform_sampling_of_single_item_copies_it() {
        let r = filled(1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_uniform(&r, 7, &mut rng).unwrap();
        assert_eq!(batch.len(), 7);
        assert!(batch.iter().all(|t| t.step_index == 0));
    }

    #[test]
    fn uniform_sampling_is_deterministic_under_seed() {
        let r = filled(50, 100);
        let a: Vec<usize> = sample_uniform(&r, 32, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().iter().map(|t| t.step_index).collect();
        let b: Vec<usize> = sample_uniform(&r, 32, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().iter().map(|t| t.step_index).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_sampling_passes_chi_square() {
        // 99 dof; chi-square critical value at p = 0.01 is 134.64.
        let r = filled(100, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = vec![0usize; 100];
        let draws = 100_000;
        for t in sample_uniform(&r, draws, &mut rng).unwrap() {
            counts[t.step_index] += 1;
        }
        let e = draws as f64 / 100.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 134.64, "chi2 = {chi2}");
    }

    #[test]
    fn empty_buffer_sampling_is_an_error() {
        let r = ReplayBuffer::<f64>::new(4).unwrap();
        assert!(matches!(
            sample_uniform(&r, 1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::EmptyBuffer { .. })
        ));
    }

    #[test]
    fn trajectory_index_tracks_retention() {
        let mut r = ReplayBuffer::new(12).unwrap();
        for id in 0..3 {
            for t in trajectory(id, 5, true).transitions {
                r.push(t);
            }
        }
        // 15 pushed into 12 slots: trajectory 0 lost its first three steps.
        let ids: Vec<u64> = r.trajectories(None, 1, false).iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![1, 2]);
        let recent: Vec<u64> = r.trajectories(Some(1), 1, false).iter().map(|t| t.id).collect();
        assert_eq!(recent, vec![2]);
        assert_eq!(r.trajectories(None, 1, false)[1], trajectory(2, 5, true));
    }

    #[test]
    fn partial_trajectory_inclusion_is_optional() {
        let mut r = ReplayBuffer::new(100).unwrap();
        for t in trajectory(0, 4, true).transitions {
            r.push(t);
        }
        for t in trajectory(1, 6, false).transitions {
            r.push(t);
        }
        assert_eq!(r.trajectories(None, 1, false).len(), 1);
        assert_eq!(r.trajectories(None, 1, true).len(), 2);
        assert_eq!(r.trajectories(None, 5, true).len(), 1);
    }

    #[test]
    fn relabel_is_idempotent_and_preserves_ground_truth() {
        let mut r = filled(20, 16);
        let before: Vec<Transition<f64>> = r.iter().cloned().collect();
        let f = |s: &[f64], a: &[f64]| s[1] * 0.5 + a[0];
        relabel_all(&mut r, f);
        let once: Vec<Transition<f64>> = r.iter().cloned().collect();
        relabel_all(&mut r, f);
        let twice: Vec<Transition<f64>> = r.iter().cloned().collect();
        assert_eq!(once, twice);
        for (b, o) in before.iter().zip(&once) {
            assert_eq!(b.ground_truth_reward, o.ground_truth_reward);
            assert_eq!(b.state, o.state);
            assert_eq!(b.action, o.action);
            assert_eq!(o.predicted_reward, f(&o.state, &o.action));
        }
        relabel_all(&mut r, |_, _| 0.0);
        assert!(r.iter().all(|t| t.predicted_reward == 0.0));
    }

    #[test]
    fn batched_relabel_matches_pointwise() {
        let mut a = filled(37, 64);
        let mut b = a.clone();
        a.relabel(|s, act| s[0] - 2.0 * s[1] + act[1]);
        b.relabel_batched(8, |rows| rows.rows().into_iter().map(|r| r[0] - 2.0 * r[1] + r[3]).collect());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x == y));
    }
}
