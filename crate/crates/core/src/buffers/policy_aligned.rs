use std::collections::VecDeque;

use rand::Rng;

use super::{sample_uniform, ReplayBuffer, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The `capacity` most recently completed trajectories plus the one being collected.
#[derive(Debug, Clone)]
pub struct PolicyAlignedBuffer<T> {
    pub(super) capacity: usize,
    pub(super) complete: VecDeque<Trajectory<T>>,
    pub(super) current: Option<Trajectory<T>>,
    /// Whether the in-progress trajectory joins sampling once it has `partial_min_len` steps.
    pub(super) include_partial: bool,
    pub(super) partial_min_len: usize,
}

impl<T: Scalar> PolicyAlignedBuffer<T> {
    pub fn new(capacity: usize, include_partial: bool, partial_min_len: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("policy-aligned buffer size must be positive".into()));
        }
        Ok(Self {
            capacity,
            complete: VecDeque::with_capacity(capacity + 1),
            current: None,
            include_partial,
            partial_min_len: partial_min_len.max(1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of completed trajectories held.
    pub fn completed_len(&self) -> usize {
        self.complete.len()
    }

    pub fn completed(&self) -> impl Iterator<Item = &Trajectory<T>> + '_ {
        self.complete.iter()
    }

    pub fn in_progress(&self) -> Option<&Trajectory<T>> {
        self.current.as_ref()
    }

    fn partial_eligible(&self) -> Option<&Trajectory<T>> {
        self.current
            .as_ref()
            .filter(|c| self.include_partial && c.len() >= self.partial_min_len)
    }

    /// Completed trajectories (oldest first) followed by the eligible in-progress one.
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory<T>> + '_ {
        self.complete.iter().chain(self.partial_eligible())
    }

    /// Transitions available for hybrid sampling.
    pub fn transition_count(&self) -> usize {
        self.trajectories().map(Trajectory::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.transition_count() == 0
    }

    pub fn push(&mut self, transition: Transition<T>) {
        let stale = self
            .current
            .as_ref()
            .is_some_and(|c| c.id != transition.trajectory_id);
        if stale {
            // A new id without a preceding `done`: the old trajectory was abandoned.
            self.current = None;
        }
        let done = transition.done;
        let current = self
            .current
            .get_or_insert_with(|| Trajectory::new(transition.trajectory_id));
        current.transitions.push(transition);
        if done {
            let mut finished = self.current.take().expect("in-progress trajectory");
            finished.complete = true;
            self.complete.push_back(finished);
            while self.complete.len() > self.capacity {
                self.complete.pop_front();
            }
        }
    }

    /// Uniform draw over the union of transitions in the sampled trajectories.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch_size: usize, rng: &mut R) -> Result<Vec<&'a Transition<T>>> {
        let pools: Vec<&[Transition<T>]> = self.trajectories().map(|t| t.transitions.as_slice()).collect();
        let total: usize = pools.iter().map(|p| p.len()).sum();
        if total == 0 {
            return Err(Error::EmptyBuffer { buffer: "policy-aligned buffer" });
        }
        Ok((0..batch_size)
            .map(|_| {
                let mut k = rng.random_range(0..total);
                for pool in &pools {
                    if k < pool.len() {
                        return &pool[k];
                    }
                    k -= pool.len();
                }
                unreachable!("index within total")
            })
            .collect())
    }

    pub fn relabel<F>(&mut self, mut reward: F)
    where
        F: FnMut(&[T], &[T]) -> T,
    {
        for traj in self.complete.iter_mut().chain(self.current.as_mut()) {
            traj.relabel_with(&mut reward);
        }
    }
}

/// Which buffer a hybrid batch's draws came from.
#[derive(Debug, Clone)]
pub struct HybridBatch<'a, T> {
    pub transitions: Vec<&'a Transition<T>>,
    /// Number of leading entries drawn from the policy-aligned buffer.
    pub from_pa: usize,
    /// The policy-aligned buffer was empty and the whole batch came from replay.
    pub fell_back: bool,
}

/// Policy-aligned share of a hybrid batch: `ceil(ratio * batch_size)`.
pub fn pa_share(batch_size: usize, ratio: f64) -> usize {
    // The small slack keeps exact products such as 0.5 * 1024 from rounding up.
    ((ratio * batch_size as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Mixes `pa_share(batch_size, ratio)` draws from `pa` with the rest from `replay`.
pub fn sample_hybrid<'a, T: Scalar, R: Rng + ?Sized>(
    replay: &'a ReplayBuffer<T>,
    pa: &'a PolicyAlignedBuffer<T>,
    batch_size: usize,
    ratio: f64,
    rng: &mut R,
) -> Result<HybridBatch<'a, T>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!("hybrid ratio {ratio} outside [0, 1]")));
    }
    if pa.is_empty() {
        return Ok(HybridBatch {
            transitions: sample_uniform(replay, batch_size, rng)?,
            from_pa: 0,
            fell_back: true,
        });
    }
    let share = pa_share(batch_size, ratio).min(batch_size);
    let mut transitions = pa.sample(share, rng)?;
    if share < batch_size {
        transitions.extend(sample_uniform(replay, batch_size - share, rng)?);
    }
    Ok(HybridBatch {
        transitions,
        from_pa: share,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::trajectory;
    use super::super::push_transition;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pa_with(n: usize, ids: std::ops::Range<u64>, len: usize) -> PolicyAlignedBuffer<f64> {
        let mut pa = PolicyAlignedBuffer::new(n, true, len).unwrap();
        for id in ids {
            for t in trajectory(id, len, true).transitions {
                pa.push(t);
            }
        }
        pa
    }

    #[test]
    fn fifo_keeps_last_n_in_order() {
        let pa = pa_with(3, 0..4, 5);
        let ids: Vec<u64> = pa.completed().map(|t| t.id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn done_increments_completed_count() {
        let mut pa = PolicyAlignedBuffer::new(5, true, 1).unwrap();
        let traj = trajectory(0, 4, true);
        for t in &traj.transitions[..3] {
            pa.push(t.clone());
        }
        assert_eq!(pa.completed_len(), 0);
        pa.push(traj.transitions[3].clone());
        assert_eq!(pa.completed_len(), 1);
        assert!(pa.in_progress().is_none());
    }

    #[test]
    fn partial_trajectory_gated_by_length_and_flag() {
        for include in [false, true] {
            let mut pa = PolicyAlignedBuffer::new(5, include, 3).unwrap();
            let traj = trajectory(7, 6, false);
            pa.push(traj.transitions[0].clone());
            pa.push(traj.transitions[1].clone());
            assert_eq!(pa.trajectories().count(), 0);
            pa.push(traj.transitions[2].clone());
            assert_eq!(pa.trajectories().count(), usize::from(include));
        }
    }

    #[test]
    fn hybrid_split_is_exact() {
        let mut replay = ReplayBuffer::new(1000).unwrap();
        let mut pa = PolicyAlignedBuffer::new(2, true, 5).unwrap();
        for id in 0..20 {
            for t in trajectory(id, 5, true).transitions {
                push_transition(&mut replay, &mut pa, t);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_hybrid(&replay, &pa, 1024, 0.5, &mut rng).unwrap();
        assert_eq!(batch.transitions.len(), 1024);
        assert_eq!(batch.from_pa, 512);
        assert!(!batch.fell_back);
        assert!(batch.transitions[..512].iter().all(|t| t.trajectory_id >= 18));

        assert_eq!(sample_hybrid(&replay, &pa, 7, 0.5, &mut rng).unwrap().from_pa, 4);
        let all_pa = sample_hybrid(&replay, &pa, 64, 1.0, &mut rng).unwrap();
        assert_eq!(all_pa.from_pa, 64);
        assert!(all_pa.transitions.iter().all(|t| t.trajectory_id >= 18));
        assert_eq!(sample_hybrid(&replay, &pa, 64, 0.0, &mut rng).unwrap().from_pa, 0);
        assert!(sample_hybrid(&replay, &pa, 64, 1.5, &mut rng).is_err());
    }

    #[test]
    fn zero_ratio_matches_uniform_stream() {
        let mut replay = ReplayBuffer::new(100).unwrap();
        let mut pa = PolicyAlignedBuffer::new(2, true, 5).unwrap();
        for t in trajectory(0, 30, true).transitions {
            push_transition(&mut replay, &mut pa, t);
        }
        let h: Vec<usize> = sample_hybrid(&replay, &pa, 50, 0.0, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap()
            .transitions
            .iter()
            .map(|t| t.step_index)
            .collect();
        let u: Vec<usize> = sample_uniform(&replay, 50, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap()
            .iter()
            .map(|t| t.step_index)
            .collect();
        assert_eq!(h, u);
    }

    #[test]
    fn empty_pa_falls_back() {
        let mut replay = ReplayBuffer::new(10).unwrap();
        for t in trajectory(0, 3, false).transitions {
            replay.push(t);
        }
        let pa = PolicyAlignedBuffer::<f64>::new(2, false, 5).unwrap();
        let batch = sample_hybrid(&replay, &pa, 8, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(batch.fell_back);
        assert_eq!(batch.from_pa, 0);
        assert_eq!(batch.transitions.len(), 8);
    }

    #[test]
    fn pa_sampling_covers_union_uniformly() {
        // Trajectories of lengths 2 and 6: each of the 8 transitions should appear ~1/8 of the time.
        let mut pa = PolicyAlignedBuffer::new(4, false, 1).unwrap();
        for (id, len) in [(0, 2), (1, 6)] {
            for t in trajectory(id, len, true).transitions {
                pa.push(t);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 8];
        let draws = 80_000;
        for t in pa.sample(draws, &mut rng).unwrap() {
            counts[t.trajectory_id as usize * 2 + t.step_index] += 1;
        }
        let e = draws as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 7 dof, p = 0.01.
        assert!(chi2 < 18.48, "chi2 = {chi2}");
    }
}
