use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{augment, predict_preference, reward_loss, reward_loss_and_grads, AugmentMode, AugmentationConfig, RewardModel};
use crate::buffers::{PreferenceBuffer, PreferenceRecord, Segment};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Mlp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub ensemble_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    /// Squash each per-step reward into `(-1, 1)` with a tanh output layer.
    pub bounded_output: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Augmented records per gradient step.
    pub batch_size: usize,
    pub augmentation: AugmentationConfig,
    pub augment_mode: AugmentMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 1,
            hidden_sizes: vec![64, 64],
            hidden_activation: Activation::Tanh,
            bounded_output: false,
            learning_rate: 3e-4,
            epochs: 50,
            batch_size: 128,
            augmentation: AugmentationConfig {
                ratio: 20,
                min_snippet_len: 3,
                max_snippet_len: 4,
            },
            augment_mode: AugmentMode::PerBatch,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("reward ensemble needs at least one member".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("reward batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("reward learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Parent records per minibatch, so that one minibatch holds about `batch_size` crops.
    pub fn records_per_step(&self) -> usize {
        (self.batch_size / self.augmentation.ratio.max(1)).max(1)
    }
}

/// Independently initialized reward networks with their optimizer states.
#[derive(Debug, Clone)]
pub struct RewardEnsemble<T> {
    members: Vec<Mlp<T>>,
    optimizers: Vec<AdamState<T>>,
}

impl<T: Scalar> RewardEnsemble<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, config: &RewardConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![input_dim];
        sizes.extend(&config.hidden_sizes);
        sizes.push(1);
        let output = if config.bounded_output { Activation::Tanh } else { Activation::Identity };
        let members = (0..config.ensemble_size)
            .map(|_| Mlp::new(&sizes, config.hidden_activation, output, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, AdamConfig::with_learning_rate(config.learning_rate))
    }

    pub fn from_members(members: Vec<Mlp<T>>, adam: AdamConfig) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidConfig("reward ensemble needs at least one member".into()));
        };
        let (input, output) = (first.input_dim(), first.output_dim());
        if output != 1 {
            return Err(Error::dims("reward member output", 1, output));
        }
        if let Some(bad) = members.iter().find(|m| m.input_dim() != input || m.output_dim() != 1) {
            return Err(Error::dims("reward member input", input, bad.input_dim()));
        }
        let optimizers = members.iter().map(|m| AdamState::for_net(m, adam)).collect();
        Ok(Self { members, optimizers })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Mlp<T>] {
        &self.members
    }

    pub fn optimizers(&self) -> &[AdamState<T>] {
        &self.optimizers
    }

    /// Mean member output for a single `(state, action)`.
    pub fn mean_reward(&self, state: &[T], action: &[T]) -> Result<T> {
        self.reward(state, action)
    }

    /// Population variance across members of the probability that `segment_1` is preferred.
    pub fn disagreement(&self, segment_0: &Segment<T>, segment_1: &Segment<T>) -> Result<T> {
        if self.members.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "disagreement needs at least two reward members, have {}",
                self.members.len()
            )));
        }
        let probs = self
            .members
            .iter()
            .map(|m| predict_preference(m, segment_0, segment_1))
            .collect::<Result<Vec<T>>>()?;
        // Shifted by the first member so that identical predictions give exactly zero.
        let n = T::lit(probs.len() as f64);
        let shift = probs[0];
        let mean_dev = probs.iter().map(|&p| p - shift).sum::<T>() / n;
        let mean_sq = probs.iter().map(|&p| (p - shift) * (p - shift)).sum::<T>() / n;
        Ok((mean_sq - mean_dev * mean_dev).max(T::zero()))
    }

    /// Trains every member on the preference buffer; see [`train_reward`].
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        prefs: &PreferenceBuffer<T>,
        config: &RewardConfig,
        rng: &mut R,
    ) -> Result<Vec<T>> {
        train_reward(self, prefs, config, rng)
    }
}

impl<T: Scalar> RewardModel<T> for RewardEnsemble<T> {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn rewards(&self, rows: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let mut sum = self.members[0].rewards(rows)?;
        for m in &self.members[1..] {
            sum += &m.rewards(rows)?;
        }
        Ok(sum / T::lit(self.members.len() as f64))
    }
}

/// Trains each member for `config.epochs` passes over `prefs`.
///
/// Every member gets its own seed drawn from `rng`, so members differ only by
/// initialization, shuffling and crop draws. Each pass visits the records in a
/// shuffled order, `records_per_step` parents at a time, and expands every parent
/// into `augmentation.ratio` crops. Returns each member's mean loss on the
/// uncropped buffer after training.
pub fn train_reward<T: Scalar, R: Rng + ?Sized>(
    ensemble: &mut RewardEnsemble<T>,
    prefs: &PreferenceBuffer<T>,
    config: &RewardConfig,
    rng: &mut R,
) -> Result<Vec<T>> {
    if prefs.is_empty() {
        return Err(Error::EmptyBuffer { buffer: "preference buffer" });
    }
    config.validate()?;
    let records = prefs.records();
    let seeds: Vec<u64> = (0..ensemble.len()).map(|_| rng.random()).collect();
    let chunk = config.records_per_step();
    let mut final_losses = Vec::with_capacity(ensemble.len());

    for ((net, adam), seed) in ensemble.members.iter_mut().zip(&mut ensemble.optimizers).zip(seeds) {
        let mut member_rng = ChaCha8Rng::seed_from_u64(seed);
        let materialized: Option<Vec<Vec<PreferenceRecord<T>>>> = match config.augment_mode {
            AugmentMode::PerSession if config.epochs > 0 => Some(
                records
                    .iter()
                    .map(|r| augment(r, &config.augmentation, &mut member_rng))
                    .collect::<Result<_>>()?,
            ),
            _ => None,
        };
        let mut order: Vec<usize> = (0..records.len()).collect();
        for _ in 0..config.epochs {
            order.shuffle(&mut member_rng);
            for idx in order.chunks(chunk) {
                let mut batch = Vec::with_capacity(idx.len() * config.augmentation.ratio);
                for &i in idx {
                    match &materialized {
                        Some(m) => batch.extend(m[i].iter().cloned()),
                        None => batch.extend(augment(&records[i], &config.augmentation, &mut member_rng)?),
                    }
                }
                let (_, grads) = reward_loss_and_grads(net, &batch)?;
                adam.step(net, &grads)?;
            }
        }
        let loss = reward_loss(&*net, records)?;
        if !loss.is_finite() {
            return Err(Error::Divergence("reward training produced a non-finite loss".into()));
        }
        final_losses.push(loss);
    }
    Ok(final_losses)
}
