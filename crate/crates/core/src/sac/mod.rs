//! Soft actor-critic: tanh-squashed Gaussian policy, twin critics with slow target
//! copies, and a learned entropy temperature.
//!
//! The policy network maps a state to `2 * action_dim` outputs: the Gaussian means
//! followed by the raw log standard deviations. Sampling draws `u = mean + std * noise`,
//! squashes `t = tanh(u)` and rescales to the action box. Every update has a variant
//! taking explicit noise so tests can freeze the randomness.

mod snapshot;

pub use snapshot::{SacSnapshot, SAC_FORMAT, SAC_FORMAT_VERSION};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::buffers::Transition;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, ForwardCache, Gradients, Mlp};
use crate::scalar::Scalar;

/// Added inside the log of the squash Jacobian.
const SQUASH_EPS: f64 = 1e-6;
/// Emitted actions keep `|tanh(u)| <= 1 - ACTION_MARGIN` so they stay strictly inside the box.
const ACTION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub hidden_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub discount: f64,
    pub init_temperature: f64,
    pub learn_temperature: bool,
    /// Defaults to `-action_dim` when absent.
    pub target_entropy: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    pub target_ema: f64,
    /// Critic updates between soft target updates.
    pub target_update_period: usize,
    /// Critic updates between actor updates.
    pub actor_update_period: usize,
    pub batch_size: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 64],
            hidden_activation: Activation::Relu,
            discount: 0.99,
            init_temperature: 0.1,
            learn_temperature: true,
            target_entropy: None,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            temperature_lr: 1e-4,
            target_ema: 0.005,
            target_update_period: 2,
            actor_update_period: 1,
            batch_size: 256,
            log_std_min: -10.0,
            log_std_max: 2.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return bad("discount must lie in [0, 1)");
        }
        if !(self.init_temperature >= 0.0 && self.init_temperature.is_finite()) {
            return bad("initial temperature must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.target_ema) {
            return bad("target EMA must lie in [0, 1]");
        }
        if self.target_update_period == 0 || self.actor_update_period == 0 {
            return bad("update periods must be positive");
        }
        if self.batch_size == 0 {
            return bad("SAC batch size must be positive");
        }
        if !(self.log_std_min < self.log_std_max) {
            return bad("log-std range is empty");
        }
        for lr in [self.actor_lr, self.critic_lr, self.temperature_lr] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad("learning rates must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Column-stacked minibatch in the layout the networks consume.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    /// Zero where the transition ends in an absorbing state, one elsewhere.
    pub not_terminal: Array1<T>,
}

impl<T: Scalar> TransitionBatch<T> {
    /// Uses each transition's `predicted_reward`.
    pub fn from_transitions(transitions: &[&Transition<T>]) -> Result<Self> {
        let first = transitions.first().ok_or(Error::EmptyBuffer { buffer: "transition batch" })?;
        let (o, a) = (first.state.len(), first.action.len());
        let n = transitions.len();
        let mut batch = Self {
            states: Array2::zeros((n, o)),
            actions: Array2::zeros((n, a)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, o)),
            not_terminal: Array1::zeros(n),
        };
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != o || t.next_state.len() != o || t.action.len() != a {
                return Err(Error::dims("transition batch row", o + a, t.state.len() + t.action.len()));
            }
            batch.states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state[..]));
            batch.actions.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action[..]));
            batch.next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state[..]));
            batch.rewards[i] = t.predicted_reward;
            batch.not_terminal[i] = if t.terminal { T::zero() } else { T::one() };
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Reparameterized policy draw for a batch of states.
#[derive(Debug, Clone)]
struct PolicyDraw<T> {
    /// Whether the raw log-std was inside the clamp range (gradient passes).
    unclamped: Array2<bool>,
    std: Array2<T>,
    noise: Array2<T>,
    squashed: Array2<T>,
    actions: Array2<T>,
    log_probs: Array1<T>,
}

/// Loss, gradients and per-row log-probabilities from one actor evaluation.
#[derive(Debug, Clone)]
pub struct ActorEvaluation<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    pub log_probs: Array1<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats<T> {
    pub critic_loss: T,
    pub actor_loss: Option<T>,
    pub temperature: T,
}

#[derive(Debug, Clone)]
pub struct SacAgent<T> {
    config: SacConfig,
    observation_dim: usize,
    action_dim: usize,
    action_center: Array1<T>,
    action_half_range: Array1<T>,
    target_entropy: T,
    policy: Mlp<T>,
    q1: Mlp<T>,
    q2: Mlp<T>,
    q1_target: Mlp<T>,
    q2_target: Mlp<T>,
    log_temperature: T,
    policy_opt: AdamState<T>,
    q1_opt: AdamState<T>,
    q2_opt: AdamState<T>,
    temperature_opt: AdamState<T>,
    critic_updates: u64,
}

fn standard_normal<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.sample::<f64, _>(StandardNormal)))
}

impl<T: Scalar> SacAgent<T> {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec<T>, config: SacConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (o, a) = (spec.observation_dim, spec.action_dim);
        if spec.action_low.len() != a || spec.action_high.len() != a {
            return Err(Error::dims("action bounds", a, spec.action_low.len()));
        }
        if spec.action_low.iter().zip(&spec.action_high).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidConfig("action_low must be below action_high".into()));
        }
        let two = T::lit(2.0);
        let action_center = spec.action_low.iter().zip(&spec.action_high).map(|(&l, &h)| (l + h) / two).collect();
        let action_half_range = spec.action_low.iter().zip(&spec.action_high).map(|(&l, &h)| (h - l) / two).collect();

        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden_sizes);
            s.push(output);
            s
        };
        let act = config.hidden_activation;
        let policy = Mlp::new(&sizes(o, 2 * a), act, Activation::Identity, rng)?;
        let q1 = Mlp::new(&sizes(o + a, 1), act, Activation::Identity, rng)?;
        let q2 = Mlp::new(&sizes(o + a, 1), act, Activation::Identity, rng)?;
        let policy_opt = AdamState::for_net(&policy, AdamConfig::with_learning_rate(config.actor_lr));
        let q1_opt = AdamState::for_net(&q1, AdamConfig::with_learning_rate(config.critic_lr));
        let q2_opt = AdamState::for_net(&q2, AdamConfig::with_learning_rate(config.critic_lr));
        let temperature_opt = AdamState::for_shapes([1], AdamConfig::with_learning_rate(config.temperature_lr));
        Ok(Self {
            target_entropy: T::lit(config.target_entropy.unwrap_or(-(a as f64))),
            log_temperature: T::lit(config.init_temperature).ln(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            config,
            observation_dim: o,
            action_dim: a,
            action_center,
            action_half_range,
            policy,
            q1,
            q2,
            policy_opt,
            q1_opt,
            q2_opt,
            temperature_opt,
            critic_updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn observation_dim(&self) -> usize {
        self.observation_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn policy(&self) -> &Mlp<T> {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut Mlp<T> {
        &mut self.policy
    }

    pub fn critics(&self) -> (&Mlp<T>, &Mlp<T>) {
        (&self.q1, &self.q2)
    }

    pub fn critics_mut(&mut self) -> (&mut Mlp<T>, &mut Mlp<T>) {
        (&mut self.q1, &mut self.q2)
    }

    pub fn target_critics(&self) -> (&Mlp<T>, &Mlp<T>) {
        (&self.q1_target, &self.q2_target)
    }

    /// Copies the online critics into the targets.
    pub fn sync_targets(&mut self) {
        self.q1_target = self.q1.clone();
        self.q2_target = self.q2.clone();
    }

    pub fn temperature(&self) -> T {
        self.log_temperature.exp()
    }

    pub fn log_temperature(&self) -> T {
        self.log_temperature
    }

    pub fn set_temperature(&mut self, temperature: T) {
        self.log_temperature = temperature.ln();
    }

    pub fn target_entropy(&self) -> T {
        self.target_entropy
    }

    pub fn set_target_entropy(&mut self, value: T) {
        self.target_entropy = value;
    }

    pub fn critic_update_count(&self) -> u64 {
        self.critic_updates
    }

    fn split_policy_output(&self, out: ArrayView2<'_, T>) -> (Array2<T>, Array2<T>) {
        let a = self.action_dim;
        (out.slice(s![.., ..a]).to_owned(), out.slice(s![.., a..]).to_owned())
    }

    fn rescale(&self, squashed: &Array2<T>) -> Array2<T> {
        squashed * &self.action_half_range + &self.action_center
    }

    /// Gaussian means and clamped log-stds of the pre-squash distribution.
    pub fn policy_distribution(&self, states: ArrayView2<'_, T>) -> Result<(Array2<T>, Array2<T>)> {
        let out = self.policy.forward_batch(states)?;
        let (mean, raw) = self.split_policy_output(out.view());
        let (lo, hi) = (T::lit(self.config.log_std_min), T::lit(self.config.log_std_max));
        Ok((mean, raw.mapv(|l| l.max(lo).min(hi))))
    }

    fn draw(&self, policy_out: ArrayView2<'_, T>, noise: ArrayView2<'_, T>) -> Result<PolicyDraw<T>> {
        if noise.dim() != (policy_out.nrows(), self.action_dim) {
            return Err(Error::dims("policy noise", policy_out.nrows() * self.action_dim, noise.len()));
        }
        let (mean, raw) = self.split_policy_output(policy_out);
        let (lo, hi) = (T::lit(self.config.log_std_min), T::lit(self.config.log_std_max));
        let unclamped = raw.mapv(|l| l >= lo && l <= hi);
        let log_std = raw.mapv(|l| l.max(lo).min(hi));
        let std = log_std.mapv(T::exp);
        let pre = &mean + &(&std * &noise);
        let squashed = pre.mapv(T::tanh);
        let actions = self.rescale(&squashed);
        let log_probs = self.log_density(&log_std, &noise.to_owned(), &squashed);
        Ok(PolicyDraw {
            unclamped,
            std,
            noise: noise.to_owned(),
            squashed,
            actions,
            log_probs,
        })
    }

    /// Row-wise log-density of squashed actions given standardized noise and `t = tanh(u)`.
    fn log_density(&self, log_std: &Array2<T>, noise: &Array2<T>, squashed: &Array2<T>) -> Array1<T> {
        let half = T::lit(0.5);
        let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
        let eps = T::lit(SQUASH_EPS);
        let ln_half_range: T = self.action_half_range.iter().map(|h| h.ln()).sum();
        let mut out = Array1::zeros(noise.nrows());
        for i in 0..noise.nrows() {
            let mut lp = T::zero();
            for j in 0..self.action_dim {
                let e = noise[[i, j]];
                let t = squashed[[i, j]];
                lp += -half * e * e - log_std[[i, j]] - half_ln_2pi - (T::one() - t * t + eps).ln();
            }
            out[i] = lp - ln_half_range;
        }
        out
    }

    /// An action for `state`: `tanh(mean)` rescaled when deterministic, otherwise a
    /// reparameterized sample.
    pub fn act<R: Rng + ?Sized>(&self, state: &[T], deterministic: bool, rng: &mut R) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|_| Error::dims("policy input", self.observation_dim, state.len()))?;
        let (mean, log_std) = self.policy_distribution(x)?;
        let pre = if deterministic {
            mean
        } else {
            let noise = standard_normal::<T, _>(1, self.action_dim, rng);
            &mean + &(&log_std.mapv(T::exp) * &noise)
        };
        let limit = T::one() - T::lit(ACTION_MARGIN);
        let squashed = pre.mapv(|u| u.tanh().max(-limit).min(limit));
        Ok(self.rescale(&squashed).into_raw_vec_and_offset().0)
    }

    /// `ln pi(action | state)` under the squash-corrected Gaussian.
    pub fn log_likelihood(&self, state: &[T], action: &[T]) -> Result<T> {
        let s = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|_| Error::dims("policy input", self.observation_dim, state.len()))?;
        let a = ArrayView2::from_shape((1, action.len()), action)
            .map_err(|_| Error::dims("action", self.action_dim, action.len()))?;
        Ok(self.log_likelihood_batch(s, a)?[0])
    }

    /// Row-wise `ln pi(a | s)`. Actions are mapped back through the squash with
    /// `|tanh(u)|` clipped just below one.
    pub fn log_likelihood_batch(&self, states: ArrayView2<'_, T>, actions: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if actions.ncols() != self.action_dim || actions.nrows() != states.nrows() {
            return Err(Error::dims("action batch", self.action_dim, actions.ncols()));
        }
        let (mean, log_std) = self.policy_distribution(states)?;
        let limit = T::one() - T::lit(ACTION_MARGIN);
        let squashed = ((&actions.to_owned() - &self.action_center) / &self.action_half_range).mapv(|t| t.max(-limit).min(limit));
        let pre = squashed.mapv(|t| ((T::one() + t) / (T::one() - t)).ln() * T::lit(0.5));
        let noise = (&pre - &mean) / &log_std.mapv(T::exp);
        Ok(self.log_density(&log_std, &noise, &squashed))
    }

    fn critic_input(states: ArrayView2<'_, T>, actions: ArrayView2<'_, T>) -> Array2<T> {
        let x = concatenate(Axis(1), &[states, actions]).expect("matching row counts");
        if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        }
    }

    /// Soft Bellman targets `r + discount * not_terminal * (min target Q - temperature * ln pi)`
    /// with next actions drawn using `next_noise`.
    pub fn critic_targets(&self, batch: &TransitionBatch<T>, next_noise: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let gamma = T::lit(self.config.discount);
        if self.config.discount == 0.0 {
            return Ok(batch.rewards.clone());
        }
        let out = self.policy.forward_batch(batch.next_states.view())?;
        let draw = self.draw(out.view(), next_noise)?;
        let x = Self::critic_input(batch.next_states.view(), draw.actions.view());
        let t1 = self.q1_target.forward_batch(x.view())?;
        let t2 = self.q2_target.forward_batch(x.view())?;
        let alpha = self.temperature();
        let soft_value = Array1::from_shape_fn(batch.len(), |i| t1[[i, 0]].min(t2[[i, 0]]) - alpha * draw.log_probs[i]);
        Ok(&batch.rewards + &(&batch.not_terminal * &soft_value * gamma))
    }

    /// `mean((Q1 - y)^2) + mean((Q2 - y)^2)` for fixed targets.
    pub fn critic_loss(q1: &Mlp<T>, q2: &Mlp<T>, batch: &TransitionBatch<T>, targets: &Array1<T>) -> Result<T> {
        let x = Self::critic_input(batch.states.view(), batch.actions.view());
        let n = T::lit(batch.len() as f64);
        let mut loss = T::zero();
        for q in [q1, q2] {
            let out = q.forward_batch(x.view())?;
            loss += out.column(0).iter().zip(targets).map(|(&p, &y)| (p - y) * (p - y)).sum::<T>() / n;
        }
        Ok(loss)
    }

    /// Critic loss and the gradients for both online critics.
    pub fn critic_loss_and_grads(
        &self,
        batch: &TransitionBatch<T>,
        next_noise: ArrayView2<'_, T>,
    ) -> Result<(T, Gradients<T>, Gradients<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer { buffer: "transition batch" });
        }
        let targets = self.critic_targets(batch, next_noise)?;
        let x = Self::critic_input(batch.states.view(), batch.actions.view());
        let n = T::lit(batch.len() as f64);
        let two = T::lit(2.0);
        let mut loss = T::zero();
        let mut grads = Vec::with_capacity(2);
        for q in [&self.q1, &self.q2] {
            let cache = q.forward_cached(x.view())?;
            let out = cache.output();
            let mut d_out = Array2::zeros((batch.len(), 1));
            for i in 0..batch.len() {
                let r = out[[i, 0]] - targets[i];
                loss += r * r / n;
                d_out[[i, 0]] = two * r / n;
            }
            grads.push(q.backward_batch(&cache, d_out.view())?.0);
        }
        if !loss.is_finite() {
            return Err(Error::Divergence("critic loss is not finite".into()));
        }
        let g2 = grads.pop().expect("two critics");
        let g1 = grads.pop().expect("two critics");
        Ok((loss, g1, g2))
    }

    /// One gradient step on both critics; returns the pre-step loss.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &TransitionBatch<T>, rng: &mut R) -> Result<T> {
        let noise = standard_normal(batch.len(), self.action_dim, rng);
        self.critic_update_with_noise(batch, noise.view())
    }

    pub fn critic_update_with_noise(&mut self, batch: &TransitionBatch<T>, next_noise: ArrayView2<'_, T>) -> Result<T> {
        let (loss, g1, g2) = self.critic_loss_and_grads(batch, next_noise)?;
        self.q1_opt.step(&mut self.q1, &g1)?;
        self.q2_opt.step(&mut self.q2, &g2)?;
        self.critic_updates += 1;
        Ok(loss)
    }

    /// `mean(temperature * ln pi - min(Q1, Q2))` over reparameterized actions, its
    /// policy gradient, and the per-row log-probabilities.
    pub fn actor_loss_and_grads(&self, states: ArrayView2<'_, T>, noise: ArrayView2<'_, T>) -> Result<ActorEvaluation<T>> {
        let n = states.nrows();
        if n == 0 {
            return Err(Error::EmptyBuffer { buffer: "actor batch" });
        }
        let cache: ForwardCache<T> = self.policy.forward_cached(states)?;
        let draw = self.draw(cache.output(), noise)?;
        let x = Self::critic_input(states, draw.actions.view());
        let c1 = self.q1.forward_cached(x.view())?;
        let c2 = self.q2.forward_cached(x.view())?;
        let (o1, o2) = (c1.output(), c2.output());
        let alpha = self.temperature();
        let nt = T::lit(n as f64);

        let mut pick1 = Array2::zeros((n, 1));
        let mut pick2 = Array2::zeros((n, 1));
        let mut loss = T::zero();
        for i in 0..n {
            let (a, b) = (o1[[i, 0]], o2[[i, 0]]);
            if a <= b {
                pick1[[i, 0]] = T::one();
            } else {
                pick2[[i, 0]] = T::one();
            }
            loss += alpha * draw.log_probs[i] - a.min(b);
        }
        let loss = loss / nt;
        if !loss.is_finite() {
            return Err(Error::Divergence("actor loss is not finite".into()));
        }
        let dq = self.q1.input_gradient(&c1, pick1.view())? + self.q2.input_gradient(&c2, pick2.view())?;

        let a = self.action_dim;
        let o = self.observation_dim;
        let eps = T::lit(SQUASH_EPS);
        let two = T::lit(2.0);
        let mut d_out = Array2::zeros((n, 2 * a));
        for i in 0..n {
            for j in 0..a {
                let t = draw.squashed[[i, j]];
                let one_minus = T::one() - t * t;
                // d/du of -ln(1 - tanh(u)^2 + eps).
                let d_squash = two * t * one_minus / (one_minus + eps);
                let d_action_d_pre = self.action_half_range[j] * one_minus;
                let d_j_d_pre = alpha * d_squash - dq[[i, o + j]] * d_action_d_pre;
                d_out[[i, j]] = d_j_d_pre / nt;
                if draw.unclamped[[i, j]] {
                    let du_dl = draw.std[[i, j]] * draw.noise[[i, j]];
                    d_out[[i, a + j]] = (-alpha + d_j_d_pre * du_dl) / nt;
                }
            }
        }
        let (grads, _) = self.policy.backward_batch(&cache, d_out.view())?;
        Ok(ActorEvaluation {
            loss,
            grads,
            log_probs: draw.log_probs,
        })
    }

    /// Gradient of the temperature objective with respect to the log-temperature:
    /// `temperature * mean(-ln pi - target_entropy)`.
    pub fn temperature_gradient(&self, log_probs: &Array1<T>) -> T {
        let n = T::lit(log_probs.len().max(1) as f64);
        let mean = log_probs.iter().map(|&lp| -lp - self.target_entropy).sum::<T>() / n;
        self.temperature() * mean
    }

    /// One policy step and, when enabled, one temperature step; returns the pre-step actor loss.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, states: ArrayView2<'_, T>, rng: &mut R) -> Result<T> {
        let noise = standard_normal(states.nrows(), self.action_dim, rng);
        self.actor_update_with_noise(states, noise.view())
    }

    pub fn actor_update_with_noise(&mut self, states: ArrayView2<'_, T>, noise: ArrayView2<'_, T>) -> Result<T> {
        let eval = self.actor_loss_and_grads(states, noise)?;
        self.policy_opt.step(&mut self.policy, &eval.grads)?;
        if self.config.learn_temperature {
            let g = self.temperature_gradient(&eval.log_probs);
            if !g.is_finite() {
                return Err(Error::Divergence("temperature gradient is not finite".into()));
            }
            self.temperature_opt.step_scalar(&mut self.log_temperature, g)?;
        }
        Ok(eval.loss)
    }

    /// `target <- (1 - rate) * target + rate * online` for both critics.
    pub fn soft_target_update_with(&mut self, rate: T) -> Result<()> {
        self.q1_target.blend_from(&self.q1, rate)?;
        self.q2_target.blend_from(&self.q2, rate)
    }

    pub fn soft_target_update(&mut self) -> Result<()> {
        self.soft_target_update_with(T::lit(self.config.target_ema))
    }

    /// Critic step, then the actor/temperature and target updates their periods call for.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &TransitionBatch<T>, rng: &mut R) -> Result<UpdateStats<T>> {
        let critic_loss = self.critic_update(batch, rng)?;
        let count = self.critic_updates;
        let actor_loss = if count.is_multiple_of(self.config.actor_update_period as u64) {
            Some(self.actor_update(batch.states.view(), rng)?)
        } else {
            None
        };
        if count.is_multiple_of(self.config.target_update_period as u64) {
            self.soft_target_update()?;
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            temperature: self.temperature(),
        })
    }
}

#[cfg(test)]
mod tests;
