//! Finite-difference checks of every trained gradient path on random draws.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::buffers::{PreferenceRecord, Segment};
use crate::envs::EnvSpec;
use crate::error::Result;
use crate::nn::gradcheck::check_flat;
use crate::nn::{Activation, GradCheckReport, Mlp};
use crate::reward::{reward_loss, reward_loss_and_grads};
use crate::sac::{SacAgent, SacConfig, TransitionBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientPath {
    CriticLoss,
    ActorLoss,
    RewardCrossEntropy,
}

impl GradientPath {
    pub const ALL: [GradientPath; 3] = [GradientPath::CriticLoss, GradientPath::ActorLoss, GradientPath::RewardCrossEntropy];

    pub fn name(self) -> &'static str {
        match self {
            GradientPath::CriticLoss => "critic_loss",
            GradientPath::ActorLoss => "actor_loss",
            GradientPath::RewardCrossEntropy => "reward_cross_entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientSuiteConfig {
    pub draws: usize,
    pub tolerance: f64,
    pub step: f64,
    pub seed: u64,
    pub hidden_sizes: Vec<usize>,
    pub batch_size: usize,
    pub segment_length: usize,
}

impl Default for GradientSuiteConfig {
    fn default() -> Self {
        Self {
            draws: 10,
            tolerance: 1e-3,
            step: 1e-5,
            seed: 0,
            hidden_sizes: vec![16, 16],
            batch_size: 8,
            segment_length: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub path: GradientPath,
    pub draws: Vec<GradCheckReport>,
}

impl PathReport {
    pub fn passed(&self) -> bool {
        self.draws.iter().all(|r| r.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.draws.iter().map(|r| r.max_relative_error).fold(0.0, f64::max)
    }
}

fn nav_spec() -> EnvSpec<f64> {
    EnvSpec {
        observation_dim: 2,
        action_dim: 2,
        action_low: vec![-1.0; 2],
        action_high: vec![1.0; 2],
        max_episode_steps: 50,
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, low: f64, high: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(low..high))
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn agent(config: &GradientSuiteConfig, rng: &mut ChaCha8Rng) -> Result<SacAgent<f64>> {
    let sac = SacConfig {
        hidden_sizes: config.hidden_sizes.clone(),
        // Central differences are only meaningful away from ReLU kinks.
        hidden_activation: Activation::Tanh,
        ..SacConfig::default()
    };
    SacAgent::new(&nav_spec(), sac, rng)
}

fn critic_draw(config: &GradientSuiteConfig, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let a = agent(config, rng)?;
    let n = config.batch_size;
    let batch = TransitionBatch {
        states: uniform(rng, n, 2, 0.0, 10.0),
        actions: uniform(rng, n, 2, -1.0, 1.0),
        rewards: Array1::from_shape_fn(n, |_| rng.random_range(-15.0..0.0)),
        next_states: uniform(rng, n, 2, 0.0, 10.0),
        not_terminal: Array1::from_shape_fn(n, |i| if i % 4 == 3 { 0.0 } else { 1.0 }),
    };
    let noise = normal(rng, n, 2);
    let (_, g1, g2) = a.critic_loss_and_grads(&batch, noise.view())?;
    let targets = a.critic_targets(&batch, noise.view())?;
    let (q1, q2) = a.critics();
    let split = q1.num_params();
    let params: Vec<f64> = q1.flat_params().into_iter().chain(q2.flat_params()).collect();
    let analytic: Vec<f64> = g1.flat().into_iter().chain(g2.flat()).collect();
    let (mut p1, mut p2) = (q1.clone(), q2.clone());
    Ok(check_flat(
        &params,
        &analytic,
        |p| {
            p1.set_flat_params(&p[..split]).expect("critic shape");
            p2.set_flat_params(&p[split..]).expect("critic shape");
            SacAgent::critic_loss(&p1, &p2, &batch, &targets).expect("critic loss")
        },
        config.step,
        config.tolerance,
    ))
}

fn actor_draw(config: &GradientSuiteConfig, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let a = agent(config, rng)?;
    let states = uniform(rng, config.batch_size, 2, 0.0, 10.0);
    let noise = normal(rng, config.batch_size, 2);
    let eval = a.actor_loss_and_grads(states.view(), noise.view())?;
    let mut probe = a.clone();
    Ok(check_flat(
        &a.policy().flat_params(),
        &eval.grads.flat(),
        |p| {
            probe.policy_mut().set_flat_params(p).expect("policy shape");
            probe.actor_loss_and_grads(states.view(), noise.view()).expect("actor loss").loss
        },
        config.step,
        config.tolerance,
    ))
}

fn random_segment(rng: &mut ChaCha8Rng, id: u64, len: usize) -> Segment<f64> {
    let states = (0..len).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
    let actions = (0..len).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    Segment::new(id, 0, states, actions, vec![0.0; len])
}

fn reward_draw(config: &GradientSuiteConfig, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let sizes: Vec<usize> = std::iter::once(4).chain(config.hidden_sizes.iter().copied()).chain([1]).collect();
    let net = Mlp::<f64>::new(&sizes, Activation::Tanh, Activation::Identity, rng)?;
    let records = (0..config.batch_size)
        .map(|k| {
            let a = random_segment(rng, 2 * k as u64, config.segment_length);
            let b = random_segment(rng, 2 * k as u64 + 1, config.segment_length);
            PreferenceRecord::new(a, b, rng.random_range(0..=1u8))
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, grads) = reward_loss_and_grads(&net, &records)?;
    Ok(crate::nn::finite_diff_check(
        &net,
        &grads,
        |n| reward_loss(n, &records).expect("reward loss"),
        config.step,
        config.tolerance,
    ))
}

/// Runs `config.draws` independent checks per path, each draw with fresh networks and data.
pub fn run_gradient_suite(config: &GradientSuiteConfig) -> Result<Vec<PathReport>> {
    GradientPath::ALL
        .iter()
        .enumerate()
        .map(|(k, &path)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64 + 1);
            let draws = (0..config.draws)
                .map(|_| match path {
                    GradientPath::CriticLoss => critic_draw(config, &mut rng),
                    GradientPath::ActorLoss => actor_draw(config, &mut rng),
                    GradientPath::RewardCrossEntropy => reward_draw(config, &mut rng),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PathReport { path, draws })
        })
        .collect()
}
