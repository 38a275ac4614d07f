//! JSON checkpoint of an agent's networks and temperature, built from network snapshots.
//! Optimizer moments are not included; a restored agent starts with fresh Adam state.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{SacAgent, SacConfig};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Mlp, MlpSnapshot};
use crate::scalar::Scalar;

pub const SAC_FORMAT: &str = "prefrl.sac";
pub const SAC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacSnapshot {
    pub format: String,
    pub version: u32,
    pub config: SacConfig,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub log_temperature: f64,
    pub target_entropy: f64,
    pub critic_updates: u64,
    pub policy: MlpSnapshot,
    pub q1: MlpSnapshot,
    pub q2: MlpSnapshot,
    pub q1_target: MlpSnapshot,
    pub q2_target: MlpSnapshot,
}

impl<T: Scalar> SacAgent<T> {
    pub fn to_snapshot(&self) -> SacSnapshot {
        let low = &self.action_center - &self.action_half_range;
        let high = &self.action_center + &self.action_half_range;
        SacSnapshot {
            format: SAC_FORMAT.into(),
            version: SAC_FORMAT_VERSION,
            config: self.config.clone(),
            action_low: low.iter().map(|v| v.as_f64()).collect(),
            action_high: high.iter().map(|v| v.as_f64()).collect(),
            log_temperature: self.log_temperature.as_f64(),
            target_entropy: self.target_entropy.as_f64(),
            critic_updates: self.critic_updates,
            policy: self.policy.to_snapshot(),
            q1: self.q1.to_snapshot(),
            q2: self.q2.to_snapshot(),
            q1_target: self.q1_target.to_snapshot(),
            q2_target: self.q2_target.to_snapshot(),
        }
    }

    pub fn from_snapshot(snap: &SacSnapshot) -> Result<Self> {
        if snap.format != SAC_FORMAT || snap.version != SAC_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported agent snapshot {} v{}", snap.format, snap.version)));
        }
        snap.config.validate()?;
        let policy: Mlp<T> = Mlp::from_snapshot(&snap.policy)?;
        let q1: Mlp<T> = Mlp::from_snapshot(&snap.q1)?;
        let q2: Mlp<T> = Mlp::from_snapshot(&snap.q2)?;
        let q1_target: Mlp<T> = Mlp::from_snapshot(&snap.q1_target)?;
        let q2_target: Mlp<T> = Mlp::from_snapshot(&snap.q2_target)?;
        let a = snap.action_low.len();
        if snap.action_high.len() != a || policy.output_dim() != 2 * a {
            return Err(Error::Format("agent snapshot action dimensions disagree".into()));
        }
        let o = policy.input_dim();
        if q1.input_dim() != o + a || q2.input_dim() != o + a || q1_target.layer_sizes() != q1.layer_sizes() || q2_target.layer_sizes() != q2.layer_sizes() {
            return Err(Error::Format("agent snapshot critic shapes disagree".into()));
        }
        let low: Array1<T> = snap.action_low.iter().map(|&v| T::lit(v)).collect();
        let high: Array1<T> = snap.action_high.iter().map(|&v| T::lit(v)).collect();
        let two = T::lit(2.0);
        let cfg = &snap.config;
        Ok(Self {
            config: cfg.clone(),
            observation_dim: o,
            action_dim: a,
            action_center: (&low + &high) / two,
            action_half_range: (&high - &low) / two,
            target_entropy: T::lit(snap.target_entropy),
            policy_opt: AdamState::for_net(&policy, AdamConfig::with_learning_rate(cfg.actor_lr)),
            q1_opt: AdamState::for_net(&q1, AdamConfig::with_learning_rate(cfg.critic_lr)),
            q2_opt: AdamState::for_net(&q2, AdamConfig::with_learning_rate(cfg.critic_lr)),
            temperature_opt: AdamState::for_shapes([1], AdamConfig::with_learning_rate(cfg.temperature_lr)),
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_temperature: T::lit(snap.log_temperature),
            critic_updates: snap.critic_updates,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_snapshot())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_snapshot(&serde_json::from_str(text)?)
    }
}
