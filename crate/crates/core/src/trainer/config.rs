//! Flat key-value run configuration, read from TOML with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::PointNavConfig;
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::query::QueryScheme;
use crate::reward::{AugmentMode, AugmentationConfig, RewardConfig};
use crate::sac::SacConfig;

/// Environment variable naming the default config file for the command-line tool.
pub const CONFIG_ENV_VAR: &str = "PREFRL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Uniform,
    Disagreement,
    PolicyAligned,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Uniform => "uniform",
            SchemeKind::Disagreement => "disagreement",
            SchemeKind::PolicyAligned => "policy_aligned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Scripted,
    Human,
}

/// Which reward the agent is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    Learned,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub nav_low: f64,
    pub nav_high: f64,
    pub nav_start: [f64; 2],
    pub nav_goal: [f64; 2],
    pub nav_goal_radius: f64,
    pub nav_max_episode_steps: usize,
    pub nav_terminal_on_goal: bool,

    pub scheme: SchemeKind,
    pub candidate_factor: usize,
    /// The first session selects uniformly whatever the scheme.
    pub first_session_uniform: bool,
    pub total_feedback: usize,
    /// Environment steps between feedback sessions.
    pub feedback_frequency: u64,
    pub queries_per_session: usize,
    /// No session starts after this environment step.
    pub last_feedback_step: u64,
    pub segment_length: usize,
    /// Recent complete replay trajectories the uniform and disagreement schemes draw from.
    pub query_window: usize,
    pub pa_size: usize,
    pub pa_include_partial: bool,
    pub hybrid_ratio: f64,
    pub hybrid_replay: bool,
    /// Pairs per side of the log-likelihood diagnostic taken at every session.
    pub diagnostic_pairs: usize,

    pub ensemble_size: usize,
    pub reward_hidden: Vec<usize>,
    pub reward_activation: Activation,
    pub reward_bounded_output: bool,
    pub reward_lr: f64,
    pub reward_epochs: usize,
    pub reward_batch_size: usize,
    pub aug_ratio: usize,
    pub aug_min_len: usize,
    pub aug_max_len: usize,
    pub augment_mode: AugmentMode,

    pub sac_hidden: Vec<usize>,
    pub sac_activation: Activation,
    pub sac_batch_size: usize,
    pub discount: f64,
    pub init_temperature: f64,
    pub learn_temperature: bool,
    pub target_entropy: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    pub target_ema: f64,
    pub target_update_period: usize,
    pub actor_update_period: usize,

    pub total_steps: u64,
    /// Uniform-random actions before the first session and the first agent update.
    pub warmup_steps: u64,
    pub replay_capacity: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Stop once an evaluation's mean return reaches this value.
    pub early_stop_return: Option<f64>,

    pub seed: u64,
    pub oracle: OracleKind,
    pub reward_source: RewardSource,
    pub precision: Precision,

    pub metrics_path: Option<PathBuf>,
    pub sessions_path: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub label_address: String,
    pub label_static_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nav = PointNavConfig::default();
        let sac = SacConfig::default();
        let reward = RewardConfig::default();
        Self {
            env: "point_nav_2d".into(),
            nav_low: nav.low,
            nav_high: nav.high,
            nav_start: nav.start,
            nav_goal: nav.goal,
            nav_goal_radius: nav.goal_radius,
            nav_max_episode_steps: nav.max_episode_steps,
            nav_terminal_on_goal: nav.terminal_on_goal,

            scheme: SchemeKind::PolicyAligned,
            candidate_factor: 10,
            first_session_uniform: true,
            total_feedback: 8,
            feedback_frequency: 250,
            queries_per_session: 1,
            last_feedback_step: 5000,
            segment_length: 5,
            query_window: 100,
            pa_size: 10,
            pa_include_partial: false,
            hybrid_ratio: 0.5,
            hybrid_replay: true,
            diagnostic_pairs: 10,

            ensemble_size: 3,
            reward_hidden: reward.hidden_sizes,
            reward_activation: reward.hidden_activation,
            reward_bounded_output: reward.bounded_output,
            reward_lr: 1e-3,
            reward_epochs: 200,
            reward_batch_size: reward.batch_size,
            aug_ratio: reward.augmentation.ratio,
            aug_min_len: reward.augmentation.min_snippet_len,
            aug_max_len: reward.augmentation.max_snippet_len,
            augment_mode: reward.augment_mode,

            sac_hidden: sac.hidden_sizes,
            sac_activation: sac.hidden_activation,
            sac_batch_size: sac.batch_size,
            discount: sac.discount,
            init_temperature: sac.init_temperature,
            learn_temperature: sac.learn_temperature,
            target_entropy: sac.target_entropy,
            actor_lr: sac.actor_lr,
            critic_lr: sac.critic_lr,
            temperature_lr: sac.temperature_lr,
            target_ema: sac.target_ema,
            target_update_period: sac.target_update_period,
            actor_update_period: sac.actor_update_period,

            total_steps: 6000,
            warmup_steps: 1000,
            replay_capacity: 1_000_000,
            eval_interval: 1000,
            eval_episodes: 10,
            early_stop_return: None,

            seed: 0,
            oracle: OracleKind::Scripted,
            reward_source: RewardSource::Learned,
            precision: Precision::F32,

            metrics_path: None,
            sessions_path: None,
            checkpoint_dir: None,
            label_address: "127.0.0.1:8787".into(),
            label_static_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Applies `key=value` overrides. Values are parsed as TOML; anything that does
    /// not parse is taken as a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{item}` is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn query_scheme(&self) -> QueryScheme {
        match self.scheme {
            SchemeKind::Uniform => QueryScheme::Uniform,
            SchemeKind::Disagreement => QueryScheme::Disagreement {
                candidate_factor: self.candidate_factor,
            },
            SchemeKind::PolicyAligned => QueryScheme::PolicyAligned,
        }
    }

    pub fn nav_config(&self) -> PointNavConfig {
        PointNavConfig {
            low: self.nav_low,
            high: self.nav_high,
            start: self.nav_start,
            goal: self.nav_goal,
            goal_radius: self.nav_goal_radius,
            max_episode_steps: self.nav_max_episode_steps,
            terminal_on_goal: self.nav_terminal_on_goal,
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            ensemble_size: self.ensemble_size,
            hidden_sizes: self.reward_hidden.clone(),
            hidden_activation: self.reward_activation,
            bounded_output: self.reward_bounded_output,
            learning_rate: self.reward_lr,
            epochs: self.reward_epochs,
            batch_size: self.reward_batch_size,
            augmentation: AugmentationConfig {
                ratio: self.aug_ratio,
                min_snippet_len: self.aug_min_len,
                max_snippet_len: self.aug_max_len,
            },
            augment_mode: self.augment_mode,
        }
    }

    pub fn sac_config(&self) -> SacConfig {
        SacConfig {
            hidden_sizes: self.sac_hidden.clone(),
            hidden_activation: self.sac_activation,
            discount: self.discount,
            init_temperature: self.init_temperature,
            learn_temperature: self.learn_temperature,
            target_entropy: self.target_entropy,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            temperature_lr: self.temperature_lr,
            target_ema: self.target_ema,
            target_update_period: self.target_update_period,
            actor_update_period: self.actor_update_period,
            batch_size: self.sac_batch_size,
            ..SacConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.env != "point_nav_2d" {
            return Err(Error::InvalidConfig(format!("unknown environment `{}`", self.env)));
        }
        if self.feedback_frequency == 0 {
            return bad("feedback_frequency must be positive");
        }
        if self.queries_per_session == 0 && self.total_feedback > 0 {
            return bad("queries_per_session must be positive when feedback is requested");
        }
        if self.segment_length == 0 {
            return bad("segment_length must be positive");
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return bad("evaluation needs a positive interval and episode count");
        }
        if self.pa_size == 0 || self.query_window == 0 || self.replay_capacity == 0 {
            return bad("buffer sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.hybrid_ratio) {
            return bad("hybrid_ratio must lie in [0, 1]");
        }
        if self.scheme == SchemeKind::Disagreement && self.ensemble_size < 2 {
            return bad("disagreement selection needs ensemble_size >= 2");
        }
        if self.candidate_factor == 0 {
            return bad("candidate_factor must be positive");
        }
        if self.sac_batch_size == 0 {
            return bad("sac_batch_size must be positive");
        }
        let reward = self.reward_config();
        reward.validate()?;
        reward.augmentation.validate(self.segment_length)?;
        self.sac_config().validate()?;
        Ok(())
    }
}
