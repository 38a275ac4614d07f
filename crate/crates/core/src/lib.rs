//! Preference-based reinforcement learning with policy-aligned query selection.
//!
//! Every numeric component is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file fix the precision.

pub mod buffers;
pub mod envs;
pub mod error;
pub mod gradients;
pub mod nn;
pub mod query;
pub mod reward;
pub mod sac;
pub mod scalar;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp32 = nn::Mlp<f32>;
pub type Mlp64 = nn::Mlp<f64>;
pub type SacAgent32 = sac::SacAgent<f32>;
pub type SacAgent64 = sac::SacAgent<f64>;
pub type RewardEnsemble32 = reward::RewardEnsemble<f32>;
pub type RewardEnsemble64 = reward::RewardEnsemble<f64>;
pub type ReplayBuffer32 = buffers::ReplayBuffer<f32>;
pub type ReplayBuffer64 = buffers::ReplayBuffer<f64>;
pub type PointNav2D32 = envs::PointNav2D<f32>;
pub type PointNav2D64 = envs::PointNav2D<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
