//! Small multilayer perceptrons, Adam, and finite-difference gradient checks.

mod adam;
pub mod gradcheck;
mod mlp;
mod snapshot;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, Mlp};
pub use snapshot::{MlpSnapshot, MLP_FORMAT, MLP_FORMAT_VERSION};
