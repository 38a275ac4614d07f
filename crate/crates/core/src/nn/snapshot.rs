//! Versioned JSON snapshot of a network: layer-size header plus row-major parameters.

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MLP_FORMAT: &str = "prefrl.mlp";
pub const MLP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Per layer: weights (row-major, `out x in`) followed by biases.
    pub params: Vec<f64>,
}

impl<T: Scalar> Mlp<T> {
    pub fn to_snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            format: MLP_FORMAT.to_string(),
            version: MLP_FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            hidden_activation: self.hidden_activation(),
            output_activation: self.output_activation(),
            params: self.flat_params().into_iter().map(Scalar::as_f64).collect(),
        }
    }

    pub fn from_snapshot(snapshot: &MlpSnapshot) -> Result<Self> {
        if snapshot.format != MLP_FORMAT {
            return Err(Error::Format(format!("unexpected format tag {:?}", snapshot.format)));
        }
        if snapshot.version != MLP_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", snapshot.version)));
        }
        let mut net = Mlp::zeros(
            &snapshot.layer_sizes,
            snapshot.hidden_activation,
            snapshot.output_activation,
        )?;
        if snapshot.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("snapshot holds non-finite parameters".into()));
        }
        let params: Vec<T> = snapshot.params.iter().map(|&v| T::lit(v)).collect();
        net.set_flat_params(&params)?;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_snapshot())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_snapshot(&serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn json_round_trip_is_exact_for_f64(seed in any::<u64>(), hidden in 1usize..9) {
            let net = Mlp::<f64>::new(&[3, hidden, 2], Activation::Relu, Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let back = Mlp::<f64>::from_json(&net.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn rejects_wrong_version_and_length() {
        let net = Mlp::<f32>::zeros(&[2, 2], Activation::Relu, Activation::Identity).unwrap();
        let mut snap = net.to_snapshot();
        snap.version = 99;
        assert!(Mlp::<f32>::from_snapshot(&snap).is_err());
        let mut snap = net.to_snapshot();
        snap.params.pop();
        assert!(Mlp::<f32>::from_snapshot(&snap).is_err());
    }
}
