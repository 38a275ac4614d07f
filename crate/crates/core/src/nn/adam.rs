use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one set of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_net(net: &Mlp<T>, config: AdamConfig) -> Self {
        Self::for_shapes(net.tensors().map(<[T]>::len), config)
    }

    pub fn for_shapes(lengths: impl IntoIterator<Item = usize>, config: AdamConfig) -> Self {
        let first_moment: Vec<Vec<T>> = lengths.into_iter().map(|n| vec![T::zero(); n]).collect();
        let second_moment = first_moment.clone();
        Self {
            config,
            step_count: 0,
            first_moment,
            second_moment,
        }
    }

    /// One Adam update of `net` along `grads`.
    ///
    /// A bundle that is zero everywhere leaves the parameters untouched; the moments
    /// and step count still advance.
    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        if !grads.congruent_with(net) {
            return Err(Error::InvalidInput("gradient bundle does not match network".into()));
        }
        let mut params: Vec<&mut [T]> = net.tensors_mut().collect();
        let grads: Vec<&[T]> = grads.tensors().collect();
        self.step_tensors(&mut params, &grads)
    }

    pub fn step_tensors(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::dims("adam tensors", self.first_moment.len(), params.len()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::dims("adam tensor length", m.len(), g.len()));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence("non-finite gradient passed to adam".into()));
        }
        let all_zero = grads.iter().all(|g| g.iter().all(|v| *v == T::zero()));

        self.step_count += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let t = self.step_count as i32;
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                if !all_zero {
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    /// Convenience for a single scalar parameter (e.g. a log-temperature).
    pub fn step_scalar(&mut self, param: &mut T, grad: T) -> Result<()> {
        let mut p = [*param];
        let g = [grad];
        self.step_tensors(&mut [&mut p[..]], &[&g[..]])?;
        *param = p[0];
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Mlp<f64> {
        Mlp::new(
            &[3, 4, 2],
            Activation::Relu,
            Activation::Identity,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut n = net();
        let before = n.clone();
        let mut state = AdamState::for_net(&n, AdamConfig::default());
        state.step(&mut n, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(n, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_sign() {
        let mut n = net();
        let before = n.flat_params();
        let mut grads = Gradients::zeros_like(&n);
        for (i, t) in grads.tensors_mut().enumerate() {
            for (j, v) in t.iter_mut().enumerate() {
                *v = if (i + j) % 2 == 0 { 0.5 } else { -2.0 };
            }
        }
        let lr = 1e-3;
        let mut state = AdamState::for_net(&n, AdamConfig::with_learning_rate(lr));
        state.step(&mut n, &grads).unwrap();
        // m_hat = g and v_hat = g^2 after one step, so the update is -lr * g / (|g| + eps).
        for ((a, b), g) in n.flat_params().iter().zip(&before).zip(grads.flat()) {
            let expected = -lr * g / (g.abs() + 1e-8);
            assert!((a - b - expected).abs() < 1e-15);
            assert!(((a - b) + lr * g.signum()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut n = net();
        let before = n.clone();
        let mut grads = Gradients::zeros_like(&n);
        grads.tensors_mut().for_each(|t| t.fill(1.5));
        let mut state = AdamState::for_net(&n, AdamConfig::with_learning_rate(0.0));
        state.step(&mut n, &grads).unwrap();
        assert_eq!(n, before);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut n = net();
        let mut grads = Gradients::zeros_like(&n);
        grads.layers[0].weight[[0, 0]] = f64::NAN;
        let mut state = AdamState::for_net(&n, AdamConfig::default());
        assert!(matches!(state.step(&mut n, &grads), Err(Error::Divergence(_))));
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn scalar_step_descends() {
        let mut p = 1.0f64;
        let mut s = AdamState::for_shapes([1], AdamConfig::with_learning_rate(0.1));
        for _ in 0..200 {
            let g = 2.0 * p;
            s.step_scalar(&mut p, g).unwrap();
        }
        assert!(p.abs() < 0.05);
    }

    proptest! {
        #[test]
        fn zero_gradient_is_no_op_for_any_prior_state(
            warmup in prop::collection::vec(-5.0f64..5.0, 1..6),
            lr in 1e-5f64..1e-1,
        ) {
            let mut n = net();
            let mut state = AdamState::for_net(&n, AdamConfig::with_learning_rate(lr));
            for w in &warmup {
                let mut g = Gradients::zeros_like(&n);
                g.tensors_mut().for_each(|t| t.fill(*w));
                state.step(&mut n, &g).unwrap();
            }
            let before = n.clone();
            state.step(&mut n, &Gradients::zeros_like(&before)).unwrap();
            prop_assert_eq!(n, before);
        }
    }
}
