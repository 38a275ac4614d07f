//! Exact evaluation of the value-approximation bound
//! `E_d|Q_r - Q_hat| <= E_d|r_hat - r| / (1 - gamma) + E_d|Q_{r_hat} - Q_hat|`
//! on tabular MDPs.

use std::io::Write;

use nalgebra::{DMatrix, DVector, RealField};
use ndarray::Array2;
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::tabular::dirichlet_ones;
use crate::envs::{exact_policy_evaluation, visitation_distribution, TabularMdp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack allowed on `lhs <= rhs` for floating-point rounding.
pub const BOUND_TOLERANCE: f64 = 1e-10;

/// Distribution under which the weighted L1 norms are taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Normalized discounted state-action occupancy from the initial distribution.
    #[default]
    DiscountedOccupancy,
    /// Stationary state-action distribution of the policy's Markov chain.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Weighted reward error.
    pub epsilon: f64,
    /// Weighted error of the Q estimate against the exact Q of the learned reward.
    pub alpha: f64,
    /// Weighted error of the Q estimate against the exact Q of the true reward.
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundReport {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn weighted_l1<T: Scalar>(weights: &Array2<T>, a: &Array2<T>, b: &Array2<T>) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(w, (x, y))| w.as_f64() * (x.as_f64() - y.as_f64()).abs())
        .sum()
}

/// Stationary distribution of the state-action chain `(s, a) -> (s', a')` under `policy`.
pub fn stationary_distribution<T: Scalar + RealField>(mdp: &TabularMdp<T>, policy: &Array2<T>) -> Result<Array2<T>> {
    mdp.validate_policy(policy)?;
    let (ns, na) = (mdp.state_count(), mdp.action_count());
    // State chain P(s, s') = sum_a pi(a|s) T(s, a, s'); solve rho^T (P - I) = 0 with sum(rho) = 1
    // by replacing the last balance equation with the normalization.
    let mut system = DMatrix::<T>::zeros(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                system[(next, s)] += policy[[s, a]] * p;
            }
        }
        system[(s, s)] -= T::one();
    }
    for s in 0..ns {
        system[(ns - 1, s)] = T::one();
    }
    let mut rhs = DVector::<T>::zeros(ns);
    rhs[ns - 1] = T::one();
    let rho = system.lu().solve(&rhs).ok_or(Error::Singular("stationary distribution"))?;
    Ok(Array2::from_shape_fn((ns, na), |(s, a)| Float::max(rho[s] * policy[[s, a]], T::zero())))
}

pub fn weighting_distribution<T: Scalar + RealField>(
    mdp: &TabularMdp<T>,
    policy: &Array2<T>,
    weighting: Weighting,
) -> Result<Array2<T>> {
    match weighting {
        Weighting::DiscountedOccupancy => visitation_distribution(mdp, policy),
        Weighting::Stationary => stationary_distribution(mdp, policy),
    }
}

/// Evaluates both sides of the bound exactly under the discounted occupancy of `policy`.
pub fn verify_bound<T: Scalar + RealField>(
    mdp: &TabularMdp<T>,
    policy: &Array2<T>,
    true_reward: &Array2<T>,
    learned_reward: &Array2<T>,
    q_estimate: &Array2<T>,
) -> Result<BoundReport> {
    verify_bound_with(mdp, policy, true_reward, learned_reward, q_estimate, Weighting::DiscountedOccupancy)
}

pub fn verify_bound_with<T: Scalar + RealField>(
    mdp: &TabularMdp<T>,
    policy: &Array2<T>,
    true_reward: &Array2<T>,
    learned_reward: &Array2<T>,
    q_estimate: &Array2<T>,
    weighting: Weighting,
) -> Result<BoundReport> {
    let shape = (mdp.state_count(), mdp.action_count());
    for (name, table) in [("learned reward", learned_reward), ("q estimate", q_estimate)] {
        if table.dim() != shape {
            return Err(Error::InvalidInput(format!("{name} table has shape {:?}, expected {shape:?}", table.dim())));
        }
    }
    let d = weighting_distribution(mdp, policy, weighting)?;
    let q_true = exact_policy_evaluation(mdp, policy, true_reward)?;
    let q_learned = exact_policy_evaluation(mdp, policy, learned_reward)?;
    let epsilon = weighted_l1(&d, learned_reward, true_reward);
    let alpha = weighted_l1(&d, &q_learned, q_estimate);
    let lhs = weighted_l1(&d, &q_true, q_estimate);
    let rhs = epsilon / (1.0 - mdp.discount().as_f64()) + alpha;
    Ok(BoundReport {
        epsilon,
        alpha,
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_TOLERANCE,
    })
}

/// One randomly generated bound instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCase {
    pub index: usize,
    pub states: usize,
    pub actions: usize,
    pub discount: f64,
    pub report: BoundReport,
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSearchConfig {
    pub instances: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub discounts: Vec<f64>,
    /// Largest reward perturbation half-width; each instance draws its own scale below this.
    pub reward_noise: f64,
    /// Largest Q-estimate perturbation half-width.
    pub q_noise: f64,
    pub weighting: Weighting,
}

impl Default for BoundSearchConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            max_states: 5,
            max_actions: 3,
            discounts: vec![0.9, 0.99],
            reward_noise: 0.5,
            q_noise: 5.0,
            weighting: Weighting::DiscountedOccupancy,
        }
    }
}

fn perturbed<R: Rng + ?Sized>(base: &Array2<f64>, half_width: f64, rng: &mut R) -> Array2<f64> {
    base.mapv(|v| v + rng.random_range(-half_width..=half_width))
}

/// Random MDP, Dirichlet(1) policy, and uniformly perturbed reward and Q tables per instance.
pub fn random_bound_cases<R: Rng + ?Sized>(config: &BoundSearchConfig, rng: &mut R) -> Result<Vec<BoundCase>> {
    if config.max_states == 0 || config.max_actions == 0 || config.discounts.is_empty() {
        return Err(Error::InvalidConfig("bound search needs states, actions and discounts".into()));
    }
    let mut cases = Vec::with_capacity(config.instances);
    for index in 0..config.instances {
        let states = rng.random_range(1..=config.max_states);
        let actions = rng.random_range(1..=config.max_actions);
        let discount = config.discounts[rng.random_range(0..config.discounts.len())];
        let mdp = TabularMdp::<f64>::random(rng, states, actions, discount)?;
        let mut policy = Array2::zeros((states, actions));
        for mut row in policy.rows_mut() {
            for (dst, p) in row.iter_mut().zip(dirichlet_ones::<f64, R>(rng, actions)) {
                *dst = p;
            }
        }
        let reward_scale = rng.random_range(0.0..=config.reward_noise);
        let learned = perturbed(mdp.rewards(), reward_scale, rng);
        let q_scale = rng.random_range(0.0..=config.q_noise);
        let q_exact = exact_policy_evaluation(&mdp, &policy, &learned)?;
        let q_estimate = perturbed(&q_exact, q_scale, rng);
        let report = verify_bound_with(&mdp, &policy, mdp.rewards(), &learned, &q_estimate, config.weighting)?;
        cases.push(BoundCase {
            index,
            states,
            actions,
            discount,
            report,
        });
    }
    Ok(cases)
}

pub const BOUND_CSV_HEADER: &str = "index,states,actions,discount,epsilon,alpha,lhs,rhs,holds";

pub fn write_bound_csv<W: Write>(out: &mut W, cases: &[BoundCase]) -> Result<()> {
    writeln!(out, "{BOUND_CSV_HEADER}")?;
    for c in cases {
        let r = &c.report;
        writeln!(
            out,
            "{},{},{},{},{:e},{:e},{:e},{:e},{}",
            c.index, c.states, c.actions, c.discount, r.epsilon, r.alpha, r.lhs, r.rhs, r.holds
        )?;
    }
    Ok(())
}
