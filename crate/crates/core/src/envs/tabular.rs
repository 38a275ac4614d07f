//! Finite MDPs with exact policy evaluation and discounted occupancy measures.
//!
//! Tables are indexed `[state, action]`; policies are row-stochastic `[state, action]`
//! matrices. The linear systems are solved by LU decomposition, so results are exact
//! up to floating-point rounding.

use nalgebra::{DMatrix, DVector, RealField};
use ndarray::Array2;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const STOCHASTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    state_count: usize,
    action_count: usize,
    /// Flat `[s][a][s']`.
    transitions: Vec<T>,
    rewards: Array2<T>,
    discount: T,
    initial: Vec<T>,
}

fn is_stochastic<T: Scalar>(row: &[T], tolerance: f64) -> bool {
    let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
    row.iter().all(|v| v.as_f64() >= 0.0) && (sum - 1.0).abs() <= tolerance
}

impl<T: Scalar> TabularMdp<T> {
    pub fn new(
        state_count: usize,
        action_count: usize,
        transitions: Vec<T>,
        rewards: Array2<T>,
        discount: T,
        initial: Vec<T>,
    ) -> Result<Self> {
        if state_count == 0 || action_count == 0 {
            return Err(Error::InvalidConfig("an MDP needs at least one state and action".into()));
        }
        let expected = state_count * action_count * state_count;
        if transitions.len() != expected {
            return Err(Error::dims("transition tensor", expected, transitions.len()));
        }
        if rewards.dim() != (state_count, action_count) {
            return Err(Error::dims("reward table", state_count * action_count, rewards.len()));
        }
        if initial.len() != state_count {
            return Err(Error::dims("initial distribution", state_count, initial.len()));
        }
        if !(discount > T::zero() && discount < T::one()) {
            return Err(Error::InvalidConfig("discount must lie strictly inside (0, 1)".into()));
        }
        for row in transitions.chunks(state_count) {
            if !is_stochastic(row, STOCHASTIC_TOLERANCE) {
                return Err(Error::InvalidConfig("transition rows must be stochastic".into()));
            }
        }
        if !is_stochastic(&initial, STOCHASTIC_TOLERANCE) {
            return Err(Error::InvalidConfig("initial distribution must be stochastic".into()));
        }
        Ok(Self {
            state_count,
            action_count,
            transitions,
            rewards,
            discount,
            initial,
        })
    }

    /// Dirichlet(1) transition rows and initial distribution, rewards uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        state_count: usize,
        action_count: usize,
        discount: T,
    ) -> Result<Self> {
        let mut transitions = Vec::with_capacity(state_count * action_count * state_count);
        for _ in 0..state_count * action_count {
            transitions.extend(dirichlet_ones::<T, R>(rng, state_count));
        }
        let rewards =
            Array2::from_shape_fn((state_count, action_count), |_| T::lit(rng.random_range(-1.0..=1.0)));
        let initial = dirichlet_ones(rng, state_count);
        Self::new(state_count, action_count, transitions, rewards, discount, initial)
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    pub fn rewards(&self) -> &Array2<T> {
        &self.rewards
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> T {
        self.transitions[(s * self.action_count + a) * self.state_count + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.action_count + a) * self.state_count;
        &self.transitions[start..start + self.state_count]
    }

    pub fn validate_policy(&self, policy: &Array2<T>) -> Result<()> {
        if policy.dim() != (self.state_count, self.action_count) {
            return Err(Error::dims("policy table", self.state_count * self.action_count, policy.len()));
        }
        for row in policy.rows() {
            let row: Vec<T> = row.to_vec();
            if !is_stochastic(&row, 1e-9) {
                return Err(Error::InvalidInput("policy rows must be stochastic".into()));
            }
        }
        Ok(())
    }

    /// Max-norm residual of `Q = r + gamma * P_pi Q`.
    pub fn bellman_residual(&self, policy: &Array2<T>, reward: &Array2<T>, q: &Array2<T>) -> T {
        let mut worst = T::zero();
        for s in 0..self.state_count {
            for a in 0..self.action_count {
                let mut next_value = T::zero();
                for (next, &p) in self.transition_row(s, a).iter().enumerate() {
                    let v: T = (0..self.action_count)
                        .map(|b| policy[[next, b]] * q[[next, b]])
                        .sum();
                    next_value += p * v;
                }
                let r = reward[[s, a]] + self.discount * next_value - q[[s, a]];
                worst = Float::max(worst, Float::abs(r));
            }
        }
        worst
    }
}

/// Normalized i.i.d. unit exponentials, i.e. a draw from Dirichlet(1, ..., 1).
pub fn dirichlet_ones<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| T::lit(d / total)).collect()
}

fn solve<T: Scalar + RealField>(a: DMatrix<T>, b: DVector<T>, context: &'static str) -> Result<DVector<T>> {
    a.lu().solve(&b).ok_or(Error::Singular(context))
}

/// Exact `Q^pi_r` for the given reward table.
pub fn exact_policy_evaluation<T: Scalar + RealField>(
    mdp: &TabularMdp<T>,
    policy: &Array2<T>,
    reward: &Array2<T>,
) -> Result<Array2<T>> {
    mdp.validate_policy(policy)?;
    let (ns, na) = (mdp.state_count, mdp.action_count);
    if reward.dim() != (ns, na) {
        return Err(Error::dims("reward table", ns * na, reward.len()));
    }
    let n = ns * na;
    let gamma = mdp.discount;
    // (I - gamma * P) q = r with P[(s,a),(s',a')] = T(s,a,s') pi(a'|s').
    let mut system = DMatrix::<T>::identity(n, n);
    for s in 0..ns {
        for a in 0..na {
            let row = s * na + a;
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                for b in 0..na {
                    system[(row, next * na + b)] -= gamma * p * policy[[next, b]];
                }
            }
        }
    }
    let rhs = DVector::from_iterator(n, reward.iter().copied());
    let q = solve(system, rhs, "policy evaluation")?;
    Ok(Array2::from_shape_fn((ns, na), |(s, a)| q[s * na + a]))
}

/// Normalized discounted state-action occupancy
/// `d(s, a) = (1 - gamma) * sum_t gamma^t Pr(s_t = s, a_t = a)`.
pub fn visitation_distribution<T: Scalar + RealField>(
    mdp: &TabularMdp<T>,
    policy: &Array2<T>,
) -> Result<Array2<T>> {
    mdp.validate_policy(policy)?;
    let (ns, na) = (mdp.state_count, mdp.action_count);
    let gamma = mdp.discount;
    // (I - gamma * P_pi^T) rho = (1 - gamma) mu_0.
    let mut system = DMatrix::<T>::identity(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                system[(next, s)] -= gamma * policy[[s, a]] * p;
            }
        }
    }
    let scale = T::one() - gamma;
    let rhs = DVector::from_iterator(ns, mdp.initial.iter().map(|&m| scale * m));
    let rho = solve(system, rhs, "state occupancy")?;
    Ok(Array2::from_shape_fn((ns, na), |(s, a)| {
        Float::max(rho[s] * policy[[s, a]], T::zero())
    }))
}
