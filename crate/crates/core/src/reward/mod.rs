//! Bradley-Terry reward learning from pairwise segment preferences.
//!
//! A reward model scores each `(state, action)` row; a segment's learned return is
//! the sum of its row scores, and the probability that `segment_1` is preferred is
//! the logistic function of the return difference.

mod augment;
mod ensemble;

pub use augment::{augment, AugmentMode, AugmentationConfig};
pub use ensemble::{train_reward, RewardConfig, RewardEnsemble};

use ndarray::{Array1, Array2, ArrayView2};

use crate::buffers::{PreferenceRecord, Segment};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Mlp};
use crate::scalar::Scalar;

/// Anything that scores `state ++ action` rows.
pub trait RewardModel<T: Scalar> {
    fn input_dim(&self) -> usize;

    fn rewards(&self, rows: ArrayView2<'_, T>) -> Result<Array1<T>>;

    fn reward(&self, state: &[T], action: &[T]) -> Result<T> {
        let row: Vec<T> = state.iter().chain(action).copied().collect();
        let view = ArrayView2::from_shape((1, row.len()), &row)
            .map_err(|_| Error::dims("reward input", self.input_dim(), row.len()))?;
        Ok(self.rewards(view)?[0])
    }
}

impl<T: Scalar> RewardModel<T> for Mlp<T> {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn rewards(&self, rows: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if self.output_dim() != 1 {
            return Err(Error::dims("reward network output", 1, self.output_dim()));
        }
        Ok(self.forward_batch(rows)?.column(0).to_owned())
    }
}

/// Sum of learned rewards over a segment.
pub fn segment_return<T: Scalar, M: RewardModel<T> + ?Sized>(model: &M, segment: &Segment<T>) -> Result<T> {
    Ok(model.rewards(segment.state_action_matrix().view())?.sum())
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `(P[segment_0 preferred], P[segment_1 preferred])` for return difference `d = R1 - R0`.
///
/// Both values come from the same `sigmoid(-|d|)`, so they sum to one.
pub fn preference_probabilities<T: Scalar>(d: T) -> (T, T) {
    let e = (-d.abs()).exp();
    let small = e / (T::one() + e);
    let large = T::one() - small;
    if d >= T::zero() {
        (small, large)
    } else {
        (large, small)
    }
}

/// `(ln P[segment_0 preferred], ln P[segment_1 preferred])` for `d = R1 - R0`.
pub fn preference_log_probabilities<T: Scalar>(d: T) -> (T, T) {
    (-softplus(d), -softplus(-d))
}

/// Probability that `segment_1` is preferred over `segment_0`.
pub fn predict_preference<T: Scalar, M: RewardModel<T> + ?Sized>(
    model: &M,
    segment_0: &Segment<T>,
    segment_1: &Segment<T>,
) -> Result<T> {
    if segment_0.len() != segment_1.len() {
        return Err(Error::dims("preference pair", segment_0.len(), segment_1.len()));
    }
    let d = segment_return(model, segment_1)? - segment_return(model, segment_0)?;
    Ok(preference_probabilities(d).1)
}

/// Cross-entropy of a single record given its return difference.
fn record_loss<T: Scalar>(d: T, label: u8) -> T {
    let (lp0, lp1) = preference_log_probabilities(d);
    if label == 1 {
        -lp1
    } else {
        -lp0
    }
}

/// Mean cross-entropy of the preference predictor over `records`.
pub fn reward_loss<T: Scalar, M: RewardModel<T> + ?Sized>(model: &M, records: &[PreferenceRecord<T>]) -> Result<T> {
    if records.is_empty() {
        return Err(Error::EmptyBuffer { buffer: "preference batch" });
    }
    let mut total = T::zero();
    for r in records {
        let d = segment_return(model, &r.segment_1)? - segment_return(model, &r.segment_0)?;
        total += record_loss(d, r.label());
    }
    Ok(total / T::lit(records.len() as f64))
}

/// Rows of `segment_0` then `segment_1` for every record, in order.
fn stack_records<T: Scalar>(records: &[PreferenceRecord<T>]) -> Array2<T> {
    let width = records[0].segment_0.state_action_matrix().ncols();
    let rows: usize = records.iter().map(|r| 2 * r.segment_len()).sum();
    let mut m = Array2::zeros((rows, width));
    let mut at = 0;
    for r in records {
        for seg in [&r.segment_0, &r.segment_1] {
            let block = seg.state_action_matrix();
            m.slice_mut(ndarray::s![at..at + block.nrows(), ..]).assign(&block);
            at += block.nrows();
        }
    }
    m
}

/// Mean cross-entropy and its gradient with respect to the network parameters.
pub fn reward_loss_and_grads<T: Scalar>(net: &Mlp<T>, records: &[PreferenceRecord<T>]) -> Result<(T, Gradients<T>)> {
    if records.is_empty() {
        return Err(Error::EmptyBuffer { buffer: "preference batch" });
    }
    let x = stack_records(records);
    let cache = net.forward_cached(x.view())?;
    let out = cache.output();
    let n = T::lit(records.len() as f64);
    let mut d_out = Array2::zeros((x.nrows(), 1));
    let mut loss = T::zero();
    let mut at = 0;
    for r in records {
        let len = r.segment_len();
        let r0: T = (at..at + len).map(|i| out[[i, 0]]).sum();
        let r1: T = (at + len..at + 2 * len).map(|i| out[[i, 0]]).sum();
        let d = r1 - r0;
        loss += record_loss(d, r.label());
        // d(loss)/d(d) = sigmoid(d) - y.
        let coeff = (preference_probabilities(d).1 - T::lit(f64::from(r.label()))) / n;
        for i in at..at + len {
            d_out[[i, 0]] = -coeff;
        }
        for i in at + len..at + 2 * len {
            d_out[[i, 0]] = coeff;
        }
        at += 2 * len;
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Divergence("reward loss is not finite".into()));
    }
    let (grads, _) = net.backward_batch(&cache, d_out.view())?;
    Ok((loss, grads))
}

/// Fraction of records whose label agrees with the model's more likely outcome.
/// A predicted probability of exactly one half counts as wrong.
pub fn preference_accuracy<T: Scalar, M: RewardModel<T> + ?Sized>(model: &M, records: &[PreferenceRecord<T>]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyBuffer { buffer: "preference batch" });
    }
    let mut correct = 0usize;
    for r in records {
        let p1 = predict_preference(model, &r.segment_0, &r.segment_1)?.as_f64();
        if (p1 > 0.5 && r.label() == 1) || (p1 < 0.5 && r.label() == 0) {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}
