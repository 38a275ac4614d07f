//! Query selection schemes, the scripted oracle, and the overseer interface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{sample_segment, PolicyAlignedBuffer, PreferenceBuffer, PreferenceRecord, ReplayBuffer, Segment, SegmentPair, Trajectory};
use crate::error::{Error, Result};
use crate::reward::RewardEnsemble;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryScheme {
    /// Segments from trajectories drawn uniformly out of the recent replay window.
    Uniform,
    /// The `candidate_factor * M` uniform candidates whose preference predictions vary most across the ensemble.
    Disagreement { candidate_factor: usize },
    /// Segments from the policy-aligned buffer only.
    PolicyAligned,
}

impl QueryScheme {
    pub fn name(&self) -> &'static str {
        match self {
            QueryScheme::Uniform => "uniform",
            QueryScheme::Disagreement { .. } => "disagreement",
            QueryScheme::PolicyAligned => "policy_aligned",
        }
    }
}

/// Where candidate segments come from and how long they are.
#[derive(Debug)]
pub struct QuerySources<'a, T> {
    pub replay: &'a ReplayBuffer<T>,
    pub pa: &'a PolicyAlignedBuffer<T>,
    /// Number of most recent replay trajectories the replay-based schemes draw from;
    /// `None` uses the whole buffer.
    pub replay_window: Option<usize>,
    pub segment_length: usize,
}

impl<T> Clone for QuerySources<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for QuerySources<'_, T> {}

impl<T: Scalar> QuerySources<'_, T> {
    fn replay_pool(&self) -> Result<Vec<Trajectory<T>>> {
        let pool = self.replay.trajectories(self.replay_window, self.segment_length, false);
        if pool.is_empty() {
            return Err(Error::InsufficientData {
                buffer: "replay buffer",
                detail: format!("no complete trajectory with at least {} steps", self.segment_length),
            });
        }
        Ok(pool)
    }

    fn pa_pool(&self) -> Result<Vec<&Trajectory<T>>> {
        let pool: Vec<&Trajectory<T>> = self.pa.trajectories().filter(|t| t.len() >= self.segment_length).collect();
        if pool.is_empty() {
            return Err(Error::InsufficientData {
                buffer: "policy-aligned buffer",
                detail: format!("no trajectory with at least {} steps", self.segment_length),
            });
        }
        Ok(pool)
    }
}

fn draw_pairs<T: Scalar, R: Rng + ?Sized>(
    pool: &[&Trajectory<T>],
    count: usize,
    length: usize,
    rng: &mut R,
) -> Result<Vec<SegmentPair<T>>> {
    (0..count)
        .map(|_| {
            let a = pool[rng.random_range(0..pool.len())];
            let s0 = sample_segment(a, length, rng)?;
            let b = pool[rng.random_range(0..pool.len())];
            let s1 = sample_segment(b, length, rng)?;
            SegmentPair::new(s0, s1)
        })
        .collect()
}

/// Uniform candidate pairs from the replay window.
pub fn uniform_pairs<T: Scalar, R: Rng + ?Sized>(
    sources: &QuerySources<'_, T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SegmentPair<T>>> {
    let pool = sources.replay_pool()?;
    let refs: Vec<&Trajectory<T>> = pool.iter().collect();
    draw_pairs(&refs, count, sources.segment_length, rng)
}

/// Pairs whose segments both come from the policy-aligned buffer.
pub fn policy_aligned_pairs<T: Scalar, R: Rng + ?Sized>(
    sources: &QuerySources<'_, T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SegmentPair<T>>> {
    let pool = sources.pa_pool()?;
    draw_pairs(&pool, count, sources.segment_length, rng)
}

/// `count` segment pairs chosen by `scheme`.
pub fn select_queries<T: Scalar, R: Rng + ?Sized>(
    scheme: QueryScheme,
    sources: &QuerySources<'_, T>,
    ensemble: &RewardEnsemble<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SegmentPair<T>>> {
    if sources.segment_length == 0 {
        return Err(Error::InvalidConfig("segment length must be positive".into()));
    }
    match scheme {
        QueryScheme::Uniform => uniform_pairs(sources, count, rng),
        QueryScheme::PolicyAligned => policy_aligned_pairs(sources, count, rng),
        QueryScheme::Disagreement { candidate_factor } => {
            if ensemble.len() < 2 {
                return Err(Error::InvalidConfig("disagreement selection needs an ensemble of at least two".into()));
            }
            let candidates = uniform_pairs(sources, candidate_factor.max(1) * count, rng)?;
            let scores = candidates
                .iter()
                .map(|p| ensemble.disagreement(&p.segment_0, &p.segment_1))
                .collect::<Result<Vec<T>>>()?;
            Ok(top_by_score(candidates, &scores, count))
        }
    }
}

/// The `count` highest-scoring items in descending score order. The sort is stable,
/// so tied scores keep candidate order.
fn top_by_score<P, S: Scalar>(items: Vec<P>, scores: &[S], count: usize) -> Vec<P> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut slots: Vec<Option<P>> = items.into_iter().map(Some).collect();
    order.into_iter().take(count).filter_map(|i| slots[i].take()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleVerdict {
    Prefer0,
    Prefer1,
    Skip,
}

impl OracleVerdict {
    pub fn label(self) -> Option<u8> {
        match self {
            OracleVerdict::Prefer0 => Some(0),
            OracleVerdict::Prefer1 => Some(1),
            OracleVerdict::Skip => None,
        }
    }
}

/// Prefers the segment with the larger ground-truth return; exact ties are a coin flip.
pub fn scripted_oracle<T: Scalar, R: Rng + ?Sized>(segment_0: &Segment<T>, segment_1: &Segment<T>, rng: &mut R) -> OracleVerdict {
    let (r0, r1) = (segment_0.ground_truth_return(), segment_1.ground_truth_return());
    if r1 > r0 {
        OracleVerdict::Prefer1
    } else if r1 < r0 {
        OracleVerdict::Prefer0
    } else if rng.random::<bool>() {
        OracleVerdict::Prefer1
    } else {
        OracleVerdict::Prefer0
    }
}

/// Stores the labeled pairs; skipped pairs are dropped. Returns how many were stored.
pub fn apply_verdicts<T: Scalar>(
    pairs: &[SegmentPair<T>],
    verdicts: &[OracleVerdict],
    prefs: &mut PreferenceBuffer<T>,
) -> Result<usize> {
    if pairs.len() != verdicts.len() {
        return Err(Error::dims("verdicts", pairs.len(), verdicts.len()));
    }
    let mut stored = 0;
    for (pair, v) in pairs.iter().zip(verdicts) {
        if let Some(label) = v.label() {
            prefs.push(PreferenceRecord::from_pair(pair.clone(), label)?);
            stored += 1;
        }
    }
    Ok(stored)
}

/// What an overseer is told about the session it is labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionContext {
    pub session: usize,
    pub env_step: u64,
    pub feedback_used: usize,
    pub feedback_total: usize,
    pub env_name: String,
}

/// Source of verdicts for a session's pairs, one verdict per pair in order.
pub trait Overseer<T: Scalar> {
    fn label(&mut self, pairs: &[SegmentPair<T>], context: &SessionContext) -> Result<Vec<OracleVerdict>>;
}

/// Labels pairs with [`scripted_oracle`] from its own random stream.
#[derive(Debug, Clone)]
pub struct ScriptedOverseer {
    rng: ChaCha8Rng,
}

impl ScriptedOverseer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Scalar> Overseer<T> for ScriptedOverseer {
    fn label(&mut self, pairs: &[SegmentPair<T>], _context: &SessionContext) -> Result<Vec<OracleVerdict>> {
        Ok(pairs.iter().map(|p| scripted_oracle(&p.segment_0, &p.segment_1, &mut self.rng)).collect())
    }
}
