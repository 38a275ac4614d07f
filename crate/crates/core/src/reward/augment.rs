use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::PreferenceRecord;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Temporal cropping: each labeled pair yields `ratio` shorter snippet pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub ratio: usize,
    pub min_snippet_len: usize,
    pub max_snippet_len: usize,
}

impl AugmentationConfig {
    /// No cropping: one copy of each record at full length.
    pub fn disabled(segment_length: usize) -> Self {
        Self {
            ratio: 1,
            min_snippet_len: segment_length,
            max_snippet_len: segment_length,
        }
    }

    pub fn validate(&self, segment_length: usize) -> Result<()> {
        if self.ratio == 0 {
            return Err(Error::InvalidConfig("augmentation ratio must be positive".into()));
        }
        if self.min_snippet_len == 0 || self.min_snippet_len > self.max_snippet_len {
            return Err(Error::InvalidConfig(format!(
                "snippet bounds [{}, {}] are not a valid range",
                self.min_snippet_len, self.max_snippet_len
            )));
        }
        if self.max_snippet_len > segment_length {
            return Err(Error::InvalidConfig(format!(
                "max snippet length {} exceeds segment length {segment_length}",
                self.max_snippet_len
            )));
        }
        Ok(())
    }
}

/// When cropped copies are drawn during a reward-training session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// Fresh crops for every minibatch.
    #[default]
    PerBatch,
    /// Crops drawn once at the start of the session and reused for every epoch.
    PerSession,
}

/// `cfg.ratio` cropped copies of `record`.
///
/// Each copy draws one snippet length shared by both sides, then an independent
/// start offset per side. The label is copied unchanged.
pub fn augment<T: Scalar, R: Rng + ?Sized>(
    record: &PreferenceRecord<T>,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<Vec<PreferenceRecord<T>>> {
    let len = record.segment_len();
    if len < cfg.max_snippet_len {
        return Err(Error::InsufficientData {
            buffer: "preference record",
            detail: format!("segment length {len} below max snippet length {}", cfg.max_snippet_len),
        });
    }
    cfg.validate(len)?;
    (0..cfg.ratio)
        .map(|_| {
            let k = rng.random_range(cfg.min_snippet_len..=cfg.max_snippet_len);
            let o0 = rng.random_range(0..=len - k);
            let o1 = rng.random_range(0..=len - k);
            PreferenceRecord::new(
                record.segment_0.snippet(o0, k)?,
                record.segment_1.snippet(o1, k)?,
                record.label(),
            )
        })
        .collect()
}
