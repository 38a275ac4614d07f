use super::Segment;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two equal-length segments offered to an overseer.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPair<T> {
    pub segment_0: Segment<T>,
    pub segment_1: Segment<T>,
}

impl<T: Scalar> SegmentPair<T> {
    pub fn new(segment_0: Segment<T>, segment_1: Segment<T>) -> Result<Self> {
        if segment_0.len() != segment_1.len() {
            return Err(Error::dims("segment pair", segment_0.len(), segment_1.len()));
        }
        Ok(Self { segment_0, segment_1 })
    }

    pub fn swapped(&self) -> Self {
        Self {
            segment_0: self.segment_1.clone(),
            segment_1: self.segment_0.clone(),
        }
    }
}

/// A labeled pair: `label == 1` means `segment_1` was preferred.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord<T> {
    pub segment_0: Segment<T>,
    pub segment_1: Segment<T>,
    label: u8,
}

impl<T: Scalar> PreferenceRecord<T> {
    pub fn new(segment_0: Segment<T>, segment_1: Segment<T>, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidInput(format!("preference label {label} is not 0 or 1")));
        }
        let pair = SegmentPair::new(segment_0, segment_1)?;
        Ok(Self {
            segment_0: pair.segment_0,
            segment_1: pair.segment_1,
            label,
        })
    }

    pub fn from_pair(pair: SegmentPair<T>, label: u8) -> Result<Self> {
        Self::new(pair.segment_0, pair.segment_1, label)
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn segment_len(&self) -> usize {
        self.segment_0.len()
    }
}

/// Append-only store of labeled pairs.
#[derive(Debug, Clone, Default)]
pub struct PreferenceBuffer<T> {
    records: Vec<PreferenceRecord<T>>,
}

impl<T: Scalar> PreferenceBuffer<T> {
    pub fn new() -> Self {
        Self { records: Vec::new() }
    }

    pub fn push(&mut self, record: PreferenceRecord<T>) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PreferenceRecord<T>] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PreferenceRecord<T>> {
        self.records.iter()
    }
}

impl<T: Scalar> FromIterator<PreferenceRecord<T>> for PreferenceBuffer<T> {
    fn from_iter<I: IntoIterator<Item = PreferenceRecord<T>>>(iter: I) -> Self {
        Self {
            records: iter.into_iter().collect(),
        }
    }
}
