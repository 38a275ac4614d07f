use prefrl_core::buffers::Segment;
use prefrl_core::Scalar;
use serde::{Deserialize, Serialize};

/// What a client needs to draw one segment. Carries behavior only, never returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderDocument {
    pub points: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub length: usize,
    pub env: String,
}

/// Render coordinates are the raw observations; for point navigation these are positions.
pub fn serialize_segment<T: Scalar>(segment: &Segment<T>, env: &str) -> RenderDocument {
    let widen = |rows: &[Vec<T>]| rows.iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    RenderDocument {
        points: widen(&segment.states),
        actions: widen(&segment.actions),
        length: segment.len(),
        env: env.to_string(),
    }
}
