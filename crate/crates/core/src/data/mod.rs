//! Synthetic slides, slide files and manifests.

pub mod manifest;
pub mod slide_io;
mod synth;

pub use manifest::{read_site, write_site, Manifest, ManifestEntry};
pub use synth::{generate_site, generate_slide, signal_direction, split_indices, GeneratedSlide, SiteData, SiteSpec, Split};

use thiserror::Error;

use crate::geometry::{Label, PointSet};
use crate::rng::{label, path_id, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid site spec: {0}")]
    InvalidSpec(String),
    #[error("slide `{id}` has {have} points, {need} requested")]
    TooFewPoints { id: String, have: usize, need: usize },
    #[error("invalid slide `{id}`: {reason}")]
    InvalidSlide { id: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

/// One stored slide: `n` rows of `(px, py, 1, feature...)` at 32-bit
/// precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Slide {
    id: String,
    label: Label,
    dim: usize,
    values: Vec<f32>,
}

impl Slide {
    pub fn new(id: impl Into<String>, label: Label, dim: usize, values: Vec<f32>) -> Result<Self, DataError> {
        let id = id.into();
        let width = 3 + dim;
        let bad = |reason: String| Err(DataError::InvalidSlide { id: id.clone(), reason });
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(width) {
            return bad(format!("{} values do not form rows of width {width}", values.len()));
        }
        if let Some(i) = values.chunks_exact(width).position(|r| r[2] != 1.0) {
            return bad(format!("point {i} has z != 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return bad(format!("value {i} is not finite"));
        }
        Ok(Self { id, label, dim, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / (3 + self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = 3 + self.dim;
        &self.values[i * w..(i + 1) * w]
    }

    fn widen(&self, indices: impl Iterator<Item = usize>) -> PointSet {
        let mut positions = Vec::new();
        let mut features = Vec::new();
        for i in indices {
            let r = self.row(i);
            positions.extend(r[..3].iter().map(|&v| f64::from(v)));
            features.extend(r[3..].iter().map(|&v| f64::from(v)));
        }
        PointSet::new(positions, features, self.dim, Some(self.label)).expect("validated on construction")
    }

    /// All points, widened to `f64`.
    pub fn to_point_set(&self) -> PointSet {
        self.widen(0..self.len())
    }

    /// Uniform sample of `n` points without replacement, in ascending index
    /// order.
    pub fn subsample(&self, n: usize, rng: &mut Stream) -> Result<PointSet, DataError> {
        if self.len() < n {
            return Err(DataError::TooFewPoints { id: self.id.clone(), have: self.len(), need: n });
        }
        Ok(self.widen(rng.sample_indices(self.len(), n).into_iter()))
    }
}

/// Uniform sample of `n` points of an in-memory point set.
pub fn subsample_points(slide: &PointSet, n: usize, rng: &mut Stream) -> Result<PointSet, DataError> {
    if slide.len() < n {
        return Err(DataError::TooFewPoints { id: String::new(), have: slide.len(), need: n });
    }
    Ok(slide.select(&rng.sample_indices(slide.len(), n)))
}

/// Stream for drawing the points of `slide_id` in `epoch`.
pub fn subsample_stream(seed: u64, slide_id: &str, epoch: u64) -> Stream {
    let key = path_id(&slide_id.bytes().map(u64::from).collect::<Vec<_>>());
    Stream::new(seed, &[label::SUBSAMPLE, key, epoch])
}

/// Fixed stream for the evaluation subsample of `slide_id`, the same in
/// every round.
pub fn eval_stream(seed: u64, slide_id: &str) -> Stream {
    let key = path_id(&slide_id.bytes().map(u64::from).collect::<Vec<_>>());
    Stream::new(seed, &[label::EVAL, key])
}
