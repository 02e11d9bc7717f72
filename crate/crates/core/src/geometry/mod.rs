//! Distances, nearest neighbors and greedy max-min sampling.
//!
//! Everything here is a deterministic function of its inputs. Distances are
//! computed by brute force over all pairs. Ties are always broken toward
//! the lower index.

mod distance;
mod knn;
mod pointset;
mod sampling;

pub use distance::{cosine_distance, cosine_distance_with_norms, cosine_from_dot, euclidean_distance, norm, CosineDenominator, Metric};
pub use knn::{group, knn, knn_points, NeighborIndex, PointMetric};
pub use pointset::{Label, PointSet};
pub use sampling::{farthest_cosine_sampling, farthest_point_sampling, farthest_sampling, StartRule};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("k = {k} exceeds the {n} available points")]
    KTooLarge { k: usize, n: usize },
    #[error("cannot sample {m} of {n} points")]
    SampleSize { m: usize, n: usize },
    #[error("query index {index} out of range for {n} points")]
    QueryOutOfRange { index: usize, n: usize },
    #[error("point set must not be empty")]
    Empty,
    #[error("row data of length {len} is not a multiple of width {width}")]
    Ragged { len: usize, width: usize },
    #[error("point {index} has z = {z}, expected 1")]
    ZNotOne { index: usize, z: f64 },
    #[error("positions describe {positions} points but features describe {features}")]
    CountMismatch { positions: usize, features: usize },
}

/// Borrowed row-major matrix.
#[derive(Clone, Copy, Debug)]
pub struct Rows<'a> {
    data: &'a [f64],
    width: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], width: usize) -> Result<Self, GeometryError> {
        if width == 0 || !data.len().is_multiple_of(width) {
            return Err(GeometryError::Ragged { len: data.len(), width });
        }
        Ok(Self { data, width })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// Arithmetic mean of all rows, accumulated in row order.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.width];
        for i in 0..self.len() {
            for (c, v) in c.iter_mut().zip(self.row(i)) {
                *c += v;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }
}
