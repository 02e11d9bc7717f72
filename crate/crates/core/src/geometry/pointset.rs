use super::{GeometryError, Rows};
use crate::engine::Tensor;

/// Binary slide label: `Negative` is HER2-, `Positive` is HER2+.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// A slide as a point cloud: positions `(px, py, 1)` plus a `d`-wide feature
/// per point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    positions: Vec<f64>,
    features: Vec<f64>,
    dim: usize,
    label: Option<Label>,
}

impl PointSet {
    pub fn new(positions: Vec<f64>, features: Vec<f64>, dim: usize, label: Option<Label>) -> Result<Self, GeometryError> {
        if !positions.len().is_multiple_of(3) {
            return Err(GeometryError::Ragged { len: positions.len(), width: 3 });
        }
        Rows::new(&features, dim)?;
        let n = positions.len() / 3;
        if n == 0 {
            return Err(GeometryError::Empty);
        }
        if features.len() / dim != n {
            return Err(GeometryError::CountMismatch { positions: n, features: features.len() / dim });
        }
        if let Some(index) = (0..n).find(|&i| positions[3 * i + 2] != 1.0) {
            return Err(GeometryError::ZNotOne { index, z: positions[3 * index + 2] });
        }
        Ok(Self { positions, features, dim, label })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn positions(&self) -> Rows<'_> {
        Rows { data: &self.positions, width: 3 }
    }

    pub fn features(&self) -> Rows<'_> {
        Rows { data: &self.features, width: self.dim }
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[3 * i..3 * i + 3]
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut positions = Vec::with_capacity(indices.len() * 3);
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            positions.extend_from_slice(self.position(i));
            features.extend_from_slice(self.feature(i));
        }
        PointSet { positions, features, dim: self.dim, label: self.label }
    }

    /// `[n, 3 + d]` matrix with the position columns first.
    pub fn input_matrix(&self) -> Tensor {
        let width = 3 + self.dim;
        let mut data = Vec::with_capacity(self.len() * width);
        for i in 0..self.len() {
            data.extend_from_slice(self.position(i));
            data.extend_from_slice(self.feature(i));
        }
        Tensor::new(vec![self.len(), width], data).expect("non-empty point set")
    }
}
