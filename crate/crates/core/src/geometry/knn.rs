use std::cmp::Ordering;

use super::{CosineDenominator, GeometryError, Metric, PointSet, Rows};

/// Neighbor lists: row `a` of `neighbors` holds the `k` neighbors of
/// `centers[a]`, nearest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborIndex {
    pub centers: Vec<usize>,
    pub k: usize,
    pub neighbors: Vec<usize>,
}

impl NeighborIndex {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn row(&self, a: usize) -> &[usize] {
        &self.neighbors[a * self.k..(a + 1) * self.k]
    }

    /// `[centers[a]; k]` for each row, the shape needed to broadcast a
    /// per-center value over its neighbors with a gather.
    pub fn center_rows(&self) -> Vec<usize> {
        self.centers.iter().flat_map(|&c| std::iter::repeat_n(c, self.k)).collect()
    }
}

/// Which part of a [`PointSet`] a neighbor search measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointMetric {
    EuclideanPosition,
    CosineFeature(CosineDenominator),
}

fn by_distance(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest rows to each query row, nearest first.
///
/// A query is always its own first neighbor, whatever the metric says about
/// self-distance. The remaining slots are filled by ascending distance with
/// ties broken toward the lower index. Euclidean neighbors are ranked by
/// squared distance, which skips a square root per pair.
pub fn knn(rows: Rows<'_>, queries: &[usize], k: usize, metric: Metric) -> Result<NeighborIndex, GeometryError> {
    let n = rows.len();
    if k > n {
        return Err(GeometryError::KTooLarge { k, n });
    }
    if let Some(&index) = queries.iter().find(|&&q| q >= n) {
        return Err(GeometryError::QueryOutOfRange { index, n });
    }
    let width = rows.width();
    let norms: Vec<f64> = match metric {
        Metric::Cosine(_) => (0..n).map(|i| super::norm(rows.row(i))).collect(),
        Metric::Euclidean => Vec::new(),
    };
    // Column-major copy so that each query's distances to all rows are
    // computed in one vectorizable pass per coordinate. Coordinates are
    // accumulated in order, matching the row-wise formulas exactly.
    let mut columns = vec![0.0; n * width];
    for i in 0..n {
        for (d, &v) in rows.row(i).iter().enumerate() {
            columns[d * n + i] = v;
        }
    }
    let mut dist = vec![0.0; n];
    let mut neighbors = Vec::with_capacity(queries.len() * k);
    // Running best `k - 1` candidates, sorted by (distance, index). Rows are
    // visited in index order, so a later row only displaces on a strictly
    // smaller distance.
    let rest = k.saturating_sub(1);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(rest + 1);
    for &q in queries {
        if k == 0 {
            continue;
        }
        let qrow = rows.row(q);
        dist.fill(0.0);
        for (d, col) in columns.chunks_exact(n).enumerate() {
            let qv = qrow[d];
            match metric {
                Metric::Euclidean => dist.iter_mut().zip(col).for_each(|(acc, &v)| *acc += (qv - v) * (qv - v)),
                Metric::Cosine(_) => dist.iter_mut().zip(col).for_each(|(acc, &v)| *acc += qv * v),
            }
        }
        if let Metric::Cosine(den) = metric {
            for (j, v) in dist.iter_mut().enumerate() {
                *v = super::cosine_from_dot(*v, norms[q], norms[j], den);
            }
        }
        best.clear();
        for (j, &d) in dist.iter().enumerate() {
            if j == q || (best.len() == rest && best.last().is_none_or(|w| d.total_cmp(&w.0) != Ordering::Less)) {
                continue;
            }
            let at = best.partition_point(|c| by_distance(c, &(d, j)) == Ordering::Less);
            best.insert(at, (d, j));
            best.truncate(rest);
        }
        neighbors.push(q);
        neighbors.extend(best.iter().map(|&(_, j)| j));
    }
    Ok(NeighborIndex { centers: queries.to_vec(), k, neighbors })
}

/// [`knn`] on either the positions or the features of a point set.
pub fn knn_points(points: &PointSet, queries: &[usize], k: usize, metric: PointMetric) -> Result<NeighborIndex, GeometryError> {
    match metric {
        PointMetric::EuclideanPosition => knn(points.positions(), queries, k, Metric::Euclidean),
        PointMetric::CosineFeature(d) => knn(points.features(), queries, k, Metric::Cosine(d)),
    }
}

/// Neighborhoods of sampled centers, searched over the full pre-sampling set.
pub fn group(points: &PointSet, centers: &[usize], k: usize, metric: PointMetric) -> Result<NeighborIndex, GeometryError> {
    knn_points(points, centers, k, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    /// Exhaustive oracle: full sort of all points with self forced first.
    fn oracle(rows: Rows<'_>, q: usize, k: usize, metric: Metric) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..rows.len())
            .map(|j| {
                let d = if j == q { f64::NEG_INFINITY } else { metric.distance(rows.row(q), rows.row(j)) };
                (d, j)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, j)| j).collect()
    }

    fn line(n: usize) -> PointSet {
        let positions = (0..n).flat_map(|i| [i as f64, 0.0, 1.0]).collect();
        PointSet::new(positions, vec![1.0; n], 1, None).unwrap()
    }

    #[test]
    fn k1_is_self() {
        let p = line(5);
        let all: Vec<usize> = (0..5).collect();
        let idx = knn_points(&p, &all, 1, PointMetric::EuclideanPosition).unwrap();
        assert_eq!(idx.neighbors, all);
    }

    #[test]
    fn collinear_tie_goes_to_lower_index() {
        let p = line(3);
        let idx = knn_points(&p, &[1], 2, PointMetric::EuclideanPosition).unwrap();
        assert_eq!(idx.row(0), &[1, 0]);
    }

    #[test]
    fn self_first_even_with_duplicates() {
        let positions = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let p = PointSet::new(positions, vec![0.0; 3], 1, None).unwrap();
        let idx = knn_points(&p, &[1], 2, PointMetric::EuclideanPosition).unwrap();
        assert_eq!(idx.row(0), &[1, 0]);
    }

    #[test]
    fn k_larger_than_n_fails() {
        let p = line(3);
        assert_eq!(knn_points(&p, &[0], 4, PointMetric::EuclideanPosition), Err(GeometryError::KTooLarge { k: 4, n: 3 }));
    }

    #[test]
    fn group_with_all_centers_is_knn() {
        let p = line(6);
        let all: Vec<usize> = (0..6).collect();
        let a = group(&p, &all, 3, PointMetric::EuclideanPosition).unwrap();
        let b = knn_points(&p, &all, 3, PointMetric::EuclideanPosition).unwrap();
        assert_eq!(a, b);
        let single = group(&p, &[2], 6, PointMetric::EuclideanPosition).unwrap();
        assert_eq!(single.row(0), &[2, 1, 3, 0, 4, 5]);
    }

    #[test]
    fn matches_exhaustive_oracle() {
        for seed in 0..200u64 {
            let mut s = Stream::new(seed, &[200]);
            let n = 1 + s.below(64) as usize;
            let d = 1 + s.below(6) as usize;
            let k = 1 + s.below(n as u64) as usize;
            // Coarse grid values force plenty of exact ties.
            let data: Vec<f64> = (0..n * d).map(|_| (s.below(5) as f64) - 2.0).collect();
            let rows = Rows::new(&data, d).unwrap();
            let queries: Vec<usize> = (0..n).collect();
            for metric in [Metric::Euclidean, Metric::Cosine(CosineDenominator::Max), Metric::Cosine(CosineDenominator::Product)] {
                let got = knn(rows, &queries, k, metric).unwrap();
                for &q in &queries {
                    assert_eq!(got.row(q), oracle(rows, q, k, metric).as_slice(), "seed {seed} q {q}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn permutation_preserves_distance_multisets(seed in 0u64..10_000) {
            let mut s = Stream::new(seed, &[201]);
            let n = 2 + s.below(30) as usize;
            let k = 1 + s.below(n as u64) as usize;
            let positions: Vec<f64> = (0..n).flat_map(|_| [s.uniform(), s.uniform(), 1.0]).collect();
            let p = PointSet::new(positions, vec![0.0; n], 1, None).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            s.shuffle(&mut perm);
            let q = p.select(&perm);
            let all: Vec<usize> = (0..n).collect();
            let a = knn_points(&p, &all, k, PointMetric::EuclideanPosition).unwrap();
            let b = knn_points(&q, &all, k, PointMetric::EuclideanPosition).unwrap();
            for (new_i, &old_i) in perm.iter().enumerate() {
                let da: Vec<u64> = a.row(old_i).iter().map(|&j| super::super::euclidean_distance(p.position(old_i), p.position(j)).to_bits()).collect();
                let db: Vec<u64> = b.row(new_i).iter().map(|&j| super::super::euclidean_distance(q.position(new_i), q.position(j)).to_bits()).collect();
                prop_assert_eq!(da, db);
            }
        }
    }
}
