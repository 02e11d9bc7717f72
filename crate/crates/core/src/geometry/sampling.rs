use super::{distance, CosineDenominator, GeometryError, Metric, Rows};

/// How the first point of a greedy max-min sample is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StartRule {
    /// The point farthest from the centroid of all rows.
    #[default]
    FarthestFromCentroid,
    Index(usize),
}

fn argmax_first(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Greedy max-min sampling of `m` rows under `metric`, in selection order.
///
/// Keeps, for every unselected row, its minimum distance to the selected
/// set and repeatedly takes the row where that minimum is largest.
pub fn farthest_sampling(rows: Rows<'_>, m: usize, start: StartRule, metric: Metric) -> Result<Vec<usize>, GeometryError> {
    let n = rows.len();
    if m == 0 || m > n {
        return Err(GeometryError::SampleSize { m, n });
    }
    let norms: Vec<f64> = match metric {
        Metric::Cosine(_) => (0..n).map(|i| distance::norm(rows.row(i))).collect(),
        Metric::Euclidean => Vec::new(),
    };
    let dist = |i: usize, j: usize| match metric {
        Metric::Euclidean => distance::euclidean_distance(rows.row(i), rows.row(j)),
        Metric::Cosine(d) => distance::cosine_distance_with_norms(rows.row(i), rows.row(j), norms[i], norms[j], d),
    };

    let first = match start {
        StartRule::Index(i) if i < n => i,
        StartRule::Index(i) => return Err(GeometryError::QueryOutOfRange { index: i, n }),
        StartRule::FarthestFromCentroid => {
            let c = rows.centroid();
            argmax_first((0..n).map(|i| (i, metric.distance(rows.row(i), &c)))).expect("n >= 1")
        }
    };

    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut next = first;
    loop {
        selected.push(next);
        taken[next] = true;
        if selected.len() == m {
            return Ok(selected);
        }
        for j in 0..n {
            if !taken[j] {
                min_dist[j] = min_dist[j].min(dist(next, j));
            }
        }
        next = argmax_first((0..n).filter(|&j| !taken[j]).map(|j| (j, min_dist[j]))).expect("m <= n");
    }
}

/// Farthest cosine sampling over feature rows.
pub fn farthest_cosine_sampling(
    features: Rows<'_>,
    m: usize,
    start: StartRule,
    denominator: CosineDenominator,
) -> Result<Vec<usize>, GeometryError> {
    farthest_sampling(features, m, start, Metric::Cosine(denominator))
}

/// Farthest point sampling over positions.
pub fn farthest_point_sampling(positions: Rows<'_>, m: usize) -> Result<Vec<usize>, GeometryError> {
    farthest_sampling(positions, m, StartRule::FarthestFromCentroid, Metric::Euclidean)
}
