/// Floor on the cosine denominator, which makes zero vectors well defined.
pub const COSINE_EPS: f64 = 1e-8;

/// Normalizer used by the cosine distance.
///
/// `Max` divides the dot product by the larger of the two norms, which is the
/// form the model is built around. `Product` is the textbook cosine distance.
/// The two agree on unit vectors only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CosineDenominator {
    #[default]
    Max,
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Cosine(CosineDenominator),
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => euclidean_distance(a, b),
            Metric::Cosine(d) => cosine_distance(a, b, d),
        }
    }
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `1 - a·b / max(‖a‖, ‖b‖, 1e-8)` (or the product of norms for
/// [`CosineDenominator::Product`]).
pub fn cosine_distance(a: &[f64], b: &[f64], denominator: CosineDenominator) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine_distance needs equal lengths");
    cosine_distance_with_norms(a, b, norm(a), norm(b), denominator)
}

/// [`cosine_distance`] with precomputed norms; bit-identical to it.
pub fn cosine_distance_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64, denominator: CosineDenominator) -> f64 {
    cosine_from_dot(dot(a, b), na, nb, denominator)
}

/// Cosine distance from a precomputed dot product and norms.
pub fn cosine_from_dot(dot: f64, na: f64, nb: f64, denominator: CosineDenominator) -> f64 {
    let scale = match denominator {
        CosineDenominator::Max => na.max(nb).max(COSINE_EPS),
        CosineDenominator::Product => (na * nb).max(COSINE_EPS),
    };
    1.0 - dot / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MAX: CosineDenominator = CosineDenominator::Max;

    #[test]
    fn worked_values() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0], MAX), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0], MAX), 1.0);
        assert_eq!(cosine_distance(&[2.0, 0.0], &[1.0, 0.0], MAX), 0.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 0.0], MAX), 1.0);
    }

    #[test]
    fn max_and_product_differ_off_the_unit_sphere() {
        let a = [2.0, 0.0];
        assert_eq!(cosine_distance(&a, &a, MAX), -1.0);
        assert_eq!(cosine_distance(&a, &a, CosineDenominator::Product), 0.0);
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 4)
    }

    proptest! {
        #[test]
        fn symmetric(a in vec_strategy(), b in vec_strategy()) {
            for d in [MAX, CosineDenominator::Product] {
                prop_assert_eq!(cosine_distance(&a, &b, d), cosine_distance(&b, &a, d));
            }
        }

        #[test]
        fn self_distance_zero_for_unit_vectors(a in vec_strategy()) {
            let n = norm(&a);
            prop_assume!(n > 1e-3);
            let unit: Vec<f64> = a.iter().map(|v| v / n).collect();
            prop_assert!(cosine_distance(&unit, &unit, MAX).abs() < 1e-12);
            prop_assert!(cosine_distance(&a, &a, CosineDenominator::Product).abs() < 1e-12);
        }

        #[test]
        fn bounded_by_two_on_unit_vectors(a in vec_strategy(), b in vec_strategy()) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let ua: Vec<f64> = a.iter().map(|v| v / norm(&a)).collect();
            let ub: Vec<f64> = b.iter().map(|v| v / norm(&b)).collect();
            let d = cosine_distance(&ua, &ub, MAX);
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&d));
        }
    }
}
