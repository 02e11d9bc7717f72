use super::FederationError;
use crate::geometry::Label;

/// Area under the ROC curve as the Mann-Whitney statistic: the chance that
/// a random positive scores above a random negative, ties counting one half.
///
/// Computed from midranks, so it depends on the scores only through their
/// order and ties.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64, FederationError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(FederationError::UndefinedAuc { positives: n_pos, negatives: n_neg });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(FederationError::NanScore(i));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives keeps midranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2.
        let twice_mid = (i + j + 2) as u128;
        let pos = order[i..=j].iter().filter(|&&k| labels[k].is_positive()).count() as u128;
        rank_sum2 += pos * twice_mid;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}
