use super::{Bound, ModelError};
use crate::engine::{Tape, Tensor, Var};
use crate::geometry::Label;

/// Empirical label frequencies `(π₀, π₁)` of a site's full training set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SitePrior {
    negative: f64,
    positive: f64,
}

impl SitePrior {
    pub fn new(negative: f64, positive: f64) -> Result<Self, ModelError> {
        let total = negative + positive;
        if !(negative > 0.0 && positive > 0.0 && total.is_finite()) {
            return Err(ModelError::InvalidPrior(negative, positive));
        }
        Ok(Self { negative: negative / total, positive: positive / total })
    }

    pub fn uniform() -> Self {
        Self { negative: 0.5, positive: 0.5 }
    }

    pub fn from_labels(labels: &[Label]) -> Result<Self, ModelError> {
        let pos = labels.iter().filter(|l| l.is_positive()).count();
        Self::new((labels.len() - pos) as f64, pos as f64)
    }

    pub fn negative(&self) -> f64 {
        self.negative
    }

    pub fn positive(&self) -> f64 {
        self.positive
    }

    pub fn log_prior(&self) -> [f64; 2] {
        [self.negative.ln(), self.positive.ln()]
    }
}

pub fn one_hot(labels: &[Label]) -> Tensor {
    let rows: Vec<[f64; 2]> = labels
        .iter()
        .map(|l| match l {
            Label::Negative => [1.0, 0.0],
            Label::Positive => [0.0, 1.0],
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// `softmax(F_h W_c + b_c)`, the main classifier.
pub fn class_probs(tape: &mut Tape, params: &Bound, f_h: Var) -> Result<Var, ModelError> {
    let logits = tape.linear(f_h, params.var("head.fc.weight")?, Some(params.var("head.fc.bias")?))?;
    Ok(tape.softmax(logits, 1)?)
}

/// Auxiliary head: logits shifted by the site's log label prior.
pub fn aux_probs(tape: &mut Tape, params: &Bound, f_h: Var, prior: &SitePrior) -> Result<Var, ModelError> {
    let logits = tape.linear(f_h, params.var("aux.weight")?, Some(params.var("aux.bias")?))?;
    let shift = tape.constant(Tensor::vector(&prior.log_prior()))?;
    let logits = tape.add_row(logits, shift)?;
    Ok(tape.softmax(logits, 1)?)
}

fn check_batch(tape: &Tape, f_h: Var, labels: &[Label]) -> Result<(), ModelError> {
    if labels.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if tape.shape(f_h)[0] != labels.len() {
        return Err(ModelError::Config(format!(
            "{} slide features for {} labels",
            tape.shape(f_h)[0],
            labels.len()
        )));
    }
    Ok(())
}

/// Negative log-likelihood of the auxiliary head over the whole batch,
/// ignoring any subsampling mask.
pub fn aux_loss(tape: &mut Tape, params: &Bound, f_h: Var, labels: &[Label], prior: &SitePrior) -> Result<Var, ModelError> {
    check_batch(tape, f_h, labels)?;
    let p = aux_probs(tape, params, f_h, prior)?;
    Ok(tape.cross_entropy(p, &one_hot(labels))?)
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub cls: Var,
    pub aux: Option<Var>,
    pub total: Var,
}

#[derive(Clone, Copy, Debug)]
pub enum LossOutcome {
    /// Every sample was masked out; the batch produces no update.
    Skipped,
    Computed(LossTerms),
}

/// `L_total = L_cls + L_aux`.
///
/// `L_cls` is the cross-entropy of the main head averaged over the kept
/// samples. `L_aux` is present when a prior is given.
pub fn total_loss(
    tape: &mut Tape,
    params: &Bound,
    f_h: Var,
    labels: &[Label],
    mask: &[bool],
    prior: Option<&SitePrior>,
) -> Result<LossOutcome, ModelError> {
    check_batch(tape, f_h, labels)?;
    if mask.len() != labels.len() {
        return Err(ModelError::Config(format!("mask of {} for {} labels", mask.len(), labels.len())));
    }
    let kept = mask.iter().filter(|&&m| m).count();
    if kept == 0 {
        return Ok(LossOutcome::Skipped);
    }
    let weights: Vec<f64> = mask.iter().map(|&m| if m { 1.0 / kept as f64 } else { 0.0 }).collect();
    let p = class_probs(tape, params, f_h)?;
    let cls = tape.weighted_cross_entropy(p, &one_hot(labels), &weights)?;
    let (aux, total) = match prior {
        Some(prior) => {
            let aux = aux_loss(tape, params, f_h, labels, prior)?;
            (Some(aux), tape.add(cls, aux)?)
        }
        None => (None, cls),
    };
    Ok(LossOutcome::Computed(LossTerms { cls, aux, total }))
}

/// One sample's share of [`total_loss`]: `cls_weight · CE + aux_weight · NLL_aux`.
///
/// With `cls_weight = mask / kept` and `aux_weight = 1 / batch`, the sum of
/// these objectives over a batch equals its `L_total`, which lets each slide
/// be differentiated on its own tape.
pub fn sample_objective(
    tape: &mut Tape,
    params: &Bound,
    f_h: Var,
    label: Label,
    cls_weight: f64,
    aux: Option<(f64, &SitePrior)>,
) -> Result<Var, ModelError> {
    let target = one_hot(&[label]);
    let p = class_probs(tape, params, f_h)?;
    let cls = tape.weighted_cross_entropy(p, &target, &[cls_weight])?;
    match aux {
        Some((w, prior)) => {
            let q = aux_probs(tape, params, f_h, prior)?;
            let a = tape.weighted_cross_entropy(q, &target, &[w])?;
            Ok(tape.add(cls, a)?)
        }
        None => Ok(cls),
    }
}
