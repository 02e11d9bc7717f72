//! Simulated federated training.
//!
//! Every round, each site loads the global backbone, trains it together
//! with its own auxiliary head for a few local epochs, and the backbones are
//! averaged with weights proportional to the sites' training-set sizes. The
//! auxiliary heads never leave their site. Negative slides can be
//! subsampled with a probability that ramps up to 1 over the first rounds
//! ([`DdaSchedule`]).

mod auc;
mod dda;
mod metrics;
mod train;

pub use auc::roc_auc;
pub use dda::{dda_keep_probability, sample_mask, DdaSchedule, ScheduleKind};
pub use metrics::{write_metrics_csv, MetricsRow, RunSummary, METRICS_HEADER};
pub use train::{
    aggregate, evaluate, local_update, run_centralized, run_federation, slide_gradients, Federation, LocalUpdate, RoundReport,
    RunOutcome, SiteEval, SiteState,
};

use std::fmt;

use thiserror::Error;

use crate::model::{ModelError, Optimizer, Sampling};

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("AUC is undefined with {positives} positives and {negatives} negatives")]
    UndefinedAuc { positives: usize, negatives: usize },
    #[error("score {0} is NaN")]
    NanScore(usize),
    #[error("round {round}: every site skipped all of its batches")]
    NoUsableSites { round: usize },
    #[error("sites disagree on parameter `{0}`")]
    ParamMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

impl From<crate::engine::EngineError> for FederationError {
    fn from(e: crate::engine::EngineError) -> Self {
        FederationError::Model(e.into())
    }
}

/// Sampling rule plus the two optional training mechanisms.
///
/// Written `fps` or `fcs`, optionally followed by `+dda` and `+aux`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub sampling: Sampling,
    pub dda: bool,
    pub aux: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Self { sampling: Sampling::Fcs, dda: true, aux: false }
    }
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self, FederationError> {
        let mut parts = s.split('+');
        let sampling = match parts.next() {
            Some("fcs") => Sampling::Fcs,
            Some("fps") => Sampling::Fps,
            _ => return Err(FederationError::Config(format!("variant `{s}` must start with fps or fcs"))),
        };
        let mut v = Variant { sampling, dda: false, aux: false };
        for p in parts {
            let flag = match p {
                "dda" => &mut v.dda,
                "aux" => &mut v.aux,
                _ => return Err(FederationError::Config(format!("unknown variant flag `{p}` in `{s}`"))),
            };
            if *flag {
                return Err(FederationError::Config(format!("flag `{p}` repeated in `{s}`")));
            }
            *flag = true;
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.sampling {
            Sampling::Fcs => "fcs",
            Sampling::Fps => "fps",
        })?;
        if self.dda {
            f.write_str("+dda")?;
        }
        if self.aux {
            f.write_str("+aux")?;
        }
        Ok(())
    }
}

/// Training hyperparameters shared by federated and centralized runs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    /// Slides per minibatch; 0 means the whole training split.
    pub batch_size: usize,
    pub dda: bool,
    pub aux: bool,
    pub schedule: ScheduleKind,
    /// Optimizer state, if any, stays on its site across rounds.
    pub optimizer: Optimizer,
    /// Rounds until the keep probability reaches 1; `None` means half of
    /// `rounds`.
    pub ramp_rounds: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            local_epochs: 1,
            lr: 0.05,
            batch_size: 8,
            dda: true,
            aux: false,
            schedule: ScheduleKind::Linear,
            optimizer: Optimizer::Sgd,
            ramp_rounds: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FederationError> {
        let bad = |m: &str| Err(FederationError::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative and finite");
        }
        if self.rounds == 0 || self.local_epochs == 0 {
            return bad("rounds and local_epochs must be at least 1");
        }
        Ok(())
    }

    pub fn ramp(&self) -> usize {
        self.ramp_rounds.unwrap_or(self.rounds / 2)
    }
}
