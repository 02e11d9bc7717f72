use super::FederationError;
use crate::geometry::Label;
use crate::rng::Stream;

/// Shape of the ramp from `b0` to 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScheduleKind {
    #[default]
    Linear,
    /// Half-cosine ease from `b0` to 1.
    Cosine,
    /// `b0` until the ramp ends, then 1.
    Step,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Self::Linear),
            "cosine" => Some(Self::Cosine),
            "step" => Some(Self::Step),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Cosine => "cosine",
            Self::Step => "step",
        }
    }
}

/// Keep-probability of majority-class (negative) slides by round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdaSchedule {
    b0: f64,
    ramp_rounds: usize,
    kind: ScheduleKind,
}

impl DdaSchedule {
    pub fn new(b0: f64, ramp_rounds: usize, kind: ScheduleKind) -> Result<Self, FederationError> {
        if !(b0 > 0.0 && b0 <= 1.0) {
            return Err(FederationError::Config(format!("initial keep probability {b0} is outside (0, 1]")));
        }
        Ok(Self { b0, ramp_rounds, kind })
    }

    /// `b0 = min(1, n_pos / n_neg)`, so that at round 0 the expected number
    /// of kept negatives matches the positives. A site without positives
    /// keeps everything.
    pub fn for_counts(n_neg: usize, n_pos: usize, ramp_rounds: usize, kind: ScheduleKind) -> Self {
        let b0 = if n_pos == 0 || n_neg == 0 { 1.0 } else { (n_pos as f64 / n_neg as f64).min(1.0) };
        Self { b0, ramp_rounds, kind }
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn ramp_rounds(&self) -> usize {
        self.ramp_rounds
    }

    pub fn keep_probability(&self, round: usize) -> f64 {
        if round >= self.ramp_rounds {
            return 1.0;
        }
        let t = round as f64 / self.ramp_rounds as f64;
        let b = match self.kind {
            ScheduleKind::Linear => self.b0 + (1.0 - self.b0) * t,
            ScheduleKind::Cosine => self.b0 + (1.0 - self.b0) * 0.5 * (1.0 - (std::f64::consts::PI * t).cos()),
            ScheduleKind::Step => self.b0,
        };
        b.min(1.0)
    }
}

pub fn dda_keep_probability(round: usize, schedule: &DdaSchedule) -> f64 {
    schedule.keep_probability(round)
}

/// Positives are always kept; each negative is kept with probability
/// `keep`. At `keep == 1` no random draws are made.
pub fn sample_mask(labels: &[Label], keep: f64, rng: &mut Stream) -> Vec<bool> {
    labels
        .iter()
        .map(|l| l.is_positive() || keep >= 1.0 || rng.bernoulli(keep))
        .collect()
}
