//! Cluster coverage of farthest cosine sampling versus farthest point
//! sampling.
//!
//! Each trial draws one positive synthetic slide, keeps a quarter of its
//! points with each sampler and records how many of the clustered signal
//! points survive. Sampling in feature space reaches the small, spatially
//! tight signal clusters that position-space sampling mostly skips.

use std::io::{self, Write};

use crate::data::{generate_slide, SiteSpec};
use crate::geometry::{farthest_cosine_sampling, farthest_point_sampling, CosineDenominator, Label, StartRule};
use crate::rng::mix64;

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageConfig {
    pub trials: usize,
    pub points: usize,
    pub feature_dim: usize,
    pub signal_fraction: f64,
    /// Points kept by each sampler; `None` means a quarter.
    pub keep: Option<usize>,
    pub denominator: CosineDenominator,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            points: 1024,
            feature_dim: 64,
            signal_fraction: 0.03,
            keep: None,
            denominator: CosineDenominator::Max,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoverageTrial {
    pub trial: usize,
    pub signal_points: usize,
    pub fcs_hits: usize,
    pub fps_hits: usize,
}

pub fn coverage_trials(cfg: &CoverageConfig) -> Result<Vec<CoverageTrial>, crate::Error> {
    let keep = cfg.keep.unwrap_or(cfg.points / 4);
    (0..cfg.trials)
        .map(|trial| {
            let spec = SiteSpec {
                n_slides: 1,
                points_per_slide: cfg.points,
                feature_dim: cfg.feature_dim,
                signal_fraction: cfg.signal_fraction,
                seed: mix64(cfg.seed ^ mix64(trial as u64)),
                signal_seed: cfg.seed,
                ..SiteSpec::default()
            };
            let g = generate_slide(&spec, 0, Label::Positive)?;
            let points = g.slide.to_point_set();
            let fcs = farthest_cosine_sampling(points.features(), keep, StartRule::FarthestFromCentroid, cfg.denominator)?;
            let fps = farthest_point_sampling(points.positions(), keep)?;
            let hits = |sel: &[usize]| sel.iter().filter(|i| g.signal.binary_search(i).is_ok()).count();
            Ok(CoverageTrial { trial, signal_points: g.signal.len(), fcs_hits: hits(&fcs), fps_hits: hits(&fps) })
        })
        .collect()
}

/// Fraction of trials in which each sampler kept at least one signal point,
/// as `(fcs, fps)`.
pub fn coverage_rates(trials: &[CoverageTrial]) -> (f64, f64) {
    let n = trials.len().max(1) as f64;
    let fcs = trials.iter().filter(|t| t.fcs_hits > 0).count() as f64 / n;
    let fps = trials.iter().filter(|t| t.fps_hits > 0).count() as f64 / n;
    (fcs, fps)
}

/// One row per trial, then a `mean` row with the coverage rates.
pub fn write_coverage_csv<W: Write>(trials: &[CoverageTrial], mut out: W) -> io::Result<()> {
    writeln!(out, "trial,signal_points,fcs_hits,fps_hits,fcs_covered,fps_covered")?;
    for t in trials {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.trial,
            t.signal_points,
            t.fcs_hits,
            t.fps_hits,
            u8::from(t.fcs_hits > 0),
            u8::from(t.fps_hits > 0)
        )?;
    }
    let (fcs, fps) = coverage_rates(trials);
    writeln!(out, "mean,,,,{fcs},{fps}")
}
