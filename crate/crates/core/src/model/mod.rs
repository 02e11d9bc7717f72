//! The point transformer classifier.
//!
//! A slide of `input_points` points is embedded to `widths[0]` channels and
//! passed through one stage per entry of `widths`. Each stage runs a vector
//! attention block over Euclidean k-nearest neighborhoods and then an
//! abstraction block that keeps a quarter of the points (chosen by farthest
//! cosine sampling or, for the baseline, farthest point sampling) and max-pools
//! an MLP over each kept point's neighborhood. The four surviving points are
//! averaged, passed through a two-layer MLP to the 64-wide slide feature, and
//! classified by a linear layer with softmax.
//!
//! With the default configuration the point counts run 1024, 256, 64, 16, 4
//! and the channel widths 64, 128, 256, 512, 512.

mod block;
pub mod checkpoint;
mod heads;
mod params;

pub use block::{abstraction_block, position_encoding, transformer_block, BlockOutput, BlockParams, MlpParams, StageOutput};
pub use heads::{aux_loss, aux_probs, class_probs, one_hot, sample_objective, total_loss, LossOutcome, LossTerms, SitePrior};
pub use params::{accumulate, init_uniform, Bound, GradMap, Optimizer, OptimizerState, Param, ParamGroup, ParamStore};

use thiserror::Error;

use crate::engine::{EngineError, ReduceKind, Tape, Var};
use crate::geometry::{CosineDenominator, GeometryError, PointSet};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("input has {found:?} (points, features), model expects {expected:?}")]
    InputShape { expected: (usize, usize), found: (usize, usize) },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("abstraction needs at least 4 points and a multiple of 4, got {0}")]
    StagePoints(usize),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("label prior must be strictly inside (0, 1), got ({0}, {1})")]
    InvalidPrior(f64, f64),
}

/// Down-sampling rule of the abstraction blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Sampling {
    /// Farthest cosine sampling in feature space.
    #[default]
    Fcs,
    /// Farthest point sampling on positions.
    Fps,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_points: usize,
    pub feature_dim: usize,
    /// Channel width of each stage; its length is the number of stages.
    pub widths: Vec<usize>,
    pub head_hidden: usize,
    pub slide_feature_dim: usize,
    pub k_attention: usize,
    pub k_grouping: usize,
    pub sampling: Sampling,
    pub cosine_denominator: CosineDenominator,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_points: 1024,
            feature_dim: 256,
            widths: vec![64, 128, 256, 512],
            head_hidden: 256,
            slide_feature_dim: 64,
            k_attention: 16,
            k_grouping: 16,
            sampling: Sampling::Fcs,
            cosine_denominator: CosineDenominator::Max,
        }
    }
}

/// Shape of one transformer + abstraction stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageConfig {
    pub in_points: usize,
    pub out_points: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub k_attention: usize,
    pub k_grouping: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return err("stage widths must be non-empty and positive".into());
        }
        let shrink = 4usize.checked_pow(self.widths.len() as u32).unwrap_or(usize::MAX);
        if !self.input_points.is_multiple_of(shrink) || self.input_points < shrink {
            return err(format!(
                "input_points = {} is not divisible by 4^{} = {shrink}",
                self.input_points,
                self.widths.len()
            ));
        }
        if self.feature_dim == 0 || self.head_hidden == 0 || self.slide_feature_dim == 0 {
            return err("feature_dim, head_hidden and slide_feature_dim must be positive".into());
        }
        if self.k_attention == 0 || self.k_grouping == 0 {
            return err("neighborhood sizes must be positive".into());
        }
        Ok(())
    }

    /// Per-stage shapes. Neighborhood sizes are capped at the stage's point
    /// count.
    pub fn stages(&self) -> Vec<StageConfig> {
        let mut points = self.input_points;
        let last = *self.widths.last().expect("validated");
        (0..self.widths.len())
            .map(|s| {
                let stage = StageConfig {
                    in_points: points,
                    out_points: points / 4,
                    in_channels: self.widths[s],
                    out_channels: self.widths.get(s + 1).copied().unwrap_or(last),
                    k_attention: self.k_attention.min(points),
                    k_grouping: self.k_grouping.min(points),
                };
                points /= 4;
                stage
            })
            .collect()
    }

    pub fn final_points(&self) -> usize {
        self.input_points / 4usize.pow(self.widths.len() as u32)
    }

    pub fn final_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Final abstract points, `[final_points, final_width]`.
    pub f_g: Var,
    /// Slide feature, `[1, slide_feature_dim]`.
    pub f_h: Var,
    /// Class probabilities, `[1, 2]`.
    pub probs: Var,
    /// Point count entering each stage, followed by the final count.
    pub stage_points: Vec<usize>,
    /// Attention weights of each stage, `[points, k, channels]`.
    pub attention: Vec<Var>,
    /// Indices kept by each abstraction block, relative to its input.
    pub centers: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Backbone and main classifier weights, seeded.
    pub fn init_backbone(&self, seed: u64) -> ParamStore {
        let c = &self.config;
        let mut p = ParamStore::new();
        let g = ParamGroup::Backbone;
        p.insert_linear("embed", g, 3 + c.feature_dim, c.widths[0], true, seed);
        for (s, st) in c.stages().iter().enumerate() {
            let w = st.in_channels;
            for name in ["w_i", "w_j", "w_q", "w_v", "w_z"] {
                let path = format!("stage{s}.attn.{name}");
                p.insert(path.clone(), g, init_uniform(&[w, w], w, seed, crate::rng::label::INIT, &path));
            }
            p.insert_linear(&format!("stage{s}.attn.pe.l1"), g, 3, w, true, seed);
            p.insert_linear(&format!("stage{s}.attn.pe.l2"), g, w, w, true, seed);
            p.insert_linear(&format!("stage{s}.down.l1"), g, w, st.out_channels, true, seed);
            p.insert_linear(&format!("stage{s}.down.l2"), g, st.out_channels, st.out_channels, true, seed);
        }
        p.insert_linear("head.fh.l1", g, c.final_width(), c.head_hidden, true, seed);
        p.insert_linear("head.fh.l2", g, c.head_hidden, c.slide_feature_dim, true, seed);
        p.insert_linear("head.fc", g, c.slide_feature_dim, 2, true, seed);
        p
    }

    /// Site-local auxiliary head.
    pub fn init_aux(&self, seed: u64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert_linear("aux", ParamGroup::Aux, self.config.slide_feature_dim, 2, true, seed);
        p
    }

    /// Backbone plus auxiliary head.
    pub fn init_params(&self, seed: u64, aux_seed: u64) -> ParamStore {
        let mut p = self.init_backbone(seed);
        p.extend_from(&self.init_aux(aux_seed));
        p
    }

    /// Slide feature and class probabilities for one point set.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: &PointSet) -> Result<Forward, ModelError> {
        let c = &self.config;
        if input.len() != c.input_points || input.dim() != c.feature_dim {
            return Err(ModelError::InputShape {
                expected: (c.input_points, c.feature_dim),
                found: (input.len(), input.dim()),
            });
        }
        let x_in = tape.constant(input.input_matrix())?;
        let mut x = tape.linear(x_in, params.var("embed.weight")?, Some(params.var("embed.bias")?))?;
        let mut positions: Vec<f64> = (0..input.len()).flat_map(|i| input.position(i).to_vec()).collect();
        let mut stage_points = Vec::new();
        let mut attention = Vec::new();
        let mut centers = Vec::new();

        for (s, stage) in c.stages().iter().enumerate() {
            stage_points.push(stage.in_points);
            let rows = crate::geometry::Rows::new(&positions, 3)?;
            let all: Vec<usize> = (0..stage.in_points).collect();
            let nbr = crate::geometry::knn(rows, &all, stage.k_attention, crate::geometry::Metric::Euclidean)?;
            let block = BlockParams::bind(params, s)?;
            let out = transformer_block(tape, x, &positions, &nbr, &block)?;
            attention.push(out.attention);
            let mlp = MlpParams::bind(params, &format!("stage{s}.down"))?;
            let down = abstraction_block(tape, out.y, &positions, stage, &mlp, c.sampling, c.cosine_denominator)?;
            x = down.features;
            positions = down.positions;
            centers.push(down.centers);
        }
        stage_points.push(c.final_points());

        let f_g = x;
        let gap = tape.reduce(f_g, ReduceKind::Mean, 0)?;
        let gap = tape.reshape(gap, &[1, c.final_width()])?;
        let h = tape.linear(gap, params.var("head.fh.l1.weight")?, Some(params.var("head.fh.l1.bias")?))?;
        let h = tape.relu(h)?;
        let h = tape.linear(h, params.var("head.fh.l2.weight")?, Some(params.var("head.fh.l2.bias")?))?;
        let f_h = tape.relu(h)?;
        let probs = class_probs(tape, params, f_h)?;
        Ok(Forward { f_g, f_h, probs, stage_points, attention, centers })
    }
}
