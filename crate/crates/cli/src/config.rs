//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Later assignments win, so command-line overrides are applied by feeding
//! them through [`RunConfig::set`] after the file.

use std::fmt;
use std::path::PathBuf;

use fedpoint::data::SiteSpec;
use fedpoint::demo::CoverageConfig;
use fedpoint::federated::{ScheduleKind, TrainConfig, Variant};
use fedpoint::geometry::CosineDenominator;
use fedpoint::model::{ModelConfig, Optimizer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub reason: String,
}

impl ConfigError {
    fn at(key: &str, reason: impl Into<String>) -> Self {
        Self { key: Some(key.to_string()), reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,

    // synthetic data
    /// One entry per generated site; site ids are the positions.
    pub positive_fractions: Vec<f64>,
    /// Site ids held out of training and scored only at the end.
    pub unseen_sites: Vec<u32>,
    pub n_slides: usize,
    pub points_per_slide: usize,
    pub feature_dim: usize,
    pub signal_fraction: f64,
    pub cluster_spread: f64,
    pub noise_scale: f64,
    pub signal_shift: f64,
    pub site_shift: f64,
    /// Where gen-data writes and training reads `site{id}/manifest.tsv`.
    pub data_dir: PathBuf,

    // model
    pub input_points: usize,
    pub widths: Vec<usize>,
    pub head_hidden: usize,
    pub slide_feature_dim: usize,
    pub k_attention: usize,
    pub k_grouping: usize,
    pub cosine_denominator: CosineDenominator,

    // training
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub schedule: ScheduleKind,
    pub optimizer: Optimizer,
    /// 0 means half the rounds.
    pub ramp_rounds: usize,

    /// Checkpoint scored by `eval`.
    pub checkpoint: Option<PathBuf>,

    pub demo_trials: usize,
    pub demo_points: usize,
    pub demo_dim: usize,
    pub demo_signal_fraction: f64,
    /// 0 means a quarter of the points.
    pub demo_keep: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let site = SiteSpec::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let demo = CoverageConfig::default();
        Self {
            seed: 0,
            variant: Variant::default(),
            positive_fractions: vec![0.1, 0.2, 0.35, 0.5, 0.3, 0.3],
            unseen_sites: vec![4, 5],
            n_slides: site.n_slides,
            points_per_slide: site.points_per_slide,
            feature_dim: site.feature_dim,
            signal_fraction: site.signal_fraction,
            cluster_spread: site.cluster_spread,
            noise_scale: site.noise_scale,
            signal_shift: site.signal_shift,
            site_shift: site.site_shift,
            data_dir: PathBuf::from("data"),
            input_points: model.input_points,
            widths: model.widths,
            head_hidden: model.head_hidden,
            slide_feature_dim: model.slide_feature_dim,
            k_attention: model.k_attention,
            k_grouping: model.k_grouping,
            cosine_denominator: model.cosine_denominator,
            rounds: train.rounds,
            local_epochs: train.local_epochs,
            lr: train.lr,
            batch_size: train.batch_size,
            schedule: train.schedule,
            optimizer: train.optimizer,
            ramp_rounds: 0,
            checkpoint: None,
            demo_trials: demo.trials,
            demo_points: demo.points,
            demo_dim: demo.feature_dim,
            demo_signal_fraction: demo.signal_fraction,
            demo_keep: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::at(key, format!("cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file's text on top of the defaults and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError { key: None, reason: format!("line {}: expected `key = value`", n + 1) })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = num(key, v)?,
            "variant" => self.variant = Variant::parse(v).map_err(|e| ConfigError::at(key, e.to_string()))?,
            "positive_fractions" => self.positive_fractions = list(key, v)?,
            "unseen_sites" => self.unseen_sites = list(key, v)?,
            "n_slides" => self.n_slides = num(key, v)?,
            "points_per_slide" => self.points_per_slide = num(key, v)?,
            "feature_dim" => self.feature_dim = num(key, v)?,
            "signal_fraction" => self.signal_fraction = num(key, v)?,
            "cluster_spread" => self.cluster_spread = num(key, v)?,
            "noise_scale" => self.noise_scale = num(key, v)?,
            "signal_shift" => self.signal_shift = num(key, v)?,
            "site_shift" => self.site_shift = num(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "input_points" => self.input_points = num(key, v)?,
            "widths" => self.widths = list(key, v)?,
            "head_hidden" => self.head_hidden = num(key, v)?,
            "slide_feature_dim" => self.slide_feature_dim = num(key, v)?,
            "k_attention" => self.k_attention = num(key, v)?,
            "k_grouping" => self.k_grouping = num(key, v)?,
            "cosine_denominator" => {
                self.cosine_denominator = match v {
                    "max" => CosineDenominator::Max,
                    "product" => CosineDenominator::Product,
                    _ => return Err(ConfigError::at(key, "expected `max` or `product`")),
                }
            }
            "rounds" => self.rounds = num(key, v)?,
            "local_epochs" => self.local_epochs = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "optimizer" => self.optimizer = Optimizer::parse(v).ok_or_else(|| ConfigError::at(key, "expected sgd or adam"))?,
            "schedule" => self.schedule = ScheduleKind::parse(v).ok_or_else(|| ConfigError::at(key, "expected linear, cosine or step"))?,
            "ramp_rounds" => self.ramp_rounds = num(key, v)?,
            "checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "demo_trials" => self.demo_trials = num(key, v)?,
            "demo_points" => self.demo_points = num(key, v)?,
            "demo_dim" => self.demo_dim = num(key, v)?,
            "demo_signal_fraction" => self.demo_signal_fraction = num(key, v)?,
            "demo_keep" => self.demo_keep = num(key, v)?,
            _ => return Err(ConfigError::at(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train_config().validate().map_err(|e| ConfigError { key: None, reason: e.to_string() })?;
        self.model_config().validate().map_err(|e| ConfigError { key: None, reason: e.to_string() })?;
        for (i, _) in self.positive_fractions.iter().enumerate() {
            self.site_spec(i as u32).validate().map_err(|e| ConfigError::at("positive_fractions", e.to_string()))?;
        }
        if let Some(&bad) = self.unseen_sites.iter().find(|&&s| s as usize >= self.positive_fractions.len()) {
            return Err(ConfigError::at("unseen_sites", format!("site {bad} is not generated")));
        }
        if self.training_sites().is_empty() {
            return Err(ConfigError::at("unseen_sites", "no site left for training"));
        }
        if self.demo_keep > self.demo_points {
            return Err(ConfigError::at("demo_keep", "larger than demo_points"));
        }
        Ok(())
    }

    pub fn site_spec(&self, site: u32) -> SiteSpec {
        SiteSpec {
            site_id: site,
            n_slides: self.n_slides,
            positive_fraction: self.positive_fractions.get(site as usize).copied().unwrap_or(f64::NAN),
            points_per_slide: self.points_per_slide,
            feature_dim: self.feature_dim,
            signal_fraction: self.signal_fraction,
            cluster_spread: self.cluster_spread,
            noise_scale: self.noise_scale,
            signal_shift: self.signal_shift,
            site_shift: self.site_shift,
            seed: self.seed,
            signal_seed: self.seed,
        }
    }

    pub fn all_sites(&self) -> Vec<u32> {
        (0..self.positive_fractions.len() as u32).collect()
    }

    pub fn training_sites(&self) -> Vec<u32> {
        self.all_sites().into_iter().filter(|s| !self.unseen_sites.contains(s)).collect()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_points: self.input_points,
            feature_dim: self.feature_dim,
            widths: self.widths.clone(),
            head_hidden: self.head_hidden,
            slide_feature_dim: self.slide_feature_dim,
            k_attention: self.k_attention,
            k_grouping: self.k_grouping,
            sampling: self.variant.sampling,
            cosine_denominator: self.cosine_denominator,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            dda: self.variant.dda,
            aux: self.variant.aux,
            schedule: self.schedule,
            optimizer: self.optimizer,
            ramp_rounds: (self.ramp_rounds > 0).then_some(self.ramp_rounds),
            seed: self.seed,
        }
    }

    pub fn coverage_config(&self) -> CoverageConfig {
        CoverageConfig {
            trials: self.demo_trials,
            points: self.demo_points,
            feature_dim: self.demo_dim,
            signal_fraction: self.demo_signal_fraction,
            keep: (self.demo_keep > 0).then_some(self.demo_keep),
            denominator: self.cosine_denominator,
            seed: self.seed,
        }
    }

    /// The resolved configuration in the same format it is read from.
    pub fn to_text(&self) -> String {
        let den = match self.cosine_denominator {
            CosineDenominator::Max => "max",
            CosineDenominator::Product => "product",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("variant", self.variant.to_string()),
            ("positive_fractions", join(&self.positive_fractions)),
            ("unseen_sites", join(&self.unseen_sites)),
            ("n_slides", self.n_slides.to_string()),
            ("points_per_slide", self.points_per_slide.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("signal_fraction", self.signal_fraction.to_string()),
            ("cluster_spread", self.cluster_spread.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("signal_shift", self.signal_shift.to_string()),
            ("site_shift", self.site_shift.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("input_points", self.input_points.to_string()),
            ("widths", join(&self.widths)),
            ("head_hidden", self.head_hidden.to_string()),
            ("slide_feature_dim", self.slide_feature_dim.to_string()),
            ("k_attention", self.k_attention.to_string()),
            ("k_grouping", self.k_grouping.to_string()),
            ("cosine_denominator", den.to_string()),
            ("rounds", self.rounds.to_string()),
            ("local_epochs", self.local_epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("schedule", self.schedule.as_str().to_string()),
            ("optimizer", self.optimizer.as_str().to_string()),
            ("ramp_rounds", self.ramp_rounds.to_string()),
            ("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("demo_trials", self.demo_trials.to_string()),
            ("demo_points", self.demo_points.to_string()),
            ("demo_dim", self.demo_dim.to_string()),
            ("demo_signal_fraction", self.demo_signal_fraction.to_string()),
            ("demo_keep", self.demo_keep.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
