use rayon::prelude::*;

use super::metrics::{MetricsRow, RunSummary};
use super::{roc_auc, sample_mask, DdaSchedule, FederationError, TrainConfig};
use crate::data::{eval_stream, subsample_stream, SiteData, Slide, Split};
use crate::engine::{Tape, PROB_FLOOR};
use crate::geometry::Label;
use crate::model::{accumulate, sample_objective, GradMap, Model, OptimizerState, ParamGroup, ParamStore, SitePrior};
use crate::rng::{label, mix64, Stream};

/// One site's private training context.
#[derive(Clone, Debug)]
pub struct SiteState<'a> {
    pub data: &'a SiteData,
    /// Local copy of the backbone plus this site's auxiliary head.
    pub local: ParamStore,
    pub prior: SitePrior,
    pub schedule: Option<DdaSchedule>,
    pub n_neg: usize,
    pub n_pos: usize,
    pub optimizer: OptimizerState,
}

impl<'a> SiteState<'a> {
    pub fn new(model: &Model, data: &'a SiteData, backbone: &ParamStore, cfg: &TrainConfig) -> Result<Self, FederationError> {
        let (n_neg, n_pos) = data.label_counts(Split::Train);
        if n_neg + n_pos == 0 {
            return Err(FederationError::Config(format!("site {} has no training slides", data.site_id)));
        }
        // A one-class training split has no usable frequency for the other
        // class; half a count stands in for it.
        let prior = SitePrior::new((n_neg as f64).max(0.5), (n_pos as f64).max(0.5))?;
        let schedule = cfg.dda.then(|| DdaSchedule::for_counts(n_neg, n_pos, cfg.ramp(), cfg.schedule));
        let mut local = backbone.clone();
        local.extend_from(&model.init_aux(mix64(cfg.seed ^ mix64(u64::from(data.site_id)))));
        Ok(Self { data, local, prior, schedule, n_neg, n_pos, optimizer: OptimizerState::default() })
    }

    pub fn site_id(&self) -> u32 {
        self.data.site_id
    }

    pub fn backbone(&self) -> ParamStore {
        self.local.subset(ParamGroup::Backbone)
    }

    pub fn aux(&self) -> ParamStore {
        self.local.subset(ParamGroup::Aux)
    }
}

/// Result of one site's local training in a round.
#[derive(Clone, Debug)]
pub struct LocalUpdate {
    pub site_id: u32,
    pub backbone: ParamStore,
    /// Training-set size, the aggregation weight before normalization.
    pub samples: usize,
    pub mean_loss: f64,
    pub kept: usize,
    pub seen: usize,
    pub skipped_batches: usize,
    /// Every batch of some epoch was skipped; the site is left out of the
    /// average.
    pub degenerate: bool,
}

impl LocalUpdate {
    pub fn kept_frac(&self) -> f64 {
        if self.seen == 0 {
            return 0.0;
        }
        self.kept as f64 / self.seen as f64
    }
}

/// Objective value and parameter gradients of one slide.
///
/// The slide is subsampled to the model's input size with the stream for
/// `(seed, slide id, epoch)`.
pub fn slide_gradients(
    model: &Model,
    params: &ParamStore,
    slide: &Slide,
    epoch: u64,
    seed: u64,
    cls_weight: f64,
    aux: Option<(f64, &SitePrior)>,
) -> Result<(f64, GradMap), FederationError> {
    let input = slide.subsample(model.config().input_points, &mut subsample_stream(seed, slide.id(), epoch))?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true)?;
    let out = model.forward(&mut tape, &bound, &input)?;
    let obj = sample_objective(&mut tape, &bound, out.f_h, slide.label(), cls_weight, aux)?;
    let value = tape.value(obj).data()[0];
    let grads = tape.backward(obj)?;
    Ok((value, bound.gradients(&grads)))
}

/// Trains `site.local` in place for `cfg.local_epochs` epochs of minibatch
/// descent on `L_cls` (plus `L_aux` when enabled) and returns the backbone.
pub fn local_update(model: &Model, site: &mut SiteState<'_>, round: usize, cfg: &TrainConfig) -> Result<LocalUpdate, FederationError> {
    let site_id = u64::from(site.site_id());
    let train: Vec<&Slide> = site.data.split(Split::Train).collect();
    let batch = if cfg.batch_size == 0 { train.len() } else { cfg.batch_size };
    let keep = site.schedule.map_or(1.0, |s| s.keep_probability(round));
    let (mut kept, mut seen, mut skipped, mut loss_sum, mut loss_batches) = (0, 0, 0, 0.0, 0);
    let mut degenerate = false;

    for e in 0..cfg.local_epochs {
        let epoch = (round * cfg.local_epochs + e) as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        Stream::new(cfg.seed, &[label::SHUFFLE, site_id, round as u64, e as u64]).shuffle(&mut order);
        let mut used = 0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let labels: Vec<Label> = chunk.iter().map(|&i| train[i].label()).collect();
            let mask = if keep < 1.0 {
                sample_mask(&labels, keep, &mut Stream::new(cfg.seed, &[label::MASK, site_id, round as u64, e as u64, b as u64]))
            } else {
                vec![true; chunk.len()]
            };
            let n_kept = mask.iter().filter(|&&m| m).count();
            seen += chunk.len();
            kept += n_kept;
            if n_kept == 0 {
                skipped += 1;
                continue;
            }
            used += 1;
            let aux_w = 1.0 / chunk.len() as f64;
            let prior = site.prior;
            let params = if cfg.aux { site.local.clone() } else { site.local.subset(ParamGroup::Backbone) };
            let results: Vec<Option<(f64, GradMap)>> = chunk
                .par_iter()
                .zip(&mask)
                .map(|(&i, &m)| {
                    if !m && !cfg.aux {
                        return Ok(None);
                    }
                    let w = if m { 1.0 / n_kept as f64 } else { 0.0 };
                    let aux = cfg.aux.then_some((aux_w, &prior));
                    slide_gradients(model, &params, train[i], epoch, cfg.seed, w, aux).map(Some)
                })
                .collect::<Result<_, FederationError>>()?;
            let mut total = GradMap::new();
            let mut value = 0.0;
            for (v, g) in results.into_iter().flatten() {
                value += v;
                accumulate(&mut total, &g);
            }
            site.local.step(&total, cfg.lr, cfg.optimizer, &mut site.optimizer)?;
            loss_sum += value;
            loss_batches += 1;
        }
        if used == 0 {
            degenerate = true;
        }
    }
    Ok(LocalUpdate {
        site_id: site.site_id(),
        backbone: site.backbone(),
        samples: train.len(),
        mean_loss: if loss_batches == 0 { f64::NAN } else { loss_sum / loss_batches as f64 },
        kept,
        seen,
        skipped_batches: skipped,
        degenerate,
    })
}

/// Sample-count-weighted mean of the backbones of non-degenerate sites,
/// summed in ascending site order.
pub fn aggregate(updates: &[LocalUpdate], round: usize) -> Result<ParamStore, FederationError> {
    let mut usable: Vec<&LocalUpdate> = updates.iter().filter(|u| !u.degenerate && u.samples > 0).collect();
    if usable.is_empty() {
        return Err(FederationError::NoUsableSites { round });
    }
    usable.sort_by_key(|u| u.site_id);
    let total: usize = usable.iter().map(|u| u.samples).sum();
    let mut out = usable[0].backbone.clone();
    for (name, param) in usable[0].backbone.iter() {
        let mut acc = vec![0.0; param.value.numel()];
        for u in &usable {
            let w = u.samples as f64 / total as f64;
            let theta = u.backbone.get(name).ok_or_else(|| FederationError::ParamMismatch(name.to_string()))?;
            if theta.shape() != param.value.shape() {
                return Err(FederationError::ParamMismatch(name.to_string()));
            }
            acc.iter_mut().zip(theta.data()).for_each(|(a, t)| *a += w * t);
        }
        out.get_mut(name).expect("cloned from the same store").data_mut().copy_from_slice(&acc);
    }
    Ok(out)
}

/// Scores and summary of one split of one site.
#[derive(Clone, Debug)]
pub struct SiteEval {
    pub auc: f64,
    pub loss: f64,
    pub scores: Vec<f64>,
}

/// Positive-class probability of the main head for each slide, on a fixed
/// per-slide subsample. AUC is NaN when the slides hold a single class.
pub fn evaluate<'s>(model: &Model, backbone: &ParamStore, slides: impl Iterator<Item = &'s Slide>, seed: u64) -> Result<SiteEval, FederationError> {
    let slides: Vec<&Slide> = slides.collect();
    let probs: Vec<[f64; 2]> = slides
        .par_iter()
        .map(|s| {
            let input = s.subsample(model.config().input_points, &mut eval_stream(seed, s.id()))?;
            let mut tape = Tape::new();
            let bound = backbone.bind(&mut tape, false)?;
            let out = model.forward(&mut tape, &bound, &input)?;
            let p = tape.value(out.probs).data();
            Ok([p[0], p[1]])
        })
        .collect::<Result<_, FederationError>>()?;
    let labels: Vec<Label> = slides.iter().map(|s| s.label()).collect();
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let loss = if slides.is_empty() {
        f64::NAN
    } else {
        probs.iter().zip(&labels).map(|(p, l)| -p[l.index()].max(PROB_FLOOR).ln()).sum::<f64>() / slides.len() as f64
    };
    let auc = match roc_auc(&scores, &labels) {
        Ok(a) => a,
        Err(FederationError::UndefinedAuc { .. }) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(SiteEval { auc, loss, scores })
}

#[derive(Clone, Debug)]
pub struct RoundReport {
    pub round: usize,
    pub updates: Vec<LocalUpdate>,
}

/// Sites plus the global backbone.
pub struct Federation<'a> {
    model: &'a Model,
    cfg: TrainConfig,
    global: ParamStore,
    sites: Vec<SiteState<'a>>,
}

impl<'a> Federation<'a> {
    pub fn new(model: &'a Model, cfg: TrainConfig, sites: &'a [SiteData]) -> Result<Self, FederationError> {
        cfg.validate()?;
        if sites.is_empty() {
            return Err(FederationError::Config("no training sites".into()));
        }
        let mut ids: Vec<u32> = sites.iter().map(|s| s.site_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(FederationError::Config("site ids must be unique".into()));
        }
        let global = model.init_backbone(cfg.seed);
        let sites = sites.iter().map(|d| SiteState::new(model, d, &global, &cfg)).collect::<Result<_, _>>()?;
        Ok(Self { model, cfg, global, sites })
    }

    pub fn global(&self) -> &ParamStore {
        &self.global
    }

    pub fn sites(&self) -> &[SiteState<'a>] {
        &self.sites
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Local training on every site, averaging, then broadcast of the new
    /// global backbone into each site's local copy.
    pub fn round(&mut self, round: usize) -> Result<RoundReport, FederationError> {
        let (model, cfg) = (self.model, &self.cfg);
        let updates: Vec<LocalUpdate> = self
            .sites
            .par_iter_mut()
            .map(|s| local_update(model, s, round, cfg))
            .collect::<Result<_, _>>()?;
        self.global = aggregate(&updates, round)?;
        for s in &mut self.sites {
            s.local.load(&self.global)?;
        }
        Ok(RoundReport { round, updates })
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub metrics: Vec<MetricsRow>,
    pub summary: RunSummary,
    /// Backbone of the selected round.
    pub best_backbone: ParamStore,
    /// Auxiliary heads of the selected round, by site id.
    pub best_aux: Vec<(u32, ParamStore)>,
}

impl RunOutcome {
    /// Selected backbone plus every site's auxiliary head, the latter
    /// stored under `site{id}.aux.*`.
    pub fn checkpoint(&self) -> ParamStore {
        let mut store = self.best_backbone.clone();
        for (id, aux) in &self.best_aux {
            for (name, p) in aux.iter() {
                store.insert(format!("site{id}.{name}"), ParamGroup::Aux, p.value.clone());
            }
        }
        store
    }
}

fn nan_mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn eval_rows(
    model: &Model,
    backbone: &ParamStore,
    eval_sites: &[SiteData],
    round: usize,
    train_stats: &dyn Fn(u32) -> (f64, usize),
    seed: u64,
) -> Result<Vec<MetricsRow>, FederationError> {
    let mut rows = Vec::new();
    for split in [Split::Val, Split::Test] {
        let mut site_rows = Vec::new();
        for site in eval_sites {
            let e = evaluate(model, backbone, site.split(split), seed)?;
            let (kept_frac, skipped) = train_stats(site.site_id);
            site_rows.push(MetricsRow { round, site: Some(site.site_id), split: split.as_str(), auc: e.auc, loss: e.loss, kept_frac, skipped_batches: skipped });
        }
        let mean = MetricsRow {
            round,
            site: None,
            split: split.as_str(),
            auc: nan_mean(site_rows.iter().map(|r| r.auc)),
            loss: nan_mean(site_rows.iter().map(|r| r.loss)),
            kept_frac: nan_mean(site_rows.iter().map(|r| r.kept_frac)),
            skipped_batches: site_rows.iter().map(|r| r.skipped_batches).sum(),
        };
        rows.extend(site_rows);
        rows.push(mean);
    }
    Ok(rows)
}

fn run_rounds(
    model: &Model,
    fed: &mut Federation<'_>,
    eval_sites: &[SiteData],
    unseen: &[SiteData],
    progress: &mut dyn FnMut(&[MetricsRow]),
) -> Result<RunOutcome, FederationError> {
    let seed = fed.cfg.seed;
    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, ParamStore, Vec<(u32, ParamStore)>)> = None;
    for round in 0..fed.cfg.rounds {
        let report = fed.round(round)?;
        // A pooled trainer reports its statistics against every site.
        let stats = |id: u32| {
            let u = report.updates.iter().find(|u| u.site_id == id).unwrap_or(&report.updates[0]);
            (u.kept_frac(), u.skipped_batches)
        };
        let rows = eval_rows(model, fed.global(), eval_sites, round + 1, &stats, seed)?;
        let val_auc = rows.iter().find(|r| r.site.is_none() && r.split == "val").map_or(f64::NAN, |r| r.auc);
        let score = if val_auc.is_nan() { f64::NEG_INFINITY } else { val_auc };
        if best.as_ref().is_none_or(|b| score > b.0) {
            let aux = fed.sites().iter().map(|s| (s.site_id(), s.aux())).collect();
            best = Some((score, round + 1, fed.global().clone(), aux));
        }
        progress(&rows);
        metrics.extend(rows);
    }
    let (_, best_round, best_backbone, best_aux) = best.expect("at least one round");
    let row = |split: &str, site: Option<u32>| metrics.iter().find(|r: &&MetricsRow| r.round == best_round && r.split == split && r.site == site).map_or(f64::NAN, |r| r.auc);
    let mut summary = RunSummary {
        selected_round: best_round,
        mean_val_auc: row("val", None),
        mean_test_auc: row("test", None),
        site_test_auc: eval_sites.iter().map(|s| (s.site_id, row("test", Some(s.site_id)))).collect(),
        unseen_auc: Vec::new(),
    };
    for site in unseen {
        let e = evaluate(model, &best_backbone, site.slides.iter(), seed)?;
        summary.unseen_auc.push((site.site_id, e.auc));
        metrics.push(MetricsRow { round: best_round, site: Some(site.site_id), split: "unseen", auc: e.auc, loss: e.loss, kept_frac: f64::NAN, skipped_batches: 0 });
    }
    Ok(RunOutcome { metrics, summary, best_backbone, best_aux })
}

/// Federated training over `sites`, evaluated each round on their
/// validation and test splits; `unseen` sites are scored once with the
/// selected backbone.
pub fn run_federation(
    model: &Model,
    cfg: &TrainConfig,
    sites: &[SiteData],
    unseen: &[SiteData],
    progress: &mut dyn FnMut(&[MetricsRow]),
) -> Result<RunOutcome, FederationError> {
    let mut fed = Federation::new(model, cfg.clone(), sites)?;
    run_rounds(model, &mut fed, sites, unseen, progress)
}

/// The same loop with every site's training split pooled into one trainer.
/// Evaluation is still reported per site.
pub fn run_centralized(
    model: &Model,
    cfg: &TrainConfig,
    sites: &[SiteData],
    unseen: &[SiteData],
    progress: &mut dyn FnMut(&[MetricsRow]),
) -> Result<RunOutcome, FederationError> {
    let slides: Vec<Slide> = sites.iter().flat_map(|s| s.split(Split::Train).cloned()).collect();
    let pooled = [SiteData { site_id: 0, train: (0..slides.len()).collect(), slides, val: Vec::new(), test: Vec::new() }];
    let mut fed = Federation::new(model, cfg.clone(), &pooled)?;
    run_rounds(model, &mut fed, sites, unseen, progress)
}
