use super::{DataError, Slide};
use crate::geometry::Label;
use crate::rng::{label, Stream};
use rayon::prelude::*;

/// Parameters of one synthetic site.
///
/// Negative slides are uniform point clouds with Gaussian background
/// features around a site-specific mean. Positive slides share that
/// background, except that `round(signal_fraction * points_per_slide)`
/// points sit in one to three tight spatial clusters and have their
/// features shifted along a signal direction shared by all sites.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteSpec {
    pub site_id: u32,
    pub n_slides: usize,
    pub positive_fraction: f64,
    pub points_per_slide: usize,
    pub feature_dim: usize,
    pub signal_fraction: f64,
    pub cluster_spread: f64,
    pub noise_scale: f64,
    pub signal_shift: f64,
    pub site_shift: f64,
    pub seed: u64,
    /// Seed of the shared signal direction; equal across sites.
    pub signal_seed: u64,
}

impl Default for SiteSpec {
    fn default() -> Self {
        Self {
            site_id: 0,
            n_slides: 200,
            positive_fraction: 0.3,
            points_per_slide: 2048,
            feature_dim: 256,
            signal_fraction: 0.03,
            cluster_spread: 0.01,
            noise_scale: 1.0,
            signal_shift: 3.0,
            site_shift: 1.0,
            seed: 0,
            signal_seed: 0,
        }
    }
}

impl SiteSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad("positive_fraction must lie in (0, 1)");
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 0.2) {
            return bad("signal_fraction must lie in (0, 0.2]");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1");
        }
        if self.n_slides == 0 || self.points_per_slide == 0 {
            return bad("n_slides and points_per_slide must be positive");
        }
        if self.signal_points() == 0 {
            return bad("signal_fraction * points_per_slide rounds to zero signal points");
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("noise_scale", self.noise_scale),
            ("signal_shift", self.signal_shift),
            ("site_shift", self.site_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DataError::InvalidSpec(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn signal_points(&self) -> usize {
        (self.signal_fraction * self.points_per_slide as f64).round() as usize
    }

    pub fn positives(&self) -> usize {
        (self.positive_fraction * self.n_slides as f64).round() as usize
    }
}

/// A generated slide and the indices of its signal points.
#[derive(Clone, Debug)]
pub struct GeneratedSlide {
    pub slide: Slide,
    pub signal: Vec<usize>,
}

/// Slides of one site in generation order, with split membership as
/// ascending index lists into `slides`.
#[derive(Clone, Debug)]
pub struct SiteData {
    pub site_id: u32,
    pub slides: Vec<Slide>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SiteData {
    /// Splits `slides` the same way [`generate_site`] does, so a site
    /// written to disk and read back gets identical splits.
    pub fn from_slides(site_id: u32, seed: u64, slides: Vec<Slide>) -> Self {
        let labels: Vec<Label> = slides.iter().map(Slide::label).collect();
        let mut rng = Stream::new(seed, &[label::SPLIT, u64::from(site_id)]);
        let [train, val, test] = split_indices(&labels, &mut rng);
        Self { site_id, slides, train, val, test }
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &Slide> + '_ {
        let idx = match which {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        };
        idx.iter().map(move |&i| &self.slides[i])
    }

    pub fn label_counts(&self, which: Split) -> (usize, usize) {
        let pos = self.split(which).filter(|s| s.label().is_positive()).count();
        let total = self.split(which).count();
        (total - pos, pos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Unit signal direction shared by every site generated with `signal_seed`.
pub fn signal_direction(signal_seed: u64, dim: usize) -> Vec<f64> {
    let mut s = Stream::new(signal_seed, &[label::SIGNAL]);
    let mut v: Vec<f64> = (0..dim).map(|_| s.normal()).collect();
    unit(&mut v);
    v
}

/// Site background mean: `site_shift` along a site-specific unit vector
/// orthogonal to the signal direction.
fn site_mean(spec: &SiteSpec, signal: &[f64]) -> Vec<f64> {
    let dim = spec.feature_dim;
    if dim == 1 {
        return vec![0.0];
    }
    let mut s = Stream::new(spec.seed, &[label::SITE_GEN, u64::from(spec.site_id), 0]);
    let mut u: Vec<f64> = (0..dim).map(|_| s.normal()).collect();
    let along: f64 = u.iter().zip(signal).map(|(a, b)| a * b).sum();
    u.iter_mut().zip(signal).for_each(|(a, b)| *a -= along * b);
    unit(&mut u);
    u.iter().map(|v| v * spec.site_shift).collect()
}

/// Slide `index` of the site, generated at 64-bit and stored at 32-bit.
pub fn generate_slide(spec: &SiteSpec, index: usize, slide_label: Label) -> Result<GeneratedSlide, DataError> {
    spec.validate()?;
    let signal_dir = signal_direction(spec.signal_seed, spec.feature_dim);
    let mean = site_mean(spec, &signal_dir);
    Ok(build_slide(spec, index, slide_label, &signal_dir, &mean))
}

fn build_slide(spec: &SiteSpec, index: usize, slide_label: Label, signal_dir: &[f64], mean: &[f64]) -> GeneratedSlide {
    let n = spec.points_per_slide;
    let d = spec.feature_dim;
    let mut s = Stream::new(spec.seed, &[label::SLIDE, u64::from(spec.site_id), index as u64]);
    let mut rows = vec![0.0f64; n * (3 + d)];
    for r in rows.chunks_exact_mut(3 + d) {
        r[0] = s.uniform();
        r[1] = s.uniform();
        r[2] = 1.0;
        for (f, m) in r[3..].iter_mut().zip(mean) {
            *f = m + spec.noise_scale * s.normal();
        }
    }
    let signal = if slide_label.is_positive() {
        let picks = s.sample_indices(n, spec.signal_points());
        let clusters = 1 + s.below(3) as usize;
        let centers: Vec<(f64, f64)> = (0..clusters).map(|_| (s.uniform_in(0.1, 0.9), s.uniform_in(0.1, 0.9))).collect();
        for (k, &i) in picks.iter().enumerate() {
            let (cx, cy) = centers[k % clusters];
            let r = &mut rows[i * (3 + d)..(i + 1) * (3 + d)];
            r[0] = cx + spec.cluster_spread * s.normal();
            r[1] = cy + spec.cluster_spread * s.normal();
            for (f, dir) in r[3..].iter_mut().zip(signal_dir) {
                *f += spec.signal_shift * dir;
            }
        }
        picks
    } else {
        Vec::new()
    };
    let values = rows.iter().map(|&v| v as f32).collect();
    let id = format!("site{}-{:05}", spec.site_id, index);
    let slide = Slide::new(id, slide_label, d, values).expect("generator emits valid rows");
    GeneratedSlide { slide, signal }
}

/// Train / validation / test index lists for the given labels.
///
/// Sizes are `floor(0.6 n)`, `floor(0.1 n)` and the remainder. Each class is
/// shuffled and split in the same proportions on its own, so that both
/// classes reach every split whenever the class is large enough; the one or
/// two slots left by rounding are filled from the test share of the larger
/// class.
pub fn split_indices(labels: &[Label], rng: &mut Stream) -> [Vec<usize>; 3] {
    let n = labels.len();
    let quota = [n * 6 / 10, n / 10];
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut leftovers: Vec<Vec<usize>> = Vec::new();
    for class in [Label::Negative, Label::Positive] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let m = idx.len();
        let (t, v) = (m * 6 / 10, m / 10);
        parts[0].extend_from_slice(&idx[..t]);
        parts[1].extend_from_slice(&idx[t..t + v]);
        leftovers.push(idx[t + v..].to_vec());
    }
    for (split, &q) in quota.iter().enumerate() {
        while parts[split].len() < q {
            let donor = if leftovers[1].len() > leftovers[0].len() { 1 } else { 0 };
            let i = leftovers[donor].pop().expect("quotas never exceed n");
            parts[split].push(i);
        }
    }
    parts[2] = leftovers.concat();
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}

/// All slides of a site, split 60/10/30 by shuffled assignment.
pub fn generate_site(spec: &SiteSpec) -> Result<SiteData, DataError> {
    spec.validate()?;
    let signal_dir = signal_direction(spec.signal_seed, spec.feature_dim);
    let mean = site_mean(spec, &signal_dir);
    let n_pos = spec.positives();
    let mut labels: Vec<Label> = (0..spec.n_slides).map(|i| if i < n_pos { Label::Positive } else { Label::Negative }).collect();
    let mut s = Stream::new(spec.seed, &[label::SITE_GEN, u64::from(spec.site_id), 1]);
    s.shuffle(&mut labels);
    let slides: Vec<Slide> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &l)| build_slide(spec, i, l, &signal_dir, &mean).slide)
        .collect();
    Ok(SiteData::from_slides(spec.site_id, spec.seed, slides))
}
