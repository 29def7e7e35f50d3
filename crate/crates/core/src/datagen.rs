//! Synthetic Gaussian-mixture data with closed-form Bayes posteriors,
//! long-tailed subsampling and additive-noise distribution shift.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha8 seeded with the user seed. Each
//! independent purpose draws from its own stream, selected with
//! `set_stream(purpose << 32 | split << 16 | class)`, so per-class
//! subsampling does not depend on the order classes are visited in.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_row_in_place, Labels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn code(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Stream purposes; part of the documented stream layout.
#[derive(Clone, Copy)]
enum Purpose {
    Labels = 1,
    Features = 2,
    LongTail = 3,
    Shift = 4,
    ValSplit = 5,
    Means = 6,
}

/// Seeded generator on the stream for `(purpose, split, class)`.
fn stream(seed: u64, purpose: Purpose, split: Split, class: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose as u64) << 32 | split.code() << 16 | class as u64);
    rng
}

/// Isotropic Gaussian class-conditionals with shared variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    /// K×d class means, one row per class.
    pub means: Vec<Vec<f64>>,
    pub variance: f64,
    pub priors: Vec<f64>,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn d(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Two classes in `d = 2` with means `±(s/√2, s/√2)`, unit variance and
    /// uniform priors. The Bayes error is `Φ(-s)`.
    pub fn two_gaussians(separation: f64, seed: u64) -> Self {
        let a = separation / 2f64.sqrt();
        Self {
            means: vec![vec![-a, -a], vec![a, a]],
            variance: 1.0,
            priors: vec![0.5, 0.5],
            seed,
        }
    }

    /// `k` classes in `d` dimensions with means drawn as random directions
    /// scaled to norm `radius`; unit variance, uniform priors.
    pub fn random_means(k: usize, d: usize, radius: f64, seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Means, Split::Train, 0);
        let means = (0..k)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.into_iter().map(|x| x * radius / norm).collect()
            })
            .collect();
        Self {
            means,
            variance: 1.0,
            priors: vec![1.0 / k as f64; k],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.k(), self.d());
        if k < 2 || d == 0 {
            return Err(Error::invalid("mixture needs at least 2 classes and 1 dimension"));
        }
        if self.means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("class means must be finite rows of equal length"));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid("variance must be positive"));
        }
        if self.priors.len() != k || self.priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("priors must be K probabilities"));
        }
        let s: f64 = self.priors.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("priors sum to {s}")));
        }
        Ok(())
    }
}

/// Features, labels and a split tag per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Labels,
    pub splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Features and labels of one split, in dataset order.
    pub fn split(&self, split: Split) -> (Array2<f64>, Labels) {
        let idx = self.indices(split);
        (self.features.select(Axis(0), &idx), self.labels.select(&idx))
    }

    pub fn class_counts(&self, split: Split, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for (&y, &s) in self.labels.as_slice().iter().zip(&self.splits) {
            if s == split {
                counts[y] += 1;
            }
        }
        counts
    }

    /// Concatenates two datasets.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.features.ncols() != other.features.ncols() {
            return Err(Error::invalid("feature dimensions differ"));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut labels = self.labels.as_slice().to_vec();
        labels.extend_from_slice(other.labels.as_slice());
        let mut splits = self.splits.clone();
        splits.extend_from_slice(&other.splits);
        Ok(LabeledDataset {
            features,
            labels: Labels::new(labels),
            splits,
        })
    }

    fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), idx),
            labels: self.labels.select(idx),
            splits: idx.iter().map(|&i| self.splits[i]).collect(),
        }
    }
}

fn draw_features(spec: &GaussianMixtureSpec, labels: &[usize], rng: &mut ChaCha8Rng) -> Array2<f64> {
    let sd = spec.variance.sqrt();
    let d = spec.d();
    let mut x = Array2::zeros((labels.len(), d));
    for (mut row, &y) in x.outer_iter_mut().zip(labels) {
        for (v, &mu) in row.iter_mut().zip(&spec.means[y]) {
            let e: f64 = rng.sample(StandardNormal);
            *v = mu + sd * e;
        }
    }
    x
}

/// `n` samples with labels drawn from the priors, all tagged `split`.
pub fn sample_mixture_split(spec: &GaussianMixtureSpec, n: usize, split: Split) -> Result<LabeledDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut lrng = stream(spec.seed, Purpose::Labels, split, 0);
    let cdf: Vec<f64> = spec
        .priors
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last_positive = spec.priors.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let labels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = lrng.random();
            cdf.iter()
                .position(|&c| u < c)
                .unwrap_or(last_positive)
        })
        .collect();
    let mut frng = stream(spec.seed, Purpose::Features, split, 0);
    let features = draw_features(spec, &labels, &mut frng);
    Ok(LabeledDataset {
        features,
        labels: Labels::new(labels),
        splits: vec![split; n],
    })
}

/// `n` training samples with labels drawn from the priors.
pub fn sample_mixture(spec: &GaussianMixtureSpec, n: usize) -> Result<LabeledDataset> {
    sample_mixture_split(spec, n, Split::Train)
}

/// Exactly `per_class` samples of every class, class-major order.
pub fn sample_per_class(spec: &GaussianMixtureSpec, per_class: usize, split: Split) -> Result<LabeledDataset> {
    spec.validate()?;
    if per_class == 0 {
        return Err(Error::invalid("per-class count must be at least 1"));
    }
    let mut parts = Vec::with_capacity(spec.k());
    for c in 0..spec.k() {
        let labels = vec![c; per_class];
        let mut rng = stream(spec.seed, Purpose::Features, split, c + 1);
        parts.push(draw_features(spec, &labels, &mut rng));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let features = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
    let labels = (0..spec.k()).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
    Ok(LabeledDataset {
        features,
        labels: Labels::new(labels),
        splits: vec![split; per_class * spec.k()],
    })
}

/// Exact posterior `p(y = k | x) ∝ prior_k · exp(-‖x - μ_k‖² / 2σ²)`.
pub fn bayes_posterior(spec: &GaussianMixtureSpec, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut logits: Vec<f64> = spec
        .means
        .iter()
        .zip(&spec.priors)
        .map(|(mu, &prior)| {
            let dist2: f64 = mu.iter().zip(x.iter()).map(|(m, v)| (v - m) * (v - m)).sum();
            prior.ln() - dist2 / (2.0 * spec.variance)
        })
        .collect();
    softmax_row_in_place(&mut logits);
    Array1::from(logits)
}

/// Bayes posteriors for every row of `x`.
pub fn bayes_posteriors(spec: &GaussianMixtureSpec, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), spec.k()));
    for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
        dst.assign(&bayes_posterior(spec, row));
    }
    out
}

/// Per-class sizes `round(n_max · ρ^(-k/(K-1)))`, class 0 being the head.
/// Halves round up.
pub fn longtail_counts(k: usize, rho: f64, n_max: usize) -> Result<Vec<usize>> {
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("imbalance factor must be >= 1, got {rho}")));
    }
    if k < 2 {
        return Err(Error::invalid("long-tail profile needs at least 2 classes"));
    }
    let last = (k - 1) as f64;
    Ok((0..k)
        .map(|c| {
            let v = n_max as f64 * rho.powf(-(c as f64) / last);
            (v + 0.5).floor() as usize
        })
        .collect())
}

/// Keeps `round(n_max · ρ^(-k/(K-1)))` training samples of class `k`, drawn
/// uniformly without replacement on the class's own stream. Non-training
/// samples are kept untouched.
pub fn make_longtail(ds: &LabeledDataset, k: usize, rho: f64, n_max: usize, seed: u64) -> Result<LabeledDataset> {
    let counts = longtail_counts(k, rho, n_max)?;
    let mut keep: Vec<usize> = Vec::new();
    for (c, &want) in counts.iter().enumerate() {
        let pool: Vec<usize> = ds
            .labels
            .as_slice()
            .iter()
            .zip(&ds.splits)
            .enumerate()
            .filter(|(_, (&y, &s))| y == c && s == Split::Train)
            .map(|(i, _)| i)
            .collect();
        if pool.len() < want {
            return Err(Error::invalid(format!(
                "class {c} has {} training samples, long-tail profile needs {want}",
                pool.len()
            )));
        }
        let mut rng = stream(seed, Purpose::LongTail, Split::Train, c);
        let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), want)
            .into_iter()
            .map(|j| pool[j])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    keep.extend(
        ds.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != Split::Train)
            .map(|(i, _)| i),
    );
    keep.sort_unstable();
    Ok(ds.select(&keep))
}

/// Re-tags a uniformly chosen `n_val` of the training samples as validation.
pub fn split_validation(ds: &LabeledDataset, n_val: usize, seed: u64) -> Result<LabeledDataset> {
    let train = ds.indices(Split::Train);
    if n_val == 0 || n_val >= train.len() {
        return Err(Error::invalid(format!(
            "validation size {n_val} must be in [1, {})",
            train.len()
        )));
    }
    let mut rng = stream(seed, Purpose::ValSplit, Split::Val, 0);
    let mut out = ds.clone();
    for j in index::sample(&mut rng, train.len(), n_val) {
        out.splits[train[j]] = Split::Val;
    }
    Ok(out)
}

/// Adds `N(0, σ²)` noise to every feature of every sample.
pub fn shift_dataset(ds: &LabeledDataset, noise_sigma: f64, seed: u64) -> Result<LabeledDataset> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut out = ds.clone();
    if noise_sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = stream(seed, Purpose::Shift, Split::Test, 0);
    for v in out.features.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += noise_sigma * e;
    }
    Ok(out)
}

fn default_classes() -> usize {
    2
}
fn default_dim() -> usize {
    2
}
fn default_variance() -> f64 {
    1.0
}

/// Balanced synthetic task description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Norm of every class mean.
    pub radius: f64,
    #[serde(default = "default_variance")]
    pub variance: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticTask {
    pub fn mixture(&self) -> Result<GaussianMixtureSpec> {
        let mut spec = GaussianMixtureSpec::random_means(self.classes, self.dim, self.radius, self.seed);
        spec.variance = self.variance;
        spec.validate()?;
        Ok(spec)
    }

    /// Mixture spec and a dataset with the requested per-class split sizes.
    pub fn build(&self) -> Result<(GaussianMixtureSpec, LabeledDataset)> {
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("radius must be finite and >= 0"));
        }
        let spec = self.mixture()?;
        let train = sample_per_class(&spec, self.train_per_class, Split::Train)?;
        let val = sample_per_class(&spec, self.val_per_class, Split::Val)?;
        let test = sample_per_class(&spec, self.test_per_class, Split::Test)?;
        Ok((spec, train.concat(&val)?.concat(&test)?))
    }

    /// Long-tailed variant: class `k` of the training pool keeps
    /// `round(train_per_class · ρ^(-k/(K-1)))` samples, then
    /// `val_per_class · K` of the survivors are re-tagged as validation.
    /// Returns the per-class counts right after subsampling.
    pub fn build_longtail(&self, rho: f64) -> Result<(GaussianMixtureSpec, LabeledDataset, Vec<usize>)> {
        let (spec, ds) = self.build()?;
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.splits[i] != Split::Val).collect();
        let pool = ds.select(&keep);
        let lt = make_longtail(&pool, self.classes, rho, self.train_per_class, self.seed)?;
        let counts = lt.class_counts(Split::Train, self.classes);
        let lt = split_validation(&lt, self.val_per_class * self.classes, self.seed)?;
        Ok((spec, lt, counts))
    }
}
