//! Small multilayer perceptron trained by mini-batch SGD with momentum and
//! L2 weight decay, for any [`LossSpec`].
//!
//! Layer `l` maps `a ↦ a·W_l + b_l` with `W_l` stored row-major as
//! `(fan_in, fan_out)`. Hidden layers use ReLU, the output layer is linear.
//! Matrix products run single-threaded, so results are bitwise reproducible.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledDataset, Split, SyntheticTask};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::numerics::{argmax, Labels, LogitMatrix};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

const INIT_STREAM: u64 = 1 << 40;
const SHUFFLE_STREAM: u64 = 2 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl MlpParams {
    /// Fan-in scaled uniform init: entries of `W_l` and `b_l` drawn from
    /// `U(-1/√fan_in, 1/√fan_in)`, each layer on its own stream.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(INIT_STREAM | l as u64);
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound)));
        }
        Ok(Self { sizes: sizes.to_vec(), weights, biases })
    }

    /// All-zero parameters.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            weights: sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: sizes.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        })
    }

    /// Builds parameters from explicit per-layer weights and biases.
    pub fn from_layers(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::invalid("need one bias vector per weight matrix"));
        }
        let mut sizes = vec![weights[0].nrows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != *sizes.last().expect("non-empty") || b.len() != w.ncols() {
                return Err(Error::invalid("layer shapes do not chain"));
            }
            sizes.push(w.ncols());
        }
        check_sizes(&sizes)?;
        let params = Self { sizes, weights, biases };
        if !params.flat_iter().all(f64::is_finite) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(params)
    }

    /// `[d, h₁, …, K]`
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Parameters in checkpoint order: per layer, `W_l` row-major then `b_l`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.flat_iter().collect()
    }

    pub fn from_flat(sizes: &[usize], flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(sizes)?;
        if flat.len() != params.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                params.num_params(),
                flat.len()
            )));
        }
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        for (dst, &v) in params.flat_iter_mut().zip(flat) {
            *dst = v;
        }
        Ok(params)
    }

    fn flat_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    fn flat_iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::invalid(format!("layer sizes must be >= 2 positive entries, got {sizes:?}")));
    }
    if *sizes.last().expect("checked") < 2 {
        return Err(Error::invalid("output layer needs at least 2 classes"));
    }
    Ok(())
}

fn check_input(params: &MlpParams, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != params.input_dim() {
        return Err(Error::invalid(format!(
            "input has {} features, network expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("input has no rows"));
    }
    Ok(())
}

/// Pre-activations of every layer; the last one holds the logits.
fn forward_trace(params: &MlpParams, x: &Array2<f64>) -> Vec<Array2<f64>> {
    let last = params.weights.len() - 1;
    let mut pre = Vec::with_capacity(params.weights.len());
    let mut a = x.clone();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let z = a.dot(w) + b;
        if l < last {
            a = z.mapv(|v| v.max(0.0));
        }
        pre.push(z);
    }
    pre
}

pub fn forward(params: &MlpParams, x: &Array2<f64>) -> Result<LogitMatrix> {
    check_input(params, x)?;
    let mut pre = forward_trace(params, x);
    LogitMatrix::new(pre.pop().expect("at least one layer"))
}

/// Loss value and gradients (shaped like the parameters) for one batch.
pub fn backward(params: &MlpParams, x: &Array2<f64>, y: &Labels, loss: &LossSpec) -> Result<(f64, MlpParams)> {
    check_input(params, x)?;
    y.check(x.nrows(), params.num_classes())?;
    let pre = forward_trace(params, x);
    let logits = LogitMatrix::new(pre.last().expect("at least one layer").clone())?;
    let out = loss.evaluate(&logits, y)?;

    let layers = params.weights.len();
    let mut grads = MlpParams::zeros(&params.sizes)?;
    let mut delta = out.grad;
    for l in (0..layers).rev() {
        let input = if l == 0 {
            x.clone()
        } else {
            pre[l - 1].mapv(|v| v.max(0.0))
        };
        grads.weights[l] = input.t().dot(&delta);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&params.weights[l].t());
            back.zip_mut_with(&pre[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    Ok((out.value, grads))
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    velocity: MlpParams,
}

impl MomentumState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            velocity: MlpParams::zeros(&params.sizes).expect("sizes already validated"),
        }
    }
}

/// `v ← μ·v + (g + λ·θ)`, `θ ← θ − lr·v`.
pub fn sgd_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut MomentumState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.sizes != grads.sizes || params.sizes != state.velocity.sizes {
        return Err(Error::invalid("gradient or momentum shapes do not match parameters"));
    }
    for ((theta, &g), v) in params
        .flat_iter_mut()
        .zip(grads.flat_iter().collect::<Vec<_>>().iter())
        .zip(state.velocity.flat_iter_mut())
    {
        *v = momentum * *v + (g + weight_decay * *theta);
        *theta -= lr * *v;
    }
    Ok(())
}

/// Learning rate `lr` from epoch `epoch` (0-based) onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStep {
    pub epoch: usize,
    pub lr: f64,
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_batch() -> usize {
    128
}
fn default_schedule() -> Vec<LrStep> {
    vec![LrStep { epoch: 0, lr: 0.1 }]
}
fn default_momentum() -> f64 {
    0.9
}
fn default_wd() -> f64 {
    5e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub loss: LossSpec,
    /// Hidden layer widths.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Piecewise-constant schedule; the first entry must start at epoch 0.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<LrStep>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(loss: LossSpec, epochs: usize, seed: u64) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            loss,
            hidden: default_hidden(),
            epochs,
            batch_size: default_batch(),
            schedule: default_schedule(),
            momentum: default_momentum(),
            weight_decay: default_wd(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.loss.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be >= 1"));
        }
        match self.schedule.first() {
            Some(s) if s.epoch == 0 => {}
            _ => return Err(Error::invalid("schedule must start at epoch 0")),
        }
        if self.schedule.windows(2).any(|w| w[0].epoch >= w[1].epoch) {
            return Err(Error::invalid("schedule epochs must be strictly ascending"));
        }
        if self.schedule.iter().any(|s| !(s.lr > 0.0 && s.lr.is_finite())) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        Ok(())
    }

    /// Learning rate in effect during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule
            .iter()
            .take_while(|s| s.epoch <= epoch)
            .last()
            .map_or(self.schedule[0].lr, |s| s.lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the mini-batch objectives, weighted by batch size.
    pub train_loss: f64,
    /// Configured loss on the whole validation split.
    pub val_loss: f64,
    pub val_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochRecord>,
}

fn error_rate(z: &LogitMatrix, y: &Labels) -> f64 {
    let wrong = z
        .view()
        .outer_iter()
        .zip(y.as_slice())
        .filter(|(row, &yi)| argmax(row.view()) != yi)
        .count();
    wrong as f64 / y.len() as f64
}

/// Number of classes: one past the largest label anywhere in the dataset.
pub fn infer_num_classes(ds: &LabeledDataset) -> Result<usize> {
    let k = ds.labels.as_slice().iter().max().map_or(0, |&m| m + 1);
    if k < 2 {
        return Err(Error::invalid("dataset needs at least 2 classes"));
    }
    Ok(k)
}

/// Trains on the TRAIN split, reporting on VAL after every epoch. The
/// shuffle of epoch `e` is drawn from stream `e` of the configured seed,
/// and the last short mini-batch is kept.
pub fn train(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let k = infer_num_classes(ds)?;
    let (x_train, y_train) = ds.split(Split::Train);
    let (x_val, y_val) = ds.split(Split::Val);
    if y_train.is_empty() || y_val.is_empty() {
        return Err(Error::invalid("dataset needs non-empty TRAIN and VAL splits"));
    }
    let mut sizes = vec![ds.features.ncols()];
    sizes.extend(&cfg.hidden);
    sizes.push(k);
    let mut params = MlpParams::init(&sizes, cfg.seed)?;
    let mut state = MomentumState::new(&params);

    let n = y_train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SHUFFLE_STREAM | epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb = y_train.select(batch);
            let (value, grads) = backward(&params, &xb, &yb, &cfg.loss)?;
            sgd_step(&mut params, &grads, &mut state, lr, cfg.momentum, cfg.weight_decay)?;
            total += value * batch.len() as f64;
        }
        let z_val = forward(&params, &x_val)?;
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: total / n as f64,
            val_loss: cfg.loss.evaluate(&z_val, &y_val)?.value,
            val_error: error_rate(&z_val, &y_val),
        });
    }
    Ok(TrainOutcome { params, history })
}

/// Data plus training settings, the format of experiment config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub data: SyntheticTask,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.train.validate()
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";
const CHECKPOINT_VERSION: u16 = 1;

/// Binary checkpoint: magic `GCKP`, u16 version, u32 layer count `L`,
/// `L` u64 layer sizes, the flat parameters as little-endian f64, then u64
/// byte length and the UTF-8 config JSON. All integers little-endian.
pub fn encode_checkpoint(params: &MlpParams, cfg: &TrainConfig) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(cfg).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(18 + 8 * (params.sizes.len() + params.num_params()) + json.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.sizes.len() as u32).to_le_bytes());
    for &s in &params.sizes {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    for v in params.flat_iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Inverse of [`encode_checkpoint`]. Errors are plain messages; the io
/// layer attaches the path.
pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<(MlpParams, TrainConfig), String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let layers = r.u32()? as usize;
    if layers > 1024 {
        return Err(format!("implausible layer count {layers}"));
    }
    let sizes = (0..layers)
        .map(|_| r.u64().map(|s| s as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    check_sizes(&sizes).map_err(|e| e.to_string())?;
    let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let raw = r.take(count.checked_mul(8).ok_or("parameter count overflow")?)?;
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = MlpParams::from_flat(&sizes, &flat).map_err(|e| e.to_string())?;
    let len = r.u64()? as usize;
    let json = r.take(len)?;
    let cfg: TrainConfig = serde_json::from_slice(json).map_err(|e| format!("config: {e}"))?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((params, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use crate::datagen::{sample_mixture, split_validation, GaussianMixtureSpec};
    use crate::gradcheck::{central_difference, max_violation};
    use ndarray::array;

    fn random_batch(d: usize, k: usize, n: usize, seed: u64) -> (Array2<f64>, Labels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-2.0..2.0));
        let y = (0..n).map(|_| rng.random_range(0..k)).collect();
        (x, Labels::new(y))
    }

    /// Loop-based forward pass, independent of the ndarray products.
    fn reference_forward(params: &MlpParams, x: &Array2<f64>) -> Array2<f64> {
        let layers = params.weights().len();
        let mut rows: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
        for (l, (w, b)) in params.weights().iter().zip(params.biases()).enumerate() {
            rows = rows
                .iter()
                .map(|a| {
                    (0..w.ncols())
                        .map(|j| {
                            let mut s = b[j];
                            for (i, ai) in a.iter().enumerate() {
                                s += ai * w[[i, j]];
                            }
                            if l + 1 < layers {
                                s.max(0.0)
                            } else {
                                s
                            }
                        })
                        .collect()
                })
                .collect();
        }
        let k = params.num_classes();
        Array2::from_shape_vec((rows.len(), k), rows.concat()).unwrap()
    }

    #[test]
    fn zero_params_give_uniform_softmax() {
        let params = MlpParams::zeros(&[3, 5, 4]).unwrap();
        let (x, _) = random_batch(3, 4, 6, 1);
        let z = forward(&params, &x).unwrap();
        assert!(z.view().iter().all(|&v| v == 0.0));
        let p = crate::numerics::softmax(&z);
        assert!(p.view().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn single_linear_layer_is_matrix_product() {
        let w = array![[1.0, -2.0], [0.5, 3.0]];
        let b = array![0.25, -1.0];
        let params = MlpParams::from_layers(vec![w], vec![b]).unwrap();
        let x = array![[1.0, 2.0], [-1.0, 0.0]];
        let z = forward(&params, &x).unwrap();
        assert_eq!(z.view(), array![[2.25, 3.0], [-0.75, 1.0]]);
    }

    #[test]
    fn forward_matches_reference() {
        for (i, sizes) in [vec![4, 7, 3], vec![2, 5, 6, 2], vec![3, 2]].iter().enumerate() {
            let params = MlpParams::init(sizes, i as u64).unwrap();
            let (x, _) = random_batch(sizes[0], 2, 9, 10 + i as u64);
            let z = forward(&params, &x).unwrap();
            let r = reference_forward(&params, &x);
            for (a, b) in z.view().iter().zip(r.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = MlpParams::zeros(&[3, 4, 2]).unwrap();
        let x = Array2::zeros((2, 2));
        assert!(matches!(forward(&params, &x), Err(Error::InvalidInput(_))));
        let x = Array2::zeros((2, 3));
        let y = Labels::new(vec![0, 2]);
        assert!(backward(&params, &x, &y, &LossSpec::new(LossKind::Ce)).is_err());
        assert!(MlpParams::from_layers(vec![Array2::zeros((2, 3))], vec![Array1::zeros(2)]).is_err());
    }

    fn specs() -> Vec<LossSpec> {
        vec![
            LossSpec::new(LossKind::Ce),
            LossSpec::new(LossKind::Gce),
            LossSpec::new(LossKind::GceLs).with_alpha(0.1),
            LossSpec::new(LossKind::Focal).with_gamma(2.0),
            LossSpec::new(LossKind::FocalGce).with_gamma(1.5),
            LossSpec::new(LossKind::Brier),
        ]
    }

    fn check_backward(sizes: &[usize], n: usize, seed: u64, spec: &LossSpec) -> f64 {
        let params = MlpParams::init(sizes, seed).unwrap();
        let (x, y) = random_batch(sizes[0], *sizes.last().unwrap(), n, seed + 100);
        let (_, grads) = backward(&params, &x, &y, spec).unwrap();
        let flat = params.to_flat();
        let f = |theta: &[f64]| {
            let p = MlpParams::from_flat(sizes, theta).unwrap();
            spec.evaluate(&forward(&p, &x).unwrap(), &y).unwrap().value
        };
        let numeric = central_difference(f, &flat, 1e-6);
        max_violation(&grads.to_flat(), &numeric, 1e-5, 1e-7)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let nets: [&[usize]; 3] = [&[2, 3, 2], &[3, 4, 3], &[2, 5, 3, 4]];
        for spec in specs() {
            for (i, sizes) in nets.iter().enumerate() {
                let v = check_backward(sizes, 4 + i, 7 * i as u64 + 1, &spec);
                assert!(v <= 0.0, "{spec} on {sizes:?}: violation {v}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_one_hot_limit() {
        let w = Array2::zeros((2, 2));
        let b = array![60.0, 0.0];
        let params = MlpParams::from_layers(vec![w], vec![b]).unwrap();
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = Labels::new(vec![0, 0, 0]);
        for kind in [LossKind::Ce, LossKind::Brier] {
            let (_, g) = backward(&params, &x, &y, &LossSpec::new(kind)).unwrap();
            let norm = g.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < 1e-20, "{kind}: {norm}");
        }
    }

    fn constant_grads(params: &MlpParams, g: f64) -> MlpParams {
        let flat = vec![g; params.num_params()];
        MlpParams::from_flat(params.sizes(), &flat).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let start = MlpParams::init(&[2, 3, 2], 4).unwrap();

        let mut p = start.clone();
        let g = constant_grads(&p, 0.5);
        sgd_step(&mut p, &g, &mut MomentumState::new(&start), 0.1, 0.0, 0.0).unwrap();
        for (a, b) in p.to_flat().iter().zip(start.to_flat()) {
            assert_eq!(*a, b - 0.1 * 0.5);
        }

        let mut p = start.clone();
        let zero = constant_grads(&p, 0.0);
        sgd_step(&mut p, &zero, &mut MomentumState::new(&start), 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, start);

        let mut p = start.clone();
        let mut state = MomentumState::new(&start);
        for _ in 0..2 {
            sgd_step(&mut p, &g, &mut state, 0.1, 0.9, 0.0).unwrap();
        }
        for (a, b) in p.to_flat().iter().zip(start.to_flat()) {
            assert!((b - a - 0.1 * 0.5 * 2.9).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_decay_is_coupled() {
        let start = MlpParams::from_flat(&[1, 2], &[2.0, -4.0, 0.0, 1.0]).unwrap();
        let mut p = start.clone();
        let zero = constant_grads(&p, 0.0);
        sgd_step(&mut p, &zero, &mut MomentumState::new(&start), 0.5, 0.9, 0.1).unwrap();
        assert_eq!(p.to_flat(), vec![1.9, -3.8, 0.0, 0.95]);
    }

    #[test]
    fn config_validation_and_schedule() {
        let mut cfg = TrainConfig::new(LossSpec::new(LossKind::Gce), 10, 1);
        cfg.schedule = vec![LrStep { epoch: 0, lr: 0.1 }, LrStep { epoch: 5, lr: 0.01 }];
        cfg.validate().unwrap();
        assert_eq!(cfg.lr_at(0), 0.1);
        assert_eq!(cfg.lr_at(4), 0.1);
        assert_eq!(cfg.lr_at(5), 0.01);
        assert_eq!(cfg.lr_at(100), 0.01);

        let mut bad = cfg.clone();
        bad.batch_size = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.schedule.reverse();
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.schedule[1].lr = 0.0;
        assert!(bad.validate().is_err());

        let json = r#"{"loss": {"kind": "gce"}, "epochs": 3, "bogus": 1}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
        let json = r#"{"loss": {"kind": "gce"}, "epochs": 3}"#;
        let parsed: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.batch_size, 128);
        assert_eq!(parsed.momentum, 0.9);
        assert_eq!(parsed.weight_decay, 5e-4);
        assert_eq!(parsed.hidden, vec![64]);
    }

    fn separable_task(seed: u64, n: usize) -> LabeledDataset {
        let spec = GaussianMixtureSpec::two_gaussians(5.0, seed);
        split_validation(&sample_mixture(&spec, n).unwrap(), n / 5, seed).unwrap()
    }

    #[test]
    fn separable_task_is_learned() {
        let ds = separable_task(3, 2000);
        let cfg = TrainConfig::new(LossSpec::new(LossKind::Ce), 50, 3);
        let out = train(&ds, &cfg).unwrap();
        let (x, y) = ds.split(Split::Train);
        let err = error_rate(&forward(&out.params, &x).unwrap(), &y);
        assert!(err < 0.02, "train error {err}");
        assert_eq!(out.history.len(), 50);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable_task(5, 600);
        let cfg = TrainConfig::new(LossSpec::new(LossKind::Gce), 4, 9);
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        let bits = |h: &[EpochRecord]| -> Vec<u64> {
            h.iter()
                .flat_map(|r| [r.train_loss.to_bits(), r.val_loss.to_bits(), r.val_error.to_bits()])
                .collect()
        };
        assert_eq!(bits(&a.history), bits(&b.history));
    }

    #[test]
    fn train_loss_decreases_for_every_loss() {
        let ds = separable_task(8, 1000);
        for spec in specs() {
            let cfg = TrainConfig::new(spec, 50, 8);
            let h = train(&ds, &cfg).unwrap().history;
            assert!(h[49].train_loss < h[0].train_loss, "{spec}");
        }
    }

    #[test]
    fn gce_matches_ce_error_on_separable_data() {
        let ds = separable_task(11, 2000);
        let mut ce = 0.0;
        let mut gce = 0.0;
        for seed in 1..=3 {
            let run = |kind| {
                let cfg = TrainConfig::new(LossSpec::new(kind), 20, seed);
                train(&ds, &cfg).unwrap().history.last().unwrap().val_error
            };
            ce += run(LossKind::Ce) / 3.0;
            gce += run(LossKind::Gce) / 3.0;
        }
        assert!((gce - ce).abs() <= 0.01, "ce {ce} gce {gce}");
    }

    #[test]
    fn missing_split_rejected() {
        let spec = GaussianMixtureSpec::two_gaussians(2.0, 1);
        let ds = sample_mixture(&spec, 50).unwrap();
        let cfg = TrainConfig::new(LossSpec::new(LossKind::Ce), 1, 1);
        assert!(matches!(train(&ds, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let params = MlpParams::init(&[3, 6, 4], 2).unwrap();
        let cfg = TrainConfig::new(LossSpec::new(LossKind::FocalGce).with_gamma(1.0), 7, 2);
        let bytes = encode_checkpoint(&params, &cfg).unwrap();
        let (p2, c2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(p2, params);
        assert_eq!(c2, cfg);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
    }
}
