//! Batch losses with analytic logit gradients.
//!
//! Every loss is returned as a nonnegative minimisation objective averaged
//! over the batch, together with its exact gradient with respect to the
//! logits. The generative cross-entropy family couples samples through the
//! per-class aggregated confidence `C_k = Σ_j p_jk`, so its gradient is dense
//! across the batch: row `j` receives a contribution from every class the
//! batch contains, not only from its own label.

mod properness;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_softmax, log_sum_exp, softmax, Labels, LogitMatrix, ProbabilityMatrix, PROB_FLOOR};

pub use properness::{verify_strict_properness, PropernessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Gce,
    GceLs,
    Focal,
    FocalGce,
    Brier,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Ce,
        LossKind::Gce,
        LossKind::GceLs,
        LossKind::Focal,
        LossKind::FocalGce,
        LossKind::Brier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Gce => "gce",
            LossKind::GceLs => "gce_ls",
            LossKind::Focal => "focal",
            LossKind::FocalGce => "focal_gce",
            LossKind::Brier => "brier",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!("unknown loss `{s}`, valid kinds: {}", valid.join(", ")))
            })
    }
}

/// Loss kind plus its hyperparameters. `alpha` is the label-smoothing
/// weight (GCE_LS only) and `gamma` the focusing exponent (FOCAL and
/// FOCAL_GCE only); both default to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            alpha: 0.0,
            gamma: 0.0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Loss value and logit gradient for one mini-batch.
    pub fn evaluate(&self, z: &LogitMatrix, y: &Labels) -> Result<LossOutput> {
        self.validate()?;
        match self.kind {
            LossKind::Ce => cross_entropy(z, y),
            LossKind::Gce => gce(z, y),
            LossKind::GceLs => gce_label_smoothed(z, y, self.alpha),
            LossKind::Focal => focal(z, y, self.gamma),
            LossKind::FocalGce => focal_gce(z, y, self.gamma),
            LossKind::Brier => brier(z, y),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::GceLs => write!(f, "{}(alpha={})", self.kind, self.alpha),
            LossKind::Focal | LossKind::FocalGce => write!(f, "{}(gamma={})", self.kind, self.gamma),
            _ => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    /// ∂value/∂z, same shape as the logits.
    pub grad: Array2<f64>,
}

/// Per-class aggregated confidence `C_k = Σ_j p_jk`, summed in row order.
pub fn aggregated_confidence(p: &ProbabilityMatrix) -> Array1<f64> {
    let mut sums = Array1::zeros(p.k());
    for row in p.view().outer_iter() {
        sums += &row;
    }
    sums
}

/// `ln C_k` as a log-sum-exp over the log-probability column, floored.
fn log_aggregated(logp: &Array2<f64>) -> Array1<f64> {
    logp.columns()
        .into_iter()
        .map(|col| log_sum_exp(col).max(ln_floor()))
        .collect()
}

fn ln_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Adds `p_jl (r_l - Σ_m p_jm r_m)` to every row: the softmax pull-back of a
/// probability-space gradient that is the same vector `r` for every row.
fn add_class_coupling(grad: &mut Array2<f64>, p: &Array2<f64>, r: &Array1<f64>) {
    for (mut g, prow) in grad.outer_iter_mut().zip(p.outer_iter()) {
        let dot = prow.dot(r);
        for ((gl, &pl), &rl) in g.iter_mut().zip(prow.iter()).zip(r.iter()) {
            *gl += pl * (rl - dot);
        }
    }
}

/// `1 - p_y` computed as the sum of the off-label probabilities.
fn complement(prow: ndarray::ArrayView1<'_, f64>, y: usize) -> f64 {
    prow.iter()
        .enumerate()
        .filter(|&(l, _)| l != y)
        .map(|(_, &v)| v)
        .sum()
}

/// Mean negative log-likelihood.
pub fn cross_entropy(z: &LogitMatrix, y: &Labels) -> Result<LossOutput> {
    y.check(z.n(), z.k())?;
    let n = z.n() as f64;
    let logp = log_softmax(z);
    let mut grad = softmax(z).into_inner();
    let mut total = 0.0;
    for (i, &yi) in y.as_slice().iter().enumerate() {
        total += logp[[i, yi]].max(ln_floor());
        grad[[i, yi]] -= 1.0;
    }
    grad /= n;
    Ok(LossOutput {
        value: -total / n,
        grad,
    })
}

/// Generative cross-entropy over one mini-batch:
/// `-(1/N) Σ_i log(p_{i,y_i} / Σ_j p_{j,y_i})`.
///
/// The batch denominator is differentiated, not treated as a constant.
pub fn gce(z: &LogitMatrix, y: &Labels) -> Result<LossOutput> {
    y.check(z.n(), z.k())?;
    let n = z.n() as f64;
    let logp = log_softmax(z);
    let p = softmax(z);
    let c = aggregated_confidence(&p);
    let log_c = log_aggregated(&logp);
    let counts = y.class_counts(z.k());

    let mut total = 0.0;
    for (i, &yi) in y.as_slice().iter().enumerate() {
        total += logp[[i, yi]].max(ln_floor()) - log_c[yi];
    }

    let r: Array1<f64> = counts
        .iter()
        .zip(c.iter())
        .map(|(&nk, &ck)| if nk == 0 { 0.0 } else { nk as f64 / (n * ck) })
        .collect();
    let p = p.into_inner();
    let mut grad = p.clone();
    for (i, &yi) in y.as_slice().iter().enumerate() {
        grad[[i, yi]] -= 1.0;
    }
    grad /= n;
    add_class_coupling(&mut grad, &p, &r);

    Ok(LossOutput {
        value: -total / n,
        grad,
    })
}

/// Label-smoothed GCE: `(1-α)·GCE + (α/(NK)) Σ_i Σ_k -log(p_ik / C_k)`.
pub fn gce_label_smoothed(z: &LogitMatrix, y: &Labels, alpha: f64) -> Result<LossOutput> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let base = gce(z, y)?;
    if alpha == 0.0 {
        return Ok(base);
    }
    let (n, k) = (z.n() as f64, z.k() as f64);
    let logp = log_softmax(z);
    let p = softmax(z);
    let c = aggregated_confidence(&p);
    let log_c = log_aggregated(&logp);

    let mut smooth = 0.0;
    for row in logp.outer_iter() {
        for (&lp, &lc) in row.iter().zip(log_c.iter()) {
            smooth += lc - lp.max(ln_floor());
        }
    }
    let w = alpha / (n * k);

    let p = p.into_inner();
    let mut grad = base.grad * (1.0 - alpha);
    // Σ_k -log p_ik pulls back to K p_il - 1 per row.
    grad.zip_mut_with(&p, |g, &pl| *g += w * (k * pl - 1.0));
    let r = c.mapv(|ck| alpha / (k * ck));
    add_class_coupling(&mut grad, &p, &r);

    Ok(LossOutput {
        value: (1.0 - alpha) * base.value + w * smooth,
        grad,
    })
}

/// Focal loss `-(1/N) Σ_i (1 - p_{y_i})^γ log p_{y_i}`.
pub fn focal(z: &LogitMatrix, y: &Labels, gamma: f64) -> Result<LossOutput> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    y.check(z.n(), z.k())?;
    let n = z.n() as f64;
    let logp = log_softmax(z);
    let p = softmax(z).into_inner();
    let mut grad = Array2::zeros(p.dim());
    let mut total = 0.0;

    for (i, &yi) in y.as_slice().iter().enumerate() {
        let prow = p.row(i);
        let py = prow[yi];
        let q = complement(prow, yi);
        let lp = logp[[i, yi]].max(ln_floor());
        let m = q.powf(gamma);
        total += m * lp;

        // d/dz_l of -(1-p)^γ log p = [γ(1-p)^{γ-1} p log p - (1-p)^γ] (δ_ly - p_l)
        let dmod = if gamma == 0.0 || q == 0.0 {
            0.0
        } else {
            gamma * q.powf(gamma - 1.0) * py * lp
        };
        let a = (dmod - m) / n;
        for (l, g) in grad.row_mut(i).iter_mut().enumerate() {
            let delta = if l == yi { 1.0 } else { 0.0 };
            *g = a * (delta - prow[l]);
        }
    }
    Ok(LossOutput {
        value: -total / n,
        grad,
    })
}

/// GCE with per-sample focal modulation:
/// `-(1/N) Σ_i (1 - p_{i,y_i})^γ log(p_{i,y_i} / C_{y_i})`.
pub fn focal_gce(z: &LogitMatrix, y: &Labels, gamma: f64) -> Result<LossOutput> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    y.check(z.n(), z.k())?;
    let n = z.n() as f64;
    let logp = log_softmax(z);
    let p = softmax(z);
    let c = aggregated_confidence(&p);
    let log_c = log_aggregated(&logp);
    let p = p.into_inner();

    let mut grad = Array2::zeros(p.dim());
    let mut weight = Array1::<f64>::zeros(z.k());
    let mut total = 0.0;
    for (i, &yi) in y.as_slice().iter().enumerate() {
        let prow = p.row(i);
        let py = prow[yi];
        let q = complement(prow, yi);
        let u = logp[[i, yi]].max(ln_floor()) - log_c[yi];
        let m = q.powf(gamma);
        total += m * u;
        weight[yi] += m;

        let dmod = if gamma == 0.0 || q == 0.0 {
            0.0
        } else {
            gamma * q.powf(gamma - 1.0) * py * u
        };
        let a = (dmod - m) / n;
        for (l, g) in grad.row_mut(i).iter_mut().enumerate() {
            let delta = if l == yi { 1.0 } else { 0.0 };
            *g = a * (delta - prow[l]);
        }
    }
    let r: Array1<f64> = weight
        .iter()
        .zip(c.iter())
        .map(|(&wk, &ck)| if wk == 0.0 { 0.0 } else { wk / (n * ck) })
        .collect();
    add_class_coupling(&mut grad, &p, &r);

    Ok(LossOutput {
        value: -total / n,
        grad,
    })
}

/// Mean squared distance between the softmax row and the one-hot target.
pub fn brier(z: &LogitMatrix, y: &Labels) -> Result<LossOutput> {
    y.check(z.n(), z.k())?;
    let n = z.n() as f64;
    let p = softmax(z).into_inner();
    let mut grad = Array2::zeros(p.dim());
    let mut total = 0.0;
    for (i, &yi) in y.as_slice().iter().enumerate() {
        let prow = p.row(i);
        let diff: Vec<f64> = prow
            .iter()
            .enumerate()
            .map(|(l, &pl)| if l == yi { pl - 1.0 } else { pl })
            .collect();
        total += diff.iter().map(|d| d * d).sum::<f64>();
        // dℓ/dp_l = 2 d_l, then the softmax Jacobian.
        let dot: f64 = prow.iter().zip(&diff).map(|(pl, dl)| pl * 2.0 * dl).sum();
        for (l, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = prow[l] * (2.0 * diff[l] - dot) / n;
        }
    }
    Ok(LossOutput {
        value: total / n,
        grad,
    })
}

/// Partial derivative of the (unnormalised) GCE objective with respect to
/// each sample's true-class probability, other entries held fixed:
/// `-1/p_{i,y_i} + N_{y_i} / Σ_j p_{j,y_i}`.
pub fn gce_prob_gradient(p: &ProbabilityMatrix, y: &Labels) -> Result<Vec<f64>> {
    y.check(p.n(), p.k())?;
    let c = aggregated_confidence(p);
    let counts = y.class_counts(p.k());
    y.as_slice()
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let py = p.row(i)[yi];
            if py == 0.0 {
                return Err(Error::DivisionByZero(format!(
                    "true-class probability is zero at row {i}"
                )));
            }
            Ok(-1.0 / py + counts[yi] as f64 / c[yi])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_violation};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64) -> (LogitMatrix, Labels) {
        let z = Array2::from_shape_fn((n, k), |_| rng.random_range(-scale..scale));
        let y = (0..n).map(|_| rng.random_range(0..k)).collect::<Vec<_>>();
        (LogitMatrix::new(z).unwrap(), Labels::new(y))
    }

    /// GCE written as an explicit double loop, independent of
    /// the vectorised implementation.
    fn gce_oracle(p: &Array2<f64>, y: &[usize], alpha: f64, gamma: f64) -> f64 {
        let (n, k) = p.dim();
        let col_sum = |c: usize| (0..n).map(|j| p[[j, c]]).sum::<f64>();
        let mut main = 0.0;
        for i in 0..n {
            let py = p[[i, y[i]]];
            main += (1.0 - py).powf(gamma) * (py / col_sum(y[i])).ln();
        }
        let mut smooth = 0.0;
        for i in 0..n {
            for c in 0..k {
                smooth += (p[[i, c]] / col_sum(c)).ln();
            }
        }
        -(1.0 - alpha) / n as f64 * main - alpha / (n * k) as f64 * smooth
    }

    #[test]
    fn ce_uniform_is_ln_k() {
        let z = LogitMatrix::new(Array2::zeros((5, 10))).unwrap();
        let y = Labels::new(vec![0, 3, 9, 1, 1]);
        let out = cross_entropy(&z, &y).unwrap();
        assert!((out.value - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn ce_hand_value() {
        let z = LogitMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = Labels::new(vec![0, 1]);
        let out = cross_entropy(&z, &y).unwrap();
        // softplus(-1)
        assert!((out.value - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn ce_saturated_goes_to_zero() {
        let z = LogitMatrix::from_rows(&[vec![40.0, 0.0], vec![0.0, 40.0]]).unwrap();
        let out = cross_entropy(&z, &Labels::new(vec![0, 1])).unwrap();
        assert!(out.value < 1e-15);
        assert!(out.grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn label_out_of_range_rejected() {
        let z = LogitMatrix::new(Array2::zeros((2, 3))).unwrap();
        let y = Labels::new(vec![0, 3]);
        for kind in LossKind::ALL {
            assert!(LossSpec::new(kind).evaluate(&z, &y).is_err(), "{kind}");
        }
    }

    #[test]
    fn gce_single_sample_is_zero() {
        let z = LogitMatrix::from_rows(&[vec![0.3, -2.0, 1.7]]).unwrap();
        for y in 0..3 {
            let out = gce(&z, &Labels::new(vec![y])).unwrap();
            assert_eq!(out.value, 0.0);
        }
    }

    #[test]
    fn gce_uniform_is_ln_n() {
        let z = LogitMatrix::new(Array2::zeros((7, 4))).unwrap();
        let y = Labels::new(vec![0, 0, 1, 3, 3, 3, 2]);
        assert!((gce(&z, &y).unwrap().value - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gce_matches_decomposition_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (z, y) = random_batch(&mut rng, 8, 3, 3.0);
        let p = softmax(&z);
        let value = gce(&z, &y).unwrap().value;
        let ce = cross_entropy(&z, &y).unwrap().value;
        let c = aggregated_confidence(&p);
        let reg: f64 = y
            .class_counts(3)
            .iter()
            .zip(c.iter())
            .map(|(&nk, ck)| nk as f64 * ck.ln())
            .sum::<f64>()
            / 8.0;
        assert!((value - (ce + reg)).abs() < 1e-10);
        assert!((value - gce_oracle(&p.view().to_owned(), y.as_slice(), 0.0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn gce_ls_reductions_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (z, y) = random_batch(&mut rng, 4, 2, 2.0);
        let a = gce_label_smoothed(&z, &y, 0.0).unwrap().value;
        assert!((a - gce(&z, &y).unwrap().value).abs() < 1e-12);

        let v = gce_label_smoothed(&z, &y, 0.1).unwrap().value;
        let oracle = gce_oracle(&softmax(&z).into_inner(), y.as_slice(), 0.1, 0.0);
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");

        let one = LogitMatrix::from_rows(&[vec![0.1, 2.0]]).unwrap();
        assert_eq!(gce_label_smoothed(&one, &Labels::new(vec![1]), 0.5).unwrap().value, 0.0);
        assert!(gce_label_smoothed(&z, &y, 1.0).is_err());
        assert!(gce_label_smoothed(&z, &y, -0.1).is_err());
    }

    #[test]
    fn focal_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (z, y) = random_batch(&mut rng, 6, 4, 3.0);
        let f = focal(&z, &y, 0.0).unwrap();
        let c = cross_entropy(&z, &y).unwrap();
        assert!((f.value - c.value).abs() < 1e-12);
        for (a, b) in f.grad.iter().zip(c.grad.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        // p_y = 0.25 in a binary row: logits [0, ln 3] with label 0
        let z = LogitMatrix::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap();
        let v = focal(&z, &Labels::new(vec![0]), 2.0).unwrap().value;
        assert!((v - 0.5625 * 4f64.ln()).abs() < 1e-12);
        assert!((v - 0.779_790_6).abs() < 1e-6);
    }

    #[test]
    fn focal_vanishes_faster_than_ce() {
        let z = LogitMatrix::from_rows(&[vec![6.0, 0.0]]).unwrap();
        let y = Labels::new(vec![0]);
        let f = focal(&z, &y, 2.0).unwrap().value;
        let c = cross_entropy(&z, &y).unwrap().value;
        assert!(f < c * 1e-4);
    }

    #[test]
    fn focal_gce_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (z, y) = random_batch(&mut rng, 4, 3, 2.0);
        let fg = focal_gce(&z, &y, 0.0).unwrap();
        let g = gce(&z, &y).unwrap();
        assert!((fg.value - g.value).abs() < 1e-12);
        for (a, b) in fg.grad.iter().zip(g.grad.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let v = focal_gce(&z, &y, 2.0).unwrap().value;
        let oracle = gce_oracle(&softmax(&z).into_inner(), y.as_slice(), 0.0, 2.0);
        assert!((v - oracle).abs() < 1e-12);

        let one = LogitMatrix::from_rows(&[vec![0.4, -1.0, 0.0]]).unwrap();
        assert_eq!(focal_gce(&one, &Labels::new(vec![2]), 2.0).unwrap().value, 0.0);
    }

    #[test]
    fn brier_examples() {
        let z = LogitMatrix::new(Array2::zeros((3, 2))).unwrap();
        let v = brier(&z, &Labels::new(vec![0, 1, 1])).unwrap().value;
        assert!((v - 0.5).abs() < 1e-15);

        let p = [0.2f64, 0.5, 0.3];
        let z = LogitMatrix::from_rows(&[p.iter().map(|v| v.ln()).collect()]).unwrap();
        let v = brier(&z, &Labels::new(vec![1])).unwrap().value;
        assert!((v - 0.38).abs() < 1e-12);
    }

    #[test]
    fn prob_gradient_examples() {
        let onehot = ProbabilityMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let g = gce_prob_gradient(&onehot, &Labels::new(vec![0, 2, 0])).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        // uniform p, K = 4, N = 8 balanced: -K + N_y K / N = -4 + 1
        let u = ProbabilityMatrix::new(Array2::from_elem((8, 4), 0.25)).unwrap();
        let y = Labels::new(vec![0, 1, 2, 3, 0, 1, 2, 3]);
        let g = gce_prob_gradient(&u, &y).unwrap();
        assert!(g.iter().all(|v| (v + 3.0).abs() < 1e-12));
        // unbalanced: class 0 three times out of 8 -> -4 + 3*4/8 = -2.5
        let y = Labels::new(vec![0, 0, 0, 1, 1, 2, 3, 3]);
        let g = gce_prob_gradient(&u, &y).unwrap();
        assert!((g[0] + 2.5).abs() < 1e-12);

        let p = ProbabilityMatrix::from_rows(&[vec![0.5, 0.5], vec![0.3, 0.7]]).unwrap();
        let g = gce_prob_gradient(&p, &Labels::new(vec![0, 1])).unwrap();
        assert!((g[0] + 0.75).abs() < 1e-12);

        let zero = ProbabilityMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            gce_prob_gradient(&zero, &Labels::new(vec![0])),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn loss_kind_parse() {
        assert_eq!("gce_ls".parse::<LossKind>().unwrap(), LossKind::GceLs);
        let err = "mse".parse::<LossKind>().unwrap_err().to_string();
        assert!(err.contains("focal_gce"));
    }

    fn check_grad(spec: LossSpec, z: &LogitMatrix, y: &Labels) -> f64 {
        let out = spec.evaluate(z, y).unwrap();
        let x: Vec<f64> = z.view().iter().copied().collect();
        let shape = z.view().dim();
        let numeric = central_difference(
            |v| {
                let m = LogitMatrix::new(Array2::from_shape_vec(shape, v.to_vec()).unwrap()).unwrap();
                spec.evaluate(&m, y).unwrap().value
            },
            &x,
            1e-5,
        );
        let analytic: Vec<f64> = out.grad.iter().copied().collect();
        max_violation(&analytic, &numeric, 1e-6, 1e-8)
    }

    fn all_specs() -> Vec<LossSpec> {
        vec![
            LossSpec::new(LossKind::Ce),
            LossSpec::new(LossKind::Gce),
            LossSpec::new(LossKind::GceLs).with_alpha(0.1),
            LossSpec::new(LossKind::Focal).with_gamma(2.0),
            LossSpec::new(LossKind::Focal).with_gamma(0.5),
            LossSpec::new(LossKind::FocalGce).with_gamma(2.0),
            LossSpec::new(LossKind::Brier),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn analytic_gradients_match_finite_differences(seed in any::<u64>(), n in 1usize..=16, k in 2usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (z, y) = random_batch(&mut rng, n, k, 3.0);
            for spec in all_specs() {
                let v = check_grad(spec, &z, &y);
                prop_assert!(v <= 0.0, "{spec}: violation {v}");
            }
        }

        #[test]
        fn losses_invariant_to_joint_permutation(seed in any::<u64>(), n in 2usize..=12, k in 2usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (z, y) = random_batch(&mut rng, n, k, 3.0);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            perm.rotate_left(seed as usize % n);
            let zp = z.select_rows(&perm);
            let yp = y.select(&perm);
            for spec in all_specs() {
                let a = spec.evaluate(&z, &y).unwrap().value;
                let b = spec.evaluate(&zp, &yp).unwrap().value;
                prop_assert!((a - b).abs() < 1e-12, "{spec}: {a} vs {b}");
            }
        }
    }
}
