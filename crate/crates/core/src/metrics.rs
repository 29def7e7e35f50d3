//! Calibration and discrimination metrics.
//!
//! ECE uses `m` equal-width confidence bins `[j/m, (j+1)/m)` with the top bin
//! closed at 1. AdaECE sorts samples by confidence (ties by index) and cuts
//! them into `m` contiguous groups whose sizes differ by at most one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    confidence_and_prediction, log_softmax, softmax, Labels, LogitMatrix, ProbabilityMatrix,
    PROB_FLOOR,
};

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    EqualWidth,
    EqualMass,
}

/// One reliability-diagram bin. Empty bins have `count == 0` and zero
/// `conf`/`acc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub conf: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins {
    pub mode: BinMode,
    pub bins: Vec<BinStat>,
}

impl ReliabilityBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `Σ_m (|B_m|/N) |conf(B_m) - acc(B_m)|`
    pub fn weighted_gap(&self) -> f64 {
        let n = self.total() as f64;
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 / n * (b.conf - b.acc).abs())
            .sum()
    }
}

/// 0-based equal-width bin of a value in `[0, 1]`. Bins are half-open,
/// `[j/m, (j+1)/m)`, with the top bin closed at 1.
pub fn equal_width_bin(c: f64, m: usize) -> usize {
    ((c * m as f64).floor().max(0.0) as usize).min(m - 1)
}

fn check_bins(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    Ok(())
}

fn correctness(pred: &Labels, y: &Labels) -> Vec<bool> {
    pred.as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| a == b)
        .collect()
}

/// Equal-width reliability statistics for arbitrary (score, hit) pairs.
fn equal_width_stats(scores: &[f64], hits: &[bool], m: usize) -> ReliabilityBins {
    let mut count = vec![0usize; m];
    let mut conf = vec![0.0; m];
    let mut acc = vec![0.0; m];
    for (&c, &h) in scores.iter().zip(hits) {
        let b = equal_width_bin(c, m);
        count[b] += 1;
        conf[b] += c;
        if h {
            acc[b] += 1.0;
        }
    }
    let bins = (0..m)
        .map(|j| {
            let nb = count[j] as f64;
            BinStat {
                lo: j as f64 / m as f64,
                hi: (j + 1) as f64 / m as f64,
                count: count[j],
                conf: if count[j] > 0 { conf[j] / nb } else { 0.0 },
                acc: if count[j] > 0 { acc[j] / nb } else { 0.0 },
            }
        })
        .collect();
    ReliabilityBins {
        mode: BinMode::EqualWidth,
        bins,
    }
}

/// ECE over confidences and per-sample correctness.
pub fn ece_from_confidence(conf: &[f64], correct: &[bool], m: usize) -> Result<(f64, ReliabilityBins)> {
    check_bins(m)?;
    if conf.len() != correct.len() || conf.is_empty() {
        return Err(Error::invalid("confidence and correctness must be nonempty and equal length"));
    }
    let bins = equal_width_stats(conf, correct, m);
    Ok((bins.weighted_gap(), bins))
}

pub fn ece(p: &ProbabilityMatrix, y: &Labels, m: usize) -> Result<(f64, ReliabilityBins)> {
    check_bins(m)?;
    y.check(p.n(), p.k())?;
    let (conf, pred) = confidence_and_prediction(p);
    ece_from_confidence(&conf, &correctness(&pred, y), m)
}

/// AdaECE over confidences and per-sample correctness.
pub fn ada_ece_from_confidence(
    conf: &[f64],
    correct: &[bool],
    m: usize,
) -> Result<(f64, ReliabilityBins)> {
    check_bins(m)?;
    let n = conf.len();
    if correct.len() != n {
        return Err(Error::invalid("confidence and correctness lengths differ"));
    }
    if n < m {
        return Err(Error::invalid(format!("AdaECE needs at least {m} samples, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));

    let (base, extra) = (n / m, n % m);
    let mut bins = Vec::with_capacity(m);
    let mut start = 0;
    for j in 0..m {
        let size = base + usize::from(j < extra);
        let group = &order[start..start + size];
        start += size;
        let nb = size as f64;
        bins.push(BinStat {
            lo: conf[group[0]],
            hi: conf[group[size - 1]],
            count: size,
            conf: group.iter().map(|&i| conf[i]).sum::<f64>() / nb,
            acc: group.iter().filter(|&&i| correct[i]).count() as f64 / nb,
        });
    }
    let bins = ReliabilityBins {
        mode: BinMode::EqualMass,
        bins,
    };
    Ok((bins.weighted_gap(), bins))
}

pub fn ada_ece(p: &ProbabilityMatrix, y: &Labels, m: usize) -> Result<(f64, ReliabilityBins)> {
    y.check(p.n(), p.k())?;
    let (conf, pred) = confidence_and_prediction(p);
    ada_ece_from_confidence(&conf, &correctness(&pred, y), m)
}

/// Mean over classes of the one-vs-rest ECE of `p̂_k` against `𝟙[y = k]`,
/// each with `m` equal-width bins. Every class counts, including classes
/// absent from `y`.
pub fn classwise_ece(p: &ProbabilityMatrix, y: &Labels, m: usize) -> Result<f64> {
    check_bins(m)?;
    y.check(p.n(), p.k())?;
    let k = p.k();
    let total: f64 = (0..k)
        .map(|c| {
            let scores: Vec<f64> = p.view().column(c).to_vec();
            let hits: Vec<bool> = y.as_slice().iter().map(|&l| l == c).collect();
            equal_width_stats(&scores, &hits, m).weighted_gap()
        })
        .sum();
    Ok(total / k as f64)
}

/// Twice the Mann–Whitney U statistic of `out` over `inside`, using
/// mid-ranks for ties. Integer so that the two orientations sum to
/// `2·n_in·n_out` exactly.
fn twice_u(inside: &[f64], out: &[f64]) -> u128 {
    let mut all: Vec<(f64, bool)> = inside
        .iter()
        .map(|&s| (s, false))
        .chain(out.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // doubled mid-rank of positions [a, b) (0-based) is a + 1 + b
    let mut twice_rank_sum: u128 = 0;
    let mut a = 0;
    while a < all.len() {
        let mut b = a + 1;
        while b < all.len() && all[b].0 == all[a].0 {
            b += 1;
        }
        let outs = all[a..b].iter().filter(|e| e.1).count() as u128;
        twice_rank_sum += outs * (a + 1 + b) as u128;
        a = b;
    }
    let n_out = out.len() as u128;
    twice_rank_sum - n_out * (n_out + 1)
}

/// `P(score_out > score_in) + ½ P(tie)`; higher scores mean "more out of
/// distribution".
pub fn auroc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    if scores_in.is_empty() || scores_out.is_empty() {
        return Err(Error::invalid("AUROC needs nonempty score vectors"));
    }
    if scores_in.iter().chain(scores_out).any(|s| s.is_nan()) {
        return Err(Error::invalid("AUROC scores contain NaN"));
    }
    let pairs = 2 * scores_in.len() as u128 * scores_out.len() as u128;
    Ok(twice_u(scores_in, scores_out) as f64 / pairs as f64)
}

/// Metrics for one (predictions, labels) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub k: usize,
    /// Bin count used for every binned metric.
    pub bins: usize,
    pub error_rate: f64,
    pub nll: f64,
    pub ece: f64,
    pub ada_ece: f64,
    pub classwise_ece: f64,
    /// Equal-width bins behind `ece`.
    pub reliability: Vec<BinStat>,
}

/// Full report from logits; NLL comes from the log-softmax directly.
pub fn evaluate(z: &LogitMatrix, y: &Labels, m: usize) -> Result<CalibrationReport> {
    y.check(z.n(), z.k())?;
    let logp = log_softmax(z);
    let nll = -y
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &yi)| logp[[i, yi]])
        .sum::<f64>()
        / z.n() as f64;
    let mut report = evaluate_probs(&softmax(z), y, m)?;
    report.nll = nll;
    Ok(report)
}

/// Full report from probabilities (e.g. after per-sample temperatures).
pub fn evaluate_probs(p: &ProbabilityMatrix, y: &Labels, m: usize) -> Result<CalibrationReport> {
    check_bins(m)?;
    y.check(p.n(), p.k())?;
    let n = p.n();
    let (conf, pred) = confidence_and_prediction(p);
    let correct = correctness(&pred, y);
    let errors = correct.iter().filter(|&&c| !c).count();
    let nll = -y
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &yi)| p.row(i)[yi].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / n as f64;
    let (ece, bins) = ece_from_confidence(&conf, &correct, m)?;
    let (ada, _) = ada_ece_from_confidence(&conf, &correct, m)?;
    Ok(CalibrationReport {
        n,
        k: p.k(),
        bins: m,
        error_rate: errors as f64 / n as f64,
        nll,
        ece,
        ada_ece: ada,
        classwise_ece: classwise_ece(p, y, m)?,
        reliability: bins.bins,
    })
}
