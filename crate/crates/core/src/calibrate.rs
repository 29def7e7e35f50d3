//! Post-hoc calibrators: a single global temperature fitted by NLL, and
//! adaptive temperature scaling (ATS) with one temperature per equal-mass
//! confidence bin.
//!
//! ATS partitions validation samples by quantiles of their uncalibrated
//! confidence. Each round walks the bins from the most to the least
//! confident and nudges the bin's temperature by the clipped gap between
//! mean confidence and accuracy under the current temperature. After each
//! round the per-sample-temperature ECE on the validation set is computed
//! and the best vector seen so far is kept. The all-ones vector is scored
//! before the first round, so the fitted calibrator is never worse on the
//! validation ECE than doing nothing.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ece_from_confidence, DEFAULT_BINS};
use crate::numerics::{
    argmax, confidence_and_prediction, log_sum_exp, softmax, softmax_row_in_place, Labels,
    LogitMatrix, ProbabilityMatrix,
};

const GLOBAL_T_MIN: f64 = 0.1;
const GLOBAL_T_MAX: f64 = 10.0;
const GOLDEN_TOL: f64 = 1e-4;

/// `softmax(z / t)`.
pub fn apply_temperature(z: &LogitMatrix, t: f64) -> Result<ProbabilityMatrix> {
    check_temperature(t)?;
    Ok(softmax(&z.scaled(t)?))
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Mean NLL of `softmax(z / t)`.
pub fn nll_at_temperature(z: &LogitMatrix, y: &Labels, t: f64) -> f64 {
    let n = z.n() as f64;
    z.view()
        .outer_iter()
        .zip(y.as_slice())
        .map(|(row, &yi)| {
            let scaled = row.mapv(|v| v / t);
            log_sum_exp(scaled.view()) - scaled[yi]
        })
        .sum::<f64>()
        / n
}

/// Global temperature minimising validation NLL over `[0.1, 10]` by
/// golden-section search. Falls back to `t = 1` if the search ends at a
/// worse NLL than the identity.
pub fn fit_global_temperature(z_val: &LogitMatrix, y_val: &Labels) -> Result<f64> {
    if y_val.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    y_val.check(z_val.n(), z_val.k())?;
    let f = |t: f64| nll_at_temperature(z_val, y_val, t);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (GLOBAL_T_MIN, GLOBAL_T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a >= GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    Ok(if f(t) <= f(1.0) { t } else { 1.0 })
}

/// ATS hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtsConfig {
    /// Number of equal-mass bins.
    pub bins: usize,
    /// Step coefficient applied to the confidence-accuracy gap.
    pub alpha: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub rounds: usize,
    /// Bound on a single temperature update.
    pub delta_clip: f64,
    /// Equal-width bins of the ECE used to select the best round.
    pub select_bins: usize,
}

impl Default for AtsConfig {
    fn default() -> Self {
        Self {
            bins: 15,
            alpha: 0.05,
            t_min: 0.1,
            t_max: 10.0,
            rounds: 200,
            delta_clip: 0.1,
            select_bins: DEFAULT_BINS,
        }
    }
}

impl AtsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bins >= 1
            && self.alpha > 0.0
            && self.t_min > 0.0
            && self.t_min <= 1.0
            && 1.0 <= self.t_max
            && self.t_max.is_finite()
            && self.rounds >= 1
            && self.delta_clip > 0.0
            && self.select_bins >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid ATS config: {self:?}")))
        }
    }
}

/// Quantile thresholds `0 = τ_0 < … < τ_M = 1` and the bin of every
/// validation sample. Bins are half-open `[τ_m, τ_{m+1})` with the top bin
/// closed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPartition {
    pub thresholds: Vec<f64>,
    pub assignments: Vec<usize>,
}

impl BinPartition {
    /// Thresholds at the linearly interpolated empirical quantiles `j/M`.
    /// Repeated quantiles (tied confidences) are merged, so the effective
    /// bin count can be below `m`.
    pub fn from_confidences(conf: &[f64], m: usize) -> Result<Self> {
        if conf.is_empty() {
            return Err(Error::invalid("cannot partition an empty confidence set"));
        }
        if m == 0 {
            return Err(Error::invalid("bin count must be at least 1"));
        }
        let mut sorted = conf.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut thresholds = vec![0.0];
        for j in 1..m {
            let q = quantile_sorted(&sorted, j as f64 / m as f64);
            if q > *thresholds.last().unwrap() && q < 1.0 {
                thresholds.push(q);
            }
        }
        thresholds.push(1.0);
        let assignments = conf.iter().map(|&c| bucketize(&thresholds, c)).collect();
        Ok(Self {
            thresholds,
            assignments,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn members(&self, bin: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == bin)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Linear interpolation between order statistics at position `(n-1)·q`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin of confidence `c` against thresholds `τ_0 … τ_M`: the number of
/// interior thresholds `≤ c`. Values below `τ_1` land in bin 0 and values at
/// or above `τ_{M-1}` in the top bin.
pub fn bucketize(thresholds: &[f64], c: f64) -> usize {
    let interior = &thresholds[1..thresholds.len() - 1];
    interior.partition_point(|&t| t <= c)
}

/// Per-bin temperatures with their admissible range.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureVector {
    pub temps: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl TemperatureVector {
    pub fn ones(m: usize, t_min: f64, t_max: f64) -> Self {
        Self {
            temps: vec![1.0; m],
            t_min,
            t_max,
        }
    }
}

/// One bin update inside a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtsStep {
    pub round: usize,
    pub bin: usize,
    pub conf: f64,
    pub acc: f64,
    pub delta: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct AtsFit {
    pub temperatures: TemperatureVector,
    pub partition: BinPartition,
    /// Validation ECE at the all-ones vector.
    pub initial_ece: f64,
    /// Validation ECE at the returned vector.
    pub best_ece: f64,
    /// 0 when the all-ones vector was never beaten.
    pub best_round: usize,
    pub trace: Vec<AtsStep>,
}

/// Max softmax probability and argmax of `row / t`.
fn scaled_confidence(row: ArrayView1<'_, f64>, t: f64) -> (f64, usize) {
    let mut scaled: Vec<f64> = row.iter().map(|&v| v / t).collect();
    let pred = argmax(ArrayView1::from(&scaled[..]));
    softmax_row_in_place(&mut scaled);
    (scaled[pred], pred)
}

fn per_sample_ece(
    z: &LogitMatrix,
    y: &Labels,
    assignments: &[usize],
    temps: &[f64],
    m: usize,
) -> Result<f64> {
    let (conf, correct): (Vec<f64>, Vec<bool>) = z
        .view()
        .outer_iter()
        .zip(assignments)
        .zip(y.as_slice())
        .map(|((row, &b), &yi)| {
            let (c, pred) = scaled_confidence(row, temps[b]);
            (c, pred == yi)
        })
        .unzip();
    Ok(ece_from_confidence(&conf, &correct, m)?.0)
}

/// Adaptive temperature scaling on a validation set.
pub fn fit_ats(z_val: &LogitMatrix, y_val: &Labels, cfg: &AtsConfig) -> Result<AtsFit> {
    cfg.validate()?;
    if y_val.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    y_val.check(z_val.n(), z_val.k())?;

    let (conf, _) = confidence_and_prediction(&softmax(z_val));
    let partition = BinPartition::from_confidences(&conf, cfg.bins)?;
    let m = partition.num_bins();
    let members: Vec<Vec<usize>> = (0..m).map(|b| partition.members(b)).collect();

    let mut temps = vec![1.0; m];
    let initial_ece = per_sample_ece(z_val, y_val, &partition.assignments, &temps, cfg.select_bins)?;
    let mut best = (initial_ece, temps.clone(), 0);
    let mut trace = Vec::with_capacity(cfg.rounds * m);

    for round in 1..=cfg.rounds {
        for bin in (0..m).rev() {
            let idx = &members[bin];
            if idx.is_empty() {
                continue;
            }
            let t = temps[bin];
            let (mut conf_sum, mut hits) = (0.0, 0usize);
            for &i in idx {
                let (c, pred) = scaled_confidence(z_val.row(i), t);
                conf_sum += c;
                hits += usize::from(pred == y_val.as_slice()[i]);
            }
            let nb = idx.len() as f64;
            let (c_m, a_m) = (conf_sum / nb, hits as f64 / nb);
            let delta = (cfg.alpha * (c_m - a_m)).clamp(-cfg.delta_clip, cfg.delta_clip);
            temps[bin] = (t + delta).clamp(cfg.t_min, cfg.t_max);
            trace.push(AtsStep {
                round,
                bin,
                conf: c_m,
                acc: a_m,
                delta,
                temperature: temps[bin],
            });
        }
        let e = per_sample_ece(z_val, y_val, &partition.assignments, &temps, cfg.select_bins)?;
        if e < best.0 {
            best = (e, temps.clone(), round);
        }
    }

    Ok(AtsFit {
        temperatures: TemperatureVector {
            temps: best.1,
            t_min: cfg.t_min,
            t_max: cfg.t_max,
        },
        partition,
        initial_ece,
        best_ece: best.0,
        best_round: best.2,
        trace,
    })
}

/// Rescales every row by the temperature of the bin its uncalibrated
/// confidence falls into.
pub fn apply_ats(z: &LogitMatrix, temps: &[f64], thresholds: &[f64]) -> Result<ProbabilityMatrix> {
    check_thresholds(thresholds)?;
    if temps.len() != thresholds.len() - 1 {
        return Err(Error::invalid(format!(
            "{} temperatures for {} bins",
            temps.len(),
            thresholds.len() - 1
        )));
    }
    for &t in temps {
        check_temperature(t)?;
    }
    let mut out = Array2::zeros(z.view().dim());
    for (row, mut dst) in z.view().outer_iter().zip(out.outer_iter_mut()) {
        let mut probs = row.to_vec();
        softmax_row_in_place(&mut probs);
        let conf = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let t = temps[bucketize(thresholds, conf)];
        let mut scaled: Vec<f64> = row.iter().map(|&v| v / t).collect();
        softmax_row_in_place(&mut scaled);
        dst.assign(&ArrayView1::from(&scaled[..]));
    }
    Ok(ProbabilityMatrix::from_array_unchecked(out))
}

fn check_thresholds(th: &[f64]) -> Result<()> {
    if th.len() < 2 || th[0] != 0.0 || th[th.len() - 1] != 1.0 {
        return Err(Error::invalid("thresholds must start at 0 and end at 1"));
    }
    if th.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("thresholds must be strictly increasing"));
    }
    Ok(())
}

/// A fitted calibrator in its persisted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Calibrator {
    Ts {
        temperature: f64,
    },
    Ats {
        thresholds: Vec<f64>,
        temperatures: Vec<f64>,
        config: AtsConfig,
    },
}

impl Calibrator {
    pub fn from_ats(fit: &AtsFit, config: AtsConfig) -> Self {
        Calibrator::Ats {
            thresholds: fit.partition.thresholds.clone(),
            temperatures: fit.temperatures.temps.clone(),
            config,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Calibrator::Ts { temperature } => check_temperature(*temperature),
            Calibrator::Ats {
                thresholds,
                temperatures,
                config,
            } => {
                config.validate()?;
                check_thresholds(thresholds)?;
                if temperatures.len() + 1 != thresholds.len() {
                    return Err(Error::invalid("temperature/threshold count mismatch"));
                }
                temperatures.iter().try_for_each(|&t| check_temperature(t))
            }
        }
    }

    pub fn apply(&self, z: &LogitMatrix) -> Result<ProbabilityMatrix> {
        self.validate()?;
        match self {
            Calibrator::Ts { temperature } => apply_temperature(z, *temperature),
            Calibrator::Ats {
                thresholds,
                temperatures,
                ..
            } => apply_ats(z, temperatures, thresholds),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Calibrator::Ts { temperature } => format!("ts(t={temperature})"),
            Calibrator::Ats { temperatures, .. } => format!("ats({} bins)", temperatures.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ece as ece_metric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Logits whose softmax is the true label distribution: labels are drawn
    /// from `softmax(z)`.
    fn matched_logits(n: usize, k: usize, scale: f64, seed: u64) -> (LogitMatrix, Labels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Array2::from_shape_fn((n, k), |_| rng.random_range(-scale..scale));
        let z = LogitMatrix::new(z).unwrap();
        let p = softmax(&z);
        let y = (0..n)
            .map(|i| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, &pj) in p.row(i).iter().enumerate() {
                    acc += pj;
                    if u < acc {
                        return j;
                    }
                }
                k - 1
            })
            .collect();
        (z, Labels::new(y))
    }

    fn grid_argmin(z: &LogitMatrix, y: &Labels) -> f64 {
        (0..=9900)
            .map(|i| 0.1 + i as f64 * 0.001)
            .min_by(|&a, &b| nll_at_temperature(z, y, a).total_cmp(&nll_at_temperature(z, y, b)))
            .unwrap()
    }

    #[test]
    fn unit_temperature_is_softmax() {
        let (z, _) = matched_logits(10, 3, 2.0, 1);
        assert_eq!(apply_temperature(&z, 1.0).unwrap(), softmax(&z));
        assert!(apply_temperature(&z, 0.0).is_err());
        assert!(apply_temperature(&z, -1.0).is_err());
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let (z, _) = matched_logits(10, 4, 5.0, 2);
        let p = apply_temperature(&z, 1e6).unwrap();
        assert!(p.view().iter().all(|&v| (v - 0.25).abs() < 1e-5));
    }

    #[test]
    fn temperature_keeps_predictions_and_orders_confidence() {
        let (z, _) = matched_logits(50, 5, 3.0, 3);
        let (c1, p1) = confidence_and_prediction(&softmax(&z));
        for t in [0.3, 0.9, 1.7, 6.0] {
            let (ct, pt) = confidence_and_prediction(&apply_temperature(&z, t).unwrap());
            assert_eq!(p1, pt);
            for (a, b) in c1.iter().zip(&ct) {
                if t > 1.0 {
                    assert!(b <= a);
                } else {
                    assert!(b >= a);
                }
            }
        }
    }

    #[test]
    fn global_temperature_recovers_scale() {
        let (z, y) = matched_logits(20_000, 4, 3.0, 4);
        let t = fit_global_temperature(&z, &y).unwrap();
        assert!((t - grid_argmin(&z, &y)).abs() < 2e-3);
        assert!((t - 1.0).abs() < 0.05, "{t}");

        let z2 = z.scaled(0.5).unwrap();
        let t2 = fit_global_temperature(&z2, &y).unwrap();
        assert!((t2 - 2.0).abs() < 0.1, "{t2}");
        assert!(nll_at_temperature(&z2, &y, t2) <= nll_at_temperature(&z2, &y, 1.0) + 1e-9);
    }

    #[test]
    fn global_temperature_stays_in_range() {
        // all correct, large margins: NLL keeps falling as t shrinks
        let z = LogitMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let t = fit_global_temperature(&z, &Labels::new(vec![0, 1])).unwrap();
        assert!((0.1..=10.0).contains(&t));
        assert!(t < 0.2);
    }

    #[test]
    fn partition_quantiles_and_ties() {
        let conf: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
        let part = BinPartition::from_confidences(&conf, 2).unwrap();
        assert_eq!(part.thresholds.len(), 3);
        assert!((part.thresholds[1] - 0.725).abs() < 1e-12);
        assert_eq!(part.assignments, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);

        let tied = vec![0.7; 9];
        let part = BinPartition::from_confidences(&tied, 5).unwrap();
        assert_eq!(part.num_bins(), 2);
        assert!(part.assignments.iter().all(|&b| b == 1));

        let ones = vec![1.0; 4];
        let part = BinPartition::from_confidences(&ones, 3).unwrap();
        assert_eq!(part.thresholds, vec![0.0, 1.0]);
        assert_eq!(part.assignments, vec![0; 4]);
    }

    #[test]
    fn bucketize_edges() {
        let th = [0.0, 0.4, 0.8, 1.0];
        assert_eq!(bucketize(&th, 0.1), 0);
        assert_eq!(bucketize(&th, 0.4), 1);
        assert_eq!(bucketize(&th, 0.79), 1);
        assert_eq!(bucketize(&th, 1.0), 2);
    }

    /// Binary logits with confidence `c` for class 0 on every row; the first
    /// `hits` rows are labelled 0.
    fn constant_confidence(n: usize, c: f64, hits: usize) -> (LogitMatrix, Labels) {
        let z = LogitMatrix::from_rows(&vec![vec![(c / (1.0 - c)).ln(), 0.0]; n]).unwrap();
        let y = (0..n).map(|i| usize::from(i >= hits)).collect();
        (z, Labels::new(y))
    }

    #[test]
    fn single_bin_overconfident_first_step() {
        let (z, y) = constant_confidence(10, 0.9, 7);
        let cfg = AtsConfig {
            bins: 1,
            rounds: 30,
            ..AtsConfig::default()
        };
        let fit = fit_ats(&z, &y, &cfg).unwrap();
        let first = fit.trace[0];
        assert!((first.delta - 0.01).abs() < 1e-12, "{}", first.delta);
        assert!((first.temperature - 1.01).abs() < 1e-12);
        for w in fit.trace.windows(2) {
            if w[0].conf > w[0].acc {
                assert!(w[1].temperature > w[0].temperature);
            }
        }
        assert!(fit.best_ece <= fit.initial_ece);
    }

    #[test]
    fn calibrated_input_is_fixed_point() {
        // conf 0.75 with 3 of 4 right in every bin
        let (z, y) = constant_confidence(8, 0.75, 6);
        let fit = fit_ats(&z, &y, &AtsConfig::default()).unwrap();
        assert!(fit.trace.iter().all(|s| s.delta == 0.0));
        assert!(fit.temperatures.temps.iter().all(|&t| t == 1.0));
        assert_eq!(fit.best_round, 0);
    }

    #[test]
    fn ats_contract_on_random_logits() {
        let (z, y) = matched_logits(400, 5, 3.0, 9);
        // sharpen to make the model overconfident
        let z = z.scaled(0.4).unwrap();
        let cfg = AtsConfig::default();
        let fit = fit_ats(&z, &y, &cfg).unwrap();
        assert!(fit.best_ece <= fit.initial_ece);
        assert!(fit.best_ece < 0.5 * fit.initial_ece);
        assert!(fit.trace.iter().all(|s| s.delta.abs() <= 0.1));
        assert!(fit.temperatures.temps.iter().all(|t| (0.1..=10.0).contains(t)));

        let p = apply_ats(&z, &fit.temperatures.temps, &fit.partition.thresholds).unwrap();
        let (_, before) = confidence_and_prediction(&softmax(&z));
        let (_, after) = confidence_and_prediction(&p);
        assert_eq!(before, after);
        let (e, _) = ece_metric(&p, &y, 20).unwrap();
        assert!((e - fit.best_ece).abs() < 1e-12);

        let again = fit_ats(&z, &y, &cfg).unwrap();
        assert_eq!(again.temperatures, fit.temperatures);
    }

    #[test]
    fn two_bin_toy_softens_overconfident_bin() {
        // 10 samples at 0.95 with 6 correct, 10 at 0.6 with 6 correct
        let mut rows = vec![vec![(0.95f64 / 0.05).ln(), 0.0]; 10];
        rows.extend(vec![vec![(0.6f64 / 0.4).ln(), 0.0]; 10]);
        let z = LogitMatrix::from_rows(&rows).unwrap();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i % 10 >= 6)).collect();
        let y = Labels::new(y);
        let cfg = AtsConfig {
            bins: 2,
            rounds: 5,
            ..AtsConfig::default()
        };
        let fit = fit_ats(&z, &y, &cfg).unwrap();
        assert!(fit.temperatures.temps[1] > 1.0);
        let p = apply_ats(&z, &fit.temperatures.temps, &fit.partition.thresholds).unwrap();
        for i in 0..10 {
            assert!(p.row(i)[0] < 0.95);
        }
    }

    #[test]
    fn identity_ats_is_softmax() {
        let (z, _) = matched_logits(30, 3, 2.0, 5);
        let p = apply_ats(&z, &[1.0, 1.0, 1.0], &[0.0, 0.5, 0.7, 1.0]).unwrap();
        let s = softmax(&z);
        for (a, b) in p.view().iter().zip(s.view().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(apply_ats(&z, &[1.0], &[0.0, 0.5, 1.0]).is_err());
        assert!(apply_ats(&z, &[1.0, 0.0], &[0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn calibrator_json_shape() {
        let c = Calibrator::Ats {
            thresholds: vec![0.0, 0.1 + 0.2, 1.0],
            temperatures: vec![1.0 / 3.0, 2.5],
            config: AtsConfig::default(),
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.starts_with(r#"{"method":"ats","thresholds":["#));
        let back: Calibrator = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let ts: Calibrator = serde_json::from_str(r#"{"method":"ts","temperature":1.5}"#).unwrap();
        assert_eq!(ts, Calibrator::Ts { temperature: 1.5 });
        assert!(serde_json::from_str::<Calibrator>(r#"{"method":"ts","temperature":1.5,"x":1}"#).is_err());
    }
}
