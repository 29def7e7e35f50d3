//! Numerically stable softmax primitives and the matrix newtypes shared by
//! every other module.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Row-sum tolerance accepted by [`ProbabilityMatrix::new`].
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Floor applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// N×K matrix of finite pre-softmax scores, N ≥ 1, K ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    values: Array2<f64>,
}

impl LogitMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, k) = values.dim();
        if n == 0 {
            return Err(Error::invalid("logit matrix has no rows"));
        }
        if k < 2 {
            return Err(Error::invalid(format!("logit matrix needs at least 2 classes, got {k}")));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite logit {v} at ({i}, {j})")));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> LogitMatrix {
        LogitMatrix {
            values: self.values.select(Axis(0), idx),
        }
    }

    /// Every logit divided by `t`. Finite for any finite `t` bounded away from zero.
    pub fn scaled(&self, t: f64) -> Result<LogitMatrix> {
        LogitMatrix::new(&self.values / t)
    }
}

/// N×K row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    values: Array2<f64>,
}

impl ProbabilityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("probability matrix is empty"));
        }
        for (i, row) in values.outer_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!("row {i}: probability {v} outside [0, 1]")));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    /// Skips validation; callers guarantee row-stochasticity.
    pub(crate) fn from_array_unchecked(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

/// Zero-indexed class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels(Vec<usize>);

impl Labels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        Labels(idx.iter().map(|&i| self.0[i]).collect())
    }

    /// Checks `len == n` and every label `< k`.
    pub fn check(&self, n: usize, k: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::invalid(format!(
                "label count {} does not match row count {n}",
                self.0.len()
            )));
        }
        if let Some((i, &y)) = self.0.iter().enumerate().find(|(_, &y)| y >= k) {
            return Err(Error::invalid(format!("label {y} at row {i} out of range [0, {k})")));
        }
        Ok(())
    }

    /// Per-class counts N_k.
    pub fn class_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &y in &self.0 {
            counts[y] += 1;
        }
        counts
    }
}

impl From<Vec<usize>> for Labels {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("ragged rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), k), flat).map_err(|e| Error::invalid(e.to_string()))
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// In-place softmax of one row. Entries may be `-inf` as long as one is finite.
pub(crate) fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn log_sum_exp(row: ArrayView1<'_, f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max subtraction.
pub fn softmax(z: &LogitMatrix) -> ProbabilityMatrix {
    ProbabilityMatrix::from_array_unchecked(softmax_array(z.view()))
}

pub(crate) fn softmax_array(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = z.to_owned();
    for mut row in out.outer_iter_mut() {
        softmax_row_in_place(row.as_slice_mut().expect("owned rows are contiguous"));
    }
    out
}

/// Row-wise `z - logsumexp(z)`.
pub fn log_softmax(z: &LogitMatrix) -> Array2<f64> {
    let mut out = z.view().to_owned();
    for mut row in out.outer_iter_mut() {
        let lse = log_sum_exp(row.view());
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Max probability and argmax of every row.
pub fn confidence_and_prediction(p: &ProbabilityMatrix) -> (Vec<f64>, Labels) {
    let (conf, pred): (Vec<f64>, Vec<usize>) = p
        .view()
        .outer_iter()
        .map(|row| {
            let j = argmax(row);
            (row[j], j)
        })
        .unzip();
    (conf, Labels(pred))
}

/// Shannon entropy (nats) of every row, with `0 ln 0 = 0`.
pub fn row_entropy(p: &ProbabilityMatrix) -> Array1<f64> {
    p.view()
        .outer_iter()
        .map(|row| {
            -row.iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>()
        })
        .map(|h: f64| h.max(0.0))
        .collect()
}
