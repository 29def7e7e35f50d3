//! On-disk formats: logits (CSV and binary), datasets, calibrators, reports,
//! training history, reliability bins and checkpoints.
//!
//! Every writer goes through a temporary file in the target directory that
//! is renamed into place, so readers never observe a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibrate::Calibrator;
use crate::datagen::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{BinStat, CalibrationReport};
use crate::numerics::{Labels, LogitMatrix};
use crate::trainer::{decode_checkpoint, encode_checkpoint, EpochRecord, MlpParams, TrainConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CALIBRATOR_SCHEMA_VERSION: u32 = 1;

const LOGITS_MAGIC: &[u8; 4] = b"CLBK";
const LOGITS_VERSION: u16 = 1;
const LOGITS_HEADER_LEN: usize = 4 + 2 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitsFormat {
    Csv,
    Binary,
}

impl LogitsFormat {
    /// `.bin` selects the binary format, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("bin") => LogitsFormat::Binary,
            _ => LogitsFormat::Csv,
        }
    }
}

/// Writes `bytes` to `path` through a temporary sibling file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::format(path, line, e.to_string())
}

/// Reads a CSV file, checks its header against `expected`, and hands every
/// data record with its 1-based line number to `row`.
fn read_csv(
    path: &Path,
    expected: &[String],
    mut row: impl FnMut(usize, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let bytes = read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(
            path,
            Some(1),
            format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                if rec.len() != expected.len() {
                    return Err(Error::format(
                        path,
                        Some(line),
                        format!("expected {} fields, found {}", expected.len(), rec.len()),
                    ));
                }
                row(line, &rec)?;
            }
            Err(e) => return Err(csv_err(path, e)),
        }
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, col: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(path, Some(line), format!("column {col}: cannot parse `{s}`")))
}

fn logits_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..k).map(|j| format!("logit_{j}")).collect();
    h.push("label".into());
    h
}

/// Saves in the format implied by the extension (see [`LogitsFormat`]).
pub fn save_logits(path: &Path, z: &LogitMatrix, y: &Labels) -> Result<()> {
    save_logits_as(path, z, y, LogitsFormat::from_path(path))
}

pub fn save_logits_as(path: &Path, z: &LogitMatrix, y: &Labels, format: LogitsFormat) -> Result<()> {
    y.check(z.n(), z.k())?;
    match format {
        LogitsFormat::Csv => {
            let mut w = csv_writer();
            w.write_record(logits_header(z.k())).map_err(|e| csv_err(path, e))?;
            for (row, &label) in z.view().outer_iter().zip(y.as_slice()) {
                let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
                rec.push(label.to_string());
                w.write_record(&rec).map_err(|e| csv_err(path, e))?;
            }
            finish_csv(path, w)
        }
        LogitsFormat::Binary => {
            let (n, k) = (z.n(), z.k());
            let mut out = Vec::with_capacity(LOGITS_HEADER_LEN + 8 * n * k + 4 * n);
            out.extend_from_slice(LOGITS_MAGIC);
            out.extend_from_slice(&LOGITS_VERSION.to_le_bytes());
            out.extend_from_slice(&(n as u64).to_le_bytes());
            out.extend_from_slice(&(k as u32).to_le_bytes());
            for v in z.view().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for &label in y.as_slice() {
                out.extend_from_slice(&(label as u32).to_le_bytes());
            }
            write_atomic(path, &out)
        }
    }
}

/// Loads logits and labels, detecting the binary format by its magic bytes.
/// Validation errors name the 1-based data row.
pub fn load_logits(path: &Path) -> Result<(LogitMatrix, Labels)> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(LOGITS_MAGIC) {
        load_binary_logits(path, &bytes)
    } else {
        load_csv_logits(path)
    }
}

fn load_binary_logits(path: &Path, bytes: &[u8]) -> Result<(LogitMatrix, Labels)> {
    let fail = |msg: String| Error::format(path, None, msg);
    if bytes.len() < LOGITS_HEADER_LEN {
        return Err(fail("truncated binary header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != LOGITS_VERSION {
        return Err(fail(format!("unsupported binary version {version}")));
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes")) as usize;
    let k = u32::from_le_bytes(bytes[14..18].try_into().expect("4 bytes")) as usize;
    let expected = n
        .checked_mul(k)
        .and_then(|nk| nk.checked_mul(8))
        .and_then(|b| b.checked_add(n.checked_mul(4)?))
        .and_then(|b| b.checked_add(LOGITS_HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(fail(format!("size mismatch for n={n}, k={k}: file has {} bytes", bytes.len())));
    }
    if n == 0 || k < 2 {
        return Err(fail(format!("need n >= 1 and k >= 2, got n={n}, k={k}")));
    }
    let body = &bytes[LOGITS_HEADER_LEN..];
    let (vals, labs) = body.split_at(8 * n * k);
    let values: Vec<f64> = vals
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let labels: Vec<usize> = labs
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    for (i, row) in values.chunks_exact(k).enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(validation(path, i + 1, "non-finite logit"));
        }
        if labels[i] >= k {
            return Err(validation(path, i + 1, &format!("label {} outside [0, {k})", labels[i])));
        }
    }
    let z = Array2::from_shape_vec((n, k), values).map_err(|e| fail(e.to_string()))?;
    Ok((LogitMatrix::new(z)?, Labels::new(labels)))
}

fn validation(path: &Path, row: usize, msg: &str) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        row,
        msg: msg.to_string(),
    }
}

fn csv_header_width(path: &Path) -> Result<usize> {
    let bytes = read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    Ok(rdr.headers().map_err(|e| csv_err(path, e))?.len())
}

fn load_csv_logits(path: &Path) -> Result<(LogitMatrix, Labels)> {
    let width = csv_header_width(path)?;
    if width < 3 {
        return Err(Error::format(path, Some(1), "need at least two logit columns and a label"));
    }
    let k = width - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    read_csv(path, &logits_header(k), |line, rec| {
        let row = labels.len() + 1;
        for (j, s) in rec.iter().take(k).enumerate() {
            let v: f64 = parse_field(path, line, &format!("logit_{j}"), s)?;
            if !v.is_finite() {
                return Err(validation(path, row, &format!("non-finite logit_{j}")));
            }
            values.push(v);
        }
        let label: usize = parse_field(path, line, "label", &rec[k])?;
        if label >= k {
            return Err(validation(path, row, &format!("label {label} outside [0, {k})")));
        }
        labels.push(label);
        Ok(())
    })?;
    if labels.is_empty() {
        return Err(Error::format(path, None, "no data rows"));
    }
    let z = Array2::from_shape_vec((labels.len(), k), values).map_err(|e| Error::format(path, None, e.to_string()))?;
    Ok((LogitMatrix::new(z)?, Labels::new(labels)))
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn dataset_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
    h.push("label".into());
    h.push("split".into());
    h
}

/// CSV with header `x_0,…,x_{d-1},label,split`.
pub fn save_dataset(path: &Path, ds: &LabeledDataset) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(dataset_header(ds.features.ncols())).map_err(|e| csv_err(path, e))?;
    for ((row, &label), &split) in ds.features.outer_iter().zip(ds.labels.as_slice()).zip(&ds.splits) {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(label.to_string());
        rec.push(split_name(split).into());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish_csv(path, w)
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let width = csv_header_width(path)?;
    if width < 3 {
        return Err(Error::format(path, Some(1), "need at least one feature, a label and a split"));
    }
    let d = width - 2;
    let (mut values, mut labels, mut splits) = (Vec::new(), Vec::new(), Vec::new());
    read_csv(path, &dataset_header(d), |line, rec| {
        let row = labels.len() + 1;
        for (j, s) in rec.iter().take(d).enumerate() {
            let v: f64 = parse_field(path, line, &format!("x_{j}"), s)?;
            if !v.is_finite() {
                return Err(validation(path, row, &format!("non-finite x_{j}")));
            }
            values.push(v);
        }
        labels.push(parse_field::<usize>(path, line, "label", &rec[d])?);
        splits.push(match &rec[d + 1] {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            other => return Err(Error::format(path, Some(line), format!("unknown split `{other}`"))),
        });
        Ok(())
    })?;
    let features =
        Array2::from_shape_vec((labels.len(), d), values).map_err(|e| Error::format(path, None, e.to_string()))?;
    Ok(LabeledDataset {
        features,
        labels: Labels::new(labels),
        splits,
    })
}

fn to_json_bytes<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, None, e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Pretty-printed JSON, written atomically.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(path, value)?)
}

/// Parses JSON, reporting the failing line.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        let line = (e.line() > 0).then_some(e.line());
        Error::format(path, line, e.to_string())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibratorFile {
    schema_version: u32,
    calibrator: Calibrator,
}

pub fn save_calibrator(path: &Path, calibrator: &Calibrator) -> Result<()> {
    calibrator.validate()?;
    save_json(
        path,
        &CalibratorFile {
            schema_version: CALIBRATOR_SCHEMA_VERSION,
            calibrator: calibrator.clone(),
        },
    )
}

pub fn load_calibrator(path: &Path) -> Result<Calibrator> {
    let file: CalibratorFile = load_json(path)?;
    if file.schema_version != CALIBRATOR_SCHEMA_VERSION {
        return Err(Error::format(
            path,
            None,
            format!("unsupported calibrator schema_version {}", file.schema_version),
        ));
    }
    file.calibrator
        .validate()
        .map_err(|e| Error::format(path, None, e.to_string()))?;
    Ok(file.calibrator)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Input file the report was computed from.
    pub input: PathBuf,
    /// Calibrator applied, if any.
    pub calibrator: Option<String>,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn now(input: &Path, calibrator: Option<String>) -> Self {
        Self {
            input: input.to_path_buf(),
            calibrator,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Report JSON: the metrics, optionally the uncalibrated metrics of the
/// same data, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub report: CalibrationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncalibrated: Option<CalibrationReport>,
}

impl ReportFile {
    pub fn new(report: CalibrationReport, provenance: Provenance) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            provenance,
            report,
            uncalibrated: None,
        }
    }
}

pub fn save_report(path: &Path, report: &ReportFile) -> Result<()> {
    save_json(path, report)
}

pub fn load_report(path: &Path) -> Result<ReportFile> {
    let r: ReportFile = load_json(path)?;
    if r.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::format(path, None, format!("unsupported report schema_version {}", r.schema_version)));
    }
    Ok(r)
}

const HISTORY_HEADER: [&str; 4] = ["epoch", "train_loss", "val_loss", "val_error"];
const RELIABILITY_HEADER: [&str; 5] = ["lo", "hi", "count", "conf", "acc"];

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(HISTORY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            fmt_f64(r.train_loss),
            fmt_f64(r.val_loss),
            fmt_f64(r.val_error),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish_csv(path, w)
}

pub fn load_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    read_csv(path, &owned(&HISTORY_HEADER), |line, rec| {
        out.push(EpochRecord {
            epoch: parse_field(path, line, "epoch", &rec[0])?,
            train_loss: parse_field(path, line, "train_loss", &rec[1])?,
            val_loss: parse_field(path, line, "val_loss", &rec[2])?,
            val_error: parse_field(path, line, "val_error", &rec[3])?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Per-bin `lo,hi,count,conf,acc`; empty bins have conf and acc 0.
pub fn save_reliability(path: &Path, bins: &[BinStat]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(RELIABILITY_HEADER).map_err(|e| csv_err(path, e))?;
    for b in bins {
        w.write_record([fmt_f64(b.lo), fmt_f64(b.hi), b.count.to_string(), fmt_f64(b.conf), fmt_f64(b.acc)])
            .map_err(|e| csv_err(path, e))?;
    }
    finish_csv(path, w)
}

pub fn load_reliability(path: &Path) -> Result<Vec<BinStat>> {
    let mut out = Vec::new();
    read_csv(path, &owned(&RELIABILITY_HEADER), |line, rec| {
        out.push(BinStat {
            lo: parse_field(path, line, "lo", &rec[0])?,
            hi: parse_field(path, line, "hi", &rec[1])?,
            count: parse_field(path, line, "count", &rec[2])?,
            conf: parse_field(path, line, "conf", &rec[3])?,
            acc: parse_field(path, line, "acc", &rec[4])?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn save_checkpoint(path: &Path, params: &MlpParams, cfg: &TrainConfig) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params, cfg)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, TrainConfig)> {
    decode_checkpoint(&read_bytes(path)?).map_err(|msg| Error::format(path, None, msg))
}
