//! `gencal` command-line tool.
//!
//! Exit codes: 0 on success, 2 for bad input (flags, files, configs), 1 for
//! internal failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gencal::calibrate::{fit_ats, fit_global_temperature, AtsConfig, Calibrator};
use gencal::datagen::{LabeledDataset, Split};
use gencal::io::{self, Provenance, ReportFile};
use gencal::losses::LossKind;
use gencal::metrics::{self, auroc, CalibrationReport, DEFAULT_BINS};
use gencal::numerics::{row_entropy, softmax};
use gencal::trainer::{forward, train, ExperimentConfig, MlpParams};
use gencal::{Labels, LogitMatrix};

#[derive(Parser)]
#[command(name = "gencal", version, about = "Calibration metrics, post-hoc calibrators and a small trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error rate, NLL, ECE, AdaECE and classwise ECE of a logits file.
    Evaluate {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a temperature-scaling or adaptive-temperature calibrator on
    /// validation logits.
    Calibrate {
        #[arg(long)]
        val_logits: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[command(flatten)]
        ats: AtsFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a fitted calibrator and report metrics before and after.
    Apply {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an MLP on the synthetic task described by an experiment config.
    ///
    /// Writes model.ckpt, history.csv, {train,val,test}_logits.csv and
    /// report.json (test split) into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the loss kind from the config.
        #[arg(long)]
        loss: Option<LossKind>,
        /// Override the seed used for both data and training.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// AUROC of softmax entropy separating out-of-distribution logits from
    /// in-distribution logits.
    Ood {
        #[arg(long)]
        in_logits: PathBuf,
        #[arg(long)]
        out_logits: PathBuf,
    },
    /// Train on a long-tailed version of the configured task.
    ///
    /// Class k keeps round(n_max * rho^(-k/(K-1))) training samples, with
    /// n_max the configured train_per_class; the validation split is then
    /// carved out of the subsampled set. Writes counts.json in addition to
    /// the outputs of `train`.
    Longtail {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss: Option<LossKind>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-bin reliability statistics (lo,hi,count,conf,acc) as CSV.
    Reliability {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ts,
    Ats,
}

#[derive(Args)]
struct AtsFlags {
    /// Number of equal-mass confidence bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Step coefficient of the temperature update.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Bound on the size of a single temperature update.
    #[arg(long)]
    delta_clip: Option<f64>,
    /// Bins of the ECE used to select the best temperature vector.
    #[arg(long)]
    select_bins: Option<usize>,
}

impl AtsFlags {
    fn config(&self) -> AtsConfig {
        let d = AtsConfig::default();
        AtsConfig {
            bins: self.bins.unwrap_or(d.bins),
            alpha: self.alpha.unwrap_or(d.alpha),
            t_min: self.t_min.unwrap_or(d.t_min),
            t_max: self.t_max.unwrap_or(d.t_max),
            rounds: self.rounds.unwrap_or(d.rounds),
            delta_clip: self.delta_clip.unwrap_or(d.delta_clip),
            select_bins: self.select_bins.unwrap_or(d.select_bins),
        }
    }

    fn any_set(&self) -> bool {
        self.bins.is_some()
            || self.alpha.is_some()
            || self.t_min.is_some()
            || self.t_max.is_some()
            || self.rounds.is_some()
            || self.delta_clip.is_some()
            || self.select_bins.is_some()
    }
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<gencal::Error> for Failure {
    fn from(e: gencal::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate { logits, bins, out } => evaluate(&logits, bins, out.as_deref()),
        Command::Calibrate {
            val_logits,
            method,
            ats,
            out,
        } => calibrate(&val_logits, method, &ats, &out),
        Command::Apply {
            logits,
            calib,
            bins,
            out,
        } => apply(&logits, &calib, bins, &out),
        Command::Train {
            config,
            out,
            loss,
            seed,
        } => run_train(&config, &out, loss, seed, None),
        Command::Ood { in_logits, out_logits } => ood(&in_logits, &out_logits),
        Command::Longtail {
            rho,
            config,
            out,
            loss,
            seed,
        } => run_train(&config, &out, loss, seed, Some(rho)),
        Command::Reliability { logits, bins, out } => reliability(&logits, bins, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn print_report(r: &CalibrationReport) {
    println!("samples        {}", r.n);
    println!("classes        {}", r.k);
    println!("bins           {}", r.bins);
    println!("error_rate     {:.4}", r.error_rate);
    println!("nll            {:.4}", r.nll);
    println!("ece            {:.4}", r.ece);
    println!("ada_ece        {:.4}", r.ada_ece);
    println!("classwise_ece  {:.4}", r.classwise_ece);
}

fn evaluate(path: &Path, bins: usize, out: Option<&Path>) -> CmdResult {
    let (z, y) = io::load_logits(path)?;
    let report = metrics::evaluate(&z, &y, bins)?;
    print_report(&report);
    if let Some(out) = out {
        io::save_report(out, &ReportFile::new(report, Provenance::now(path, None)))?;
    }
    Ok(())
}

fn calibrate(path: &Path, method: Method, flags: &AtsFlags, out: &Path) -> CmdResult {
    let (z, y) = io::load_logits(path)?;
    let calibrator = match method {
        Method::Ts => {
            if flags.any_set() {
                return Err(Failure::Input("ATS flags are only valid with --method ats".into()));
            }
            let t = fit_global_temperature(&z, &y)?;
            let before = metrics::ece(&softmax(&z), &y, DEFAULT_BINS)?.0;
            let calibrator = Calibrator::Ts { temperature: t };
            let after = metrics::ece(&calibrator.apply(&z)?, &y, DEFAULT_BINS)?.0;
            println!("temperature    {t:.4}");
            println!("val_ece        {after:.4} ({before:.4} before)");
            calibrator
        }
        Method::Ats => {
            let cfg = flags.config();
            let fit = fit_ats(&z, &y, &cfg)?;
            println!("bins           {}", fit.partition.num_bins());
            println!("best_round     {}", fit.best_round);
            println!("val_ece        {:.4} ({:.4} before)", fit.best_ece, fit.initial_ece);
            Calibrator::from_ats(&fit, cfg)
        }
    };
    io::save_calibrator(out, &calibrator)?;
    Ok(())
}

fn apply(path: &Path, calib: &Path, bins: usize, out: &Path) -> CmdResult {
    let (z, y) = io::load_logits(path)?;
    let calibrator = io::load_calibrator(calib)?;
    let before = metrics::evaluate(&z, &y, bins)?;
    let after = metrics::evaluate_probs(&calibrator.apply(&z)?, &y, bins)?;
    if after.error_rate != before.error_rate {
        return Err(Failure::Internal(format!(
            "calibration changed the error rate from {} to {}",
            before.error_rate, after.error_rate
        )));
    }
    println!("calibrator     {}", calibrator.describe());
    println!("error_rate     {:.4}", after.error_rate);
    println!("nll            {:.4} ({:.4} before)", after.nll, before.nll);
    println!("ece            {:.4} ({:.4} before)", after.ece, before.ece);
    println!("ada_ece        {:.4} ({:.4} before)", after.ada_ece, before.ada_ece);
    println!("classwise_ece  {:.4} ({:.4} before)", after.classwise_ece, before.classwise_ece);
    let mut file = ReportFile::new(after, Provenance::now(path, Some(calibrator.describe())));
    file.uncalibrated = Some(before);
    io::save_report(out, &file)?;
    Ok(())
}

fn split_logits(params: &MlpParams, ds: &LabeledDataset, split: Split) -> Result<(LogitMatrix, Labels), Failure> {
    let (x, y) = ds.split(split);
    if y.is_empty() {
        return Err(Failure::Input(format!("{split:?} split is empty")));
    }
    Ok((forward(params, &x)?, y))
}

fn run_train(config: &Path, out: &Path, loss: Option<LossKind>, seed: Option<u64>, rho: Option<f64>) -> CmdResult {
    let mut cfg: ExperimentConfig = io::load_json(config)?;
    if let Some(kind) = loss {
        cfg.train.loss.kind = kind;
    }
    if let Some(seed) = seed {
        cfg.data.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    let (ds, counts) = match rho {
        None => (cfg.data.build()?.1, None),
        Some(rho) => {
            let (_, ds, c) = cfg.data.build_longtail(rho)?;
            println!("class_counts   {c:?}");
            let n_max = cfg.data.train_per_class;
            (ds, Some(serde_json::json!({ "rho": rho, "n_max": n_max, "counts": c })))
        }
    };

    let outcome = train(&ds, &cfg.train)?;
    fs::create_dir_all(out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    if let Some(counts) = counts {
        io::save_json(&out.join("counts.json"), &counts)?;
    }
    io::save_checkpoint(&out.join("model.ckpt"), &outcome.params, &cfg.train)?;
    io::save_history(&out.join("history.csv"), &outcome.history)?;
    for (split, name) in [(Split::Train, "train"), (Split::Val, "val"), (Split::Test, "test")] {
        let (z, y) = split_logits(&outcome.params, &ds, split)?;
        io::save_logits(&out.join(format!("{name}_logits.csv")), &z, &y)?;
    }
    let test_path = out.join("test_logits.csv");
    let (z, y) = split_logits(&outcome.params, &ds, Split::Test)?;
    let report = metrics::evaluate(&z, &y, DEFAULT_BINS)?;
    io::save_report(&out.join("report.json"), &ReportFile::new(report.clone(), Provenance::now(&test_path, None)))?;

    let last = outcome.history.last().ok_or_else(|| Failure::Internal("empty history".into()))?;
    println!("loss           {}", cfg.train.loss);
    println!("epochs         {}", last.epoch);
    println!("train_loss     {:.4}", last.train_loss);
    println!("val_error      {:.4}", last.val_error);
    println!("test_error     {:.4}", report.error_rate);
    println!("test_ece       {:.4}", report.ece);
    Ok(())
}

fn ood(in_path: &Path, out_path: &Path) -> CmdResult {
    let (z_in, _) = io::load_logits(in_path)?;
    let (z_out, _) = io::load_logits(out_path)?;
    let h_in = row_entropy(&softmax(&z_in)).to_vec();
    let h_out = row_entropy(&softmax(&z_out)).to_vec();
    let a = auroc(&h_in, &h_out)?;
    println!("auroc          {a:.4}");
    Ok(())
}

fn reliability(path: &Path, bins: usize, out: &Path) -> CmdResult {
    let (z, y) = io::load_logits(path)?;
    let (_, rel) = metrics::ece(&softmax(&z), &y, bins)?;
    io::save_reliability(out, &rel.bins)?;
    Ok(())
}
