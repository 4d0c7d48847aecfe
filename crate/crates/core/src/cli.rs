//! Command-line interface: data generation, single-model training and
//! evaluation, and the experiment suites.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a data or model
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{run_comparison, run_hidden_sweep, run_timing, DataSource, ExperimentConfig};
use crate::lstm::{train, LstmParams, Sequence, TrainConfig, TrainLog};
use crate::metrics::{mrse, re, EvalPair};
use crate::r2n2::{forecast_series, train_r2n2, R2n2Config, R2n2Model};
use crate::timeseries::{load_csv, save_csv, split, SplitSpec, TimeSeries};
use crate::var::VarModel;

#[derive(Parser)]
#[command(
    name = "r2n2",
    version,
    about = "Multivariate forecasting with a ridge VAR base model and a residual LSTM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModelKind {
    Var,
    Rnn,
    R2n2,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic series to CSV from a generator spec (JSON with
    /// "kind": "var" or "hybrid")
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model on a CSV and write its JSON (and optionally a
    /// training-log CSV)
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// VAR lag order
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// VAR ridge coefficient
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// LSTM hidden size
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        max_epochs: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 0.0)]
        l2_recurrent: f64,
        /// Truncated-BPTT window (0 = full unroll)
        #[arg(long, default_value_t = 0)]
        tbptt: usize,
        /// Where to write the training log CSV
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a model JSON against a CSV; writes {"mrse": .., "re": ..}
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Required for a bare LSTM model; checked against the stored
        /// horizon otherwise
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-way comparison (VAR / RNN / R2N2) from an experiment config
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// RNN vs R2N2 across hidden sizes
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learning-curve collection at matched hidden sizes
    Timing {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point used by both the binary and the integration tests. Takes
/// the full argv including the program name.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { spec, out } => {
            let source: DataSource = read_json(&spec)?;
            if matches!(source, DataSource::Csv { .. }) {
                return Err(Error::Invalid(
                    "generate needs a synthetic spec, not a csv source".into(),
                ));
            }
            let ts = source.load()?;
            save_csv(&ts, &out)
        }
        Command::Train {
            model,
            data,
            out,
            horizon,
            k,
            lambda,
            hidden,
            seed,
            max_epochs,
            lr,
            l2_recurrent,
            tbptt,
            log,
        } => {
            let ts = load_csv(&data)?;
            let train_cfg = TrainConfig {
                initial_lr: lr,
                min_lr: lr / 1e4,
                max_epochs,
                l2_recurrent,
                seed,
                tbptt_len: tbptt,
                ..TrainConfig::default()
            };
            let train_log = match model {
                ModelKind::Var => {
                    let fitted = VarModel::fit(&ts, k, horizon, lambda)?;
                    write_text(&out, &serde_json::to_string_pretty(&fitted)?)?;
                    TrainLog::default()
                }
                ModelKind::Rnn => {
                    let (train_seq, val_seq, test_seq) = shifted_splits(&ts, horizon)?;
                    let initial =
                        LstmParams::init(ts.num_features(), hidden, ts.num_features(), seed)?;
                    let (params, log) = train(
                        initial,
                        &[train_seq],
                        &[val_seq],
                        &[test_seq],
                        &train_cfg,
                    )?;
                    write_text(&out, &serde_json::to_string_pretty(&params)?)?;
                    log
                }
                ModelKind::R2n2 => {
                    let (train_ts, val_ts, test_ts) = split(&ts, &SplitSpec::default())?;
                    let cfg = R2n2Config {
                        horizon,
                        hidden_dim: hidden,
                        train: train_cfg,
                        ..R2n2Config::default()
                    };
                    let (fitted, log) = train_r2n2(&train_ts, &val_ts, &test_ts, &cfg)?;
                    write_text(&out, &serde_json::to_string_pretty(&fitted)?)?;
                    log
                }
            };
            if let Some(path) = log {
                train_log.write_csv(path)?;
            }
            Ok(())
        }
        Command::Evaluate {
            model,
            data,
            horizon,
            out,
        } => {
            let ts = load_csv(&data)?;
            let value: serde_json::Value = read_json(&model)?;
            let (m, r) = evaluate_model(&value, &ts, horizon)?;
            let text = serde_json::to_string_pretty(&json!({ "mrse": m, "re": r }))?;
            println!("{text}");
            if let Some(path) = out {
                write_text(&path, &text)?;
            }
            Ok(())
        }
        Command::Compare { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let report = run_comparison(&cfg)?;
            report.write(&out)?;
            print_aggregates(&report);
            Ok(())
        }
        Command::Sweep { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let report = run_hidden_sweep(&cfg)?;
            report.write(&out)?;
            print_aggregates(&report);
            Ok(())
        }
        Command::Timing { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let report = run_timing(&cfg)?;
            report.write(&out)?;
            print_aggregates(&report);
            Ok(())
        }
    }
}

fn print_aggregates(report: &crate::harness::EvalReport) {
    for a in &report.aggregates {
        let hidden = a.hidden.map_or(String::from("-"), |h| h.to_string());
        match (a.mean_mrse, a.std_mrse) {
            (Some(mean), Some(std)) => {
                println!("{:<9} hidden={:<4} n={} mrse={:.4} (+/- {:.4})", a.model, hidden, a.n, mean, std)
            }
            _ => println!("{:<9} hidden={:<4} n={} all cells failed", a.model, hidden, a.n),
        }
    }
    if let Some(sc) = &report.sweep_comparison {
        println!(
            "smallest r2n2 (h={}) mrse={:.4} vs largest rnn (h={}) mrse={:.4}",
            sc.r2n2_hidden, sc.r2n2_mean_mrse, sc.rnn_hidden, sc.rnn_mean_mrse
        );
    }
}

/// 60/20/20 input/target splits for the plain forecaster CLI path.
fn shifted_splits(ts: &TimeSeries, horizon: usize) -> Result<(Sequence, Sequence, Sequence)> {
    let (train_ts, val_ts, test_ts) = split(ts, &SplitSpec::default())?;
    let shift = |segment: &TimeSeries| -> Result<Sequence> {
        if segment.len() <= horizon {
            return Err(Error::TooShort(format!(
                "segment of {} rows cannot form horizon-{horizon} pairs",
                segment.len()
            )));
        }
        let inputs = segment
            .values()
            .slice(ndarray::s![..segment.len() - horizon, ..])
            .to_owned();
        let targets = segment
            .values()
            .slice(ndarray::s![horizon.., ..])
            .to_owned();
        Sequence::new(inputs, targets)
    };
    Ok((shift(&train_ts)?, shift(&val_ts)?, shift(&test_ts)?))
}

fn check_horizon(requested: Option<usize>, stored: usize) -> Result<()> {
    match requested {
        Some(h) if h != stored => Err(Error::Invalid(format!(
            "--horizon {h} does not match the model's horizon {stored}"
        ))),
        _ => Ok(()),
    }
}

/// Model files carry no explicit tag; the three formats are told apart by
/// their distinctive keys.
fn evaluate_model(
    value: &serde_json::Value,
    ts: &TimeSeries,
    horizon: Option<usize>,
) -> Result<(f64, f64)> {
    if value.get("base").is_some() && value.get("rnn").is_some() {
        let model: R2n2Model = serde_json::from_value(value.clone())?;
        model.validate()?;
        check_horizon(horizon, model.config.horizon)?;
        let (pred, offset) = forecast_series(&model, ts)?;
        let truth = ts.slice_rows(offset, ts.len())?;
        let pair = EvalPair::from_series(&truth, &pred)?;
        return Ok((mrse(&pair)?, re(&pair)?));
    }
    if value.get("coeffs").is_some() {
        let model: VarModel = serde_json::from_value(value.clone())?;
        check_horizon(horizon, model.horizon())?;
        let (pred, offset) = model.predict_series(ts)?;
        let truth = ts.slice_rows(offset, ts.len())?;
        let pair = EvalPair::from_series(&truth, &pred)?;
        return Ok((mrse(&pair)?, re(&pair)?));
    }
    if value.get("w_f").is_some() {
        let params: LstmParams = serde_json::from_value(value.clone())?;
        let h = horizon.ok_or_else(|| {
            Error::Invalid("--horizon is required to evaluate a bare lstm model".into())
        })?;
        if h == 0 || ts.len() <= h {
            return Err(Error::TooShort(format!(
                "series of {} rows cannot be scored at horizon {h}",
                ts.len()
            )));
        }
        let inputs = ts
            .values()
            .slice(ndarray::s![..ts.len() - h, ..])
            .to_owned();
        let (outputs, _) = crate::lstm::sequence_forward(&params, &inputs)?;
        let truth = ts.values().slice(ndarray::s![h.., ..]).to_owned();
        let pair = EvalPair::new(truth, outputs)?;
        return Ok((mrse(&pair)?, re(&pair)?));
    }
    Err(Error::Invalid(
        "unrecognized model file: expected a var, lstm, or r2n2 model".into(),
    ))
}
