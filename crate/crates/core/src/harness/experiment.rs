//! Experiment runner: one preprocessing pipeline feeding the VAR baselines,
//! plain LSTM forecasters, and residual compositions, all scored on the
//! same slice of the test segment with metrics on the original scale.
//!
//! Every (model, hidden, seed) cell is independent and seeded, so cells may
//! run in parallel without affecting the results; reports are reproducible
//! byte for byte apart from wall-clock columns.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{train_with_eval, LstmParams, Sequence, TrainConfig, TrainLog};
use crate::metrics::{mrse, re, EvalPair};
use crate::r2n2::{forecast_series, train_r2n2_with_eval, R2n2Config, R2n2Model};
use crate::timeseries::{load_csv, split, Normalizer, SeasonalMeans, SplitSpec, TimeSeries};
use crate::var::{select_order, validation_mrse, VarModel, DEFAULT_LAMBDA_GRID};

use super::generate::{gen_hybrid_data, gen_var_data, HybridProcessSpec, NoiseSpec};
use super::report::{CurvePoint, EvalCell, EvalReport, SweepComparison};

/// Where the experiment's series comes from: a CSV file or one of the
/// synthetic generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: String,
    },
    Var {
        coeffs: Vec<Vec<f64>>,
        intercept: Vec<f64>,
        noise: NoiseSpec,
        t: usize,
        #[serde(default)]
        burn_in: usize,
    },
    Hybrid {
        coeffs: Vec<Vec<f64>>,
        amplitude: f64,
        lag: usize,
        noise: NoiseSpec,
        t: usize,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<TimeSeries> {
        match self {
            DataSource::Csv { path } => load_csv(path),
            DataSource::Var {
                coeffs,
                intercept,
                noise,
                t,
                burn_in,
            } => {
                let p = coeffs.len();
                let a = crate::serde_util::rows_to_matrix(coeffs, p, p)?;
                gen_var_data(
                    &a,
                    &ndarray::Array1::from_vec(intercept.clone()),
                    noise,
                    *t,
                    *burn_in,
                )
            }
            DataSource::Hybrid {
                coeffs,
                amplitude,
                lag,
                noise,
                t,
            } => gen_hybrid_data(&HybridProcessSpec {
                p: coeffs.len(),
                t: *t,
                coeffs: coeffs.clone(),
                amplitude: *amplitude,
                lag: *lag,
                noise: noise.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarSearchConfig {
    pub k_max: usize,
    pub lambda_grid: Vec<f64>,
}

impl Default for VarSearchConfig {
    fn default() -> Self {
        Self {
            k_max: 6,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnExperimentConfig {
    pub hidden_sizes: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for RnnExperimentConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![8, 16, 32],
            train: desk_train_config(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct R2n2ExperimentConfig {
    pub hidden_sizes: Vec<usize>,
    pub augment_with_input: bool,
    pub base_lambda: Option<f64>,
    pub train: TrainConfig,
}

impl Default for R2n2ExperimentConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![8, 16, 32],
            augment_with_input: true,
            base_lambda: None,
            train: desk_train_config(),
        }
    }
}

/// Training settings sized for the desk-scale benchmarks: truncated
/// windows give several updates per epoch over a few thousand rows.
fn desk_train_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 60,
        tbptt_len: 256,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub deseasonalize_period: Option<usize>,
    #[serde(default)]
    pub var: VarSearchConfig,
    #[serde(default)]
    pub rnn: RnnExperimentConfig,
    #[serde(default)]
    pub r2n2: R2n2ExperimentConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_horizon() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

/// Stable coefficients for the default benchmarks: two cross-coupled
/// rotations, so orbits oscillate instead of settling and the sine drive
/// stays in its saturated, strongly nonlinear range.
fn benchmark_coeffs() -> Vec<Vec<f64>> {
    let (c1, s1) = (0.7f64.cos(), 0.7f64.sin());
    let (c2, s2) = (0.4f64.cos(), 0.4f64.sin());
    vec![
        vec![0.95 * c1, -0.95 * s1, 0.1, 0.0],
        vec![0.95 * s1, 0.95 * c1, 0.0, 0.0],
        vec![0.0, 0.0, 0.9 * c2, -0.9 * s2],
        vec![0.0, 0.1, 0.9 * s2, 0.9 * c2],
    ]
}

impl ExperimentConfig {
    /// The hybrid benchmark: four features, 6000 rows, sine amplitude 0.5
    /// at lag 3, noise 0.1, horizon 1, five seeds.
    pub fn default_hybrid_benchmark() -> Self {
        Self {
            data: DataSource::Hybrid {
                coeffs: benchmark_coeffs(),
                amplitude: 0.5,
                lag: 3,
                noise: NoiseSpec { std: 0.1, seed: 7 },
                t: 6000,
            },
            split: SplitSpec::default(),
            horizon: 1,
            deseasonalize_period: None,
            var: VarSearchConfig::default(),
            rnn: RnnExperimentConfig::default(),
            r2n2: R2n2ExperimentConfig::default(),
            seeds: default_seeds(),
        }
    }

    /// The same process with the nonlinearity switched off; linear models
    /// should win here.
    pub fn default_linear_benchmark() -> Self {
        let mut cfg = Self::default_hybrid_benchmark();
        if let DataSource::Hybrid { amplitude, .. } = &mut cfg.data {
            *amplitude = 0.0;
        }
        cfg.rnn.hidden_sizes = vec![16];
        cfg.r2n2.hidden_sizes = vec![16];
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Invalid("need at least one seed".into()));
        }
        if self.var.k_max == 0 || self.var.lambda_grid.is_empty() {
            return Err(Error::Invalid("var search needs k_max >= 1 and a grid".into()));
        }
        if self.rnn.hidden_sizes.is_empty() && self.r2n2.hidden_sizes.is_empty() {
            return Err(Error::Invalid("no models configured".into()));
        }
        self.rnn.train.validate()?;
        self.r2n2.train.validate()?;
        Ok(())
    }

    /// First test row every model can predict, so that all models are
    /// compared on identical targets: the best VAR needs `k_max - 1 + h`
    /// context rows and the composition needs `2h` (its RNN predicts one
    /// horizon past the first residual).
    fn eval_from(&self) -> usize {
        (self.var.k_max - 1 + self.horizon).max(2 * self.horizon)
    }
}

/// Preprocessing fit on the training segment: optional seasonal-mean
/// removal, then z-scoring.
struct Transforms {
    seasonal: Option<SeasonalMeans>,
    norm: Normalizer,
}

impl Transforms {
    fn fit(train_raw: &TimeSeries, period: Option<usize>) -> Result<Self> {
        let seasonal = match period {
            Some(p) => Some(SeasonalMeans::fit(train_raw, p)?),
            None => None,
        };
        let deseasoned = match &seasonal {
            Some(sm) => sm.apply(train_raw)?,
            None => train_raw.clone(),
        };
        let norm = Normalizer::fit(&deseasoned)?;
        Ok(Self { seasonal, norm })
    }

    fn apply(&self, ts: &TimeSeries, abs_offset: usize) -> Result<TimeSeries> {
        let deseasoned = match &self.seasonal {
            Some(sm) => sm.at_offset(abs_offset).apply(ts)?,
            None => ts.clone(),
        };
        self.norm.apply(&deseasoned)
    }

    /// Back to the original scale: un-z-score, then add seasonal means,
    /// `abs_offset` being the absolute series index of row 0 of `rows`.
    fn invert_rows(&self, rows: &Array2<f64>, abs_offset: usize) -> Result<Array2<f64>> {
        let unscaled = self.norm.invert_array(rows)?;
        match &self.seasonal {
            Some(sm) => sm.at_offset(abs_offset).invert_array(&unscaled),
            None => Ok(unscaled),
        }
    }
}

/// Everything the per-cell runners need, computed once per experiment.
struct Prepared {
    train: TimeSeries,
    val: TimeSeries,
    test: TimeSeries,
    /// Original-scale truth for the common evaluation rows.
    test_truth: Array2<f64>,
    transforms: Transforms,
    /// Absolute series index of test row 0.
    test_offset: usize,
    horizon: usize,
    eval_from: usize,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let data = cfg.data.load()?;
    let (train_raw, val_raw, test_raw) = split(&data, &cfg.split)?;
    let transforms = Transforms::fit(&train_raw, cfg.deseasonalize_period)?;
    let test_offset = train_raw.len() + val_raw.len();
    let eval_from = cfg.eval_from();
    if test_raw.len() <= eval_from {
        return Err(Error::TooShort(format!(
            "test segment has {} rows, need more than {eval_from}",
            test_raw.len()
        )));
    }
    let test_truth = test_raw
        .values()
        .slice(ndarray::s![eval_from.., ..])
        .to_owned();
    Ok(Prepared {
        train: transforms.apply(&train_raw, 0)?,
        val: transforms.apply(&val_raw, train_raw.len())?,
        test: transforms.apply(&test_raw, test_offset)?,
        test_truth,
        transforms,
        test_offset,
        horizon: cfg.horizon,
        eval_from,
    })
}

impl Prepared {
    /// Score normalized predictions whose first row targets test row
    /// `offset`, trimmed to the common evaluation rows and inverted to the
    /// original scale.
    fn score(&self, preds_norm: &Array2<f64>, offset: usize) -> Result<(f64, f64)> {
        if offset > self.eval_from {
            return Err(Error::Invalid(format!(
                "predictions start at row {offset}, past the common start {}",
                self.eval_from
            )));
        }
        let trimmed = preds_norm
            .slice(ndarray::s![self.eval_from - offset.., ..])
            .to_owned();
        let original = self
            .transforms
            .invert_rows(&trimmed, self.test_offset + self.eval_from)?;
        let pair = EvalPair::new(self.test_truth.clone(), original)?;
        Ok((mrse(&pair)?, re(&pair)?))
    }

    fn score_var(&self, model: &VarModel) -> Result<(f64, f64)> {
        let (pred, offset) = model.predict_series(&self.test)?;
        self.score(pred.values(), offset)
    }

    fn score_rnn(&self, params: &LstmParams) -> Result<(f64, f64)> {
        let h = self.horizon;
        let inputs = self
            .test
            .values()
            .slice(ndarray::s![..self.test.len() - h, ..])
            .to_owned();
        let (outputs, _) = crate::lstm::sequence_forward(params, &inputs)?;
        // output at step t predicts test row t + h
        self.score(&outputs, h)
    }

    fn score_r2n2(&self, model: &R2n2Model) -> Result<(f64, f64)> {
        let (pred, offset) = forecast_series(model, &self.test)?;
        self.score(pred.values(), offset)
    }

    /// Input/target pair for the plain forecaster: input row `t`, target
    /// row `t + h`.
    fn shifted_sequence(&self, segment: &TimeSeries) -> Result<Sequence> {
        let h = self.horizon;
        if segment.len() <= h {
            return Err(Error::TooShort(format!(
                "segment of {} rows cannot form horizon-{h} pairs",
                segment.len()
            )));
        }
        let inputs = segment
            .values()
            .slice(ndarray::s![..segment.len() - h, ..])
            .to_owned();
        let targets = segment.values().slice(ndarray::s![h.., ..]).to_owned();
        Sequence::new(inputs, targets)
    }
}

struct CellOutcome {
    mrse: f64,
    re: f64,
    train_seconds: f64,
    epochs_to_best: usize,
    note: Option<String>,
    curve: Vec<(usize, f64, f64)>, // epoch, wall, test mrse
}

fn var1_outcome(prep: &Prepared, grid: &[f64]) -> Result<CellOutcome> {
    let start = Instant::now();
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    grid.dedup();
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &grid {
        match validation_mrse(&prep.train, &prep.val, 1, prep.horizon, lambda) {
            Ok(score) => {
                if best.is_none_or(|(_, s)| score < s) {
                    best = Some((lambda, score));
                }
            }
            Err(Error::SingularSystem) => continue,
            Err(e) => return Err(e),
        }
    }
    let (lambda, _) = best.ok_or(Error::SingularSystem)?;
    let model = VarModel::fit(&prep.train, 1, prep.horizon, lambda)?;
    let (m, r) = prep.score_var(&model)?;
    Ok(CellOutcome {
        mrse: m,
        re: r,
        train_seconds: start.elapsed().as_secs_f64(),
        epochs_to_best: 0,
        note: Some(format!("lambda={lambda}")),
        curve: Vec::new(),
    })
}

fn var_best_outcome(prep: &Prepared, var_cfg: &VarSearchConfig) -> Result<CellOutcome> {
    let start = Instant::now();
    let search = select_order(
        &prep.train,
        &prep.val,
        prep.horizon,
        var_cfg.k_max,
        &var_cfg.lambda_grid,
    )?;
    let model = VarModel::fit(&prep.train, search.best_k, prep.horizon, search.best_lambda)?;
    let (m, r) = prep.score_var(&model)?;
    Ok(CellOutcome {
        mrse: m,
        re: r,
        train_seconds: start.elapsed().as_secs_f64(),
        epochs_to_best: 0,
        note: Some(format!("k={}, lambda={}", search.best_k, search.best_lambda)),
        curve: Vec::new(),
    })
}

fn log_to_curve(log: &TrainLog) -> Vec<(usize, f64, f64)> {
    log.entries
        .iter()
        .map(|e| (e.epoch, e.wall_seconds, e.test_loss))
        .collect()
}

fn rnn_outcome(
    prep: &Prepared,
    hidden: usize,
    seed: u64,
    base_cfg: &TrainConfig,
) -> Result<CellOutcome> {
    let p = prep.train.num_features();
    let train_seq = prep.shifted_sequence(&prep.train)?;
    let val_seq = prep.shifted_sequence(&prep.val)?;
    let mut cfg = base_cfg.clone();
    cfg.seed = seed;
    let initial = LstmParams::init(p, hidden, p, seed)?;
    let (trained, log) = train_with_eval(
        initial,
        std::slice::from_ref(&train_seq),
        std::slice::from_ref(&val_seq),
        &cfg,
        &|params| prep.score_rnn(params).map(|(m, _)| m),
    )?;
    let (m, r) = prep.score_rnn(&trained)?;
    Ok(CellOutcome {
        mrse: m,
        re: r,
        train_seconds: log.entries.last().map_or(0.0, |e| e.wall_seconds),
        epochs_to_best: log.best_epoch(),
        note: None,
        curve: log_to_curve(&log),
    })
}

fn r2n2_outcome(
    prep: &Prepared,
    hidden: usize,
    seed: u64,
    exp: &R2n2ExperimentConfig,
    lambda_grid: &[f64],
) -> Result<CellOutcome> {
    let mut train_cfg = exp.train.clone();
    train_cfg.seed = seed;
    let cfg = R2n2Config {
        horizon: prep.horizon,
        augment_with_input: exp.augment_with_input,
        base_order: 1,
        base_lambda: exp.base_lambda,
        base_lambda_grid: lambda_grid.to_vec(),
        hidden_dim: hidden,
        train: train_cfg,
    };
    let (model, log) = train_r2n2_with_eval(&prep.train, &prep.val, &cfg, &|snapshot| {
        prep.score_r2n2(snapshot).map(|(m, _)| m)
    })?;
    let (m, r) = prep.score_r2n2(&model)?;
    Ok(CellOutcome {
        mrse: m,
        re: r,
        train_seconds: log.entries.last().map_or(0.0, |e| e.wall_seconds),
        epochs_to_best: log.best_epoch(),
        note: Some(format!("base_lambda={}", model.base.lambda())),
        curve: log_to_curve(&log),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Family {
    Var1,
    VarBest,
    Rnn,
    R2n2,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Var1 => "var1",
            Family::VarBest => "var_best",
            Family::Rnn => "rnn",
            Family::R2n2 => "r2n2",
        }
    }
}

fn run_families(cfg: &ExperimentConfig, families: &[Family]) -> Result<EvalReport> {
    let prep = prepare(cfg)?;

    let mut cells = Vec::new();
    let mut curves = Vec::new();

    // The VAR baselines are seed-independent: compute once, replicate so
    // the report keeps its full model x seed grid.
    for family in [Family::Var1, Family::VarBest] {
        if !families.contains(&family) {
            continue;
        }
        let outcome = match family {
            Family::Var1 => var1_outcome(&prep, &cfg.var.lambda_grid),
            Family::VarBest => var_best_outcome(&prep, &cfg.var),
            _ => unreachable!(),
        };
        for &seed in &cfg.seeds {
            cells.push(outcome_to_cell(family.name(), None, seed, &outcome));
        }
    }

    // Neural cells are independent; run them in parallel and assemble in
    // the deterministic spec order.
    let mut specs: Vec<(Family, usize, u64)> = Vec::new();
    if families.contains(&Family::Rnn) {
        for &hidden in &cfg.rnn.hidden_sizes {
            for &seed in &cfg.seeds {
                specs.push((Family::Rnn, hidden, seed));
            }
        }
    }
    if families.contains(&Family::R2n2) {
        for &hidden in &cfg.r2n2.hidden_sizes {
            for &seed in &cfg.seeds {
                specs.push((Family::R2n2, hidden, seed));
            }
        }
    }
    let outcomes: Vec<Result<CellOutcome>> = specs
        .par_iter()
        .map(|&(family, hidden, seed)| match family {
            Family::Rnn => rnn_outcome(&prep, hidden, seed, &cfg.rnn.train),
            Family::R2n2 => r2n2_outcome(&prep, hidden, seed, &cfg.r2n2, &cfg.var.lambda_grid),
            _ => unreachable!(),
        })
        .collect();

    for ((family, hidden, seed), outcome) in specs.into_iter().zip(outcomes) {
        let name = family.name();
        if let Ok(ok) = &outcome {
            for &(epoch, wall, test_mrse) in &ok.curve {
                curves.push(CurvePoint {
                    model: name.to_string(),
                    hidden,
                    seed,
                    epoch,
                    wall_seconds: wall,
                    test_mrse,
                });
            }
        }
        cells.push(outcome_to_cell(name, Some(hidden), seed, &outcome));
    }

    Ok(EvalReport::new(cells, curves, None))
}

fn outcome_to_cell(
    model: &str,
    hidden: Option<usize>,
    seed: u64,
    outcome: &Result<CellOutcome>,
) -> EvalCell {
    match outcome {
        Ok(ok) => EvalCell {
            model: model.to_string(),
            hidden,
            seed,
            mrse: Some(ok.mrse),
            re: Some(ok.re),
            train_seconds: ok.train_seconds,
            epochs_to_best: ok.epochs_to_best,
            note: ok.note.clone(),
            error: None,
        },
        Err(e) => EvalCell {
            model: model.to_string(),
            hidden,
            seed,
            mrse: None,
            re: None,
            train_seconds: 0.0,
            epochs_to_best: 0,
            note: None,
            error: Some(e.to_string()),
        },
    }
}

/// The three-way comparison: VAR-1, best VAR, plain LSTM at each hidden
/// size, and the residual composition at each hidden size, across seeds.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<EvalReport> {
    run_families(
        cfg,
        &[Family::Var1, Family::VarBest, Family::Rnn, Family::R2n2],
    )
}

/// Plain LSTM against the composition across the hidden-size grids, with
/// the smallest-composition versus largest-plain headline row.
pub fn run_hidden_sweep(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let mut report = run_families(cfg, &[Family::Rnn, Family::R2n2])?;
    let r2n2_hidden = cfg.r2n2.hidden_sizes.iter().copied().min();
    let rnn_hidden = cfg.rnn.hidden_sizes.iter().copied().max();
    if let (Some(small), Some(large)) = (r2n2_hidden, rnn_hidden) {
        let r2 = report.mean_mrse("r2n2", Some(small));
        let rn = report.mean_mrse("rnn", Some(large));
        if let (Some(r2), Some(rn)) = (r2, rn) {
            report.sweep_comparison = Some(SweepComparison {
                r2n2_hidden: small,
                r2n2_mean_mrse: r2,
                rnn_hidden: large,
                rnn_mean_mrse: rn,
            });
        }
    }
    Ok(report)
}

/// Learning-curve collection at matched hidden sizes; the report's curves
/// are the payload.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<EvalReport> {
    run_families(cfg, &[Family::Rnn, Family::R2n2])
}
