//! The residual composition: a linear base model forecasts the series, an
//! LSTM forecasts the base model's future error from the residual history,
//! and the final prediction is their element-wise sum.
//!
//! With base forecast `x~_{t+h} = f(x_{:t})` and residual
//! `e~_{t+h} = x_{t+h} - x~_{t+h}`, the RNN consumes the residual sequence
//! (optionally augmented with the raw series) and is trained to predict the
//! residual one horizon ahead of its latest observed residual; the combined
//! forecast adds that predicted error to the base forecast.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{sequence_forward, LstmParams, Sequence, TrainConfig, TrainLog};
use crate::metrics::{mrse, EvalPair};
use crate::timeseries::TimeSeries;
use crate::var::{validation_mrse, VarModel, DEFAULT_LAMBDA_GRID};

/// Composition settings. The base model is a VAR of order `base_order`
/// (1 unless configured otherwise); its ridge coefficient is `base_lambda`
/// when set, otherwise chosen from `base_lambda_grid` by validation MRSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct R2n2Config {
    pub horizon: usize,
    /// Feed `[residual, raw series]` to the RNN instead of the residual
    /// alone, so it sees what the truth looked like for each error.
    pub augment_with_input: bool,
    pub base_order: usize,
    pub base_lambda: Option<f64>,
    pub base_lambda_grid: Vec<f64>,
    pub hidden_dim: usize,
    pub train: TrainConfig,
}

impl Default for R2n2Config {
    fn default() -> Self {
        Self {
            horizon: 1,
            augment_with_input: true,
            base_order: 1,
            base_lambda: None,
            base_lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            hidden_dim: 16,
            train: TrainConfig::default(),
        }
    }
}

impl R2n2Config {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.base_order == 0 || self.hidden_dim == 0 {
            return Err(Error::Invalid(
                "horizon, base_order and hidden_dim must be >= 1".into(),
            ));
        }
        if self.base_lambda.is_none() && self.base_lambda_grid.is_empty() {
            return Err(Error::Invalid("base lambda grid is empty".into()));
        }
        self.train.validate()
    }

    /// RNN input width for a `p`-feature series.
    pub fn rnn_input_dim(&self, p: usize) -> usize {
        if self.augment_with_input {
            2 * p
        } else {
            p
        }
    }
}

/// A trained composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2n2Model {
    pub config: R2n2Config,
    pub base: VarModel,
    pub rnn: LstmParams,
}

impl R2n2Model {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let p = self.base.num_features();
        if self.base.horizon() != self.config.horizon {
            return Err(Error::Invalid("base horizon differs from config".into()));
        }
        if self.base.order() != self.config.base_order {
            return Err(Error::Invalid("base order differs from config".into()));
        }
        if self.rnn.input_dim != self.config.rnn_input_dim(p) || self.rnn.output_dim != p {
            return Err(Error::Invalid(format!(
                "rnn dims ({}, {}) do not fit a {p}-feature composition",
                self.rnn.input_dim, self.rnn.output_dim
            )));
        }
        Ok(())
    }
}

/// Base-model errors over a series. Residual row `r` describes series row
/// `r + target_offset`: truth minus base prediction, so prediction plus
/// residual reproduces the truth exactly.
#[derive(Debug, Clone)]
pub struct ResidualSeries {
    pub residuals: TimeSeries,
    pub target_offset: usize,
}

impl ResidualSeries {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Element-wise `truth - prediction` over every forecastable row of `ts`.
pub fn compute_residuals(base: &VarModel, ts: &TimeSeries) -> Result<ResidualSeries> {
    let (pred, offset) = base.predict_series(ts)?;
    let truth = ts.slice_rows(offset, ts.len())?;
    let residuals = TimeSeries::new(truth.values() - pred.values(), ts.feature_names().to_vec())?;
    Ok(ResidualSeries {
        residuals,
        target_offset: offset,
    })
}

/// RNN input rows over the whole residual series: residual `r`, optionally
/// concatenated with the raw observation at the residual's own time.
fn rnn_inputs(res: &ResidualSeries, ts: &TimeSeries, cfg: &R2n2Config) -> Result<Array2<f64>> {
    let p = ts.num_features();
    let r_len = res.len();
    let width = cfg.rnn_input_dim(p);
    let mut inputs = Array2::<f64>::zeros((r_len, width));
    for r in 0..r_len {
        let mut row = inputs.row_mut(r);
        row.slice_mut(ndarray::s![..p]).assign(&res.residuals.row(r));
        if cfg.augment_with_input {
            row.slice_mut(ndarray::s![p..])
                .assign(&ts.row(r + res.target_offset));
        }
    }
    Ok(inputs)
}

/// Training pairs for the residual learner: the target at input row `r` is
/// the residual `horizon` steps later, so the RNN always predicts the base
/// model's error one horizon ahead of its latest observed residual. The
/// last `horizon` rows have no target and are dropped.
pub fn build_rnn_io(res: &ResidualSeries, ts: &TimeSeries, cfg: &R2n2Config) -> Result<Sequence> {
    let h = cfg.horizon;
    if res.len() < h + 1 {
        return Err(Error::TooShort(format!(
            "need at least horizon + 1 = {} residual rows, got {}",
            h + 1,
            res.len()
        )));
    }
    let inputs = rnn_inputs(res, ts, cfg)?;
    let n_pairs = res.len() - h;
    let inputs = inputs.slice(ndarray::s![..n_pairs, ..]).to_owned();
    let targets = res
        .residuals
        .values()
        .slice(ndarray::s![h.., ..])
        .to_owned();
    Sequence::new(inputs, targets)
}

/// Combined forecasts over a series: row `r` of the output targets series
/// row `r + offset` with `offset = base_order - 1 + 2 * horizon`. Each
/// combined row is the base forecast plus the RNN's residual forecast, the
/// RNN having consumed the residual history from the start of `ts`.
pub fn forecast_series(model: &R2n2Model, ts: &TimeSeries) -> Result<(TimeSeries, usize)> {
    let h = model.config.horizon;
    let res = compute_residuals(&model.base, ts)?;
    if res.len() <= h {
        return Err(Error::TooShort(format!(
            "need more than horizon = {h} residual rows, got {}",
            res.len()
        )));
    }
    let inputs = rnn_inputs(&res, ts, &model.config)?;
    let (rnn_out, _) = sequence_forward(&model.rnn, &inputs)?;
    let (base_pred, base_offset) = model.base.predict_series(ts)?;

    let n = res.len() - h;
    let p = ts.num_features();
    let mut combined = Array2::<f64>::zeros((n, p));
    for r in 0..n {
        // RNN output at residual row r predicts the residual at row r + h
        let row = &base_pred.row(r + h) + &rnn_out.row(r);
        combined.row_mut(r).assign(&row);
    }
    let series = TimeSeries::new(combined, ts.feature_names().to_vec())?;
    Ok((series, base_offset + h))
}

/// Forecast `horizon` steps past the last observed row. `recent_truth`
/// immediately follows `history` in time; together they are all data
/// observed so far. The RNN warms up from a zero state over the entire
/// available residual history.
pub fn predict_r2n2(
    model: &R2n2Model,
    history: &TimeSeries,
    recent_truth: &TimeSeries,
) -> Result<Array1<f64>> {
    let full = TimeSeries::concat(&[history, recent_truth])?;
    let res = compute_residuals(&model.base, &full)?;
    let inputs = rnn_inputs(&res, &full, &model.config)?;
    let (rnn_out, _) = sequence_forward(&model.rnn, &inputs)?;
    let predicted_residual = rnn_out.row(rnn_out.nrows() - 1);
    let base_next = model.base.predict(&full)?;
    Ok(&base_next + &predicted_residual)
}

fn pick_base_lambda(train: &TimeSeries, val: &TimeSeries, cfg: &R2n2Config) -> Result<f64> {
    if let Some(lambda) = cfg.base_lambda {
        return Ok(lambda);
    }
    let mut grid = cfg.base_lambda_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    grid.dedup();
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &grid {
        let score = match validation_mrse(train, val, cfg.base_order, cfg.horizon, lambda) {
            Ok(s) => s,
            Err(Error::SingularSystem) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((lambda, score));
        }
    }
    best.map(|(lambda, _)| lambda)
        .ok_or(Error::SingularSystem)
}

/// Fit the base VAR on `train`, then train the residual LSTM on the
/// training residuals with the validation residuals steering the plateau
/// schedule. The log's `test_loss` column records the combined-model MRSE
/// on `test` after each epoch.
pub fn train_r2n2(
    train: &TimeSeries,
    val: &TimeSeries,
    test: &TimeSeries,
    cfg: &R2n2Config,
) -> Result<(R2n2Model, TrainLog)> {
    train_r2n2_with_eval(train, val, cfg, &|model| {
        let (pred, offset) = forecast_series(model, test)?;
        let truth = test.slice_rows(offset, test.len())?;
        mrse(&EvalPair::from_series(&truth, &pred)?)
    })
}

/// [`train_r2n2`] with a caller-supplied per-epoch metric over the
/// in-progress combined model.
pub fn train_r2n2_with_eval(
    train: &TimeSeries,
    val: &TimeSeries,
    cfg: &R2n2Config,
    test_metric: &dyn Fn(&R2n2Model) -> Result<f64>,
) -> Result<(R2n2Model, TrainLog)> {
    cfg.validate()?;
    let lambda = pick_base_lambda(train, val, cfg)?;
    let base = VarModel::fit(train, cfg.base_order, cfg.horizon, lambda)?;

    let res_train = compute_residuals(&base, train)?;
    let res_val = compute_residuals(&base, val)?;
    let train_seq = build_rnn_io(&res_train, train, cfg)?;
    let val_seq = build_rnn_io(&res_val, val, cfg)?;

    let p = train.num_features();
    let initial = LstmParams::init(
        cfg.rnn_input_dim(p),
        cfg.hidden_dim,
        p,
        cfg.train.seed,
    )?;
    let (rnn, log) = crate::lstm::train_with_eval(
        initial,
        std::slice::from_ref(&train_seq),
        std::slice::from_ref(&val_seq),
        &cfg.train,
        &|params| {
            let snapshot = R2n2Model {
                config: cfg.clone(),
                base: base.clone(),
                rnn: params.clone(),
            };
            test_metric(&snapshot)
        },
    )?;
    let model = R2n2Model { config: cfg.clone(), base, rnn };
    model.validate()?;
    Ok((model, log))
}
