//! Forecast evaluation metrics.
//!
//! Both metrics are ratios of root total squared error to a root total
//! squared reference: the deviation of the truth from its per-feature means
//! (MRSE), or the truth itself (RE). An MRSE of 1.0 means the model did no
//! better than predicting each feature's mean.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Aligned truth/prediction arrays (row = time step, column = feature),
/// restricted to the time steps where predictions exist.
#[derive(Debug, Clone)]
pub struct EvalPair {
    truth: Array2<f64>,
    pred: Array2<f64>,
}

impl EvalPair {
    pub fn new(truth: Array2<f64>, pred: Array2<f64>) -> Result<Self> {
        if truth.dim() != pred.dim() {
            return Err(Error::Invalid(format!(
                "truth {:?} and prediction {:?} shapes differ",
                truth.dim(),
                pred.dim()
            )));
        }
        if truth.nrows() == 0 || truth.ncols() == 0 {
            return Err(Error::Invalid("empty evaluation pair".into()));
        }
        if truth.iter().chain(pred.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation pair entry".into()));
        }
        Ok(Self { truth, pred })
    }

    pub fn from_series(truth: &TimeSeries, pred: &TimeSeries) -> Result<Self> {
        Self::new(truth.values().clone(), pred.values().clone())
    }

    pub fn truth(&self) -> &Array2<f64> {
        &self.truth
    }

    pub fn pred(&self) -> &Array2<f64> {
        &self.pred
    }
}

/// Root total squared error over root total squared deviation of the truth
/// from its per-feature means. The per-feature means are taken over the
/// evaluation pair itself, which makes the mean-prediction baseline score
/// exactly 1.
pub fn mrse(pair: &EvalPair) -> Result<f64> {
    let p = pair.truth.ncols();
    let t = pair.truth.nrows() as f64;
    let mut means = vec![0.0; p];
    for (j, col) in pair.truth.columns().into_iter().enumerate() {
        means[j] = col.sum() / t;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (truth_row, pred_row) in pair.truth.rows().into_iter().zip(pair.pred.rows()) {
        for j in 0..p {
            num += (truth_row[j] - pred_row[j]).powi(2);
            den += (truth_row[j] - means[j]).powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator(
            "every feature of the truth is constant".into(),
        ));
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Diagnostic per-feature breakdown: MRSE of each feature on its own
/// (useful next to feature names in plot legends).
pub fn per_feature_mrse(pair: &EvalPair) -> Result<Vec<f64>> {
    let t = pair.truth.nrows() as f64;
    let mut out = Vec::with_capacity(pair.truth.ncols());
    for (truth_col, pred_col) in pair.truth.columns().into_iter().zip(pair.pred.columns()) {
        let mean = truth_col.sum() / t;
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in truth_col.iter().zip(pred_col) {
            num += (x - y).powi(2);
            den += (x - mean).powi(2);
        }
        if den == 0.0 {
            return Err(Error::ZeroDenominator("constant feature".into()));
        }
        out.push(num.sqrt() / den.sqrt());
    }
    Ok(out)
}

/// Root total squared error over root total squared truth.
pub fn re(pair: &EvalPair) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (truth_row, pred_row) in pair.truth.rows().into_iter().zip(pair.pred.rows()) {
        for (x, y) in truth_row.iter().zip(pred_row) {
            num += (x - y).powi(2);
            den += x.powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("truth is identically zero".into()));
    }
    Ok(num.sqrt() / den.sqrt())
}
