//! Ridge-regularized vector autoregression with direct h-step estimation.
//!
//! The model forecasts `x_{t+h}` from the `k` most recent observations:
//!
//! ```text
//! x_{t+h} ~ c + A_1 x_t + A_2 x_{t-1} + ... + A_k x_{t-k+1}
//! ```
//!
//! Fitting minimizes the total squared error plus `lambda` times the squared
//! Frobenius norm of the coefficient blocks (the intercept is unpenalized),
//! solved in closed form through the normal equations.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mrse, EvalPair};
use crate::timeseries::TimeSeries;

/// Regularization grid searched when nothing else is configured.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.05, 0.5, 5.0, 50.0, 500.0];

/// A fitted VAR with lag order `k`, forecast horizon `h`, and ridge
/// coefficient `lambda`. `coeffs[i]` is the block applied to the lag `i`
/// steps before the most recent observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VarModelRepr", into = "VarModelRepr")]
pub struct VarModel {
    k: usize,
    h: usize,
    lambda: f64,
    coeffs: Vec<Array2<f64>>,
    intercept: Array1<f64>,
}

impl VarModel {
    pub fn from_parts(
        h: usize,
        lambda: f64,
        coeffs: Vec<Array2<f64>>,
        intercept: Array1<f64>,
    ) -> Result<Self> {
        let k = coeffs.len();
        let p = intercept.len();
        if k == 0 || h == 0 || p == 0 {
            return Err(Error::Invalid("k, h and p must all be >= 1".into()));
        }
        if lambda < 0.0 {
            return Err(Error::Invalid(format!("lambda {lambda} must be >= 0")));
        }
        for (i, block) in coeffs.iter().enumerate() {
            if block.dim() != (p, p) {
                return Err(Error::Invalid(format!(
                    "coefficient block {i} has shape {:?}, expected ({p}, {p})",
                    block.dim()
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("coefficient block {i}")));
            }
        }
        if intercept.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("intercept".into()));
        }
        Ok(Self {
            k,
            h,
            lambda,
            coeffs,
            intercept,
        })
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coeffs(&self) -> &[Array2<f64>] {
        &self.coeffs
    }

    pub fn intercept(&self) -> &Array1<f64> {
        &self.intercept
    }

    pub fn num_features(&self) -> usize {
        self.intercept.len()
    }

    /// Row offset between a prediction row and the series row it targets:
    /// the first forecastable row of a series is `k - 1 + h`.
    pub fn target_offset(&self) -> usize {
        self.k - 1 + self.h
    }

    /// Fit by ridge regression of `x_{t+h}` on the `k` lags ending at `t`,
    /// over every valid `t` in `train`.
    pub fn fit(train: &TimeSeries, k: usize, h: usize, lambda: f64) -> Result<Self> {
        if k == 0 || h == 0 {
            return Err(Error::Invalid("k and h must be >= 1".into()));
        }
        if lambda < 0.0 {
            return Err(Error::Invalid(format!("lambda {lambda} must be >= 0")));
        }
        let t_len = train.len();
        let p = train.num_features();
        if t_len < k + h {
            return Err(Error::TooShort(format!(
                "need at least k + h = {} rows to fit, got {t_len}",
                k + h
            )));
        }
        let d = k * p + 1;
        let x = train.values();

        // Accumulate the Gram matrix Z'Z and right-hand side Z'Y directly;
        // Z rows are [x_t, x_{t-1}, ..., x_{t-k+1}, 1].
        let mut gram = Array2::<f64>::zeros((d, d));
        let mut rhs = Array2::<f64>::zeros((d, p));
        let mut z = vec![0.0; d];
        for t_end in (k - 1)..(t_len - h) {
            for lag in 0..k {
                let row = x.row(t_end - lag);
                z[lag * p..(lag + 1) * p].copy_from_slice(row.as_slice().expect("row-major"));
            }
            z[d - 1] = 1.0;
            for a in 0..d {
                if z[a] == 0.0 {
                    continue;
                }
                for b in a..d {
                    gram[[a, b]] += z[a] * z[b];
                }
                let target = x.row(t_end + h);
                for j in 0..p {
                    rhs[[a, j]] += z[a] * target[j];
                }
            }
        }
        // mirror the upper triangle
        for a in 0..d {
            for b in 0..a {
                gram[[a, b]] = gram[[b, a]];
            }
        }
        // penalize coefficients, not the intercept
        for a in 0..d - 1 {
            gram[[a, a]] += lambda;
        }

        let beta = solve_spd(&gram, &rhs).map_err(|e| {
            if lambda == 0.0 {
                Error::SingularSystem
            } else {
                e
            }
        })?;

        // beta is d×p with prediction y = beta' z, so block rows transpose
        // into the coefficient matrices.
        let mut coeffs = Vec::with_capacity(k);
        for lag in 0..k {
            let mut block = Array2::<f64>::zeros((p, p));
            for r in 0..p {
                for c in 0..p {
                    block[[r, c]] = beta[[lag * p + c, r]];
                }
            }
            coeffs.push(block);
        }
        let intercept = beta.row(d - 1).to_owned();
        Self::from_parts(h, lambda, coeffs, intercept)
    }

    /// Forecast for `h` steps past the end of `history`.
    pub fn predict(&self, history: &TimeSeries) -> Result<Array1<f64>> {
        self.check_width(history)?;
        if history.len() < self.k {
            return Err(Error::TooShort(format!(
                "history has {} rows, model order is {}",
                history.len(),
                self.k
            )));
        }
        let last = history.len() - 1;
        Ok(self.predict_at(history, last))
    }

    /// Forecasts over a whole series. Row `r` of the output targets series
    /// row `r + target_offset()`; the output has `T - k - h + 1` rows.
    pub fn predict_series(&self, ts: &TimeSeries) -> Result<(TimeSeries, usize)> {
        self.check_width(ts)?;
        let t_len = ts.len();
        if t_len < self.k + self.h {
            return Err(Error::TooShort(format!(
                "need at least k + h = {} rows, got {t_len}",
                self.k + self.h
            )));
        }
        let n_pred = t_len - self.k - self.h + 1;
        let p = self.num_features();
        let mut out = Array2::<f64>::zeros((n_pred, p));
        for r in 0..n_pred {
            let pred = self.predict_at(ts, r + self.k - 1);
            out.row_mut(r).assign(&pred);
        }
        let series = TimeSeries::new(out, ts.feature_names().to_vec())?;
        Ok((series, self.target_offset()))
    }

    /// Forecast using the lags ending at row `t_end` (inclusive).
    fn predict_at(&self, ts: &TimeSeries, t_end: usize) -> Array1<f64> {
        let mut y = self.intercept.clone();
        for (lag, block) in self.coeffs.iter().enumerate() {
            y += &block.dot(&ts.row(t_end - lag));
        }
        y
    }

    fn check_width(&self, ts: &TimeSeries) -> Result<()> {
        if ts.num_features() != self.num_features() {
            return Err(Error::Invalid(format!(
                "model has {} features, series has {}",
                self.num_features(),
                ts.num_features()
            )));
        }
        Ok(())
    }
}

/// JSON shape for [`VarModel`]: coefficient blocks as nested row-major
/// arrays.
#[derive(Serialize, Deserialize)]
struct VarModelRepr {
    p: usize,
    k: usize,
    h: usize,
    lambda: f64,
    intercept: Vec<f64>,
    coeffs: Vec<Vec<Vec<f64>>>,
}

impl From<VarModel> for VarModelRepr {
    fn from(m: VarModel) -> Self {
        VarModelRepr {
            p: m.num_features(),
            k: m.k,
            h: m.h,
            lambda: m.lambda,
            intercept: m.intercept.to_vec(),
            coeffs: m
                .coeffs
                .iter()
                .map(|b| b.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
        }
    }
}

impl TryFrom<VarModelRepr> for VarModel {
    type Error = Error;

    fn try_from(r: VarModelRepr) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(r.coeffs.len());
        for block in &r.coeffs {
            coeffs.push(crate::serde_util::rows_to_matrix(block, r.p, r.p)?);
        }
        if r.k != coeffs.len() {
            return Err(Error::Invalid(format!(
                "k = {} but {} coefficient blocks present",
                r.k,
                coeffs.len()
            )));
        }
        VarModel::from_parts(r.h, r.lambda, coeffs, Array1::from_vec(r.intercept))
    }
}

/// Solve `a x = b` for SPD `a` with multiple right-hand sides via Cholesky.
fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = a.clone();
    let tol = 1e-12 * a.diag().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for j in 0..n {
        let mut d = l[[j, j]];
        for t in 0..j {
            d -= l[[j, t]] * l[[j, t]];
        }
        if d <= tol {
            return Err(Error::Invalid(format!(
                "normal equations are not positive definite (pivot {d:.3e} at {j})"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = l[[i, j]];
            for t in 0..j {
                v -= l[[i, t]] * l[[j, t]];
            }
            l[[i, j]] = v / d;
        }
    }
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        // forward solve L y = b
        for i in 0..n {
            let mut v = col[i];
            for t in 0..i {
                v -= l[[i, t]] * col[t];
            }
            col[i] = v / l[[i, i]];
        }
        // back solve L' x = y
        for i in (0..n).rev() {
            let mut v = col[i];
            for t in (i + 1)..n {
                v -= l[[t, i]] * col[t];
            }
            col[i] = v / l[[i, i]];
        }
    }
    Ok(x)
}

/// One evaluated grid cell of the order search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSearchEntry {
    pub k: usize,
    pub lambda: f64,
    pub val_mrse: f64,
}

/// Result of [`select_order`]: the full table and the argmin, with ties
/// broken toward smaller `k`, then smaller `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSearchResult {
    pub best_k: usize,
    pub best_lambda: f64,
    pub table: Vec<OrderSearchEntry>,
}

/// Grid search over lag order and ridge coefficient. Lags increase from 1
/// until the best-over-lambda validation MRSE stops improving (patience 1)
/// or `k_max` is reached. A lag too large to fit or evaluate ends the
/// search; its cells are absent from the table, as is any cell whose
/// normal equations are singular (possible at lambda = 0).
///
/// Each cell is scored on every validation row: the validation segment is
/// prefixed with the last `k - 1 + h` training rows so that models of
/// different orders predict exactly the same targets.
pub fn select_order(
    train: &TimeSeries,
    val: &TimeSeries,
    h: usize,
    k_max: usize,
    lambda_grid: &[f64],
) -> Result<OrderSearchResult> {
    if k_max == 0 {
        return Err(Error::Invalid("k_max must be >= 1".into()));
    }
    if lambda_grid.is_empty() {
        return Err(Error::Invalid("lambda grid is empty".into()));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    grid.dedup();

    let mut table: Vec<OrderSearchEntry> = Vec::new();
    let mut prev_best: Option<f64> = None;
    for k in 1..=k_max {
        let mut entries = Vec::with_capacity(grid.len());
        let mut too_short = false;
        for &lambda in &grid {
            match validation_mrse(train, val, k, h, lambda) {
                Ok(val_mrse) => entries.push(OrderSearchEntry { k, lambda, val_mrse }),
                Err(Error::TooShort(_)) => {
                    too_short = true;
                    break;
                }
                // rank-deficient cell, possible at lambda = 0; skip it
                Err(Error::SingularSystem) => continue,
                Err(e) => return Err(e),
            }
        }
        if too_short || entries.is_empty() {
            break;
        }
        let best_here = entries
            .iter()
            .map(|e| e.val_mrse)
            .fold(f64::INFINITY, f64::min);
        table.extend(entries);
        if let Some(prev) = prev_best {
            if best_here >= prev {
                break;
            }
        }
        prev_best = Some(best_here);
    }

    if table.is_empty() {
        return Err(Error::TooShort(
            "no (k, lambda) cell could be evaluated".into(),
        ));
    }
    // table is in (k ascending, lambda ascending) order, so strict
    // improvement implements the tie-break.
    let mut best = &table[0];
    for entry in &table[1..] {
        if entry.val_mrse < best.val_mrse {
            best = entry;
        }
    }
    let (best_k, best_lambda) = (best.k, best.lambda);
    Ok(OrderSearchResult {
        best_k,
        best_lambda,
        table,
    })
}

/// Fit on `train` and score one-model validation MRSE on every `val` row,
/// borrowing the last `k - 1 + h` training rows as prediction context.
pub(crate) fn validation_mrse(
    train: &TimeSeries,
    val: &TimeSeries,
    k: usize,
    h: usize,
    lambda: f64,
) -> Result<f64> {
    let model = VarModel::fit(train, k, h, lambda)?;
    let context = k - 1 + h;
    if train.len() < context {
        return Err(Error::TooShort(format!(
            "train segment has {} rows, need {context} context rows",
            train.len()
        )));
    }
    let eval_series = if context == 0 {
        val.clone()
    } else {
        let tail = train.slice_rows(train.len() - context, train.len())?;
        TimeSeries::concat(&[&tail, val])?
    };
    let (pred, offset) = model.predict_series(&eval_series)?;
    debug_assert_eq!(offset, context);
    debug_assert_eq!(pred.len(), val.len());
    mrse(&EvalPair::from_series(val, &pred)?)
}
