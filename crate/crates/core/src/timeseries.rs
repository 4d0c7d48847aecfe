//! Time-series data model, CSV ingestion/emission, contiguous splitting, and
//! the two reversible preprocessing transforms: per-feature z-scoring and
//! seasonal-mean removal. Transforms are fit on the training segment only and
//! applied to every segment.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A T×p block of observations: row = time step, column = feature.
///
/// Every entry is finite and `T >= 1`, `p >= 1` by construction. Instances
/// are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Array2<f64>,
    feature_names: Vec<String>,
}

impl TimeSeries {
    pub fn new(values: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Invalid(
                "a time series needs at least one row and one feature".into(),
            ));
        }
        if feature_names.len() != values.ncols() {
            return Err(Error::Invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                values.ncols()
            )));
        }
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (idx / values.ncols(), idx % values.ncols());
            return Err(Error::NonFinite(format!(
                "value {v} at row {r}, column {c}"
            )));
        }
        Ok(Self {
            values,
            feature_names,
        })
    }

    /// Construct with generated feature names `x0, x1, ...`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(values, names)
    }

    /// Number of time steps T.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// Always false: the constructor rejects empty series.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of features p.
    pub fn num_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.values.row(t)
    }

    /// Contiguous sub-series covering rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.len() {
            return Err(Error::Invalid(format!(
                "row range {start}..{end} out of bounds for length {}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            values: self
                .values
                .slice(ndarray::s![start..end, ..])
                .to_owned(),
            feature_names: self.feature_names.clone(),
        })
    }

    /// Concatenate parts in time order. Feature names come from the first part.
    pub fn concat(parts: &[&TimeSeries]) -> Result<TimeSeries> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
        let p = first.num_features();
        if parts.iter().any(|x| x.num_features() != p) {
            return Err(Error::Invalid("feature counts differ across parts".into()));
        }
        let views: Vec<_> = parts.iter().map(|x| x.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        TimeSeries::new(values, first.feature_names.clone())
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Load a series from CSV: header row of feature names, one numeric row per
/// time step, '.' decimal separator. Errors carry 1-based row/column
/// positions (the header is row 1).
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Csv {
        row: 1,
        col: 1,
        message: "empty file".into(),
    })?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let p = names.len();

    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        let row_no = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != p {
            return Err(Error::Csv {
                row: row_no,
                col: cells.len().min(p),
                message: format!("expected {p} columns, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row: row_no,
                col: j + 1,
                message: format!("not a number: {:?}", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row: row_no,
                    col: j + 1,
                    message: format!("non-finite value: {:?}", cell.trim()),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Csv {
            row: 2,
            col: 1,
            message: "no data rows after header".into(),
        });
    }
    let values = Array2::from_shape_vec((rows, p), data)
        .expect("row-major buffer matches counted shape");
    TimeSeries::new(values, names)
}

/// Write a series as CSV. Values are printed with the shortest decimal
/// representation that parses back to the identical f64, so a save/load
/// round-trip is exact.
pub fn save_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&ts.feature_names.join(","));
    out.push('\n');
    for row in ts.values.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&v.to_string());
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Contiguous train/validation/test fractions, applied in time order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, val_fraction: f64, test_fraction: f64) -> Result<Self> {
        let spec = Self {
            train_fraction,
            val_fraction,
            test_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train_fraction),
            ("val", self.val_fraction),
            ("test", self.test_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Invalid(format!(
                    "{name} fraction {f} must lie in (0, 1)"
                )));
            }
        }
        let sum = self.train_fraction + self.val_fraction + self.test_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Segment lengths for a series of length `t`. Validation and test get
    /// `floor(fraction * t)` rows (at least 1 each); train takes the
    /// remainder and must be nonempty.
    pub fn segment_lengths(&self, t: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let n_val = ((self.val_fraction * t as f64).floor() as usize).max(1);
        let n_test = ((self.test_fraction * t as f64).floor() as usize).max(1);
        if n_val + n_test >= t {
            return Err(Error::EmptySegment { segment: "train" });
        }
        Ok((t - n_val - n_test, n_val, n_test))
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
        }
    }
}

/// Split into contiguous, ordered, disjoint segments that concatenate back
/// to the input.
pub fn split(ts: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    let (n_train, n_val, n_test) = spec.segment_lengths(ts.len())?;
    let train = ts.slice_rows(0, n_train)?;
    let val = ts.slice_rows(n_train, n_train + n_val)?;
    let test = ts.slice_rows(n_train + n_val, n_train + n_val + n_test)?;
    Ok((train, val, test))
}

// ---------------------------------------------------------------------------
// Z-scoring
// ---------------------------------------------------------------------------

/// Per-feature standardization fit on the training segment (population
/// standard deviation, i.e. divide by T).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    means: Array1<f64>,
    stds: Array1<f64>,
}

impl Normalizer {
    pub fn fit(train: &TimeSeries) -> Result<Self> {
        let t = train.len() as f64;
        let means = train.values().mean_axis(Axis(0)).expect("T >= 1");
        let mut stds = Array1::zeros(train.num_features());
        for (j, col) in train.values().columns().into_iter().enumerate() {
            let var = col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / t;
            stds[j] = var.sqrt();
            if stds[j] <= 1e-12 {
                return Err(Error::ConstantFeature {
                    index: j,
                    name: train.feature_names()[j].clone(),
                });
            }
        }
        Ok(Self { means, stds })
    }

    pub fn means(&self) -> &Array1<f64> {
        &self.means
    }

    pub fn stds(&self) -> &Array1<f64> {
        &self.stds
    }

    pub fn apply(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let values = self.apply_array(ts.values())?;
        TimeSeries::new(values, ts.feature_names().to_vec())
    }

    pub fn invert(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let values = self.invert_array(ts.values())?;
        TimeSeries::new(values, ts.feature_names().to_vec())
    }

    pub fn apply_array(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(values)?;
        let mut out = values.clone();
        for mut row in out.rows_mut() {
            row -= &self.means;
            row /= &self.stds;
        }
        Ok(out)
    }

    pub fn invert_array(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(values)?;
        let mut out = values.clone();
        for mut row in out.rows_mut() {
            row *= &self.stds;
            row += &self.means;
        }
        Ok(out)
    }

    fn check_width(&self, values: &Array2<f64>) -> Result<()> {
        if values.ncols() != self.means.len() {
            return Err(Error::Invalid(format!(
                "normalizer fit on {} features, got {}",
                self.means.len(),
                values.ncols()
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Seasonal-mean removal
// ---------------------------------------------------------------------------

/// Per-phase training means (e.g. monthly means for `period = 12`),
/// subtracted from the entire series and added back on inversion.
///
/// Phases are anchored to the full series: row 0 of the training segment is
/// phase 0, and a segment starting at absolute row `o` sees its row `t` as
/// phase `(o + t) % period`. Use [`SeasonalMeans::at_offset`] to retarget a
/// fitted transform at a later segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalMeans {
    period: usize,
    phase_means: Array2<f64>,
    phase_offset: usize,
}

impl SeasonalMeans {
    /// Fit per-phase means on the training segment, which is assumed to
    /// start at phase 0. Every phase must be observed at least once, so the
    /// segment must span at least one full period.
    pub fn fit(train: &TimeSeries, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::Invalid("period must be >= 1".into()));
        }
        if train.len() < period {
            return Err(Error::UnobservedPhase {
                phase: train.len(),
                period,
            });
        }
        let p = train.num_features();
        let mut sums = Array2::<f64>::zeros((period, p));
        let mut counts = vec![0usize; period];
        for (t, row) in train.values().rows().into_iter().enumerate() {
            let phase = t % period;
            let mut target = sums.row_mut(phase);
            target += &row;
            counts[phase] += 1;
        }
        for (phase, &count) in counts.iter().enumerate() {
            let mut row = sums.row_mut(phase);
            row /= count as f64;
        }
        Ok(Self {
            period,
            phase_means: sums,
            phase_offset: 0,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn phase_means(&self) -> &Array2<f64> {
        &self.phase_means
    }

    /// The same means, anchored so that row 0 of the target series has
    /// absolute series index `offset`.
    pub fn at_offset(&self, offset: usize) -> SeasonalMeans {
        SeasonalMeans {
            period: self.period,
            phase_means: self.phase_means.clone(),
            phase_offset: offset % self.period,
        }
    }

    pub fn apply(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let values = self.apply_array(ts.values())?;
        TimeSeries::new(values, ts.feature_names().to_vec())
    }

    pub fn invert(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let values = self.invert_array(ts.values())?;
        TimeSeries::new(values, ts.feature_names().to_vec())
    }

    pub fn apply_array(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(values)?;
        let mut out = values.clone();
        for (t, mut row) in out.rows_mut().into_iter().enumerate() {
            row -= &self.phase_means.row((self.phase_offset + t) % self.period);
        }
        Ok(out)
    }

    pub fn invert_array(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(values)?;
        let mut out = values.clone();
        for (t, mut row) in out.rows_mut().into_iter().enumerate() {
            row += &self.phase_means.row((self.phase_offset + t) % self.period);
        }
        Ok(out)
    }

    fn check_width(&self, values: &Array2<f64>) -> Result<()> {
        if values.ncols() != self.phase_means.ncols() {
            return Err(Error::Invalid(format!(
                "seasonal means fit on {} features, got {}",
                self.phase_means.ncols(),
                values.ncols()
            )));
        }
        Ok(())
    }
}
