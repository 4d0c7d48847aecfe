//! Experiment report: per-cell metrics, seed aggregates, and per-epoch
//! learning curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (model, hidden size, seed) evaluation. `hidden` is `None` for the
/// VAR baselines. A failed cell keeps its slot with `error` set and the
/// metrics empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: String,
    pub hidden: Option<usize>,
    pub seed: u64,
    pub mrse: Option<f64>,
    pub re: Option<f64>,
    pub train_seconds: f64,
    pub epochs_to_best: usize,
    pub note: Option<String>,
    pub error: Option<String>,
}

/// Mean and population standard deviation over the successful seeds of one
/// (model, hidden) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub hidden: Option<usize>,
    pub n: usize,
    pub mean_mrse: Option<f64>,
    pub std_mrse: Option<f64>,
    pub mean_re: Option<f64>,
    pub std_re: Option<f64>,
}

/// Headline row of a hidden-size sweep: the smallest residual-composition
/// network against the largest plain RNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepComparison {
    pub r2n2_hidden: usize,
    pub r2n2_mean_mrse: f64,
    pub rnn_hidden: usize,
    pub rnn_mean_mrse: f64,
}

/// One learning-curve sample: test MRSE after an epoch, with wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub model: String,
    pub hidden: usize,
    pub seed: u64,
    pub epoch: usize,
    pub wall_seconds: f64,
    pub test_mrse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub aggregates: Vec<AggregateRow>,
    pub curves: Vec<CurvePoint>,
    pub sweep_comparison: Option<SweepComparison>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

impl EvalReport {
    pub fn new(
        cells: Vec<EvalCell>,
        curves: Vec<CurvePoint>,
        sweep_comparison: Option<SweepComparison>,
    ) -> Self {
        let aggregates = Self::aggregate_cells(&cells);
        Self {
            cells,
            aggregates,
            curves,
            sweep_comparison,
        }
    }

    /// Group cells by (model, hidden) in first-appearance order and reduce
    /// the successful ones.
    pub fn aggregate_cells(cells: &[EvalCell]) -> Vec<AggregateRow> {
        let mut keys: Vec<(String, Option<usize>)> = Vec::new();
        for cell in cells {
            let key = (cell.model.clone(), cell.hidden);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(model, hidden)| {
                let mrses: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.model == model && c.hidden == hidden)
                    .filter_map(|c| c.mrse)
                    .collect();
                let res: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.model == model && c.hidden == hidden)
                    .filter_map(|c| c.re)
                    .collect();
                let (mean_mrse, std_mrse) = mean_std(&mrses);
                let (mean_re, std_re) = mean_std(&res);
                AggregateRow {
                    model,
                    hidden,
                    n: mrses.len(),
                    mean_mrse,
                    std_mrse,
                    mean_re,
                    std_re,
                }
            })
            .collect()
    }

    pub fn mean_mrse(&self, model: &str, hidden: Option<usize>) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.hidden == hidden)
            .and_then(|a| a.mean_mrse)
    }

    /// The learning curve of one cell, in epoch order.
    pub fn curve(&self, model: &str, hidden: usize, seed: u64) -> Vec<&CurvePoint> {
        self.curves
            .iter()
            .filter(|c| c.model == model && c.hidden == hidden && c.seed == seed)
            .collect()
    }

    /// Zero every wall-clock column; reports of repeated runs are then
    /// byte-identical.
    pub fn strip_wall_times(&mut self) {
        for cell in &mut self.cells {
            cell.train_seconds = 0.0;
        }
        for point in &mut self.curves {
            point.wall_seconds = 0.0;
        }
    }

    /// Plot-ready learning curves.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("model,hidden,seed,epoch,wall_seconds,test_mrse\n");
        for c in &self.curves {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.model, c.hidden, c.seed, c.epoch, c.wall_seconds, c.test_mrse
            ));
        }
        out
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let report_path = dir.join("report.json");
        std::fs::write(&report_path, self.to_json_pretty()?).map_err(|source| Error::Io {
            path: report_path.clone(),
            source,
        })?;
        let curves_path = dir.join("curves.csv");
        std::fs::write(&curves_path, self.curves_csv()).map_err(|source| Error::Io {
            path: curves_path.clone(),
            source,
        })?;
        Ok(())
    }
}

/// First epoch whose test MRSE is within `fraction` of the curve's final
/// value (e.g. 0.05 for "within 5%").
pub fn epochs_to_within_fraction(curve: &[&CurvePoint], fraction: f64) -> Option<usize> {
    let last = curve.last()?;
    let threshold = last.test_mrse * (1.0 + fraction);
    curve
        .iter()
        .find(|c| c.test_mrse <= threshold)
        .map(|c| c.epoch)
}
