//! Training loop: per-sequence updates, plateau learning-rate schedule,
//! and best-validation parameter selection.

use std::time::Instant;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{adam_step, bptt, sequence_forward_from, sequence_loss, AdamConfig, AdamState,
    LstmParams, LstmState};

/// One input/target series pair (for instance, one flight). Row `t` of
/// `targets` is the desired output after consuming row `t` of `inputs`.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Sequence {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Invalid(format!(
                "inputs have {} rows, targets {}",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::Invalid("empty sequence".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Training hyperparameters.
///
/// The learning rate drops by `lr_decay_factor` whenever the validation
/// loss has not improved for `plateau_patience` epochs, and training stops
/// once it falls below `min_lr` (or at `max_epochs`). `tbptt_len = 0`
/// unrolls each sequence fully; a positive value splits sequences into
/// windows of that length, carrying the hidden state across windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub l2_recurrent: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub tbptt_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            initial_lr: 1e-2,
            lr_decay_factor: 10.0,
            plateau_patience: 3,
            min_lr: 1e-6, // initial_lr / 10^4
            max_epochs: 80,
            l2_recurrent: 0.0,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            seed: 0,
            tbptt_len: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > self.min_lr && self.min_lr > 0.0) {
            return Err(Error::Invalid(format!(
                "need initial_lr > min_lr > 0, got {} and {}",
                self.initial_lr, self.min_lr
            )));
        }
        if self.lr_decay_factor <= 1.0 {
            return Err(Error::Invalid("lr_decay_factor must be > 1".into()));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Invalid("plateau_patience must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// One row of the training log. `lr` is the rate in effect during the
/// epoch; `iteration` counts cumulative parameter updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub iteration: u64,
    pub wall_seconds: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainLog {
    /// Epoch with the lowest validation loss (0 when the log is empty).
    pub fn best_epoch(&self) -> usize {
        self.entries
            .iter()
            .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).expect("finite losses"))
            .map(|e| e.epoch)
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,iteration,wall_seconds,train_loss,val_loss,test_loss,lr\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch, e.iteration, e.wall_seconds, e.train_loss, e.val_loss, e.test_loss, e.lr
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|source| Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        })
    }
}

/// Mean per-sequence data loss (no recurrent penalty), used for validation
/// and test evaluation.
pub(crate) fn mean_sequence_loss(params: &LstmParams, seqs: &[Sequence]) -> Result<f64> {
    let mut total = 0.0;
    for seq in seqs {
        total += sequence_loss(params, &seq.inputs, &seq.targets, 0.0)?;
    }
    Ok(total / seqs.len() as f64)
}

/// Train with the default test metric: mean data loss over `test_seqs`
/// (NaN when empty).
pub fn train(
    params: LstmParams,
    train_seqs: &[Sequence],
    val_seqs: &[Sequence],
    test_seqs: &[Sequence],
    cfg: &TrainConfig,
) -> Result<(LstmParams, TrainLog)> {
    train_with_eval(params, train_seqs, val_seqs, cfg, &|p| {
        if test_seqs.is_empty() {
            Ok(f64::NAN)
        } else {
            mean_sequence_loss(p, test_seqs)
        }
    })
}

/// Train with a caller-supplied per-epoch test metric (used to log, for
/// example, the combined-model error of a residual composition).
///
/// Epochs visit the training sequences in a seeded shuffled order with one
/// Adam update per sequence (or per truncated window). Returns the
/// parameters with the best validation loss seen and the full log.
pub fn train_with_eval(
    mut params: LstmParams,
    train_seqs: &[Sequence],
    val_seqs: &[Sequence],
    cfg: &TrainConfig,
    test_metric: &dyn Fn(&LstmParams) -> Result<f64>,
) -> Result<(LstmParams, TrainLog)> {
    cfg.validate()?;
    if train_seqs.is_empty() || val_seqs.is_empty() {
        return Err(Error::Invalid("need nonempty train and val sequence sets".into()));
    }
    for seq in train_seqs.iter().chain(val_seqs) {
        if seq.inputs.ncols() != params.input_dim || seq.targets.ncols() != params.output_dim {
            return Err(Error::Invalid(format!(
                "sequence widths ({}, {}) do not match model dims ({}, {})",
                seq.inputs.ncols(),
                seq.targets.ncols(),
                params.input_dim,
                params.output_dim
            )));
        }
    }

    let start = Instant::now();
    let adam_cfg = cfg.adam();
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_seqs.len()).collect();

    let mut lr = cfg.initial_lr;
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut wait = 0usize;
    let mut iteration = 0u64;
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        for &si in &order {
            let seq = &train_seqs[si];
            let window = if cfg.tbptt_len == 0 { seq.len() } else { cfg.tbptt_len };
            let mut state = LstmState::zeros(params.hidden_dim);
            let mut pos = 0;
            while pos < seq.len() {
                let end = (pos + window).min(seq.len());
                let inputs = seq.inputs.slice(ndarray::s![pos..end, ..]).to_owned();
                let targets = seq.targets.slice(ndarray::s![pos..end, ..]).to_owned();
                let (_, caches, next_state) = sequence_forward_from(&params, &inputs, &state)?;
                let (grads, loss) = bptt(&params, &caches, &targets, cfg.l2_recurrent)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss at epoch {epoch}, iteration {iteration}"
                    )));
                }
                adam_step(&mut params, &grads, &mut adam, lr, &adam_cfg);
                state = next_state;
                loss_sum += loss;
                updates += 1;
                iteration += 1;
                pos = end;
            }
        }

        let train_loss = loss_sum / updates as f64;
        let val_loss = mean_sequence_loss(&params, val_seqs)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let test_loss = test_metric(&params)?;

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            wait = 0;
        } else {
            wait += 1;
        }

        log.entries.push(TrainLogEntry {
            epoch,
            iteration,
            wall_seconds: start.elapsed().as_secs_f64(),
            train_loss,
            val_loss,
            test_loss,
            lr,
        });

        if wait >= cfg.plateau_patience {
            lr /= cfg.lr_decay_factor;
            wait = 0;
        }
        if lr < cfg.min_lr {
            break;
        }
    }

    Ok((best_params, log))
}
