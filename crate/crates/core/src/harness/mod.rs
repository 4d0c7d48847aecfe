//! Synthetic data generation, the model-comparison experiments, and report
//! emission.

mod experiment;
mod generate;
mod report;

pub use experiment::{
    run_comparison, run_hidden_sweep, run_timing, DataSource, ExperimentConfig,
    R2n2ExperimentConfig, RnnExperimentConfig, VarSearchConfig,
};
pub use generate::{
    gen_hybrid_data, gen_var_data, spectral_radius, HybridProcessSpec, NoiseSpec, HYBRID_BURN_IN,
};
pub use report::{
    epochs_to_within_fraction, AggregateRow, CurvePoint, EvalCell, EvalReport, SweepComparison,
};
