//! Synthetic data generators: a stable VAR(1) process with Gaussian noise,
//! and a hybrid process that adds a lagged element-wise sine term the
//! linear model class cannot represent.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util::rows_to_matrix;
use crate::timeseries::TimeSeries;

/// Zero-mean white noise: per-feature standard deviation and the seed that
/// drives all randomness of a generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.std.is_nan() || self.std < 0.0 {
            return Err(Error::Invalid(format!("noise std {} must be >= 0", self.std)));
        }
        Ok(())
    }
}

/// Generator rule `x_t = A x_{t-1} + amplitude * sin(x_{t-lag}) + noise`,
/// element-wise sine. The sine feedback saturates, so a near-critical `A`
/// settles into a bounded orbit at an amplitude where the nonlinearity is
/// strong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridProcessSpec {
    pub p: usize,
    pub t: usize,
    /// Linear coefficients, row-major p×p, spectral radius < 1.
    pub coeffs: Vec<Vec<f64>>,
    pub amplitude: f64,
    pub lag: usize,
    pub noise: NoiseSpec,
}

impl HybridProcessSpec {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.p == 0 || self.t == 0 || self.lag == 0 {
            return Err(Error::Invalid("p, t and lag must be >= 1".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::NonFinite("amplitude".into()));
        }
        let a = self.coeff_matrix()?;
        let rho = spectral_radius(&a);
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(())
    }

    pub fn coeff_matrix(&self) -> Result<Array2<f64>> {
        rows_to_matrix(&self.coeffs, self.p, self.p)
    }
}

/// Largest absolute eigenvalue, estimated by power iteration with a
/// geometric mean over the growth ratios (robust to complex-conjugate
/// dominant pairs, which make the per-step ratio oscillate).
pub fn spectral_radius(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| 1.0 / (i + 1) as f64);
    v /= v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let warmup = 100;
    let samples = 200;
    let mut log_sum = 0.0;
    for iter in 0..warmup + samples {
        let w = a.dot(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 0.0; // nilpotent-like: iterates vanish
        }
        if iter >= warmup {
            log_sum += norm.ln();
        }
        v = w / norm;
    }
    (log_sum / samples as f64).exp()
}

const DIVERGENCE_LIMIT: f64 = 1e6;
pub const HYBRID_BURN_IN: usize = 100;

/// Shared simulation core. The state starts at all ones (as does the
/// pre-history consumed by the lag term); `burn_in` leading rows are
/// discarded. Each step draws `p` standard normal values in feature order,
/// so two specs with the same seed stay aligned draw for draw.
fn simulate(
    a: &Array2<f64>,
    intercept: Option<&Array1<f64>>,
    amplitude: f64,
    lag: usize,
    noise: &NoiseSpec,
    t: usize,
    burn_in: usize,
) -> Result<TimeSeries> {
    noise.validate()?;
    let p = a.nrows();
    if a.ncols() != p || p == 0 {
        return Err(Error::Invalid("coefficient matrix must be square".into()));
    }
    if t == 0 {
        return Err(Error::Invalid("t must be >= 1".into()));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);
    let normal = rand_distr::StandardNormal;
    let total = burn_in + t;
    let mut states: Vec<Array1<f64>> = Vec::with_capacity(total);
    states.push(Array1::ones(p));
    let ones = Array1::<f64>::ones(p);
    for step in 1..total {
        let mut next = a.dot(&states[step - 1]);
        if let Some(c) = intercept {
            next += c;
        }
        if amplitude != 0.0 {
            let lagged = if step >= lag { &states[step - lag] } else { &ones };
            next += &lagged.mapv(|v| amplitude * v.sin());
        }
        for v in next.iter_mut() {
            let draw: f64 = normal.sample(&mut rng);
            *v += noise.std * draw;
        }
        if let Some(bad) = next.iter().find(|v| v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                step,
                value: *bad,
                limit: DIVERGENCE_LIMIT,
            });
        }
        states.push(next);
    }

    let flat: Vec<f64> = states[burn_in..].iter().flat_map(|r| r.to_vec()).collect();
    TimeSeries::from_values(Array2::from_shape_vec((t, p), flat).expect("counted shape"))
}

/// Simulate `x_t = A x_{t-1} + intercept + noise`, dropping `burn_in`
/// leading rows. Deterministic under the noise seed.
pub fn gen_var_data(
    a: &Array2<f64>,
    intercept: &Array1<f64>,
    noise: &NoiseSpec,
    t: usize,
    burn_in: usize,
) -> Result<TimeSeries> {
    if intercept.len() != a.nrows() {
        return Err(Error::Invalid("intercept length must match coeffs".into()));
    }
    simulate(a, Some(intercept), 0.0, 1, noise, t, burn_in)
}

/// Simulate the hybrid rule with a fixed burn-in of [`HYBRID_BURN_IN`]
/// rows. With `amplitude = 0` the output is identical to [`gen_var_data`]
/// with a zero intercept and the same burn-in.
pub fn gen_hybrid_data(spec: &HybridProcessSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let a = spec.coeff_matrix()?;
    simulate(
        &a,
        None,
        spec.amplitude,
        spec.lag,
        &spec.noise,
        spec.t,
        HYBRID_BURN_IN,
    )
}
