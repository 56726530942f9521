//! Monte Carlo over the limit diffusion against the moment equation.

use serde::{Deserialize, Serialize};

use super::stats::{restricted_relative_error, to_rows};
use crate::error::Result;
use crate::fluctuation::{
    sample_covariance, simulate_limit_ensemble, CovarianceState, FluctuationModel, InitialCondition, LinearNoise,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub paths: usize,
    pub step: f64,
    pub max_relative_error: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig {
            paths: 5000,
            step: 1e-3,
            max_relative_error: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeReport {
    pub time: f64,
    pub paths: usize,
    pub empirical_covariance: Vec<Vec<f64>>,
    pub reference_covariance: Vec<Vec<f64>>,
    pub relative_error: f64,
    /// Largest `|sum_i V_i(t)|` over paths.
    pub max_abs_total: f64,
    pub config: SdeConfig,
    pub pass: bool,
}

/// Simulates `config.paths` limit paths from `V(0) = 0` and compares their
/// covariance at `reference.time` with `reference`.
pub fn sde_consistency_test<S: LinearNoise>(
    model: &FluctuationModel<S>,
    reference: &CovarianceState,
    base_seed: u64,
    config: &SdeConfig,
    threads: Option<usize>,
) -> Result<SdeReport> {
    let v0 = InitialCondition::zero(model.n());
    let paths = simulate_limit_ensemble(
        model,
        &v0,
        config.step,
        &[reference.time],
        config.paths,
        base_seed,
        threads,
    )?;
    let finals: Vec<Vec<f64>> = paths
        .into_iter()
        .map(|mut p| p.values.pop().expect("one sample"))
        .collect();
    let cov = sample_covariance(&finals);
    let relative_error = restricted_relative_error(&cov, &reference.sigma);
    let max_abs_total = finals.iter().map(|v| v.iter().sum::<f64>().abs()).fold(0.0, f64::max);
    Ok(SdeReport {
        time: reference.time,
        paths: config.paths,
        empirical_covariance: to_rows(&cov),
        reference_covariance: to_rows(&reference.sigma),
        relative_error,
        max_abs_total,
        pass: relative_error < config.max_relative_error,
        config: config.clone(),
    })
}
