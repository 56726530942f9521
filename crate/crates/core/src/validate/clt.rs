//! Covariance of the rescaled fluctuations `Y = sqrt(M) (X / M - u)`
//! against the propagated limit covariance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid_index;
use super::stats::{restricted_relative_error, to_rows};
use crate::error::{Error, Result};
use crate::fluctuation::{sample_covariance, CovarianceState};
use crate::meanfield::MeanFieldPath;
use crate::simulate::Ensemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltConfig {
    pub min_replicas: usize,
    /// Bound on the relative Frobenius error on the zero-sum subspace.
    pub max_relative_error: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        CltConfig {
            min_replicas: 100,
            max_relative_error: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub time: f64,
    pub total: u64,
    pub replicas: usize,
    pub empirical_mean: Vec<f64>,
    pub empirical_covariance: Vec<Vec<f64>>,
    pub reference_covariance: Vec<Vec<f64>>,
    /// `(S_jk - Sigma_jk) / se(S_jk)` with the asymptotic standard error of
    /// each sample covariance entry.
    pub z_scores: Vec<Vec<f64>>,
    /// Largest `|sum_i Y_i|` over replicas; zero when the total is conserved.
    pub max_abs_total: f64,
    /// `None` for degenerate (zero-covariance) input.
    pub relative_error: Option<f64>,
    pub degenerate: bool,
    pub config: CltConfig,
    pub pass: bool,
}

/// Rescaled fluctuation vectors at grid index `idx`.
pub fn fluctuations(ensemble: &Ensemble, u: &[f64], idx: usize) -> Vec<Vec<f64>> {
    let m = ensemble.spec.total as f64;
    let scale = m.sqrt();
    ensemble
        .trajectories
        .iter()
        .map(|traj| {
            traj.samples[idx]
                .iter()
                .zip(u)
                .map(|(&x, ui)| scale * (x as f64 / m - ui))
                .collect()
        })
        .collect()
}

pub fn clt_test(
    ensemble: &Ensemble,
    meanfield: &MeanFieldPath,
    covariance: &CovarianceState,
    config: &CltConfig,
) -> Result<CltReport> {
    let replicas = ensemble.len();
    if replicas < config.min_replicas {
        return Err(Error::InsufficientReplicas {
            required: config.min_replicas,
            got: replicas,
        });
    }
    let t = covariance.time;
    let n = ensemble.spec.n;
    if covariance.sigma.shape() != (n, n) {
        return Err(Error::GridMismatch(
            "covariance dimension differs from the ensemble".into(),
        ));
    }
    let tol = 0.5 * meanfield.step + 1e-12;
    let idx = grid_index(&ensemble.grid, t, tol)?;
    let u = &meanfield
        .state_at(t)
        .ok_or_else(|| Error::GridMismatch(format!("mean-field path has no state at t = {t}")))?
        .u;

    let ys = fluctuations(ensemble, u, idx);
    let r = replicas as f64;
    let mean: Vec<f64> = (0..n).map(|i| ys.iter().map(|y| y[i]).sum::<f64>() / r).collect();
    let cov = sample_covariance(&ys);
    let max_abs_total = ys.iter().map(|y| y.iter().sum::<f64>().abs()).fold(0.0, f64::max);

    let reference = &covariance.sigma;
    let mut z = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let s = cov[(j, k)];
            let fourth = ys
                .iter()
                .map(|y| ((y[j] - mean[j]) * (y[k] - mean[k]) - s).powi(2))
                .sum::<f64>()
                / r;
            let se = (fourth / r).sqrt();
            let diff = s - reference[(j, k)];
            z[(j, k)] = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
        }
    }

    let degenerate = cov.amax() == 0.0;
    let relative_error = (!degenerate).then(|| restricted_relative_error(&cov, reference));
    let pass = relative_error.is_some_and(|e| e < config.max_relative_error);
    Ok(CltReport {
        time: t,
        total: ensemble.spec.total,
        replicas,
        empirical_mean: mean,
        empirical_covariance: to_rows(&cov),
        reference_covariance: to_rows(reference),
        z_scores: to_rows(&z),
        max_abs_total,
        relative_error,
        degenerate,
        config: config.clone(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::integrate;
    use crate::model::{ModelSpec, Trajectory};
    use crate::simulate::uniform_grid;

    fn constant_ensemble(replicas: usize) -> (Ensemble, MeanFieldPath) {
        let spec = ModelSpec::symmetric(3, 1.0, 300).unwrap();
        let grid = uniform_grid(1.0, 3);
        let path = integrate(&[1.0 / 3.0; 3], 1.0, 1.0, 1e-3, &grid).unwrap();
        let traj = Trajectory {
            spec: spec.clone(),
            seed: None,
            replica: 0,
            events: None,
            grid: grid.clone(),
            samples: vec![spec.initial.clone(); 3],
            absorbed: None,
            t_end: Some(1.0),
            final_internal_times: vec![0.0; 3],
            final_event_counts: vec![0; 3],
        };
        let e = Ensemble {
            spec,
            base_seed: 0,
            t_end: Some(1.0),
            grid,
            trajectories: vec![traj; replicas],
        };
        (e, path)
    }

    fn reference() -> CovarianceState {
        CovarianceState {
            sigma: DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]) / 9.0,
            time: 1.0,
        }
    }

    #[test]
    fn identical_replicas_are_degenerate() {
        let (e, path) = constant_ensemble(150);
        let report = clt_test(&e, &path, &reference(), &CltConfig::default()).unwrap();
        assert!(report.degenerate);
        assert!(!report.pass);
        assert_eq!(report.relative_error, None);
        assert!(report.max_abs_total < 1e-12);
        assert!(report.empirical_covariance.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn too_few_replicas() {
        let (e, path) = constant_ensemble(99);
        assert!(matches!(
            clt_test(&e, &path, &reference(), &CltConfig::default()),
            Err(Error::InsufficientReplicas { required: 100, got: 99 })
        ));
    }

    #[test]
    fn time_off_grid() {
        let (e, path) = constant_ensemble(100);
        let mut r = reference();
        r.time = 0.7;
        assert!(matches!(
            clt_test(&e, &path, &r, &CltConfig::default()),
            Err(Error::GridMismatch(_))
        ));
    }
}
