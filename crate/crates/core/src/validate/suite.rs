//! One-shot orchestration of every check from a [`Config`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    clt_test, gillespie_equivalence_test, lln_test, martingale_test, sde_consistency_test, CltConfig, CltReport,
    GillespieConfig, GillespieReport, LlnConfig, LlnReport, MartingaleConfig, MartingaleReport, SdeConfig, SdeReport,
};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::fluctuation::{propagate_covariance, CovarianceState, FluctuationModel};
use crate::meanfield::{integrate, MeanFieldPath};
use crate::model::ModelSpec;
use crate::simulate::{run_ensemble, uniform_grid, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    /// Pass thresholds are calibration choices taken from the config.
    pub thresholds: String,
    pub config: Config,
    pub lln: Option<LlnReport>,
    pub clt: Option<CltReport>,
    pub martingale: Option<MartingaleReport>,
    pub gillespie: Option<GillespieReport>,
    pub sde: Option<SdeReport>,
    pub pass: bool,
}

fn grid_for(t: f64, spacing: f64) -> Vec<f64> {
    uniform_grid(t, (t / spacing).round() as usize + 1)
}

fn reference_covariance(config: &Config, u0: &[f64], t: f64) -> Result<(MeanFieldPath, CovarianceState)> {
    let step = config.run.step;
    let grid = grid_for(t, config.run.grid_spacing);
    let path = integrate(u0, config.model.lambda, t, step, &grid)?;
    let model = FluctuationModel::new(path.clone(), config.model.lambda);
    let n = u0.len();
    let sigma = propagate_covariance(&model, &DMatrix::zeros(n, n), step)?
        .pop()
        .ok_or_else(|| Error::GridMismatch("empty covariance output".into()))?;
    Ok((path, sigma))
}

/// Runs every enabled check. Check `k` (in declaration order) draws its
/// streams from `base_seed + k`.
pub fn run_suite(config: &Config) -> Result<SuiteReport> {
    let v = &config.validate;
    let lambda = config.model.lambda;
    let seed = config.run.base_seed;
    let options = RunOptions {
        max_events: config.run.max_events,
        threads: config.run.threads,
        ..RunOptions::default()
    };

    let lln = if v.lln {
        let u0 = config.fractions_for(&v.lln_fractions);
        let grid = grid_for(v.lln_time, config.run.grid_spacing);
        let path = integrate(&u0, lambda, v.lln_time, config.run.step, &grid)?;
        let ensembles = v
            .lln_sizes
            .iter()
            .map(|&m| {
                let spec = ModelSpec::from_fractions(lambda, m, &u0)?;
                run_ensemble(
                    &spec,
                    v.lln_replicas,
                    v.lln_time,
                    &grid,
                    seed,
                    &options.clone().grid_only(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let band = (v.lln_ratio_band.len() == 2).then(|| (v.lln_ratio_band[0], v.lln_ratio_band[1]));
        let cfg = LlnConfig {
            max_final_median: v.lln_max_final_median,
            ratio_band: band,
        };
        Some(lln_test(&ensembles, &path, v.lln_time, &cfg)?)
    } else {
        None
    };

    let clt = if v.clt {
        let u0 = config.fractions_for(&v.clt_fractions);
        let (path, sigma) = reference_covariance(config, &u0, v.clt_time)?;
        let spec = ModelSpec::from_fractions(lambda, v.clt_total, &u0)?;
        let ensemble = run_ensemble(
            &spec,
            v.clt_replicas,
            v.clt_time,
            &path.grid.iter().map(|g| g.min(v.clt_time)).collect::<Vec<_>>(),
            seed.wrapping_add(1),
            &options.clone().grid_only(),
        )?;
        let cfg = CltConfig {
            min_replicas: v.clt_min_replicas,
            max_relative_error: v.clt_max_relative_error,
        };
        Some(clt_test(&ensemble, &path, &sigma, &cfg)?)
    } else {
        None
    };

    let martingale = if v.martingale {
        let u0 = config.fractions_for(&v.martingale_fractions);
        let spec = ModelSpec::from_fractions(lambda, v.martingale_total, &u0)?;
        let ensemble = run_ensemble(
            &spec,
            v.martingale_replicas,
            v.martingale_time,
            &[],
            seed.wrapping_add(2),
            &options.clone().retaining_events(),
        )?;
        let cfg = MartingaleConfig {
            max_z: v.martingale_max_z,
        };
        Some(martingale_test(&ensemble, v.martingale_time, &cfg)?)
    } else {
        None
    };

    let gillespie = if v.gillespie {
        let spec = ModelSpec::new(v.gillespie_lambda, &v.gillespie_counts)?;
        let cfg = GillespieConfig {
            alpha: v.gillespie_alpha,
        };
        Some(gillespie_equivalence_test(
            &spec,
            v.gillespie_samples,
            seed.wrapping_add(3),
            &cfg,
        )?)
    } else {
        None
    };

    let sde = if v.sde {
        let u0 = config.fractions_for(&v.sde_fractions);
        let (path, sigma) = reference_covariance(config, &u0, v.sde_time)?;
        let model = FluctuationModel::new(path, lambda);
        let cfg = SdeConfig {
            paths: v.sde_paths,
            step: v.sde_step,
            max_relative_error: v.sde_max_relative_error,
        };
        Some(sde_consistency_test(
            &model,
            &sigma,
            seed.wrapping_add(4),
            &cfg,
            config.run.threads,
        )?)
    } else {
        None
    };

    let pass = lln.as_ref().is_none_or(|r| r.pass)
        && clt.as_ref().is_none_or(|r| r.pass)
        && martingale.as_ref().is_none_or(|r| r.pass)
        && gillespie.as_ref().is_none_or(|r| r.pass)
        && sde.as_ref().is_none_or(|r| r.pass);
    Ok(SuiteReport {
        thresholds: "calibration".into(),
        config: config.clone(),
        lln,
        clt,
        martingale,
        gillespie,
        sde,
        pass,
    })
}
