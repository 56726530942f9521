//! Uniform-in-time convergence of `X / M` to the mean-field path.

use serde::{Deserialize, Serialize};

use super::stats::quantile;
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldPath;
use crate::simulate::Ensemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnConfig {
    /// Bound on the median sup-deviation at the largest population.
    pub max_final_median: f64,
    /// Allowed band for the ratio of medians between successive sizes.
    pub ratio_band: Option<(f64, f64)>,
}

impl Default for LlnConfig {
    fn default() -> Self {
        LlnConfig {
            max_final_median: 0.05,
            ratio_band: Some((1.6, 2.5)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnRecord {
    pub total: u64,
    pub replicas: usize,
    /// Per-replica `max over grid s <= t of ||X(s)/M - u(s)||_1`.
    pub deviations: Vec<f64>,
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub time: f64,
    /// Sorted by increasing population size.
    pub records: Vec<LlnRecord>,
    /// `median(M_k) / median(M_{k+1})`.
    pub ratios: Vec<f64>,
    pub monotone: bool,
    pub final_median_ok: bool,
    pub ratios_ok: bool,
    pub config: LlnConfig,
    pub pass: bool,
}

/// Sup-deviations for a single ensemble, evaluated on its grid up to `t`
/// (a lower bound for the supremum over continuous time).
pub fn sup_deviations(ensemble: &Ensemble, meanfield: &MeanFieldPath, t: f64) -> Result<Vec<f64>> {
    let spec = &ensemble.spec;
    if spec.n != meanfield.initial.len() {
        return Err(Error::GridMismatch(format!(
            "ensemble has {} species, mean-field path {}",
            spec.n,
            meanfield.initial.len()
        )));
    }
    let tol = 0.5 * meanfield.step + 1e-12;
    if !ensemble.grid.iter().any(|g| (g - t).abs() <= tol) {
        return Err(Error::GridMismatch(format!("ensemble grid does not reach t = {t}")));
    }
    let mut points = Vec::new();
    for (idx, &g) in ensemble.grid.iter().enumerate() {
        if g > t + tol {
            break;
        }
        let state = meanfield
            .state_at(g)
            .ok_or_else(|| Error::GridMismatch(format!("mean-field path has no state at t = {g}")))?;
        points.push((idx, &state.u));
    }
    let m = spec.total as f64;
    Ok(ensemble
        .trajectories
        .iter()
        .map(|traj| {
            points
                .iter()
                .map(|(idx, u)| {
                    traj.samples[*idx]
                        .iter()
                        .zip(u.iter())
                        .map(|(&x, ui)| (x as f64 / m - ui).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Compares ensembles of increasing population size against one
/// mean-field path.
pub fn lln_test(ensembles: &[Ensemble], meanfield: &MeanFieldPath, t: f64, config: &LlnConfig) -> Result<LlnReport> {
    if ensembles.is_empty() {
        return Err(Error::domain("lln_test needs at least one ensemble"));
    }
    let lambda = ensembles[0].spec.lambda;
    for e in ensembles {
        if e.spec.lambda != lambda {
            return Err(Error::domain("ensembles use different collision rates"));
        }
        let m = e.spec.total as f64;
        let off = e
            .spec
            .initial_fractions()
            .iter()
            .zip(&meanfield.initial)
            .any(|(f, u)| (f - u).abs() > 1.0 / m + 1e-12);
        if off {
            return Err(Error::domain(format!(
                "initial counts {:?} do not match the mean-field start",
                e.spec.initial
            )));
        }
    }

    let mut records = ensembles
        .iter()
        .map(|e| {
            let deviations = sup_deviations(e, meanfield, t)?;
            Ok(LlnRecord {
                total: e.spec.total,
                replicas: e.len(),
                median: quantile(&deviations, 0.5),
                p95: quantile(&deviations, 0.95),
                deviations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.total);

    let ratios: Vec<f64> = records.windows(2).map(|w| w[0].median / w[1].median).collect();
    let monotone = records.windows(2).all(|w| w[1].median < w[0].median);
    let final_median_ok = records.last().is_some_and(|r| r.median < config.max_final_median);
    let ratios_ok = config
        .ratio_band
        .is_none_or(|(lo, hi)| ratios.iter().all(|r| (lo..=hi).contains(r)));
    Ok(LlnReport {
        time: t,
        records,
        ratios,
        monotone,
        final_median_ok,
        ratios_ok,
        config: config.clone(),
        pass: monotone && final_median_ok && ratios_ok,
    })
}
