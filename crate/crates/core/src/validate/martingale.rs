//! Moment identities of the compensated counting processes
//! `N_j(T_j(t)) - T_j(t)`: zero mean, quadratic variation `T_j(t)`, and
//! orthogonality between distinct reactions.

use serde::{Deserialize, Serialize};

use super::stats::MeanEstimate;
use crate::error::{Error, Result};
use crate::model::Trajectory;
use crate::simulate::Ensemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleConfig {
    /// A check passes when `|z| < max_z`.
    pub max_z: f64,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        MartingaleConfig { max_z: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub mean: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

impl MomentCheck {
    fn zero_mean(xs: &[f64], max_z: f64) -> Self {
        let est = MeanEstimate::of(xs);
        let z = est.z_score(0.0);
        MomentCheck {
            mean: est.mean,
            se: est.se,
            z,
            pass: z.abs() < max_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionRecord {
    pub reaction: usize,
    pub mean_count: f64,
    pub mean_internal_time: f64,
    /// `N - T` has mean zero.
    pub centered: MomentCheck,
    /// `(N - T)^2 - T` has mean zero.
    pub quadratic_variation: MomentCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRecord {
    pub first: usize,
    pub second: usize,
    /// `(N_j - T_j)(N_k - T_k)` has mean zero.
    pub product: MomentCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub time: f64,
    pub replicas: usize,
    pub reactions: Vec<ReactionRecord>,
    pub cross: Vec<CrossRecord>,
    pub config: MartingaleConfig,
    pub pass: bool,
}

/// Jump counts and clock internal times at time `t`, rebuilt from the
/// event log. Returns `None` when the log was not retained.
pub fn replay_clocks(traj: &Trajectory, t: f64) -> Option<(Vec<u64>, Vec<f64>)> {
    let events = traj.events.as_ref()?;
    let spec = &traj.spec;
    let mut counts = spec.initial.clone();
    let mut jumps = vec![0u64; spec.n];
    let mut internal = vec![0.0; spec.n];
    let mut last = 0.0;
    let accumulate = |counts: &[u64], internal: &mut [f64], dt: f64| {
        for (j, acc) in internal.iter_mut().enumerate() {
            *acc += spec.rate(counts, j) * dt;
        }
    };
    for ev in events.iter().take_while(|e| e.time <= t) {
        accumulate(&counts, &mut internal, ev.time - last);
        last = ev.time;
        jumps[ev.reaction] += 1;
        counts.clone_from(&ev.counts_after);
    }
    accumulate(&counts, &mut internal, t - last);
    Some((jumps, internal))
}

pub fn martingale_test(ensemble: &Ensemble, t: f64, config: &MartingaleConfig) -> Result<MartingaleReport> {
    if ensemble.t_end.is_some_and(|end| t > end) {
        return Err(Error::domain(format!("t = {t} is past the end of the runs")));
    }
    let n = ensemble.spec.n;
    let mut residuals: Vec<Vec<f64>> = vec![Vec::with_capacity(ensemble.len()); n];
    let mut internal: Vec<Vec<f64>> = vec![Vec::with_capacity(ensemble.len()); n];
    let mut counts: Vec<Vec<f64>> = vec![Vec::with_capacity(ensemble.len()); n];
    for (index, traj) in ensemble.trajectories.iter().enumerate() {
        let (jumps, times) = replay_clocks(traj, t).ok_or(Error::MissingEventLog { index })?;
        for j in 0..n {
            residuals[j].push(jumps[j] as f64 - times[j]);
            internal[j].push(times[j]);
            counts[j].push(jumps[j] as f64);
        }
    }

    let r = ensemble.len() as f64;
    let reactions: Vec<ReactionRecord> = (0..n)
        .map(|j| {
            let qv: Vec<f64> = residuals[j].iter().zip(&internal[j]).map(|(m, t)| m * m - t).collect();
            ReactionRecord {
                reaction: j,
                mean_count: counts[j].iter().sum::<f64>() / r,
                mean_internal_time: internal[j].iter().sum::<f64>() / r,
                centered: MomentCheck::zero_mean(&residuals[j], config.max_z),
                quadratic_variation: MomentCheck::zero_mean(&qv, config.max_z),
            }
        })
        .collect();

    let mut cross = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let products: Vec<f64> = residuals[j].iter().zip(&residuals[k]).map(|(a, b)| a * b).collect();
            cross.push(CrossRecord {
                first: j,
                second: k,
                product: MomentCheck::zero_mean(&products, config.max_z),
            });
        }
    }

    let pass =
        reactions.iter().all(|r| r.centered.pass && r.quadratic_variation.pass) && cross.iter().all(|c| c.product.pass);
    Ok(MartingaleReport {
        time: t,
        replicas: ensemble.len(),
        reactions,
        cross,
        config: config.clone(),
        pass,
    })
}
