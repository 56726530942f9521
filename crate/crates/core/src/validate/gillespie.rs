//! The clock construction draws its first event exactly as competing
//! exponentials would: waiting time `Exp(sum of rates)` and reaction `j`
//! with probability `rate_j / sum of rates`.

use serde::{Deserialize, Serialize};

use super::stats::{chi_square_p_value, ks_p_value, ks_statistic};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SimState};
use crate::rng::rng_stream;
use crate::simulate::{next_event, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GillespieConfig {
    /// Both tests pass when their p-value exceeds this level.
    pub alpha: f64,
}

impl Default for GillespieConfig {
    fn default() -> Self {
        GillespieConfig { alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GillespieReport {
    pub samples: usize,
    pub rates: Vec<f64>,
    pub total_rate: f64,
    pub probabilities: Vec<f64>,
    pub observed: Vec<u64>,
    pub mean_time: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub chi_square: f64,
    pub chi_square_df: usize,
    pub chi_square_p_value: f64,
    /// Some reaction with zero intensity fired.
    pub impossible_reaction: bool,
    pub config: GillespieConfig,
    pub pass: bool,
}

/// Draws `samples` first events from the initial state of `spec`, sample
/// `i` using `rng_stream(base_seed, i)`.
pub fn gillespie_equivalence_test(
    spec: &ModelSpec,
    samples: usize,
    base_seed: u64,
    config: &GillespieConfig,
) -> Result<GillespieReport> {
    let rates: Vec<f64> = (0..spec.n).map(|j| spec.rate(&spec.initial, j)).collect();
    let total_rate: f64 = rates.iter().sum();
    if total_rate <= 0.0 {
        return Err(Error::domain("initial state is absorbing; no reaction can fire"));
    }
    if samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let probabilities: Vec<f64> = rates.iter().map(|r| r / total_rate).collect();

    let mut times = Vec::with_capacity(samples);
    let mut observed = vec![0u64; spec.n];
    for i in 0..samples {
        let mut rng = rng_stream(base_seed, i as u64);
        let mut state = SimState::new(spec, &mut rng);
        match next_event(&mut state, spec, &mut rng)? {
            Step::Jump(ev) => {
                times.push(ev.time);
                observed[ev.reaction] += 1;
            }
            Step::Absorbed => unreachable!("total rate is positive"),
        }
    }

    let ks = ks_statistic(&times, |t| 1.0 - (-total_rate * t).exp());
    let ks_p = ks_p_value(ks, samples);

    let active: Vec<usize> = (0..spec.n).filter(|&j| probabilities[j] > 0.0).collect();
    let impossible_reaction = (0..spec.n).any(|j| probabilities[j] == 0.0 && observed[j] > 0);
    let chi_square: f64 = active
        .iter()
        .map(|&j| {
            let expected = probabilities[j] * samples as f64;
            (observed[j] as f64 - expected).powi(2) / expected
        })
        .sum();
    let df = active.len() - 1;
    let chi_p = chi_square_p_value(chi_square, df);

    Ok(GillespieReport {
        samples,
        total_rate,
        probabilities,
        observed,
        mean_time: times.iter().sum::<f64>() / samples as f64,
        ks_statistic: ks,
        ks_p_value: ks_p,
        chi_square,
        chi_square_df: df,
        chi_square_p_value: chi_p,
        impossible_reaction,
        pass: ks_p > config.alpha && chi_p > config.alpha && !impossible_reaction,
        rates,
        config: config.clone(),
    })
}
