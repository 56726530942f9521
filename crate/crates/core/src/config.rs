//! Validation run configuration, read from TOML with sections `[model]`,
//! `[run]` and `[validate]`. Every key is optional.
//!
//! ```toml
//! [model]
//! lambda = 1.0                 # collision rate
//! fractions = [0.5, 0.3, 0.2]  # initial fractions; n = its length
//!
//! [run]
//! base_seed = 42
//! step = 1e-3                  # ODE / covariance step
//! grid_spacing = 0.01          # sampling interval of simulated paths
//! max_events = 1000000000      # per replica
//! # threads = 4                # default: all cores
//!
//! [validate]
//! lln = true
//! lln_sizes = [100, 400, 1600, 6400]
//! # ...see ValidateSection for the rest
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub run: RunSection,
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lambda: f64,
    /// Initial fractions `u(0)`; defaults to the symmetric point for `n`.
    pub fractions: Option<Vec<f64>>,
    pub n: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            lambda: 1.0,
            fractions: None,
            n: 3,
        }
    }
}

impl ModelSection {
    pub fn initial_fractions(&self) -> Vec<f64> {
        match &self.fractions {
            Some(f) => {
                let s: f64 = f.iter().sum();
                f.iter().map(|x| x / s).collect()
            }
            None => vec![1.0 / self.n as f64; self.n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub base_seed: u64,
    /// Not echoed into reports, so output is independent of the thread count.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub step: f64,
    pub grid_spacing: f64,
    pub max_events: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            base_seed: 42,
            threads: None,
            step: 1e-3,
            grid_spacing: 0.01,
            max_events: 1_000_000_000,
        }
    }
}

/// Which checks run and their calibration. Fraction overrides fall back to
/// `[model].fractions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub lln: bool,
    pub lln_sizes: Vec<u64>,
    pub lln_replicas: usize,
    pub lln_time: f64,
    pub lln_fractions: Option<Vec<f64>>,
    pub lln_max_final_median: f64,
    /// Empty disables the ratio check.
    pub lln_ratio_band: Vec<f64>,

    pub clt: bool,
    pub clt_total: u64,
    pub clt_replicas: usize,
    pub clt_time: f64,
    pub clt_fractions: Option<Vec<f64>>,
    pub clt_min_replicas: usize,
    pub clt_max_relative_error: f64,

    pub martingale: bool,
    pub martingale_total: u64,
    pub martingale_replicas: usize,
    pub martingale_time: f64,
    pub martingale_fractions: Option<Vec<f64>>,
    pub martingale_max_z: f64,

    pub gillespie: bool,
    pub gillespie_counts: Vec<i64>,
    pub gillespie_lambda: f64,
    pub gillespie_samples: usize,
    pub gillespie_alpha: f64,

    pub sde: bool,
    pub sde_paths: usize,
    pub sde_step: f64,
    pub sde_time: f64,
    pub sde_fractions: Option<Vec<f64>>,
    pub sde_max_relative_error: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            lln: true,
            lln_sizes: vec![100, 400, 1600, 6400],
            lln_replicas: 200,
            lln_time: 2.0,
            lln_fractions: None,
            lln_max_final_median: 0.05,
            lln_ratio_band: vec![1.6, 2.5],

            clt: true,
            clt_total: 10_000,
            clt_replicas: 2000,
            clt_time: 1.0,
            clt_fractions: None,
            clt_min_replicas: 100,
            clt_max_relative_error: 0.15,

            martingale: true,
            martingale_total: 100,
            martingale_replicas: 5000,
            martingale_time: 1.0,
            martingale_fractions: None,
            martingale_max_z: 3.0,

            gillespie: true,
            gillespie_counts: vec![1, 1, 1],
            gillespie_lambda: 3.0,
            gillespie_samples: 10_000,
            gillespie_alpha: 0.01,

            sde: true,
            sde_paths: 5000,
            sde_step: 1e-3,
            sde_time: 1.0,
            sde_fractions: None,
            sde_max_relative_error: 0.10,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        let v = &self.validate;
        if !v.lln_ratio_band.is_empty() && v.lln_ratio_band.len() != 2 {
            return Err(Error::Parse("lln_ratio_band must be empty or [low, high]".into()));
        }
        if !(self.run.grid_spacing > 0.0) || !(self.run.step > 0.0) {
            return Err(Error::Parse("step and grid_spacing must be positive".into()));
        }
        let n = self.model.initial_fractions().len();
        for f in [
            &v.lln_fractions,
            &v.clt_fractions,
            &v.martingale_fractions,
            &v.sde_fractions,
        ]
        .into_iter()
        .flatten()
        {
            if f.len() != n {
                return Err(Error::Parse(format!("fraction overrides must have {n} entries")));
            }
        }
        Ok(())
    }

    /// Normalized fractions for a check, falling back to the model's.
    pub fn fractions_for(&self, over: &Option<Vec<f64>>) -> Vec<f64> {
        match over {
            Some(f) => {
                let s: f64 = f.iter().sum();
                f.iter().map(|x| x / s).collect()
            }
            None => self.model.initial_fractions(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.model.initial_fractions(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn sections_parse() {
        let c = Config::from_toml(
            r#"
            [model]
            lambda = 2.0
            fractions = [5, 3, 2]
            [run]
            base_seed = 7
            threads = 2
            [validate]
            clt = false
            lln_fractions = [1, 1, 1]
            "#,
        )
        .unwrap();
        assert_eq!(c.model.lambda, 2.0);
        assert_eq!(c.model.initial_fractions(), vec![0.5, 0.3, 0.2]);
        assert_eq!(c.run.threads, Some(2));
        assert!(!c.validate.clt);
        assert_eq!(c.fractions_for(&c.validate.lln_fractions), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Config::from_toml("[model]\nlamda = 1.0").is_err());
        assert!(Config::from_toml("[validate]\nlln_ratio_band = [1.0]").is_err());
        assert!(Config::from_toml("[validate]\nclt_fractions = [1.0, 2.0]").is_err());
    }
}
