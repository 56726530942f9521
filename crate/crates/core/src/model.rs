//! Problem definition and the mutable simulator state.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::succ;

/// Immutable problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of species, at least 3.
    pub n: usize,
    /// Collision rate per unit time.
    pub lambda: f64,
    /// Population size `M`.
    pub total: u64,
    /// Initial counts, one per species, summing to `total`.
    pub initial: Vec<u64>,
}

impl ModelSpec {
    /// Builds and validates a spec from signed counts, so that negative
    /// input is reported as a domain error instead of wrapping.
    pub fn new(lambda: f64, initial: &[i64]) -> Result<Self> {
        if let Some((i, c)) = initial.iter().enumerate().find(|(_, c)| **c < 0) {
            return Err(Error::domain(format!("initial[{i}] = {c} is negative")));
        }
        let initial: Vec<u64> = initial.iter().map(|&c| c as u64).collect();
        let total = initial.iter().sum();
        validate_spec(ModelSpec {
            n: initial.len(),
            lambda,
            total,
            initial,
        })
    }

    /// Spec whose initial counts are the closest integer split of `total`
    /// along `fractions` (largest-remainder rounding, ties to the lower
    /// index).
    pub fn from_fractions(lambda: f64, total: u64, fractions: &[f64]) -> Result<Self> {
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::domain("fractions must be finite and non-negative"));
        }
        let norm: f64 = fractions.iter().sum();
        if norm <= 0.0 {
            return Err(Error::domain("fractions sum to zero"));
        }
        let exact: Vec<f64> = fractions.iter().map(|f| f / norm * total as f64).collect();
        let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
            counts[i] += 1;
        }
        validate_spec(ModelSpec {
            n: counts.len(),
            lambda,
            total,
            initial: counts,
        })
    }

    /// Equal split of `total` over `n` species (remainder to the lowest
    /// indices).
    pub fn symmetric(n: usize, lambda: f64, total: u64) -> Result<Self> {
        Self::from_fractions(lambda, total, &vec![1.0; n])
    }

    /// Intensity of reaction `j` (species `j` converts one `j + 1`) at the
    /// given counts: `(lambda / M) * X_j * X_{j+1}`.
    #[inline]
    pub fn rate(&self, counts: &[u64], j: usize) -> f64 {
        let product = counts[j] as f64 * counts[succ(j, self.n)] as f64;
        self.lambda / self.total as f64 * product
    }

    /// Sum of all reaction intensities at the given counts.
    pub fn total_rate(&self, counts: &[u64]) -> f64 {
        (0..self.n).map(|j| self.rate(counts, j)).sum()
    }

    /// Initial fractions `X_i(0) / M`.
    pub fn initial_fractions(&self) -> Vec<f64> {
        let m = self.total as f64;
        self.initial.iter().map(|&c| c as f64 / m).collect()
    }
}

/// Checks every [`ModelSpec`] invariant and returns the spec unchanged.
pub fn validate_spec(spec: ModelSpec) -> Result<ModelSpec> {
    if spec.n < 3 {
        return Err(Error::domain(format!(
            "n = {} but at least 3 species are required",
            spec.n
        )));
    }
    if !(spec.lambda > 0.0) || !spec.lambda.is_finite() {
        return Err(Error::domain(format!(
            "lambda = {} must be positive and finite",
            spec.lambda
        )));
    }
    if spec.total == 0 {
        return Err(Error::domain("population size must be at least 1"));
    }
    if spec.initial.len() != spec.n {
        return Err(Error::domain(format!(
            "{} initial counts given for {} species",
            spec.initial.len(),
            spec.n
        )));
    }
    let sum: u64 = spec.initial.iter().sum();
    if sum != spec.total {
        return Err(Error::Normalization { sum, total: spec.total });
    }
    Ok(spec)
}

/// Unit-rate Poisson clock of one reaction, read through its random time
/// change: `internal_time` is the accumulated intensity
/// `(lambda / M) * integral of X_j X_{j+1}`, and the reaction fires when it
/// reaches `next_threshold`, the next arrival of the underlying unit-rate
/// process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonClock {
    pub internal_time: f64,
    pub next_threshold: f64,
}

impl PoissonClock {
    pub fn fresh<R: Rng + ?Sized>(rng: &mut R) -> Self {
        PoissonClock {
            internal_time: 0.0,
            next_threshold: unit_exponential(rng),
        }
    }

    /// Remaining internal time until this clock fires.
    #[inline]
    pub fn gap(&self) -> f64 {
        self.next_threshold - self.internal_time
    }
}

/// Strictly positive unit-rate exponential draw.
pub(crate) fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.sample(Exp1);
        if x > 0.0 {
            return x;
        }
    }
}

/// One state change: species `reaction` converted one individual of
/// species `reaction + 1` (cyclic) at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub reaction: usize,
    pub counts_after: Vec<u64>,
}

/// Mutable state of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub counts: Vec<u64>,
    pub time: f64,
    pub clocks: Vec<PoissonClock>,
    /// Number of times each reaction has fired.
    pub event_count: Vec<u64>,
}

impl SimState {
    /// Initial state of `spec` at time 0 with freshly drawn clock thresholds.
    pub fn new<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        SimState {
            counts: spec.initial.clone(),
            time: 0.0,
            clocks: (0..spec.n).map(|_| PoissonClock::fresh(rng)).collect(),
            event_count: vec![0; spec.n],
        }
    }

    /// State with explicit counts and clocks at time 0.
    pub fn with_clocks(spec: &ModelSpec, counts: Vec<u64>, clocks: Vec<PoissonClock>) -> Result<Self> {
        if counts.len() != spec.n || clocks.len() != spec.n {
            return Err(Error::domain("counts and clocks must have one entry per species"));
        }
        if let Some(c) = clocks
            .iter()
            .find(|c| !(c.internal_time >= 0.0) || !(c.next_threshold > c.internal_time))
        {
            return Err(Error::domain(format!(
                "clock needs 0 <= internal_time < next_threshold, got {c:?}"
            )));
        }
        let state = SimState {
            counts,
            time: 0.0,
            clocks,
            event_count: vec![0; spec.n],
        };
        state.check_conservation(spec)?;
        Ok(state)
    }

    pub fn check_conservation(&self, spec: &ModelSpec) -> Result<()> {
        let sum: u64 = self.counts.iter().sum();
        if sum != spec.total {
            return Err(Error::numeric(format!(
                "population {sum} differs from {} at t = {}",
                spec.total, self.time
            )));
        }
        Ok(())
    }

    /// True when no reaction can fire: every cyclically adjacent product
    /// `X_j * X_{j+1}` is zero.
    pub fn is_absorbing(&self) -> bool {
        let n = self.counts.len();
        (0..n).all(|j| self.counts[j] == 0 || self.counts[succ(j, n)] == 0)
    }

    /// Internal times of all clocks.
    pub fn internal_times(&self) -> Vec<f64> {
        self.clocks.iter().map(|c| c.internal_time).collect()
    }
}

/// Recorded run of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec: ModelSpec,
    /// Base seed of the stream this run drew from, if known.
    pub seed: Option<u64>,
    /// Replica index within its ensemble (stream index).
    pub replica: u64,
    /// Event log; `None` when the run kept grid samples only.
    pub events: Option<Vec<JumpEvent>>,
    pub grid: Vec<f64>,
    /// Right-continuous samples: the state after every event at or before
    /// the grid time.
    pub samples: Vec<Vec<u64>>,
    /// Time of the event that entered an absorbing state (0 when the
    /// initial state already absorbs).
    pub absorbed: Option<f64>,
    /// Horizon of the run; `None` for an unbounded run.
    pub t_end: Option<f64>,
    /// Clock internal times at the end of the run.
    pub final_internal_times: Vec<f64>,
    /// Per-reaction jump counts at the end of the run.
    pub final_event_counts: Vec<u64>,
}

impl Trajectory {
    /// Number of events fired in the run.
    pub fn event_total(&self) -> u64 {
        self.final_event_counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_is_valid() {
        let spec = ModelSpec {
            n: 3,
            lambda: 1.0,
            total: 3,
            initial: vec![1, 1, 1],
        };
        assert_eq!(validate_spec(spec.clone()).unwrap(), spec);
    }

    #[test]
    fn unnormalized_spec_rejected() {
        let spec = ModelSpec {
            n: 3,
            lambda: 1.0,
            total: 3,
            initial: vec![1, 1, 2],
        };
        assert!(matches!(
            validate_spec(spec),
            Err(Error::Normalization { sum: 4, total: 3 })
        ));
    }

    #[test]
    fn nonpositive_lambda_rejected() {
        for lambda in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            let spec = ModelSpec {
                n: 3,
                lambda,
                total: 3,
                initial: vec![1, 1, 1],
            };
            assert!(matches!(validate_spec(spec), Err(Error::Domain(_))), "{lambda}");
        }
    }

    #[test]
    fn too_few_species_and_negative_counts_rejected() {
        assert!(matches!(ModelSpec::new(1.0, &[1, 1]), Err(Error::Domain(_))));
        assert!(matches!(ModelSpec::new(1.0, &[2, -1, 1]), Err(Error::Domain(_))));
        assert!(matches!(ModelSpec::new(1.0, &[0, 0, 0]), Err(Error::Domain(_))));
        assert!(matches!(ModelSpec::symmetric(2, 1.0, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn fractions_round_to_total() {
        let spec = ModelSpec::from_fractions(1.0, 100, &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(spec.initial, vec![50, 30, 20]);
        let spec = ModelSpec::symmetric(3, 1.0, 1000).unwrap();
        assert_eq!(spec.initial, vec![334, 333, 333]);
        let spec = ModelSpec::symmetric(8, 2.0, 5).unwrap();
        assert_eq!(spec.initial.iter().sum::<u64>(), 5);
    }

    #[test]
    fn rates_follow_mass_action() {
        let spec = ModelSpec::new(4.0, &[2, 1, 1]).unwrap();
        let rates: Vec<f64> = (0..3).map(|j| spec.rate(&spec.initial, j)).collect();
        assert_eq!(rates, vec![2.0, 1.0, 2.0]);
        assert_eq!(spec.total_rate(&spec.initial), 5.0);
    }

    #[test]
    fn absorbing_states() {
        let spec = ModelSpec::new(1.0, &[3, 0, 0]).unwrap();
        let mut rng = crate::rng_stream(0, 0);
        assert!(SimState::new(&spec, &mut rng).is_absorbing());
        let spec = ModelSpec::new(1.0, &[2, 0, 2, 0]).unwrap();
        assert!(SimState::new(&spec, &mut rng).is_absorbing());
        let spec = ModelSpec::new(1.0, &[2, 1, 0]).unwrap();
        assert!(!SimState::new(&spec, &mut rng).is_absorbing());
    }

    #[test]
    fn fresh_clocks_have_positive_gap() {
        let spec = ModelSpec::symmetric(5, 1.0, 50).unwrap();
        let mut rng = crate::rng_stream(1, 0);
        let state = SimState::new(&spec, &mut rng);
        assert!(state.clocks.iter().all(|c| c.internal_time == 0.0 && c.gap() > 0.0));
    }

    #[test]
    fn with_clocks_validates() {
        let spec = ModelSpec::new(1.0, &[1, 1, 1]).unwrap();
        let ok = PoissonClock {
            internal_time: 0.0,
            next_threshold: 1.0,
        };
        let bad = PoissonClock {
            internal_time: 1.0,
            next_threshold: 1.0,
        };
        assert!(SimState::with_clocks(&spec, vec![1, 1, 1], vec![ok; 3]).is_ok());
        assert!(SimState::with_clocks(&spec, vec![1, 1, 1], vec![ok, ok, bad]).is_err());
        assert!(SimState::with_clocks(&spec, vec![1, 1, 2], vec![ok; 3]).is_err());
    }
}
