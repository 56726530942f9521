//! Exact event-driven simulation through the random time change.
//!
//! Each reaction `j` owns a unit-rate Poisson clock read at internal time
//! `T_j(t) = (lambda / M) * integral of X_j X_{j+1}`. Between events the
//! counts are constant, so clock `j` reaches its next arrival after
//! `(threshold_j - T_j) / rate_j` units of wall time. The next jump is the
//! earliest of these candidates; reactions with zero intensity never fire.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{unit_exponential, JumpEvent, ModelSpec, SimState, Trajectory};
use crate::rng::rng_stream;
use crate::succ;

/// Relative slack allowed when a non-fired clock lands on its threshold
/// through rounding.
const CLOCK_TOLERANCE: f64 = 1e-9;

/// Expected event count below which [`EventRetention::Auto`] keeps the log.
const AUTO_RETAIN_LIMIT: f64 = 1e7;

/// Outcome of one call to [`next_event`].
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Jump(JumpEvent),
    Absorbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventRetention {
    Always,
    Never,
    /// Keep the log when the initial total intensity times the horizon is
    /// below 10^7.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub retention: EventRetention,
    /// Maximum number of events per replica.
    pub max_events: u64,
    /// Worker threads for ensembles; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            retention: EventRetention::Auto,
            max_events: 1_000_000_000,
            threads: None,
        }
    }
}

impl RunOptions {
    pub fn retaining_events(mut self) -> Self {
        self.retention = EventRetention::Always;
        self
    }

    pub fn grid_only(mut self) -> Self {
        self.retention = EventRetention::Never;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    fn retains(&self, spec: &ModelSpec, t_end: f64) -> bool {
        match self.retention {
            EventRetention::Always => true,
            EventRetention::Never => false,
            EventRetention::Auto => spec.total_rate(&spec.initial) * t_end < AUTO_RETAIN_LIMIT,
        }
    }
}

/// Reaction that fires next and the wall time until it fires, or `None`
/// in an absorbing state. Ties go to the lowest reaction index.
pub fn propose(state: &SimState, spec: &ModelSpec) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..spec.n {
        let rate = spec.rate(&state.counts, j);
        if rate > 0.0 {
            let wait = state.clocks[j].gap() / rate;
            if best.is_none_or(|(_, b)| wait < b) {
                best = Some((j, wait));
            }
        }
    }
    best
}

/// Advances every clock over `dt` units of wall time at the current counts
/// without firing anything.
fn advance_clocks(state: &mut SimState, spec: &ModelSpec, dt: f64, fired: Option<usize>) -> Result<()> {
    for k in 0..spec.n {
        if Some(k) == fired {
            continue;
        }
        let rate = spec.rate(&state.counts, k);
        if rate == 0.0 {
            continue;
        }
        let clock = &mut state.clocks[k];
        let mut t = clock.internal_time + rate * dt;
        if t >= clock.next_threshold {
            let excess = t - clock.next_threshold;
            if excess > CLOCK_TOLERANCE * clock.next_threshold.max(1.0) {
                return Err(Error::numeric(format!(
                    "clock {k} overran its threshold by {excess:e} at t = {}",
                    state.time + dt
                )));
            }
            t = clock.next_threshold.next_down();
        }
        clock.internal_time = t;
    }
    Ok(())
}

/// Fires reaction `j` after `dt` units of wall time. Clock advancement uses
/// the pre-event counts.
fn fire<R: Rng + ?Sized>(state: &mut SimState, spec: &ModelSpec, j: usize, dt: f64, rng: &mut R) -> Result<JumpEvent> {
    advance_clocks(state, spec, dt, Some(j))?;

    let clock = &mut state.clocks[j];
    clock.internal_time = clock.next_threshold;
    let mut next = clock.internal_time + unit_exponential(rng);
    if next <= clock.internal_time {
        next = clock.internal_time.next_up();
    }
    clock.next_threshold = next;

    let prey = succ(j, spec.n);
    if state.counts[prey] == 0 {
        return Err(Error::numeric(format!(
            "reaction {j} fired with species {prey} extinct"
        )));
    }
    state.counts[prey] -= 1;
    state.counts[j] += 1;
    state.event_count[j] += 1;
    state.time += dt;
    state.check_conservation(spec)?;

    Ok(JumpEvent {
        time: state.time,
        reaction: j,
        counts_after: state.counts.clone(),
    })
}

/// Performs one jump of the system, or reports absorption.
pub fn next_event<R: Rng + ?Sized>(state: &mut SimState, spec: &ModelSpec, rng: &mut R) -> Result<Step> {
    match propose(state, spec) {
        None => Ok(Step::Absorbed),
        Some((j, dt)) => fire(state, spec, j, dt, rng).map(Step::Jump),
    }
}

fn check_grid(grid: &[f64], t_end: f64) -> Result<()> {
    if !(t_end > 0.0) {
        return Err(Error::domain(format!("t_end = {t_end} must be positive")));
    }
    if let Some(bad) = grid.iter().find(|g| !g.is_finite() || **g < 0.0 || **g > t_end) {
        return Err(Error::domain(format!("grid time {bad} outside [0, {t_end}]")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("grid must be sorted"));
    }
    Ok(())
}

/// Evenly spaced grid of `points` times covering `[0, t_end]`.
pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        t_end
                    } else {
                        t_end * i as f64 / last
                    }
                })
                .collect()
        }
    }
}

/// Simulates one replica from the initial state of `spec` until `t_end`
/// or absorption.
pub fn run_until<R: Rng + ?Sized>(
    spec: &ModelSpec,
    t_end: f64,
    grid: &[f64],
    rng: &mut R,
    options: &RunOptions,
) -> Result<Trajectory> {
    check_grid(grid, t_end)?;
    let mut state = SimState::new(spec, rng);
    let mut events = options.retains(spec, t_end).then(Vec::new);
    let mut samples = Vec::with_capacity(grid.len());
    let mut next_sample = 0;
    let mut fired: u64 = 0;
    let mut absorbed = None;

    loop {
        let Some((j, dt)) = propose(&state, spec) else {
            absorbed = Some(state.time);
            break;
        };
        let t_next = state.time + dt;
        if t_next > t_end {
            let remaining = t_end - state.time;
            advance_clocks(&mut state, spec, remaining, None)?;
            state.time = t_end;
            break;
        }
        while next_sample < grid.len() && grid[next_sample] < t_next {
            samples.push(state.counts.clone());
            next_sample += 1;
        }
        if fired >= options.max_events {
            return Err(Error::BudgetExceeded {
                limit: options.max_events,
                time: state.time,
            });
        }
        let event = fire(&mut state, spec, j, dt, rng)?;
        fired += 1;
        if let Some(log) = events.as_mut() {
            log.push(event);
        }
    }
    samples.extend(std::iter::repeat_n(state.counts.clone(), grid.len() - next_sample));

    Ok(Trajectory {
        spec: spec.clone(),
        seed: None,
        replica: 0,
        events,
        grid: grid.to_vec(),
        samples,
        absorbed,
        t_end: t_end.is_finite().then_some(t_end),
        final_internal_times: state.internal_times(),
        final_event_counts: state.event_count,
    })
}

/// Independent replicas of one model on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub spec: ModelSpec,
    pub base_seed: u64,
    pub t_end: Option<f64>,
    pub grid: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Runs `f(i)` for every index in parallel and returns the results in
/// index order.
pub(crate) fn par_map_indexed<T, F>(count: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || (0..count).into_par_iter().map(&f).collect::<Vec<Result<T>>>();
    let results = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

/// Simulates `replicas` independent copies; replica `i` draws from
/// `rng_stream(base_seed, i)`, so the output does not depend on thread
/// count or scheduling.
pub fn run_ensemble(
    spec: &ModelSpec,
    replicas: usize,
    t_end: f64,
    grid: &[f64],
    base_seed: u64,
    options: &RunOptions,
) -> Result<Ensemble> {
    if replicas == 0 {
        return Err(Error::domain("an ensemble needs at least one replica"));
    }
    check_grid(grid, t_end)?;
    let trajectories = par_map_indexed(replicas, options.threads, |i| {
        let mut rng = rng_stream(base_seed, i as u64);
        run_until(spec, t_end, grid, &mut rng, options)
            .map(|mut t| {
                t.seed = Some(base_seed);
                t.replica = i as u64;
                t
            })
            .map_err(|e| Error::Replica {
                index: i,
                source: Box::new(e),
            })
    })?;
    Ok(Ensemble {
        spec: spec.clone(),
        base_seed,
        t_end: t_end.is_finite().then_some(t_end),
        grid: grid.to_vec(),
        trajectories,
    })
}
