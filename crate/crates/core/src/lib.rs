//! Exact stochastic simulation of the cyclic n-species collision model
//! ("paper-scissors-stone"), its mean-field ODE limit, its Gaussian
//! fluctuation limit, and a statistical harness that checks the simulator
//! against both.
//!
//! Species `j` beats species `j + 1` (indices cyclic, 0-based): a collision
//! between one individual of each turns the `j + 1` individual into a `j`.
//! Reaction `j` fires with intensity `(lambda / M) * X_j * X_{j+1}`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fluctuation;
pub mod io;
pub mod meanfield;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod validate;

pub use error::{Error, Result};
pub use fluctuation::{CovarianceState, FluctuationModel, GaussianPath, InitialCondition, LinearNoise};
pub use meanfield::{MassAction, MeanFieldPath, MeanFieldState, RateFunction};
pub use model::{JumpEvent, ModelSpec, PoissonClock, SimState, Trajectory};
pub use rng::{rng_stream, ReplicaRng};
pub use simulate::{Ensemble, EventRetention, RunOptions, Step};

/// Cyclic successor of species `i` among `n`.
#[inline]
pub fn succ(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

/// Cyclic predecessor of species `i` among `n`.
#[inline]
pub fn pred(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}
