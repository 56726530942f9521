//! Deterministic mean-field limit.
//!
//! The fractions `u_i = X_i / M` follow the cyclic system
//! `du_i/dt = f_i(u_i, u_{i+1}) - f_{i-1}(u_{i-1}, u_i)`, where `f_j` is the
//! intensity of reaction `j` per unit population. With mass action
//! `f_j(x, y) = lambda * x * y` the flow keeps both `sum(u)` and `prod(u)`
//! constant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{pred, succ};

/// Below this many multiples of the tolerance a component counts as having
/// left the simplex.
const SIMPLEX_TOLERANCE: f64 = 1e-9;
const NEAR_BOUNDARY: f64 = 1e-4;

/// Per-reaction intensity `f_j(x, y)` with its partial derivatives.
pub trait RateFunction: Send + Sync + fmt::Debug {
    fn rate(&self, reaction: usize, x: f64, y: f64) -> f64;
    fn d_dx(&self, reaction: usize, x: f64, y: f64) -> f64;
    fn d_dy(&self, reaction: usize, x: f64, y: f64) -> f64;
}

/// `f(x, y) = lambda * x * y` for every reaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassAction {
    pub lambda: f64,
}

impl RateFunction for MassAction {
    #[inline]
    fn rate(&self, _: usize, x: f64, y: f64) -> f64 {
        self.lambda * x * y
    }

    #[inline]
    fn d_dx(&self, _: usize, _: f64, y: f64) -> f64 {
        self.lambda * y
    }

    #[inline]
    fn d_dy(&self, _: usize, x: f64, _: f64) -> f64 {
        self.lambda * x
    }
}

/// Autonomous ODE right-hand side.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]);
}

/// The cyclic n-species field built from a [`RateFunction`].
#[derive(Debug, Clone)]
pub struct CyclicField<R = MassAction> {
    n: usize,
    rate: R,
}

impl CyclicField<MassAction> {
    pub fn mass_action(n: usize, lambda: f64) -> Self {
        CyclicField {
            n,
            rate: MassAction { lambda },
        }
    }
}

impl<R: RateFunction> CyclicField<R> {
    pub fn new(n: usize, rate: R) -> Self {
        CyclicField { n, rate }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rate_function(&self) -> &R {
        &self.rate
    }

    /// Intensity of each reaction at `u`.
    pub fn intensities(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| self.rate.rate(j, u[j], u[succ(j, self.n)]))
            .collect()
    }
}

impl<R: RateFunction> VectorField for CyclicField<R> {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let last = self.rate.rate(n - 1, u[n - 1], u[0]);
        let mut prev = last;
        for i in 0..n {
            let flux = if i + 1 == n {
                last
            } else {
                self.rate.rate(i, u[i], u[i + 1])
            };
            out[i] = flux - prev;
            prev = flux;
        }
    }
}

/// Mass-action right-hand side `lambda * (u_i u_{i+1} - u_{i-1} u_i)`.
pub fn vector_field(u: &[f64], lambda: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| lambda * (u[i] * u[succ(i, n)] - u[pred(i, n)] * u[i]))
        .collect()
}

/// `(sum(u), prod(u))`, both constant along the mass-action flow.
pub fn conserved_quantities(u: &[f64]) -> (f64, f64) {
    (u.iter().sum(), u.iter().product())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub u: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantRecord {
    pub time: f64,
    pub sum: f64,
    pub product: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeanFieldWarning {
    /// Some component dropped below 10^-4; the first such step is recorded.
    NearBoundary { time: f64, species: usize, value: f64 },
}

/// Solution sampled on a grid. Grid times are snapped to the nearest
/// multiple of `step` instead of interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPath {
    pub grid: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub invariant_audit: Vec<InvariantRecord>,
    pub step: f64,
    pub initial: Vec<f64>,
    pub warnings: Vec<MeanFieldWarning>,
}

impl MeanFieldPath {
    /// State at the grid point within half a step of `t`.
    pub fn state_at(&self, t: f64) -> Option<&MeanFieldState> {
        let tol = 0.5 * self.step + 1e-12 * t.abs().max(1.0);
        let idx = self.grid.partition_point(|g| *g < t - tol);
        self.states.get(idx).filter(|s| (s.time - t).abs() <= tol)
    }
}

/// Step index for each grid time; snapped indices must stay strictly
/// increasing and within `0..=last`.
pub(crate) fn snap_grid(grid: &[f64], step: f64, last: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(grid.len());
    for &g in grid {
        if !g.is_finite() || g < 0.0 {
            return Err(Error::domain(format!(
                "grid time {g} is not a finite non-negative time"
            )));
        }
        let k = (g / step).round() as usize;
        if k > last {
            return Err(Error::domain(format!(
                "grid time {g} lies past the integration horizon"
            )));
        }
        if out.last().is_some_and(|&prev| k <= prev) {
            return Err(Error::domain(format!(
                "grid time {g} collides with its predecessor after snapping to step {step}"
            )));
        }
        out.push(k);
    }
    Ok(out)
}

pub(crate) fn step_count(t_end: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::domain(format!("step = {step} must be positive")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::domain(format!(
            "t_end = {t_end} must be finite and non-negative"
        )));
    }
    Ok((t_end / step).round() as usize)
}

/// Classical fourth-order Runge-Kutta stepper with reusable scratch space.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub(crate) fn step<F: Fn(&[f64], &mut [f64])>(&mut self, f: F, y: &mut [f64], h: f64) {
        f(y, &mut self.k1);
        axpy_into(&mut self.tmp, y, 0.5 * h, &self.k1);
        f(&self.tmp, &mut self.k2);
        axpy_into(&mut self.tmp, y, 0.5 * h, &self.k2);
        f(&self.tmp, &mut self.k3);
        axpy_into(&mut self.tmp, y, h, &self.k3);
        f(&self.tmp, &mut self.k4);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn axpy_into(out: &mut [f64], y: &[f64], a: f64, x: &[f64]) {
    for ((o, yi), xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}

fn check_simplex(u: &[f64]) -> Result<()> {
    if u.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::domain(format!("u0 = {u:?} has a negative or non-finite entry")));
    }
    let sum: f64 = u.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::domain(format!("u0 sums to {sum}, not 1")));
    }
    Ok(())
}

/// Integrates the mass-action system from `u0` up to `t_end` with fixed
/// step `step`, recording the state at each grid time.
pub fn integrate(u0: &[f64], lambda: f64, t_end: f64, step: f64, grid: &[f64]) -> Result<MeanFieldPath> {
    if u0.len() < 3 {
        return Err(Error::domain("at least 3 species are required"));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("lambda = {lambda} must be positive")));
    }
    integrate_field(&CyclicField::mass_action(u0.len(), lambda), u0, t_end, step, grid)
}

/// [`integrate`] for an arbitrary field on the simplex.
pub fn integrate_field<F: VectorField>(
    field: &F,
    u0: &[f64],
    t_end: f64,
    step: f64,
    grid: &[f64],
) -> Result<MeanFieldPath> {
    if u0.len() != field.dim() {
        return Err(Error::domain(format!(
            "u0 has {} entries, field has {}",
            u0.len(),
            field.dim()
        )));
    }
    check_simplex(u0)?;
    let steps = step_count(t_end, step)?;
    let sample_at = snap_grid(grid, step, steps)?;

    let mut u = u0.to_vec();
    let mut rk = Rk4::new(u.len());
    let mut path = MeanFieldPath {
        grid: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        invariant_audit: Vec::with_capacity(grid.len()),
        step,
        initial: u0.to_vec(),
        warnings: Vec::new(),
    };
    let mut next = sample_at.iter().peekable();
    for k in 0..=steps {
        let time = k as f64 * step;
        let (species, min) = u
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty state");
        if min < -10.0 * SIMPLEX_TOLERANCE || !min.is_finite() {
            return Err(Error::Step {
                time,
                species,
                value: min,
            });
        }
        if min < NEAR_BOUNDARY && path.warnings.is_empty() {
            path.warnings.push(MeanFieldWarning::NearBoundary {
                time,
                species,
                value: min,
            });
        }
        if next.next_if_eq(&&k).is_some() {
            let (sum, product) = conserved_quantities(&u);
            path.grid.push(time);
            path.states.push(MeanFieldState { u: u.clone(), time });
            path.invariant_audit.push(InvariantRecord { time, sum, product });
        }
        if k < steps {
            rk.step(|y, out| field.eval(y, out), &mut u, step);
        }
    }
    Ok(path)
}
