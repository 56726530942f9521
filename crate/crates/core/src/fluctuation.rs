//! Gaussian fluctuations around the mean-field path.
//!
//! `Y = sqrt(M) * (X / M - u)` converges to the linear diffusion
//! `dV = b(t) V dt + c(t)^{1/2} dW`, where `b` is the Jacobian of the
//! mean-field vector field along `u(t)` and `c` collects the reaction
//! intensities: reaction `j` has stoichiometry `e_j - e_{j+1}` and
//! contributes `f_j * (e_j - e_{j+1})(e_j - e_{j+1})^T`. Its covariance obeys
//! `dSigma/dt = b Sigma + Sigma b^T + c`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{snap_grid, step_count, CyclicField, MeanFieldPath, RateFunction, Rk4, VectorField};
use crate::rng::rng_stream;
use crate::simulate::par_map_indexed;
use crate::{pred, succ};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Eigenvalues in `[-PSD_SLACK, 0)` are rounding noise and clamp to zero.
const PSD_SLACK: f64 = 1e-9;
/// Looser bound used while propagating, where integration error accrues.
const PROPAGATION_PSD_SLACK: f64 = 1e-6;

/// A mean-field system together with the coefficients of its linearized
/// fluctuation diffusion.
pub trait LinearNoise: VectorField {
    /// Drift `b(u)`: Jacobian of the vector field at `u`.
    fn drift(&self, u: &[f64]) -> DMatrix<f64>;
    /// Diffusion `c(u)`: symmetric positive semi-definite noise covariance.
    fn diffusion(&self, u: &[f64]) -> DMatrix<f64>;
}

impl<R: RateFunction> LinearNoise for CyclicField<R> {
    fn drift(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let f = self.rate_function();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            let (p, s) = (pred(i, n), succ(i, n));
            // d/du of f_i(u_i, u_{i+1}) - f_{i-1}(u_{i-1}, u_i)
            b[(i, i)] += f.d_dx(i, u[i], u[s]) - f.d_dy(p, u[p], u[i]);
            b[(i, s)] += f.d_dy(i, u[i], u[s]);
            b[(i, p)] -= f.d_dx(p, u[p], u[i]);
        }
        b
    }

    fn diffusion(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut c = DMatrix::zeros(n, n);
        for (j, r) in self.intensities(u).into_iter().enumerate() {
            let s = succ(j, n);
            c[(j, j)] += r;
            c[(s, s)] += r;
            c[(j, s)] -= r;
            c[(s, j)] -= r;
        }
        c
    }
}

/// Mass-action drift matrix `b` at `u`.
pub fn drift_matrix(u: &[f64], lambda: f64) -> DMatrix<f64> {
    CyclicField::mass_action(u.len(), lambda).drift(u)
}

/// Mass-action diffusion matrix `c` at `u`.
pub fn diffusion_matrix(u: &[f64], lambda: f64) -> DMatrix<f64> {
    CyclicField::mass_action(u.len(), lambda).diffusion(u)
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Symmetric square root `R` with `R * R = c` of a positive semi-definite
/// matrix, through its spectral decomposition.
///
/// Eigenvalues in `[-1e-9, 0)` and those below `n * eps * max|eigenvalue|`
/// are treated as exact zeros, so the null direction of `c` stays a null
/// direction of `R`.
pub fn psd_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() {
        return Err(Error::domain("square root of a non-square matrix"));
    }
    let asym = max_asymmetry(c);
    if !(asym <= SYMMETRY_TOLERANCE) {
        return Err(Error::domain(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_SLACK {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let cutoff = c.nrows() as f64 * f64::EPSILON * eig.eigenvalues.amax();
    let roots = eig.eigenvalues.map(|l| if l <= cutoff { 0.0 } else { l.sqrt() });
    let q = &eig.eigenvectors;
    let mut r = q * DMatrix::from_diagonal(&roots) * q.transpose();
    symmetrize(&mut r);
    Ok(r)
}

/// Fluctuation coefficients evaluated along a mean-field path.
#[derive(Debug, Clone)]
pub struct FluctuationModel<S = CyclicField> {
    pub path: MeanFieldPath,
    pub system: S,
}

impl FluctuationModel<CyclicField> {
    /// Mass-action model along `path`.
    pub fn new(path: MeanFieldPath, lambda: f64) -> Self {
        let n = path.initial.len();
        FluctuationModel {
            path,
            system: CyclicField::mass_action(n, lambda),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.system.rate_function().lambda
    }
}

impl<S: LinearNoise> FluctuationModel<S> {
    pub fn with_system(path: MeanFieldPath, system: S) -> Result<Self> {
        if path.initial.len() != system.dim() {
            return Err(Error::domain("path and system dimensions differ"));
        }
        Ok(FluctuationModel { path, system })
    }

    pub fn n(&self) -> usize {
        self.system.dim()
    }

    fn horizon(&self) -> f64 {
        self.path.grid.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub sigma: DMatrix<f64>,
    pub time: f64,
}

fn check_sigma0(sigma0: &DMatrix<f64>, n: usize) -> Result<()> {
    if sigma0.shape() != (n, n) {
        return Err(Error::domain(format!("sigma0 must be {n}x{n}")));
    }
    if max_asymmetry(sigma0) > SYMMETRY_TOLERANCE {
        return Err(Error::domain("sigma0 is not symmetric"));
    }
    let min = min_eigenvalue(sigma0);
    if min < -PSD_SLACK {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// Integrates `dSigma/dt = b Sigma + Sigma b^T + c` jointly with the
/// mean-field ODE by fixed-step RK4 from `sigma0` at time 0, returning
/// `Sigma` at each grid time of the model's path.
pub fn propagate_covariance<S: LinearNoise>(
    model: &FluctuationModel<S>,
    sigma0: &DMatrix<f64>,
    step: f64,
) -> Result<Vec<CovarianceState>> {
    let n = model.n();
    check_sigma0(sigma0, n)?;
    let steps = step_count(model.horizon(), step)?;
    let sample_at = snap_grid(&model.path.grid, step, steps)?;

    let system = &model.system;
    let rhs = |y: &[f64], out: &mut [f64]| {
        let (u, s) = y.split_at(n);
        let (du, ds) = out.split_at_mut(n);
        system.eval(u, du);
        let sigma = DMatrix::from_column_slice(n, n, s);
        let b = system.drift(u);
        let b_sigma = &b * &sigma;
        let d = &b_sigma + b_sigma.transpose() + system.diffusion(u);
        ds.copy_from_slice(d.as_slice());
    };

    let mut y: Vec<f64> = model.path.initial.clone();
    y.extend_from_slice(sigma0.as_slice());
    let mut rk = Rk4::new(y.len());
    let mut out = Vec::with_capacity(sample_at.len());
    let mut next = sample_at.iter().zip(&model.path.grid).peekable();
    for k in 0..=steps {
        let mut sigma = DMatrix::from_column_slice(n, n, &y[n..]);
        symmetrize(&mut sigma);
        if k > 0 {
            let min = min_eigenvalue(&sigma);
            if min < -PROPAGATION_PSD_SLACK {
                return Err(Error::NotPsd { min_eigenvalue: min });
            }
        }
        y[n..].copy_from_slice(sigma.as_slice());
        if let Some((_, &time)) = next.next_if(|(idx, _)| **idx == k) {
            out.push(CovarianceState { sigma, time });
        }
        if k < steps {
            rk.step(rhs, &mut y, step);
        }
    }
    Ok(out)
}

/// Law of `V(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, covariance: DMatrix<f64> },
}

impl InitialCondition {
    pub fn zero(n: usize) -> Self {
        InitialCondition::Point(vec![0.0; n])
    }

    fn dim(&self) -> usize {
        match self {
            InitialCondition::Point(v) => v.len(),
            InitialCondition::Gaussian { mean, .. } => mean.len(),
        }
    }
}

/// Sampled path of the limit diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPath {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub seed: Option<u64>,
    pub replica: u64,
}

/// Per-step drift and noise factor along the mean-field solution, with the
/// square root of `c` recomputed at every step.
struct CoefficientTable {
    n: usize,
    step: f64,
    /// Row-major `b` for each step.
    drift: Vec<Vec<f64>>,
    /// Row-major `c^{1/2}` for each step.
    noise: Vec<Vec<f64>>,
    sample_at: Vec<usize>,
    grid: Vec<f64>,
    initial_factor: Option<(Vec<f64>, Vec<f64>)>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl CoefficientTable {
    fn build<S: LinearNoise>(
        model: &FluctuationModel<S>,
        v0: &InitialCondition,
        step: f64,
        grid: &[f64],
    ) -> Result<Self> {
        let n = model.n();
        if v0.dim() != n {
            return Err(Error::domain(format!("v0 must have {n} entries")));
        }
        let t_max = grid.last().copied().unwrap_or(0.0);
        let steps = step_count(t_max, step)?;
        let sample_at = snap_grid(grid, step, steps)?;
        let initial_factor = match v0 {
            InitialCondition::Point(_) => None,
            InitialCondition::Gaussian { mean, covariance } => {
                check_sigma0(covariance, n)?;
                Some((mean.clone(), row_major(&psd_sqrt(covariance)?)))
            }
        };

        let mut u = model.path.initial.clone();
        let mut rk = Rk4::new(n);
        let mut drift = Vec::with_capacity(steps);
        let mut noise = Vec::with_capacity(steps);
        for _ in 0..steps {
            drift.push(row_major(&model.system.drift(&u)));
            noise.push(row_major(&psd_sqrt(&model.system.diffusion(&u))?));
            rk.step(|y, out| model.system.eval(y, out), &mut u, step);
        }
        Ok(CoefficientTable {
            n,
            step,
            drift,
            noise,
            sample_at,
            grid: grid.to_vec(),
            initial_factor,
        })
    }

    fn sample_path<R: Rng + ?Sized>(&self, v0: &InitialCondition, rng: &mut R) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut xi = vec![0.0; n];
        let mut v = match (v0, &self.initial_factor) {
            (InitialCondition::Point(p), _) => p.clone(),
            (InitialCondition::Gaussian { .. }, Some((mean, factor))) => {
                xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                mat_vec_add(factor, &xi, mean.clone(), 1.0)
            }
            (InitialCondition::Gaussian { .. }, None) => unreachable!("factor built with the table"),
        };
        let sqrt_h = self.step.sqrt();
        let mut values = Vec::with_capacity(self.sample_at.len());
        let mut next = self.sample_at.iter().peekable();
        let mut dv = vec![0.0; n];
        for k in 0..=self.drift.len() {
            if next.next_if_eq(&&k).is_some() {
                values.push(v.clone());
            }
            if k == self.drift.len() {
                break;
            }
            xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            let b = &self.drift[k];
            let r = &self.noise[k];
            for i in 0..n {
                let row = i * n;
                let mut acc = 0.0;
                let mut noise = 0.0;
                for j in 0..n {
                    acc += b[row + j] * v[j];
                    noise += r[row + j] * xi[j];
                }
                dv[i] = acc * self.step + noise * sqrt_h;
            }
            v.iter_mut().zip(&dv).for_each(|(x, d)| *x += d);
        }
        values
    }
}

fn mat_vec_add(m: &[f64], x: &[f64], mut y: Vec<f64>, scale: f64) -> Vec<f64> {
    let n = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += scale * (0..n).map(|j| m[i * n + j] * x[j]).sum::<f64>();
    }
    y
}

/// One Euler-Maruyama path of the limit diffusion, sampled at `grid`
/// (snapped to multiples of `step`).
pub fn simulate_limit_sde<S: LinearNoise, R: Rng + ?Sized>(
    model: &FluctuationModel<S>,
    v0: &InitialCondition,
    step: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<GaussianPath> {
    let table = CoefficientTable::build(model, v0, step, grid)?;
    Ok(GaussianPath {
        grid: table.grid.clone(),
        values: table.sample_path(v0, rng),
        seed: None,
        replica: 0,
    })
}

/// `paths` independent limit paths; path `i` draws from
/// `rng_stream(base_seed, i)`.
pub fn simulate_limit_ensemble<S: LinearNoise>(
    model: &FluctuationModel<S>,
    v0: &InitialCondition,
    step: f64,
    grid: &[f64],
    paths: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<GaussianPath>> {
    let table = CoefficientTable::build(model, v0, step, grid)?;
    par_map_indexed(paths, threads, |i| {
        let mut rng = rng_stream(base_seed, i as u64);
        Ok(GaussianPath {
            grid: table.grid.clone(),
            values: table.sample_path(v0, &mut rng),
            seed: Some(base_seed),
            replica: i as u64,
        })
    })
}

/// Sample covariance (divisor `len - 1`) of a set of vectors.
pub fn sample_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples.first().map_or(0, Vec::len);
    let count = samples.len();
    let mut mean = DVector::zeros(n);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= count as f64;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let d = DVector::from_column_slice(s) - &mean;
        cov += &d * d.transpose();
    }
    if count > 1 {
        cov /= (count - 1) as f64;
    }
    cov
}
