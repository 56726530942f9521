//! Small statistics toolkit for the reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean and standard error of the mean of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
}

impl MeanEstimate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// Deviation from `target` in standard errors. A zero standard error
    /// gives 0 when the mean hits the target exactly and infinity otherwise.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.se > 0.0 {
            diff / self.se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }
}

/// Linearly interpolated quantile of an unsorted sample (`q` in `[0, 1]`).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov survival function `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic `d` from `n` samples, with the
/// Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d)
}

/// Upper-tail probability of a chi-square statistic with `df` degrees of
/// freedom.
pub fn chi_square_p_value(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
}

/// Orthonormal basis (Helmert contrasts) of the subspace orthogonal to
/// `(1, ..., 1)`, as the columns of an `n x (n-1)` matrix.
pub fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Restriction `Q^T A Q` of a matrix to the zero-sum subspace.
pub fn restrict_to_zero_sum(a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = zero_sum_basis(a.nrows());
    q.transpose() * a * q
}

/// `||A - B||_F / ||B||_F` after restricting both to the zero-sum subspace.
pub fn restricted_relative_error(estimate: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let e = restrict_to_zero_sum(estimate);
    let r = restrict_to_zero_sum(reference);
    (e - &r).norm() / r.norm()
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_critical_values() {
        // tabulated asymptotic critical points
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(1.2238) - 0.10).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(5.0) < 1e-20);
    }

    #[test]
    fn ks_statistic_of_perfect_grid() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let d = ks_statistic(&xs, |x| x);
        assert!((d - 0.05).abs() < 1e-15);
    }

    #[test]
    fn chi_square_tail() {
        assert!((chi_square_p_value(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-9);
        assert!((chi_square_p_value(5.991_464_547_107_979, 2) - 0.05).abs() < 1e-9);
        assert_eq!(chi_square_p_value(7.0, 0), 1.0);
    }

    #[test]
    fn quantiles() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 5.0);
        assert!((quantile(&xs, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn helmert_basis_is_orthonormal_and_zero_sum() {
        for n in [2, 3, 5, 8] {
            let q = zero_sum_basis(n);
            let gram = q.transpose() * &q;
            assert!((gram - DMatrix::identity(n - 1, n - 1)).amax() < 1e-14);
            for col in q.column_iter() {
                assert!(col.sum().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mean_estimate_and_z() {
        let e = MeanEstimate::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanEstimate::of(&[0.0, 0.0]).z_score(0.0), 0.0);
        assert_eq!(MeanEstimate::of(&[1.0, 1.0]).z_score(0.0), f64::INFINITY);
    }
}
