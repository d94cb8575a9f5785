//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Condition number above which a covariance matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Empirical quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Nearest-rank empirical quantile: the `ceil(n p)`-th order statistic
/// (1-based, at least the first). `sorted` must be ascending and non-empty.
pub fn quantile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((n as f64) * p.clamp(0.0, 1.0)).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Solves `a x = b` for symmetric positive definite `a`, refusing matrices whose
/// eigenvalue condition number exceeds [`MAX_CONDITION`].
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::Singular(format!(
            "{what}: covariance matrix of order {n} is not positive definite \
             (eigenvalues in [{min:.3e}, {max:.3e}])"
        )));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what}: Cholesky factorization failed")))?;
    Ok(chol.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rules() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_linear(&xs, 0.01) - 1.99).abs() < 1e-12);
        assert!((quantile_linear(&xs, 0.99) - 99.01).abs() < 1e-12);
        assert_eq!(quantile_nearest_rank(&xs, 0.01), 1.0);
        assert_eq!(quantile_nearest_rank(&xs, 0.99), 99.0);
        assert_eq!(quantile_nearest_rank(&xs, 0.0), 1.0);
    }

    #[test]
    fn spd_solver_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_spd(&a, &b, "t"), Err(Error::Singular(_))));
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_spd(&a, &b, "t").unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.25).abs() < 1e-15);
    }
}
