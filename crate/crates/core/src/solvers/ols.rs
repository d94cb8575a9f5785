use nalgebra::{DMatrix, DVector};

use super::{FitResult, Penalty};
use crate::linalg::solve_spd;
use crate::portfolio::CoefficientVector;
use crate::{Error, RegressionSample, Result};

/// Offset in the adaptive-lasso weights `1 / (|θ_ridge| + ε)`.
pub const ADAPTIVE_EPSILON: f64 = 1e-8;

/// Unpenalized minimum-variance θ, `-Σ̂_c⁻¹ σ̂_bc`.
///
/// Refuses `K >= T` and covariance matrices with condition number above 1e12.
pub fn fit_ols(sample: &RegressionSample) -> Result<FitResult> {
    let (t, k) = (sample.n_obs(), sample.n_predictors());
    if k >= t {
        return Err(Error::Singular(format!(
            "OLS needs fewer predictors than observations (K = {k}, T = {t}); use a penalized method"
        )));
    }
    let sigma = sample.predictor_covariance();
    let sbc = sample.benchmark_covariance();
    let theta = -solve_spd(&sigma, &sbc, "OLS")?;
    let values: Vec<f64> = theta.iter().copied().collect();
    let obj = sample.objective(&values);
    let mut coef = CoefficientVector::from_values(values, "ols");
    coef.window_end = Some(sample.window_end());
    Ok(FitResult::closed_form(coef, obj))
}

/// Ridge θ, `-(Σ̂_c + 2λI)⁻¹ σ̂_bc`.
pub fn fit_ridge(sample: &RegressionSample, lambda: f64) -> Result<FitResult> {
    Penalty::Ridge { lambda }.validate(sample.n_predictors())?;
    if lambda == 0.0 {
        let mut fit = fit_ols(sample)?;
        fit.theta.solver = "ridge".into();
        fit.theta.hyperparameters.insert("lambda".into(), 0.0);
        return Ok(fit);
    }
    RidgeSolver::new(sample).fit(sample, lambda)
}

/// Ridge factorization reusable across penalty values.
///
/// For `K <= T` it keeps the K × K covariance; otherwise it eigendecomposes
/// the T × T Gram matrix `ṙ_c ṙ_cᵀ` and solves in the dual.
#[derive(Debug, Clone)]
pub enum RidgeSolver {
    Primal {
        sigma: DMatrix<f64>,
        sbc: DVector<f64>,
    },
    Dual {
        /// `ṙ_cᵀ U`, K × r.
        rc_u: DMatrix<f64>,
        /// Eigenvalues of the Gram matrix.
        s2: DVector<f64>,
        /// `Uᵀ ṙ_b`.
        uty: DVector<f64>,
        denom: f64,
    },
}

impl RidgeSolver {
    pub fn new(sample: &RegressionSample) -> Self {
        let (t, k) = (sample.n_obs(), sample.n_predictors());
        if k <= t {
            return RidgeSolver::Primal {
                sigma: sample.predictor_covariance(),
                sbc: sample.benchmark_covariance(),
            };
        }
        let rc = &sample.centered_predictors;
        let gram = rc * rc.transpose();
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.max().max(0.0);
        let keep: Vec<usize> = (0..t).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
        let u = eig.eigenvectors.select_columns(&keep);
        let s2 = DVector::from_iterator(keep.len(), keep.iter().map(|&i| eig.eigenvalues[i]));
        RidgeSolver::Dual {
            rc_u: rc.tr_mul(&u),
            uty: u.tr_mul(&sample.centered_benchmark),
            s2,
            denom: (t - 1) as f64,
        }
    }

    /// θ for penalty `lambda > 0`.
    pub fn solve(&self, lambda: f64) -> Result<Vec<f64>> {
        let theta = match self {
            RidgeSolver::Primal { sigma, sbc } => {
                let mut a = sigma.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += 2.0 * lambda;
                }
                let chol = a.cholesky().ok_or_else(|| {
                    Error::Singular(format!("ridge system not positive definite at lambda = {lambda}"))
                })?;
                -chol.solve(sbc)
            }
            RidgeSolver::Dual { rc_u, s2, uty, denom } => {
                let scaled = DVector::from_iterator(
                    uty.len(),
                    uty.iter().zip(s2.iter()).map(|(c, s)| c / (s + 2.0 * lambda * denom)),
                );
                -(rc_u * scaled)
            }
        };
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("ridge solution at lambda = {lambda}")));
        }
        Ok(theta.iter().copied().collect())
    }

    pub fn fit(&self, sample: &RegressionSample, lambda: f64) -> Result<FitResult> {
        let values = self.solve(lambda)?;
        let obj = sample.objective(&values) + Penalty::Ridge { lambda }.value(&values);
        let mut coef = CoefficientVector::from_values(values, "ridge").with_hyper("lambda", lambda);
        coef.window_end = Some(sample.window_end());
        Ok(FitResult::closed_form(coef, obj))
    }
}

/// Adaptive-lasso weights `1 / (|θ_ridge,k| + ε)` from a ridge fit at `lambda`.
pub fn adaptive_weights(sample: &RegressionSample, lambda: f64) -> Result<Vec<f64>> {
    let fit = fit_ridge(sample, lambda)?;
    Ok(fit
        .theta
        .values
        .iter()
        .map(|t| 1.0 / (t.abs() + ADAPTIVE_EPSILON))
        .collect())
}
