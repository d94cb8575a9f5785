use log::debug;

use super::{scad_threshold, soft_threshold, FitResult, Penalty, SolverConfig};
use crate::portfolio::CoefficientVector;
use crate::{RegressionSample, Result};

/// Column variances and the score at θ = 0 for one sample.
#[derive(Debug, Clone)]
pub(crate) struct Design<'a> {
    pub sample: &'a RegressionSample,
    /// `v_k = ṙ_c,kᵀ ṙ_c,k / (T - 1)`.
    pub v: Vec<f64>,
    /// `z_k` at θ = 0, equal to `-σ̂_bc,k`.
    pub z0: Vec<f64>,
    inv: f64,
}

impl<'a> Design<'a> {
    pub fn new(sample: &'a RegressionSample) -> Self {
        let inv = 1.0 / (sample.n_obs() - 1) as f64;
        let rc = &sample.centered_predictors;
        let y = &sample.centered_benchmark;
        let (v, z0) = crate::par::map_range(sample.n_predictors(), |k| {
            let c = rc.column(k);
            (c.norm_squared() * inv, -c.dot(y) * inv)
        })
        .into_iter()
        .unzip();
        Self { sample, v, z0, inv }
    }

    /// Smallest penalty with an all-zero lasso solution (per unit weight).
    pub fn max_abs_score(&self, weights: Option<&[f64]>) -> f64 {
        self.z0
            .iter()
            .enumerate()
            .map(|(k, z)| match weights {
                Some(w) if w[k] > 0.0 => z.abs() / w[k],
                Some(_) => 0.0,
                None => z.abs(),
            })
            .fold(0.0, f64::max)
    }

    fn update(&self, penalty: &Penalty, k: usize, z: f64) -> f64 {
        let v = self.v[k];
        if v <= 0.0 {
            return 0.0;
        }
        match penalty {
            Penalty::None => z / v,
            Penalty::Ridge { lambda } => z / (v + 2.0 * lambda),
            Penalty::Lasso { rho } => soft_threshold(z, *rho) / v,
            Penalty::AdaptiveLasso { rho, weights } => soft_threshold(z, rho * weights[k]) / v,
            Penalty::ElasticNet { lambda, mix } => soft_threshold(z, lambda * mix) / (v + 2.0 * lambda * (1.0 - mix)),
            Penalty::Scad { lambda, a } => scad_threshold(z, v, *lambda, *a),
        }
    }

    /// Cyclic coordinate descent from `warm` (or zero).
    pub fn descend(&self, penalty: &Penalty, config: &SolverConfig, warm: Option<&[f64]>) -> Result<FitResult> {
        let k_all = self.sample.n_predictors();
        penalty.validate(k_all)?;
        let rc = &self.sample.centered_predictors;
        let mut theta = warm.map_or_else(|| vec![0.0; k_all], <[f64]>::to_vec);
        let mut e = self.sample.portfolio_series(&theta);
        let objective = |e: &nalgebra::DVector<f64>, th: &[f64]| 0.5 * e.norm_squared() * self.inv + penalty.value(th);
        let mut trace = vec![objective(&e, &theta)];
        let mut sweeps = 0;
        let mut converged = false;

        let sweep = |idx: &mut dyn Iterator<Item = usize>, theta: &mut [f64], e: &mut nalgebra::DVector<f64>| {
            let mut max_delta = 0.0_f64;
            for k in idx {
                let c = rc.column(k);
                let z = self.v[k] * theta[k] - c.dot(e) * self.inv;
                let new = self.update(penalty, k, z);
                let delta = new - theta[k];
                if delta != 0.0 {
                    e.axpy(delta, &c, 1.0);
                    theta[k] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            max_delta
        };
        let small = |d: f64, th: &[f64]| {
            let scale = th.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
            d <= config.tolerance * scale || d == 0.0
        };

        while sweeps < config.max_sweeps {
            let d = sweep(&mut (0..k_all), &mut theta, &mut e);
            sweeps += 1;
            trace.push(objective(&e, &theta));
            if small(d, &theta) {
                converged = true;
                break;
            }
            // Iterate on the active set until it settles, then re-check all.
            let active: Vec<usize> = (0..k_all).filter(|&k| theta[k] != 0.0).collect();
            while sweeps < config.max_sweeps {
                let d = sweep(&mut active.iter().copied(), &mut theta, &mut e);
                sweeps += 1;
                trace.push(objective(&e, &theta));
                if small(d, &theta) {
                    break;
                }
            }
        }
        if !converged {
            debug!(
                "{} did not converge within {} sweeps",
                penalty.name(),
                config.max_sweeps
            );
        }
        let mut coef = CoefficientVector::from_values(theta, penalty.name());
        coef.hyperparameters = penalty.hyperparameters();
        coef.window_end = Some(self.sample.window_end());
        Ok(FitResult {
            theta: coef,
            objective_trace: trace,
            converged,
            sweeps,
        })
    }
}

/// Penalized fit by cyclic coordinate descent in ascending predictor order,
/// starting from θ = 0.
pub fn fit_coordinate_descent(
    sample: &RegressionSample,
    penalty: &Penalty,
    config: &SolverConfig,
) -> Result<FitResult> {
    config.validate()?;
    Design::new(sample).descend(penalty, config, None)
}
