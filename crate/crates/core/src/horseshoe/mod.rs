//! Horseshoe-prior Gibbs sampler for the minimum-variance regression.
//!
//! The model is `ṙ_b = -ṙ_c θ + ε` with `ε ~ N(0, σ²)`,
//! `θ_k | ℓ_k, τ, σ ~ N(0, σ² ℓ_k² τ²)`, `ℓ_k, τ ~ C⁺(0, 1)` and
//! `p(σ²) ∝ 1/σ²`. Without the σ² factor the posterior is improper once
//! K ≥ T (σ² collapses to zero on an interpolating fit).
//! The response and columns are standardized before sampling and draws are
//! mapped back, so the prior scale is comparable across windows.
//!
//! Each sweep draws τ by Metropolis on `log τ` with θ and σ² integrated out,
//! then σ² and θ in one block from their exact conditionals, then the local
//! scales by slice sampling. Updating τ given θ mixes poorly when most
//! coefficients are near zero, since τ and the small θ_k are tightly coupled.

mod diagnostics;
pub mod sampler;

use std::path::Path;

use log::debug;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::portfolio::CoefficientVector;
use crate::solvers::FitResult;
use crate::{Error, RegressionSample, Result};

pub use diagnostics::{effective_sample_size, write_trace, TRACE_MAGIC};

/// Scales are kept inside this range to avoid overflow in the block draw.
const SCALE_FLOOR: f64 = 1e-200;
const SCALE_CEIL: f64 = 1e200;
/// Cap on the prior variance `τ²ℓ²` of a standardized coefficient. Larger
/// values make `I + X V Xᵀ` numerically singular without changing the fit.
const PRIOR_VARIANCE_CEIL: f64 = 1e8;
/// Proposal standard deviation of the random walk on `log(1/τ²)`.
const XI_STEP: f64 = 1.2;

/// `τ²ℓ_k²` per coefficient, in units of σ².
fn prior_variances(xi: f64, gamma: &[f64]) -> Vec<f64> {
    gamma
        .iter()
        .map(|g| (1.0 / (xi * g)).clamp(SCALE_FLOOR, PRIOR_VARIANCE_CEIL))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorseshoeConfig {
    pub burn_in: usize,
    pub samples: usize,
    /// Required; there is no entropy-seeded default.
    pub seed: Option<u64>,
    /// Credible-interval level used for selection.
    pub credibility: f64,
}

impl Default for HorseshoeConfig {
    fn default() -> Self {
        Self {
            burn_in: 2000,
            samples: 5000,
            seed: None,
            credibility: 0.90,
        }
    }
}

impl HorseshoeConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<u64> {
        if self.burn_in == 0 || self.samples == 0 {
            return Err(Error::InvalidArgument(
                "horseshoe burn-in and samples must be positive".into(),
            ));
        }
        if !(self.credibility > 0.5 && self.credibility < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "credibility must lie in (0.5, 1), got {}",
                self.credibility
            )));
        }
        self.seed
            .ok_or_else(|| Error::InvalidArgument("horseshoe requires an explicit seed".into()))
    }
}

/// Posterior summaries on the original θ scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub theta_mean: Vec<f64>,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub sigma2_mean: f64,
    pub tau_trace: Vec<f64>,
    pub sigma2_trace: Vec<f64>,
    /// Posterior means of the local scales ℓ_k (standardized scale).
    pub lambda_means: Vec<f64>,
    pub tau_ess: f64,
    pub credibility: f64,
}

#[derive(Debug, Clone)]
pub struct HorseshoeFit {
    pub fit: FitResult,
    pub posterior: PosteriorSummary,
}

fn sd(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Runs one chain and summarizes it. The posterior mean is the dense point
/// estimate; a coordinate is selected when its equal-tailed credible interval
/// excludes zero.
pub fn fit_horseshoe(sample: &RegressionSample, config: &HorseshoeConfig) -> Result<HorseshoeFit> {
    let seed = config.validate()?;
    let (t, k_all) = (sample.n_obs(), sample.n_predictors());
    if t < 10 {
        return Err(Error::Insufficient(format!("horseshoe needs T >= 10, got {t}")));
    }
    let y = &sample.centered_benchmark;
    let s_y = sd(y.iter().copied());
    if !(s_y > 0.0) {
        return Err(Error::Singular("horseshoe: benchmark return has zero variance".into()));
    }
    // Design is -ṙ_c under the regression sign convention.
    let scales: Vec<f64> = (0..k_all)
        .map(|k| sd(sample.centered_predictors.column(k).iter().copied()))
        .collect();
    let active: Vec<usize> = (0..k_all).filter(|&k| scales[k] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Singular("horseshoe: every predictor return is constant".into()));
    }
    let k = active.len();
    let mut x = sample.centered_predictors.select_columns(&active);
    for (mut col, &j) in x.column_iter_mut().zip(&active) {
        col *= -1.0 / scales[j];
    }
    let yt = y / s_y;
    let model = sampler::CollapsedModel::new(&x, &yt, k <= t);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta: DVector<f64>;
    let mut gamma = vec![1.0; k]; // 1 / ℓ²
    let mut xi: f64 = 1.0; // 1 / τ²
    let mut sigma2: f64;
    let mut accepted = 0usize;

    let total = config.burn_in + config.samples;
    let s = config.samples;
    let mut draws = vec![0f32; k * s];
    let mut sum_theta = vec![0.0; k];
    let mut sum_lambda = vec![0.0; k];
    let mut tau_trace = Vec::with_capacity(s);
    let mut sigma2_trace = Vec::with_capacity(s);

    for it in 0..total {
        // ξ | γ, y with β and σ² integrated out: random walk on log ξ under
        // the half-Cauchy prior on τ, p(log ξ) ∝ ξ^{1/2} / (1 + ξ).
        let log_target = |xi: f64, c: &sampler::Collapsed| model.log_marginal(c) + 0.5 * xi.ln() - xi.ln_1p();
        let mut current = model.at(&prior_variances(xi, &gamma))?;
        let proposal = (xi.ln() + XI_STEP * rng.sample::<f64, _>(StandardNormal)).exp();
        if (SCALE_FLOOR..=SCALE_CEIL).contains(&proposal) {
            // A proposal whose factorization fails is rejected.
            if let Ok(c) = model.at(&prior_variances(proposal, &gamma)) {
                let log_ratio = log_target(proposal, &c) - log_target(xi, &current);
                if rng.random::<f64>().ln() < log_ratio {
                    xi = proposal;
                    current = c;
                    accepted += 1;
                }
            }
        }

        // σ² | ξ, γ, y and β | σ², ξ, γ, y, sharing the factorization.
        sigma2 = sampler::inverse_gamma(t as f64 / 2.0, current.quad / 2.0, &mut rng);
        let v = prior_variances(xi, &gamma);
        beta = model.draw_beta(&current, &v, sigma2, &mut rng)?;

        for (g, b) in gamma.iter_mut().zip(beta.iter()) {
            let mu = b * b * xi / (2.0 * sigma2);
            *g = sampler::slice_local(*g, mu, &mut rng).clamp(SCALE_FLOOR, SCALE_CEIL);
        }

        if !(sigma2.is_finite() && sigma2 > 0.0 && xi.is_finite() && beta.iter().all(|b| b.is_finite())) {
            return Err(Error::NonFinite(format!(
                "horseshoe chain broke at iteration {it}: tau = {}, sigma2 = {sigma2}, max |beta| = {}",
                xi.powf(-0.5),
                beta.amax()
            )));
        }

        if it >= config.burn_in {
            let d = it - config.burn_in;
            for (i, &j) in active.iter().enumerate() {
                let th = beta[i] * s_y / scales[j];
                sum_theta[i] += th;
                draws[i * s + d] = th as f32;
                sum_lambda[i] += gamma[i].powf(-0.5);
            }
            tau_trace.push(xi.powf(-0.5));
            sigma2_trace.push(sigma2 * s_y * s_y);
        }
    }

    let lo_p = (1.0 - config.credibility) / 2.0;
    let hi_p = 1.0 - lo_p;
    let bounds: Vec<(f64, f64)> = crate::par::map_range(k, |i| {
        let mut col: Vec<f64> = draws[i * s..(i + 1) * s].iter().map(|v| f64::from(*v)).collect();
        col.sort_by(f64::total_cmp);
        (
            crate::linalg::quantile_linear(&col, lo_p),
            crate::linalg::quantile_linear(&col, hi_p),
        )
    });

    let mut theta_mean = vec![0.0; k_all];
    let mut theta_lower = vec![0.0; k_all];
    let mut theta_upper = vec![0.0; k_all];
    let mut lambda_means = vec![0.0; k_all];
    let mut selected = vec![false; k_all];
    for (i, &j) in active.iter().enumerate() {
        theta_mean[j] = sum_theta[i] / s as f64;
        theta_lower[j] = bounds[i].0;
        theta_upper[j] = bounds[i].1;
        lambda_means[j] = sum_lambda[i] / s as f64;
        selected[j] = bounds[i].0 > 0.0 || bounds[i].1 < 0.0;
    }
    let tau_ess = effective_sample_size(&tau_trace);
    debug!(
        "horseshoe: {} of {k_all} selected, ESS(tau) = {tau_ess:.1}, tau acceptance {:.2}",
        selected.iter().filter(|s| **s).count(),
        accepted as f64 / total as f64
    );

    let obj = sample.objective(&theta_mean);
    let mut coef = CoefficientVector::from_values(theta_mean.clone(), "horseshoe")
        .with_hyper("credibility", config.credibility)
        .with_hyper("seed", seed as f64);
    coef.selected = selected;
    coef.window_end = Some(sample.window_end());
    let sigma2_mean = sigma2_trace.iter().sum::<f64>() / s as f64;
    Ok(HorseshoeFit {
        fit: FitResult {
            theta: coef,
            objective_trace: vec![obj],
            converged: true,
            sweeps: total,
        },
        posterior: PosteriorSummary {
            theta_mean,
            theta_lower,
            theta_upper,
            sigma2_mean,
            tau_trace,
            sigma2_trace,
            lambda_means,
            tau_ess,
            credibility: config.credibility,
        },
    })
}

/// Convenience wrapper writing the scale traces of `fit` to `path`.
pub fn dump_trace(fit: &HorseshoeFit, path: &Path) -> Result<()> {
    write_trace(
        path,
        &[
            ("tau", &fit.posterior.tau_trace),
            ("sigma2", &fit.posterior.sigma2_trace),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn planted(t: usize, k: usize, seed: u64) -> (RegressionSample, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rc = DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut truth = vec![0.0; k];
        truth[0] = 1.0;
        if k > 3 {
            truth[3] = -0.8;
        }
        let rb: Vec<f64> = (0..t)
            .map(|i| {
                let signal: f64 = (0..k).map(|j| -truth[j] * rc[(i, j)]).sum();
                signal + 0.2 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        (RegressionSample::new((0..t as u32).collect(), rb, rc).unwrap(), truth)
    }

    #[test]
    fn seed_is_required() {
        let (s, _) = planted(30, 5, 1);
        let err = fit_horseshoe(&s, &HorseshoeConfig::default()).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn recovers_planted_signals_and_is_reproducible() {
        let (s, truth) = planted(60, 20, 2);
        let cfg = HorseshoeConfig {
            burn_in: 500,
            samples: 1500,
            ..HorseshoeConfig::with_seed(9)
        };
        let a = fit_horseshoe(&s, &cfg).unwrap();
        let b = fit_horseshoe(&s, &cfg).unwrap();
        assert_eq!(a.posterior, b.posterior);
        assert!(a.fit.theta.selected[0] && a.fit.theta.selected[3]);
        assert!((a.posterior.theta_mean[0] - truth[0]).abs() < 0.1);
        for j in 0..20 {
            assert!(a.posterior.theta_lower[j] <= a.posterior.theta_upper[j]);
        }
    }

    #[test]
    fn wide_design_runs() {
        let (s, _) = planted(20, 60, 3);
        let cfg = HorseshoeConfig {
            burn_in: 200,
            samples: 400,
            ..HorseshoeConfig::with_seed(1)
        };
        let f = fit_horseshoe(&s, &cfg).unwrap();
        assert!(f.posterior.tau_trace.iter().all(|t| *t > 0.0));
        assert_eq!(f.fit.theta.len(), 60);
    }

    /// One predictor: the posterior of `log τ` by quadrature over
    /// `(log ξ, log γ)` with `|M| = 1 + v‖x‖²` and
    /// `yᵀM⁻¹y = yᵀy - v(xᵀy)² / (1 + v‖x‖²)`.
    #[test]
    fn global_scale_matches_quadrature() {
        let (s, _) = planted(12, 1, 4);
        let cfg = HorseshoeConfig {
            burn_in: 2000,
            samples: 60_000,
            ..HorseshoeConfig::with_seed(3)
        };
        let f = fit_horseshoe(&s, &cfg).unwrap();
        let n = f.posterior.tau_trace.len() as f64;
        let logs: Vec<f64> = f.posterior.tau_trace.iter().map(|t| t.ln()).collect();
        let mc = logs.iter().sum::<f64>() / n;
        let sd_mc = (logs.iter().map(|l| (l - mc).powi(2)).sum::<f64>() / n).sqrt();
        let se = sd_mc / effective_sample_size(&logs).sqrt();

        let y = &s.centered_benchmark;
        let xc: Vec<f64> = s.centered_predictors.column(0).iter().copied().collect();
        let (sy, sx) = (sd(y.iter().copied()), sd(xc.iter().copied()));
        let yy = y.iter().map(|v| v * v).sum::<f64>() / (sy * sy);
        let xy = -y.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>() / (sy * sx);
        let xx = xc.iter().map(|v| v * v).sum::<f64>() / (sx * sx);
        let t = y.len() as f64;
        let log_prior = |u: f64| 0.5 * u - u.exp().ln_1p();
        let (mut z, mut m1) = (0.0, 0.0);
        let grid = |i: usize| -30.0 + 60.0 * i as f64 / 1200.0;
        for i in 0..=1200 {
            let lx = grid(i);
            let mut inner = 0.0;
            for j in 0..=1200 {
                let lg = grid(j);
                let v = (-lx - lg).exp().clamp(SCALE_FLOOR, PRIOR_VARIANCE_CEIL);
                let det = 1.0 + v * xx;
                let q = yy - v * xy * xy / det;
                inner += (-0.5 * det.ln() - 0.5 * t * q.ln() + log_prior(lg)).exp();
            }
            let w = inner * log_prior(lx).exp();
            z += w;
            m1 += w * (-0.5 * lx);
        }
        let exact = m1 / z;
        assert!(
            (mc - exact).abs() < 4.0 * se,
            "E[log tau]: chain {mc} vs quadrature {exact} (se {se})"
        );
    }
}
