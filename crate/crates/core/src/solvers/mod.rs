//! Penalized estimation of the minimum-variance regression.
//!
//! Every solver minimizes
//!
//! ```text
//! (1 / (2 (T - 1))) Σ_t (ṙ_b,t + θᵀ ṙ_c,t)² + Ω(θ)
//! ```
//!
//! with the penalty added unscaled. Under this scaling ridge has the closed
//! form `θ̂ = -(Σ̂_c + 2λI)⁻¹ σ̂_bc`. The elastic net uses
//! `Ω = λρ‖θ‖₁ + λ(1-ρ)‖θ‖²`, so `ρ = 1` is the lasso with penalty `λ` and
//! `ρ = 0` is ridge with the same `λ`.

mod cd;
mod cv;
mod ols;
mod path;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::portfolio::CoefficientVector;
use crate::{Error, Result};

pub use cd::fit_coordinate_descent;
pub use cv::{cross_validate, fold_ranges, CvOutcome};
pub use ols::{adaptive_weights, fit_ols, fit_ridge, RidgeSolver, ADAPTIVE_EPSILON};
pub use path::{lambda_grid, penalty_grid, regularization_path, PathPoint, PenaltyKind};

/// Default SCAD concavity parameter.
pub const SCAD_A: f64 = 3.7;

/// A penalty with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    /// Unpenalized least squares.
    None,
    Ridge {
        lambda: f64,
    },
    Lasso {
        rho: f64,
    },
    AdaptiveLasso {
        rho: f64,
        weights: Vec<f64>,
    },
    ElasticNet {
        lambda: f64,
        mix: f64,
    },
    Scad {
        lambda: f64,
        a: f64,
    },
}

impl Penalty {
    pub fn name(&self) -> &'static str {
        match self {
            Penalty::None => "ols",
            Penalty::Ridge { .. } => "ridge",
            Penalty::Lasso { .. } => "lasso",
            Penalty::AdaptiveLasso { .. } => "adalasso",
            Penalty::ElasticNet { .. } => "enet",
            Penalty::Scad { .. } => "scad",
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Penalty::Scad { .. })
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            Penalty::None => Ok(()),
            Penalty::Ridge { lambda } | Penalty::Lasso { rho: lambda } if !(*lambda >= 0.0) => {
                bad(format!("penalty must be nonnegative, got {lambda}"))
            }
            Penalty::AdaptiveLasso { rho, weights } => {
                if !(*rho >= 0.0) {
                    bad(format!("penalty must be nonnegative, got {rho}"))
                } else if weights.len() != k {
                    Err(Error::dim("adaptive weights", k, weights.len()))
                } else if weights.iter().any(|w| !(*w >= 0.0)) {
                    bad("adaptive weights must be nonnegative".into())
                } else {
                    Ok(())
                }
            }
            Penalty::ElasticNet { lambda, mix } => {
                if !(*lambda >= 0.0) {
                    bad(format!("penalty must be nonnegative, got {lambda}"))
                } else if !(0.0..=1.0).contains(mix) {
                    bad(format!("elastic-net mix must lie in [0, 1], got {mix}"))
                } else {
                    Ok(())
                }
            }
            Penalty::Scad { lambda, a } => {
                if !(*lambda >= 0.0) {
                    bad(format!("penalty must be nonnegative, got {lambda}"))
                } else if !(*a > 2.0) {
                    bad(format!("SCAD parameter a must exceed 2, got {a}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// `Ω(θ)`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::Ridge { lambda } => lambda * theta.iter().map(|t| t * t).sum::<f64>(),
            Penalty::Lasso { rho } => rho * theta.iter().map(|t| t.abs()).sum::<f64>(),
            Penalty::AdaptiveLasso { rho, weights } => {
                rho * theta.iter().zip(weights).map(|(t, w)| w * t.abs()).sum::<f64>()
            }
            Penalty::ElasticNet { lambda, mix } => theta
                .iter()
                .map(|t| lambda * mix * t.abs() + lambda * (1.0 - mix) * t * t)
                .sum(),
            Penalty::Scad { lambda, a } => theta.iter().map(|t| scad_penalty(*t, *lambda, *a)).sum(),
        }
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, f64> {
        let mut h = BTreeMap::new();
        match self {
            Penalty::None => {}
            Penalty::Ridge { lambda } => {
                h.insert("lambda".into(), *lambda);
            }
            Penalty::Lasso { rho } | Penalty::AdaptiveLasso { rho, .. } => {
                h.insert("rho".into(), *rho);
            }
            Penalty::ElasticNet { lambda, mix } => {
                h.insert("lambda".into(), *lambda);
                h.insert("mix".into(), *mix);
            }
            Penalty::Scad { lambda, a } => {
                h.insert("lambda".into(), *lambda);
                h.insert("a".into(), *a);
            }
        }
        h
    }
}

/// Penalized objective of `theta` on `sample`.
pub fn penalized_objective(sample: &crate::RegressionSample, penalty: &Penalty, theta: &[f64]) -> f64 {
    sample.objective(theta) + penalty.value(theta)
}

/// Iteration and grid settings shared by the penalized solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop when the largest coefficient change relative to the largest
    /// coefficient falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub lambda_count: usize,
    /// Smallest grid value as a fraction of the largest.
    pub lambda_ratio: f64,
    /// Ridge has no finite "all-zero" penalty; its grid spans
    /// `[ridge_lambda_ratio, 1] * 500 max_k var(r_c,k)`.
    pub ridge_lambda_ratio: f64,
    pub cv_folds: usize,
    pub enet_mixes: Vec<f64>,
    pub scad_a: f64,
    /// A descending path segment stops once the unpenalized fit explains this
    /// fraction of the benchmark variance (1 disables).
    pub path_max_explained: f64,
    /// ... or once the explained fraction grows by less than this relative
    /// amount between consecutive grid points (0 disables).
    pub path_min_gain: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_sweeps: 10_000,
            lambda_count: 100,
            lambda_ratio: 1e-4,
            ridge_lambda_ratio: 1e-6,
            cv_folds: 5,
            enet_mixes: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            scad_a: SCAD_A,
            path_max_explained: 0.999,
            path_min_gain: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        if self.lambda_count < 2 {
            return Err(Error::InvalidArgument("lambda grid needs at least 2 points".into()));
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0)
            || !(self.ridge_lambda_ratio > 0.0 && self.ridge_lambda_ratio < 1.0)
        {
            return Err(Error::InvalidArgument("lambda ratios must lie in (0, 1)".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
        }
        if self.enet_mixes.is_empty() || self.enet_mixes.iter().any(|m| !(*m > 0.0 && *m <= 1.0)) {
            return Err(Error::InvalidArgument("elastic-net mixes must lie in (0, 1]".into()));
        }
        if !(self.path_max_explained > 0.0 && self.path_max_explained <= 1.0) || !(self.path_min_gain >= 0.0) {
            return Err(Error::InvalidArgument(
                "path_max_explained must lie in (0, 1] and path_min_gain be non-negative".into(),
            ));
        }
        if !(self.scad_a > 2.0) {
            return Err(Error::InvalidArgument("SCAD parameter a must exceed 2".into()));
        }
        Ok(())
    }
}

/// Outcome of a single fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: CoefficientVector,
    /// Penalized objective after each sweep (first entry: the starting point).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl FitResult {
    pub fn closed_form(theta: CoefficientVector, objective: f64) -> Self {
        Self {
            theta,
            objective_trace: vec![objective],
            converged: true,
            sweeps: 0,
        }
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// `sign(z) max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// SCAD penalty `p_λ(θ)`: linear up to λ, quadratic up to aλ, constant beyond.
pub fn scad_penalty(theta: f64, lambda: f64, a: f64) -> f64 {
    let t = theta.abs();
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        -(t * t - 2.0 * a * lambda * t + lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

/// Minimizer of `(v/2) θ² - z θ + p_λ(θ)`.
///
/// When `v > 1/(a-1)` the problem is convex and the three-branch firm
/// threshold applies; otherwise the candidate stationary points and region
/// boundaries are compared directly (ties go to the smaller magnitude).
pub fn scad_threshold(z: f64, v: f64, lambda: f64, a: f64) -> f64 {
    if v <= 0.0 || z == 0.0 {
        return 0.0;
    }
    let c = 1.0 / (a - 1.0);
    let az = z.abs();
    if v > c {
        return if az <= lambda * (1.0 + v) {
            soft_threshold(z, lambda) / v
        } else if az <= a * lambda * v {
            soft_threshold(z, a * lambda * c) / (v - c)
        } else {
            z / v
        };
    }
    let g = |t: f64| 0.5 * v * t * t - az * t + scad_penalty(t, lambda, a);
    let mut candidates = vec![
        0.0,
        ((az - lambda) / v).clamp(0.0, lambda),
        lambda,
        a * lambda,
        (az / v).max(a * lambda),
    ];
    if (v - c).abs() > f64::EPSILON {
        candidates.push(((az - a * lambda * c) / (v - c)).clamp(lambda, a * lambda));
    }
    let mut best = (0.0, g(0.0));
    for t in candidates {
        let val = g(t);
        if val < best.1 || (val == best.1 && t < best.0) {
            best = (t, val);
        }
    }
    best.0.copysign(z)
}
