//! Minimum-variance parametric portfolios over a high-dimensional predictor space.
//!
//! Portfolio weights are written as a benchmark allocation plus a linear tilt on
//! cross-sectionally standardized firm characteristics, `w_t = w_b + X_t θ / N_t`.
//! Minimizing the variance of the resulting portfolio return is a no-intercept
//! time-series regression of the centered benchmark return on the centered
//! predictor returns, which lets standard variable-selection machinery choose θ:
//!
//! * [`solvers`]: OLS, ridge, and coordinate-descent lasso / adaptive lasso /
//!   elastic net / SCAD with warm-started paths and blocked cross-validation.
//! * [`boosting`]: componentwise L2-boosting with corrected-AIC early stopping.
//! * [`horseshoe`]: Gibbs sampling under the horseshoe prior.
//! * [`screening`]: marginal screening followed by OLS on the retained set.
//!
//! [`panel`] handles ingestion and feature engineering, [`portfolio`] the policy
//! algebra, [`backtest`] the rolling out-of-sample evaluation, and [`analytics`]
//! the importance / selection / weight summaries. [`pipeline`] ties them into the
//! file-producing runs used by the command line front-end.
//!
//! Data-parallel loops (months, folds, windows, candidate scans) go through
//! [`par`], which uses rayon when the `parallel` feature is enabled (default) and
//! plain iterators otherwise. Results are identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytics;
pub mod backtest;
pub mod boosting;
pub mod error;
mod fsio;
pub mod horseshoe;
pub mod linalg;
pub mod method;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod portfolio;
pub mod screening;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
pub use method::{Method, MethodSettings};
pub use panel::{CharacteristicsPanel, MonthId, PredictorMatrix, PredictorSpec};
pub use portfolio::{BenchmarkKind, CoefficientVector, PolicyWeights, RegressionSample};
pub use solvers::{FitResult, Penalty, SolverConfig};
