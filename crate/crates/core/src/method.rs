//! Named estimation methods and their dispatch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_boosting, BoostingConfig};
use crate::horseshoe::{fit_horseshoe, HorseshoeConfig, PosteriorSummary};
use crate::screening::marginal_screen;
use crate::solvers::{
    adaptive_weights, cross_validate, fit_coordinate_descent, fit_ols, fit_ridge, FitResult, Penalty, PenaltyKind,
    SolverConfig,
};
use crate::{Error, RegressionSample, Result};

/// An estimation method. Penalized methods without a fixed value choose
/// their penalty by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// θ = 0: the benchmark itself.
    None,
    Ols,
    Ridge,
    RidgeFixed(f64),
    Lasso,
    LassoFixed(f64),
    AdaLasso,
    ElasticNet,
    Scad,
    Boosting,
    Horseshoe,
    Screening(usize),
}

impl Method {
    /// Short label used in file names and reports.
    pub fn label(&self) -> String {
        self.to_string().replace(':', "-")
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::Horseshoe)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::None => write!(f, "none"),
            Method::Ols => write!(f, "ols"),
            Method::Ridge => write!(f, "ridge"),
            Method::RidgeFixed(l) => write!(f, "ridge:{l:e}"),
            Method::Lasso => write!(f, "lasso"),
            Method::LassoFixed(r) => write!(f, "lasso:{r:e}"),
            Method::AdaLasso => write!(f, "adalasso"),
            Method::ElasticNet => write!(f, "enet"),
            Method::Scad => write!(f, "scad"),
            Method::Boosting => write!(f, "boosting"),
            Method::Horseshoe => write!(f, "horseshoe"),
            Method::Screening(k) => write!(f, "screening:{k}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `none`, `ols`, `ridge[:λ]`, `lasso[:ρ]`, `adalasso`, `enet`,
    /// `scad`, `boosting`, `horseshoe` and `screening:k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let unknown = || Error::InvalidArgument(format!("unknown method `{s}`"));
        let real = |a: &str| {
            a.parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0 && v.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("bad penalty value in `{s}`")))
        };
        Ok(match (name, arg) {
            ("none" | "benchmark", None) => Method::None,
            ("ols", None) => Method::Ols,
            ("ridge", None) => Method::Ridge,
            ("ridge", Some(a)) => Method::RidgeFixed(real(a)?),
            ("lasso", None) => Method::Lasso,
            ("lasso", Some(a)) => Method::LassoFixed(real(a)?),
            ("adalasso", None) => Method::AdaLasso,
            ("enet" | "elastic-net" | "elasticnet", None) => Method::ElasticNet,
            ("scad", None) => Method::Scad,
            ("boosting" | "l2boost", None) => Method::Boosting,
            ("horseshoe", None) => Method::Horseshoe,
            ("screening" | "ms", Some(a)) => Method::Screening(
                a.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad screening size in `{s}`")))?,
            ),
            _ => return Err(unknown()),
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-family settings shared by every method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    pub solver: SolverConfig,
    pub boosting: BoostingConfig,
    pub horseshoe: HorseshoeConfig,
}

/// Output of [`fit_method`].
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub fit: FitResult,
    /// Chosen penalty for penalized methods.
    pub penalty: Option<Penalty>,
    pub posterior: Option<PosteriorSummary>,
}

impl MethodFit {
    fn plain(fit: FitResult) -> Self {
        Self {
            fit,
            penalty: None,
            posterior: None,
        }
    }
}

/// Seed of the chain for the window ending at `window_end`.
pub fn window_seed(base: u64, window_end: u32) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = base ^ (u64::from(window_end)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits `method` on `sample`. Stochastic methods draw their seed from
/// `settings` combined with the window end, so window fits are independent
/// of execution order.
pub fn fit_method(method: Method, sample: &RegressionSample, settings: &MethodSettings) -> Result<MethodFit> {
    let cfg = &settings.solver;
    let k = sample.n_predictors();
    let cv = |kind: PenaltyKind| -> Result<MethodFit> {
        let out = cross_validate(sample, &kind, cfg)?;
        let mut fit = out.fit;
        fit.theta.hyperparameters = out.penalty.hyperparameters();
        fit.theta.solver = kind.name().into();
        Ok(MethodFit {
            fit,
            penalty: Some(out.penalty),
            posterior: None,
        })
    };
    let mut out = match method {
        Method::None => {
            let mut coef = crate::CoefficientVector::zeros(k, "none");
            coef.window_end = Some(sample.window_end());
            MethodFit::plain(FitResult::closed_form(coef, sample.objective(&vec![0.0; k])))
        }
        Method::Ols => MethodFit::plain(fit_ols(sample)?),
        Method::Ridge => cv(PenaltyKind::Ridge)?,
        Method::RidgeFixed(lambda) => MethodFit {
            fit: fit_ridge(sample, lambda)?,
            penalty: Some(Penalty::Ridge { lambda }),
            posterior: None,
        },
        Method::Lasso => cv(PenaltyKind::Lasso)?,
        Method::LassoFixed(rho) => {
            let p = Penalty::Lasso { rho };
            MethodFit {
                fit: fit_coordinate_descent(sample, &p, cfg)?,
                penalty: Some(p),
                posterior: None,
            }
        }
        Method::AdaLasso => {
            let ridge = cross_validate(sample, &PenaltyKind::Ridge, cfg)?;
            let lambda = match ridge.penalty {
                Penalty::Ridge { lambda } => lambda,
                _ => unreachable!("ridge grid holds ridge penalties"),
            };
            let weights = adaptive_weights(sample, lambda)?;
            let mut fit = cv(PenaltyKind::AdaptiveLasso { weights })?;
            fit.fit.theta.hyperparameters.insert("ridge_lambda".into(), lambda);
            fit
        }
        Method::ElasticNet => cv(PenaltyKind::ElasticNet)?,
        Method::Scad => cv(PenaltyKind::Scad { a: cfg.scad_a })?,
        Method::Boosting => MethodFit::plain(fit_boosting(sample, &settings.boosting)?.fit),
        Method::Horseshoe => {
            let base = settings.horseshoe.validate()?;
            let hs = HorseshoeConfig {
                seed: Some(window_seed(base, sample.window_end())),
                ..settings.horseshoe.clone()
            };
            let f = fit_horseshoe(sample, &hs)?;
            MethodFit {
                fit: f.fit,
                penalty: None,
                posterior: Some(f.posterior),
            }
        }
        Method::Screening(keep) => MethodFit::plain(marginal_screen(sample, keep)?),
    };
    out.fit.theta.window_end = Some(sample.window_end());
    Ok(out)
}
