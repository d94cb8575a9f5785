//! Rolling out-of-sample evaluation.
//!
//! Month `j` of a prepared panel supplies characteristics `X_j` and the returns
//! `ret_fwd_j` realized over the following month. At formation month `t` the
//! method is fitted on observations `t-T .. t-1` (all realized by `t`), the
//! policy weights are formed from `X_t`, and the row records the return
//! `ret_fwd_t`. A panel of `M` months therefore yields `M - T` rows.

mod export;
mod metrics;

use std::collections::{BTreeMap, HashMap};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::method::{fit_method, Method, MethodSettings};
use crate::panel::{MonthId, PreparedPanel};
use crate::portfolio::{
    factor_observations, policy_weights, prepared_benchmark, BenchmarkKind, CoefficientVector, PolicyWeights,
};
use crate::{Error, RegressionSample, Result};

pub use export::{write_ledger_csv, write_report_json, write_weights_csv, LEDGER_COLUMNS};
pub use metrics::{performance_metrics, return_metrics, CostReport, PerformanceReport, ReturnMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Estimation window length T in months.
    pub window: usize,
    /// Proportional costs per unit of turnover (0.001 = 10 bp).
    pub costs: Vec<f64>,
    pub benchmark: BenchmarkKind,
    pub method: Method,
    pub settings: MethodSettings,
    /// Refit every this many months; θ is held in between.
    pub refit_every: usize,
    /// Divide drifted weights by the gross portfolio return.
    pub renormalize_drift: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 120,
            costs: vec![0.0, 0.001],
            benchmark: BenchmarkKind::EquallyWeighted,
            method: Method::Lasso,
            settings: MethodSettings::default(),
            refit_every: 1,
            renormalize_drift: false,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidArgument(format!(
                "window must be at least 2, got {}",
                self.window
            )));
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidArgument("refit frequency must be positive".into()));
        }
        if self.costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("transaction costs must be nonnegative".into()));
        }
        self.settings.solver.validate()
    }
}

/// One out-of-sample month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    /// Formation month t.
    pub month: MonthId,
    pub weights: PolicyWeights,
    /// `w_tᵀ ret_fwd_t`.
    pub gross: f64,
    /// Gross return less cost × turnover, per configured cost level.
    pub net: Vec<f64>,
    /// `‖w_t - w_{t-1}⁺‖₁` over the union of firms.
    pub turnover: f64,
    pub benchmark_return: f64,
    /// Realized `r_c` for this month.
    pub predictor_returns: Vec<f64>,
    /// Index into [`BacktestLedger::thetas`].
    pub theta_index: usize,
    /// The window fit failed and the benchmark was held instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestLedger {
    pub method: Method,
    pub window: usize,
    pub costs: Vec<f64>,
    pub predictor_names: Vec<String>,
    pub rows: Vec<LedgerRow>,
    /// One entry per refit, in time order.
    pub thetas: Vec<CoefficientVector>,
}

impl BacktestLedger {
    pub fn theta(&self, row: usize) -> &CoefficientVector {
        &self.thetas[self.rows[row].theta_index]
    }

    pub fn gross_returns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gross).collect()
    }

    pub fn net_returns(&self, cost_index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.net[cost_index]).collect()
    }

    pub fn fallback_count(&self) -> usize {
        self.rows.iter().filter(|r| r.fallback).count()
    }
}

/// Weights after one month of price moves: `w ∘ (1 + r)`, optionally divided
/// by `1 + wᵀr`.
pub fn drift_weights(w: &PolicyWeights, returns: &[f64], renormalize: bool) -> Result<PolicyWeights> {
    if returns.len() != w.len() {
        return Err(Error::dim("drift returns", w.len(), returns.len()));
    }
    let mut weights: Vec<f64> = w.weights.iter().zip(returns).map(|(w, r)| w * (1.0 + r)).collect();
    if renormalize {
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::Singular("drifted portfolio has zero value".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(PolicyWeights {
        month: w.month,
        firm_ids: w.firm_ids.clone(),
        weights,
    })
}

/// `‖new - old‖₁` over the union of firms; firms absent from `new` are sold
/// in full and firms absent from `old` are bought in full.
pub fn turnover(new: &PolicyWeights, old: Option<&PolicyWeights>) -> f64 {
    let Some(old) = old else {
        return new.weights.iter().map(|w| w.abs()).sum();
    };
    let mut prior: HashMap<&str, f64> = old
        .firm_ids
        .iter()
        .map(String::as_str)
        .zip(old.weights.iter().copied())
        .collect();
    let mut total = 0.0;
    for (id, w) in new.firm_ids.iter().zip(&new.weights) {
        total += (w - prior.remove(id.as_str()).unwrap_or(0.0)).abs();
    }
    // Remaining firms left the universe; iterate in a fixed order.
    let mut exits: Vec<(&str, f64)> = prior.into_iter().collect();
    exits.sort_by(|a, b| a.0.cmp(b.0));
    let sold: f64 = exits.iter().map(|(_, w)| w.abs()).sum();
    if !exits.is_empty() {
        log::debug!("month {}: {} firms exit, releasing {sold:.6}", new.month, exits.len());
    }
    total + sold
}

/// Runs the rolling backtest of `config.method` over `panel`.
pub fn run_backtest(panel: &PreparedPanel, config: &BacktestConfig) -> Result<BacktestLedger> {
    config.validate()?;
    let m = panel.months.len();
    let t0 = config.window;
    if m < t0 + 1 {
        return Err(Error::Insufficient(format!(
            "backtest with window {t0} needs at least {} months, panel has {m}",
            t0 + 1
        )));
    }
    let obs = factor_observations(panel, &config.benchmark)?;
    let refits: Vec<usize> = (t0..m).step_by(config.refit_every).collect();
    let k = panel.n_predictors();
    info!(
        "backtest {}: {} windows of {t0} months, {} refits",
        config.method,
        m - t0,
        refits.len()
    );
    let fits = crate::par::map(&refits, |&t| -> Result<(CoefficientVector, bool)> {
        let sample = RegressionSample::from_observations(&obs[t - t0..t])?;
        match fit_method(config.method, &sample, &config.settings) {
            Ok(f) => Ok((f.fit.theta, false)),
            Err(e) if e.is_usage() => Err(e),
            Err(e) => {
                debug!(
                    "{} fit for window ending {} failed ({e}); holding the benchmark",
                    config.method,
                    sample.window_end()
                );
                let mut z = CoefficientVector::zeros(k, config.method.to_string());
                z.window_end = Some(sample.window_end());
                Ok((z, true))
            }
        }
    });
    let mut thetas = Vec::with_capacity(fits.len());
    let mut failed = Vec::with_capacity(fits.len());
    for f in fits {
        let (theta, fb) = f?;
        thetas.push(theta);
        failed.push(fb);
    }
    let n_failed = failed.iter().filter(|f| **f).count();
    if n_failed > 0 {
        warn!(
            "{}: {n_failed} of {} window fits failed and held the benchmark (details at debug level)",
            config.method,
            failed.len()
        );
    }

    let mut rows = Vec::with_capacity(m - t0);
    let mut drifted: Option<PolicyWeights> = None;
    for (t, (pm, ob)) in panel.months.iter().zip(&obs).enumerate().skip(t0) {
        let idx = (t - t0) / config.refit_every;
        let wb = prepared_benchmark(pm, &config.benchmark)?;
        let w = policy_weights(&thetas[idx].values, &pm.matrix, &wb)?;
        let gross = crate::linalg::dot(&w.weights, &pm.ret_fwd);
        let to = turnover(&w, drifted.as_ref());
        let net = config.costs.iter().map(|c| gross - c * to).collect();
        drifted = Some(drift_weights(&w, &pm.ret_fwd, config.renormalize_drift)?);
        rows.push(LedgerRow {
            month: pm.month(),
            weights: w,
            gross,
            net,
            turnover: to,
            benchmark_return: ob.benchmark_return,
            predictor_returns: ob.predictor_returns.clone(),
            theta_index: idx,
            fallback: failed[idx],
        });
    }
    Ok(BacktestLedger {
        method: config.method,
        window: t0,
        costs: config.costs.clone(),
        predictor_names: panel.names.as_ref().clone(),
        rows,
        thetas,
    })
}

/// Risk-free rates keyed by formation month, aligned to the ledger rows.
pub fn align_risk_free(ledger: &BacktestLedger, rates: &BTreeMap<MonthId, f64>) -> Result<Vec<f64>> {
    ledger
        .rows
        .iter()
        .map(|r| {
            rates
                .get(&r.month)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("risk-free series lacks month {}", r.month)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pw(ids: &[&str], w: &[f64]) -> PolicyWeights {
        PolicyWeights {
            month: 1,
            firm_ids: ids.iter().map(|s| s.to_string()).collect(),
            weights: w.to_vec(),
        }
    }

    #[test]
    fn drift_examples() {
        let w = pw(&["a", "b"], &[0.5, 0.5]);
        let d = drift_weights(&w, &[0.1, -0.1], false).unwrap();
        assert!((d.weights[0] - 0.55).abs() < 1e-15 && (d.weights[1] - 0.45).abs() < 1e-15);
        assert_eq!(drift_weights(&w, &[0.0, 0.0], false).unwrap(), w);
        let d = drift_weights(&pw(&["a", "b"], &[0.5, 0.5]), &[0.2, 0.0], true).unwrap();
        assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn turnover_over_union() {
        let old = pw(&["a", "b", "c"], &[0.3, 0.3, 0.4]);
        let new = pw(&["a", "b", "d"], &[0.5, 0.2, 0.3]);
        // |0.2| + |-0.1| + d bought 0.3 + c sold 0.4.
        assert!((turnover(&new, Some(&old)) - 1.0).abs() < 1e-15);
        assert!((turnover(&new, None) - 1.0).abs() < 1e-15);
    }
}
