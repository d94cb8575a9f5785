use serde::{Deserialize, Serialize};

use super::BacktestLedger;
use crate::{Error, Result};

/// Summary of one monthly return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMetrics {
    pub months: usize,
    pub mean_monthly: f64,
    /// `12 × mean`.
    pub annual_mean: f64,
    /// `sqrt((12/M) Σ (r - r̄)²)`.
    pub sigma: f64,
    /// `(annual_mean - 12 × mean(rf)) / sigma`.
    pub sharpe: f64,
    /// Largest peak-to-trough loss of compounded wealth starting at 1.
    pub max_drawdown: f64,
    /// Loss at the nearest-rank 1st percentile, as a positive number.
    pub var99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub cost: f64,
    pub metrics: ReturnMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub method: String,
    pub window: usize,
    pub months: usize,
    pub mean_turnover: f64,
    /// False when no risk-free series was supplied and the Sharpe ratio uses
    /// raw returns.
    pub risk_free_adjusted: bool,
    pub fallback_months: usize,
    pub gross: ReturnMetrics,
    pub levels: Vec<CostReport>,
}

pub fn return_metrics(r: &[f64], rf: Option<&[f64]>) -> Result<ReturnMetrics> {
    let n = r.len();
    if n == 0 {
        return Err(Error::Insufficient("no out-of-sample returns".into()));
    }
    if let Some(rf) = rf {
        if rf.len() != n {
            return Err(Error::dim("risk-free series", n, rf.len()));
        }
    }
    let mean = crate::linalg::mean(r);
    // Deviations from the first value keep constant series at exactly zero.
    let shift = r[0];
    let dm = r.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let ss: f64 = r.iter().map(|x| (x - shift - dm) * (x - shift - dm)).sum();
    let sigma = (12.0 / n as f64 * ss).sqrt();
    let annual_mean = 12.0 * mean;
    let rf_annual = rf.map_or(0.0, |v| 12.0 * crate::linalg::mean(v));
    let sharpe = if sigma > 0.0 {
        (annual_mean - rf_annual) / sigma
    } else {
        f64::NAN
    };

    let (mut wealth, mut peak, mut mdd) = (1.0_f64, 1.0_f64, 0.0_f64);
    for x in r {
        wealth *= 1.0 + x;
        peak = peak.max(wealth);
        mdd = mdd.max((peak - wealth) / peak);
    }
    let sorted = crate::linalg::sorted_copy(r);
    let var99 = -crate::linalg::quantile_nearest_rank(&sorted, 0.01);
    Ok(ReturnMetrics {
        months: n,
        mean_monthly: mean,
        annual_mean,
        sigma,
        sharpe,
        max_drawdown: mdd,
        var99,
    })
}

/// Metrics of the gross series and of each net-of-cost series.
pub fn performance_metrics(ledger: &BacktestLedger, rf: Option<&[f64]>) -> Result<PerformanceReport> {
    if ledger.rows.is_empty() {
        return Err(Error::Insufficient("empty ledger".into()));
    }
    let levels = ledger
        .costs
        .iter()
        .enumerate()
        .map(|(i, &cost)| {
            Ok(CostReport {
                cost,
                metrics: return_metrics(&ledger.net_returns(i), rf)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerformanceReport {
        method: ledger.method.to_string(),
        window: ledger.window,
        months: ledger.rows.len(),
        mean_turnover: ledger.rows.iter().map(|r| r.turnover).sum::<f64>() / ledger.rows.len() as f64,
        risk_free_adjusted: rf.is_some(),
        fallback_months: ledger.fallback_count(),
        gross: return_metrics(&ledger.gross_returns(), rf)?,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_returns() {
        let m = return_metrics(&[0.01; 24], None).unwrap();
        assert_eq!(m.sigma, 0.0);
        assert_eq!(m.max_drawdown, 0.0);
        assert!((m.annual_mean - 0.12).abs() < 1e-15);
    }

    #[test]
    fn drawdown_up_then_down() {
        let m = return_metrics(&[0.1, -0.1], None).unwrap();
        // Path 1 -> 1.1 -> 0.99: drawdown (1.1 - 0.99)/1.1 = 0.1.
        assert!((m.max_drawdown - 0.1).abs() < 1e-15);
    }

    #[test]
    fn var_single_crash() {
        let mut r = vec![0.01; 100];
        r[37] = -0.2;
        assert!((return_metrics(&r, None).unwrap().var99 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sigma_formula_and_sharpe() {
        let r = [0.02, -0.01, 0.03, 0.0];
        let m = return_metrics(&r, Some(&[0.001; 4])).unwrap();
        let mean = 0.01;
        let ss: f64 = r.iter().map(|x| (x - mean) * (x - mean)).sum();
        assert!((m.sigma - (3.0 * ss).sqrt()).abs() < 1e-15);
        assert!((m.sharpe - (0.12 - 0.012) / m.sigma).abs() < 1e-12);
    }

    #[test]
    fn permutation_properties() {
        let r = vec![0.05, -0.1, 0.02, 0.07, -0.03, 0.01];
        let p = vec![-0.1, -0.03, 0.05, 0.02, 0.07, 0.01];
        let a = return_metrics(&r, None).unwrap();
        let b = return_metrics(&p, None).unwrap();
        assert!((a.sigma - b.sigma).abs() < 1e-15 && a.var99 == b.var99);
        assert!((a.max_drawdown - b.max_drawdown).abs() > 1e-6);
    }
}
