use std::io::Write;
use std::path::Path;

use super::{BacktestLedger, PerformanceReport};
use crate::fsio::atomic_write;
use crate::{Error, Result};

/// Column order of the ledger CSV.
pub const LEDGER_COLUMNS: [&str; 11] = [
    "month",
    "gross",
    "net",
    "turnover",
    "benchmark_return",
    "predictor_return",
    "n_firms",
    "n_selected",
    "weight_sum",
    "window_end",
    "fallback",
];

/// Ledger at cost level `cost_index`, one row per out-of-sample month.
pub fn write_ledger_csv(ledger: &BacktestLedger, cost_index: usize, path: &Path) -> Result<()> {
    if cost_index >= ledger.costs.len() {
        return Err(Error::InvalidArgument(format!("no cost level {cost_index}")));
    }
    atomic_write(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(LEDGER_COLUMNS)?;
        for (i, r) in ledger.rows.iter().enumerate() {
            let theta = ledger.theta(i);
            w.write_record([
                r.month.to_string(),
                format!("{:.17e}", r.gross),
                format!("{:.17e}", r.net[cost_index]),
                format!("{:.17e}", r.turnover),
                format!("{:.17e}", r.benchmark_return),
                format!("{:.17e}", r.gross - r.benchmark_return),
                r.weights.len().to_string(),
                theta.n_selected().to_string(),
                format!("{:.17e}", r.weights.sum()),
                theta.window_end.map_or(String::new(), |m| m.to_string()),
                u8::from(r.fallback).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Long-format weights: `month,id,weight`.
pub fn write_weights_csv(ledger: &BacktestLedger, path: &Path) -> Result<()> {
    atomic_write(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["month", "id", "weight"])?;
        for r in &ledger.rows {
            for (id, x) in r.weights.firm_ids.iter().zip(&r.weights.weights) {
                w.write_record([r.month.to_string(), id.clone(), format!("{x:.17e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

/// Report restricted to cost level `cost_index`, pretty-printed JSON.
pub fn write_report_json(report: &PerformanceReport, cost_index: usize, path: &Path) -> Result<()> {
    let level = report
        .levels
        .get(cost_index)
        .ok_or_else(|| Error::InvalidArgument(format!("no cost level {cost_index}")))?;
    let value = serde_json::json!({
        "method": report.method,
        "window": report.window,
        "months": report.months,
        "cost": level.cost,
        "mean_turnover": report.mean_turnover,
        "risk_free_adjusted": report.risk_free_adjusted,
        "fallback_months": report.fallback_months,
        "gross": report.gross,
        "net": level.metrics,
    });
    atomic_write(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, &value)?;
        buf.write_all(b"\n")?;
        Ok(())
    })
}
