use std::sync::Arc;

use log::info;

use super::features::standardize_month;
use super::{
    expand_predictors, winsorize_with_rule, CharacteristicsPanel, MonthId, PredictorMatrix, PredictorSpec, QuantileRule,
};
use crate::{Error, Result};

/// One month of standardized predictors with the data the portfolio layer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedMonth {
    pub matrix: PredictorMatrix,
    pub ret_fwd: Vec<f64>,
    /// Raw (unwinsorized) size measure for value weighting, when configured.
    pub size: Option<Vec<f64>>,
}

impl PreparedMonth {
    pub fn month(&self) -> MonthId {
        self.matrix.month
    }

    pub fn n_firms(&self) -> usize {
        self.matrix.n_firms()
    }
}

/// Every month of a panel, cleaned and expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPanel {
    pub names: Arc<Vec<String>>,
    pub months: Vec<PreparedMonth>,
}

impl PreparedPanel {
    pub fn n_predictors(&self) -> usize {
        self.names.len()
    }

    pub fn month_ids(&self) -> Vec<MonthId> {
        self.months.iter().map(PreparedMonth::month).collect()
    }

    pub fn position(&self, month: MonthId) -> Result<usize> {
        self.months
            .binary_search_by_key(&month, PreparedMonth::month)
            .map_err(|_| Error::UnknownMonth(month))
    }

    /// Number of (month, column) pairs flagged degenerate.
    pub fn degenerate_count(&self) -> usize {
        self.months
            .iter()
            .map(|m| m.matrix.degenerate.iter().filter(|d| **d).count())
            .sum()
    }

    pub fn predictor_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownPredictor(name.to_string()))
    }
}

/// Winsorizes `panel` at `(lower, upper)` and standardizes every month.
pub fn prepare_panel(
    panel: &CharacteristicsPanel,
    spec: &PredictorSpec,
    limits: (f64, f64),
    size_column: Option<&str>,
) -> Result<PreparedPanel> {
    let size_idx = size_column
        .map(|s| {
            panel
                .char_index(s)
                .ok_or_else(|| Error::UnknownPredictor(s.to_string()))
        })
        .transpose()?;
    let clean = winsorize_with_rule(panel, limits.0, limits.1, QuantileRule::Linear)?;
    let names = Arc::new(expand_predictors(spec));
    let terms = spec.terms();
    let months = crate::par::map(panel.months(), |raw| -> Result<PreparedMonth> {
        let matrix = standardize_month(&clean, raw.month, spec, &terms, names.clone())?;
        Ok(PreparedMonth {
            matrix,
            ret_fwd: raw.ret_fwd.clone(),
            size: size_idx.map(|c| raw.values[c].clone()),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let prepared = PreparedPanel { names, months };
    info!(
        "prepared {} months x {} predictors ({} degenerate month-columns)",
        prepared.months.len(),
        prepared.n_predictors(),
        prepared.degenerate_count()
    );
    Ok(prepared)
}
