//! Parametric-policy algebra.
//!
//! With `N_t` firms, standardized predictors `X_t` and benchmark weights `w_b`,
//! the policy holds `w_t = w_b + X_t θ / N_t`. Because every column of `X_t` has
//! zero cross-sectional mean the tilt is self-financing and weights sum to one.
//! Next month the portfolio earns `r_p = r_b + θᵀ r_c` with predictor returns
//! `r_c = X_tᵀ r / N_t`.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::panel::{CharacteristicsPanel, MonthId, PredictorMatrix, PreparedMonth, PreparedPanel};
use crate::{Error, Result};

/// The allocation the policy tilts away from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    #[default]
    EquallyWeighted,
    /// Weights proportional to a nonnegative size characteristic.
    ValueWeighted { size_column: String },
}

/// Portfolio fractions for one month, aligned with the month's firm order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights {
    pub month: MonthId,
    pub firm_ids: Vec<String>,
    pub weights: Vec<f64>,
}

impl PolicyWeights {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Benchmark weights from firm ids and, for value weighting, their sizes.
/// Missing sizes get zero weight.
pub fn benchmark_from_sizes(
    month: MonthId,
    firm_ids: &[String],
    sizes: Option<&[f64]>,
    kind: &BenchmarkKind,
) -> Result<PolicyWeights> {
    let n = firm_ids.len();
    if n == 0 {
        return Err(Error::Insufficient(format!("month {month} has no firms")));
    }
    let weights = match kind {
        BenchmarkKind::EquallyWeighted => vec![1.0 / n as f64; n],
        BenchmarkKind::ValueWeighted { size_column } => {
            let sizes = sizes
                .ok_or_else(|| Error::InvalidArgument(format!("value weighting needs size column `{size_column}`")))?;
            if sizes.len() != n {
                return Err(Error::dim("benchmark sizes", n, sizes.len()));
            }
            if let Some(s) = sizes.iter().find(|s| **s < 0.0) {
                return Err(Error::InvalidArgument(format!("negative size {s} in month {month}")));
            }
            let missing = sizes.iter().filter(|s| s.is_nan()).count();
            if missing > 0 {
                warn!("month {month}: {missing} firms without size get zero benchmark weight");
            }
            let total: f64 = sizes.iter().filter(|s| !s.is_nan()).sum();
            if !(total > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "month {month}: all sizes are zero, value weights undefined"
                )));
            }
            sizes.iter().map(|s| if s.is_nan() { 0.0 } else { s / total }).collect()
        }
    };
    Ok(PolicyWeights {
        month,
        firm_ids: firm_ids.to_vec(),
        weights,
    })
}

/// Benchmark weights for `month` of a raw panel.
pub fn benchmark_weights(month: MonthId, kind: &BenchmarkKind, panel: &CharacteristicsPanel) -> Result<PolicyWeights> {
    let slice = panel.month(month)?;
    let sizes = match kind {
        BenchmarkKind::EquallyWeighted => None,
        BenchmarkKind::ValueWeighted { size_column } => {
            let c = panel
                .char_index(size_column)
                .ok_or_else(|| Error::UnknownPredictor(size_column.clone()))?;
            Some(slice.values[c].as_slice())
        }
    };
    benchmark_from_sizes(month, &slice.firms, sizes, kind)
}

pub(crate) fn prepared_benchmark(m: &PreparedMonth, kind: &BenchmarkKind) -> Result<PolicyWeights> {
    benchmark_from_sizes(m.month(), &m.matrix.firm_ids, m.size.as_deref(), kind)
}

/// `w = w_b + X θ / N`.
pub fn policy_weights(theta: &[f64], x: &PredictorMatrix, wb: &PolicyWeights) -> Result<PolicyWeights> {
    let n = x.n_firms();
    if theta.len() != x.n_predictors() {
        return Err(Error::dim("policy coefficients", x.n_predictors(), theta.len()));
    }
    if wb.len() != n {
        return Err(Error::dim("benchmark weights", n, wb.len()));
    }
    let mut weights = wb.weights.clone();
    let scale = 1.0 / n as f64;
    for (k, &t) in theta.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        for (w, x) in weights.iter_mut().zip(x.column(k)) {
            *w += x * t * scale;
        }
    }
    Ok(PolicyWeights {
        month: x.month,
        firm_ids: x.firm_ids.clone(),
        weights,
    })
}

/// Long-short predictor portfolio returns `Xᵀ r / N`.
pub fn predictor_returns(x: &PredictorMatrix, r_next: &[f64]) -> Result<Vec<f64>> {
    let n = x.n_firms();
    if r_next.len() != n {
        return Err(Error::dim("next-month returns", n, r_next.len()));
    }
    let scale = 1.0 / n as f64;
    Ok((0..x.n_predictors())
        .map(|k| crate::linalg::dot(x.column(k), r_next) * scale)
        .collect())
}

/// `r_p = r_b + θᵀ r_c`.
pub fn portfolio_return(theta: &[f64], r_b: f64, r_c: &[f64]) -> Result<f64> {
    if theta.len() != r_c.len() {
        return Err(Error::dim("predictor returns", theta.len(), r_c.len()));
    }
    Ok(r_b + crate::linalg::dot(theta, r_c))
}

/// Benchmark and predictor returns realized over the month after `month`,
/// from that month's weights and characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorObservation {
    pub month: MonthId,
    pub benchmark_return: f64,
    pub predictor_returns: Vec<f64>,
}

pub fn factor_observation(m: &PreparedMonth, kind: &BenchmarkKind) -> Result<FactorObservation> {
    let wb = prepared_benchmark(m, kind)?;
    Ok(FactorObservation {
        month: m.month(),
        benchmark_return: crate::linalg::dot(&wb.weights, &m.ret_fwd),
        predictor_returns: predictor_returns(&m.matrix, &m.ret_fwd)?,
    })
}

/// Factor observations for every month, computed in parallel.
pub fn factor_observations(panel: &PreparedPanel, kind: &BenchmarkKind) -> Result<Vec<FactorObservation>> {
    crate::par::map(&panel.months, |m| factor_observation(m, kind))
        .into_iter()
        .collect()
}

/// Time series of benchmark and predictor returns over an estimation window,
/// with their window-mean-centered versions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub months: Vec<MonthId>,
    pub benchmark: DVector<f64>,
    /// T × K.
    pub predictors: DMatrix<f64>,
    pub centered_benchmark: DVector<f64>,
    pub centered_predictors: DMatrix<f64>,
    pub benchmark_mean: f64,
    pub predictor_means: DVector<f64>,
}

impl RegressionSample {
    pub fn new(months: Vec<MonthId>, benchmark: Vec<f64>, predictors: DMatrix<f64>) -> Result<Self> {
        let t = benchmark.len();
        if t < 2 {
            return Err(Error::Insufficient(format!("regression sample needs T >= 2, got {t}")));
        }
        if predictors.nrows() != t {
            return Err(Error::dim("predictor-return rows", t, predictors.nrows()));
        }
        if months.len() != t {
            return Err(Error::dim("sample months", t, months.len()));
        }
        if predictors.ncols() == 0 {
            return Err(Error::Insufficient("regression sample needs K >= 1".into()));
        }
        if benchmark.iter().chain(predictors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression sample contains non-finite returns".into()));
        }
        let benchmark = DVector::from_vec(benchmark);
        let benchmark_mean = benchmark.mean();
        let centered_benchmark = benchmark.add_scalar(-benchmark_mean);
        let predictor_means = DVector::from_iterator(predictors.ncols(), predictors.column_iter().map(|c| c.mean()));
        let mut centered_predictors = predictors.clone();
        for (mut col, m) in centered_predictors.column_iter_mut().zip(predictor_means.iter()) {
            col.add_scalar_mut(-m);
        }
        Ok(Self {
            months,
            benchmark,
            predictors,
            centered_benchmark,
            centered_predictors,
            benchmark_mean,
            predictor_means,
        })
    }

    /// Stacks consecutive observations into a sample.
    pub fn from_observations(obs: &[FactorObservation]) -> Result<Self> {
        let t = obs.len();
        let k = obs.first().map_or(0, |o| o.predictor_returns.len());
        let mut rc = DMatrix::zeros(t, k);
        for (i, o) in obs.iter().enumerate() {
            if o.predictor_returns.len() != k {
                return Err(Error::dim("predictor returns", k, o.predictor_returns.len()));
            }
            for (j, v) in o.predictor_returns.iter().enumerate() {
                rc[(i, j)] = *v;
            }
        }
        Self::new(
            obs.iter().map(|o| o.month).collect(),
            obs.iter().map(|o| o.benchmark_return).collect(),
            rc,
        )
    }

    /// Sample built from a subset of rows, re-centered on that subset.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let k = self.n_predictors();
        let mut rc = DMatrix::zeros(rows.len(), k);
        for (i, &r) in rows.iter().enumerate() {
            rc.row_mut(i).copy_from(&self.predictors.row(r));
        }
        Self::new(
            rows.iter().map(|&r| self.months[r]).collect(),
            rows.iter().map(|&r| self.benchmark[r]).collect(),
            rc,
        )
    }

    pub fn n_obs(&self) -> usize {
        self.benchmark.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.ncols()
    }

    pub fn window_end(&self) -> MonthId {
        *self.months.last().expect("non-empty sample")
    }

    fn denom(&self) -> f64 {
        (self.n_obs() - 1) as f64
    }

    /// `Σ̂_c = ṙ_cᵀ ṙ_c / (T - 1)`. Quadratic in K; avoid for large K.
    pub fn predictor_covariance(&self) -> DMatrix<f64> {
        self.centered_predictors.tr_mul(&self.centered_predictors) / self.denom()
    }

    /// `σ̂_bc = ṙ_cᵀ ṙ_b / (T - 1)`.
    pub fn benchmark_covariance(&self) -> DVector<f64> {
        self.centered_predictors.tr_mul(&self.centered_benchmark) / self.denom()
    }

    /// `Σ̂_c θ` without forming `Σ̂_c`.
    pub fn covariance_times(&self, theta: &[f64]) -> DVector<f64> {
        let th = DVector::from_column_slice(theta);
        self.centered_predictors.tr_mul(&(&self.centered_predictors * th)) / self.denom()
    }

    /// Centered in-sample portfolio returns `ṙ_b + ṙ_c θ`.
    pub fn portfolio_series(&self, theta: &[f64]) -> DVector<f64> {
        let th = DVector::from_column_slice(theta);
        &self.centered_benchmark + &self.centered_predictors * th
    }

    /// `(1 / (2 (T - 1))) Σ (ṙ_b + θᵀ ṙ_c)²`, half the in-sample portfolio variance.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        self.portfolio_series(theta).norm_squared() / (2.0 * self.denom())
    }
}

/// Regression sample over `months` (each contributing the returns realized the
/// following month).
pub fn build_regression_sample(
    panel: &PreparedPanel,
    months: &[MonthId],
    kind: &BenchmarkKind,
) -> Result<RegressionSample> {
    if months.len() < 2 {
        return Err(Error::Insufficient(format!(
            "estimation window needs at least 2 months, got {}",
            months.len()
        )));
    }
    let obs = months
        .iter()
        .map(|&m| {
            let pm = &panel.months[panel.position(m)?];
            if pm.n_firms() == 0 {
                return Err(Error::Insufficient(format!("month {m} has no firms")));
            }
            factor_observation(pm, kind)
        })
        .collect::<Result<Vec<_>>>()?;
    RegressionSample::from_observations(&obs)
}

/// The policy parameter θ with selection flags and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
    pub selected: Vec<bool>,
    pub solver: String,
    pub hyperparameters: BTreeMap<String, f64>,
    pub window_end: Option<MonthId>,
}

impl CoefficientVector {
    /// Coefficients with selection = nonzero.
    pub fn from_values(values: Vec<f64>, solver: impl Into<String>) -> Self {
        let selected = values.iter().map(|v| *v != 0.0).collect();
        Self {
            values,
            selected,
            solver: solver.into(),
            hyperparameters: BTreeMap::new(),
            window_end: None,
        }
    }

    pub fn zeros(k: usize, solver: impl Into<String>) -> Self {
        Self::from_values(vec![0.0; k], solver)
    }

    pub fn with_hyper(mut self, name: &str, value: f64) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn matrix(cols: &[Vec<f64>]) -> PredictorMatrix {
        let n = cols[0].len();
        let k = cols.len();
        PredictorMatrix {
            month: 200001,
            firm_ids: (0..n).map(|i| format!("f{i}")).collect(),
            values: DMatrix::from_fn(n, k, |i, j| cols[j][i]),
            names: Arc::new((0..k).map(|j| format!("p{j}")).collect()),
            degenerate: vec![false; k],
        }
    }

    fn ew(n: usize) -> PolicyWeights {
        let ids: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
        benchmark_from_sizes(200001, &ids, None, &BenchmarkKind::EquallyWeighted).unwrap()
    }

    #[test]
    fn benchmark_examples() {
        assert_eq!(ew(4).weights, vec![0.25; 4]);
        let ids = vec!["a".to_string(), "b".to_string()];
        let vw = BenchmarkKind::ValueWeighted {
            size_column: "me".into(),
        };
        let w = benchmark_from_sizes(200001, &ids, Some(&[1.0, 3.0]), &vw).unwrap();
        assert_eq!(w.weights, vec![0.25, 0.75]);
        assert!(benchmark_from_sizes(200001, &ids, Some(&[0.0, 0.0]), &vw).is_err());
        assert!(benchmark_from_sizes(200001, &ids, Some(&[-1.0, 2.0]), &vw).is_err());
        assert!(benchmark_from_sizes(200001, &[], None, &BenchmarkKind::EquallyWeighted).is_err());
    }

    #[test]
    fn policy_weight_examples() {
        let sd = 2f64.sqrt();
        let x = matrix(&[vec![-1.0 / sd, 1.0 / sd]]);
        let wb = ew(2);
        assert_eq!(policy_weights(&[0.0], &x, &wb).unwrap().weights, wb.weights);
        let w = policy_weights(&[1.0], &x, &wb).unwrap();
        let expect = [0.5 - 1.0 / (2.0 * sd), 0.5 + 1.0 / (2.0 * sd)];
        for (a, b) in w.weights.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w.sum() - 1.0).abs() < 1e-15);
        assert!(policy_weights(&[1.0, 2.0], &x, &wb).is_err());
    }

    #[test]
    fn predictor_return_examples() {
        let x = matrix(&[vec![0.0, 0.0]]);
        assert_eq!(predictor_returns(&x, &[0.1, 0.2]).unwrap(), vec![0.0]);
        // Unscaled column (-1, 1): (-0.1 + 0.2) / 2 = 0.05. With the unit-sd
        // column (-1, 1) / sqrt(2): 0.05 / sqrt(2).
        let x = matrix(&[vec![-1.0, 1.0]]);
        assert!((predictor_returns(&x, &[0.1, 0.2]).unwrap()[0] - 0.05).abs() < 1e-15);
        let sd = 2f64.sqrt();
        let x = matrix(&[vec![-1.0 / sd, 1.0 / sd]]);
        let rc = predictor_returns(&x, &[0.1, 0.2]).unwrap()[0];
        assert!((rc - 0.05 / sd).abs() < 1e-15);
        assert_eq!(predictor_returns(&x, &[0.0, 0.0]).unwrap(), vec![0.0]);
        assert!(predictor_returns(&x, &[0.0]).is_err());
    }

    #[test]
    fn portfolio_return_examples() {
        assert_eq!(portfolio_return(&[0.0, 0.0], 0.03, &[1.0, 2.0]).unwrap(), 0.03);
        assert_eq!(portfolio_return(&[1.0], 0.03, &[-0.03]).unwrap(), 0.0);
    }

    #[test]
    fn two_month_sample_is_centered() {
        let s = RegressionSample::new(
            vec![200001, 200002],
            vec![0.01, 0.03],
            DMatrix::from_row_slice(2, 1, &[0.002, -0.004]),
        )
        .unwrap();
        assert!((s.centered_benchmark[0] + 0.01).abs() < 1e-15);
        assert!((s.centered_benchmark[1] - 0.01).abs() < 1e-15);
        assert!((s.centered_predictors[(0, 0)] - 0.003).abs() < 1e-15);
        assert!((s.centered_predictors[(1, 0)] + 0.003).abs() < 1e-15);
        assert!(RegressionSample::new(vec![200001], vec![0.0], DMatrix::zeros(1, 1)).is_err());
    }

    fn random_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        (2usize..12, 1usize..5).prop_flat_map(|(n, k)| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), k),
                prop::collection::vec(-0.3f64..0.3, n),
                prop::collection::vec(-5.0f64..5.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_returns_agree((raw, r, theta) in random_case()) {
            let mut cols = raw.clone();
            for c in cols.iter_mut() {
                crate::panel::standardize_in_place(c);
            }
            let x = matrix(&cols);
            let wb = ew(x.n_firms());
            let w = policy_weights(&theta, &x, &wb).unwrap();
            prop_assert!((w.sum() - 1.0).abs() < 1e-10);
            let rb = crate::linalg::dot(&wb.weights, &r);
            let rc = predictor_returns(&x, &r).unwrap();
            let rp = portfolio_return(&theta, rb, &rc).unwrap();
            prop_assert!((rp - crate::linalg::dot(&w.weights, &r)).abs() < 1e-12);
        }

        #[test]
        fn predictor_returns_are_linear((raw, r, _t) in random_case(), a in -3.0f64..3.0) {
            let x = matrix(&raw);
            let scaled: Vec<f64> = r.iter().map(|v| a * v).collect();
            let base = predictor_returns(&x, &r).unwrap();
            let lin = predictor_returns(&x, &scaled).unwrap();
            for (u, v) in base.iter().zip(lin) {
                prop_assert!((a * u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn objective_is_half_sample_variance(
            rows in prop::collection::vec((-0.1f64..0.1, -0.05f64..0.05, -0.05f64..0.05), 3..30),
            theta in prop::collection::vec(-4.0f64..4.0, 2),
        ) {
            let t = rows.len();
            let rc = DMatrix::from_fn(t, 2, |i, j| if j == 0 { rows[i].1 } else { rows[i].2 });
            let s = RegressionSample::new(vec![0; t], rows.iter().map(|r| r.0).collect(), rc).unwrap();
            let rp: Vec<f64> = rows.iter().map(|r| r.0 + theta[0] * r.1 + theta[1] * r.2).collect();
            let var = crate::linalg::sample_variance(&rp);
            prop_assert!((2.0 * s.objective(&theta) - var).abs() < 1e-12 * (1.0 + var));
            let m = s.centered_predictors.column(0).mean();
            prop_assert!(m.abs() < 1e-12);
        }
    }
}
