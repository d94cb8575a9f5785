//! Marginal screening followed by OLS on the retained predictors.

use log::warn;

use crate::linalg::MAX_CONDITION;
use crate::portfolio::CoefficientVector;
use crate::solvers::{fit_ols, FitResult};
use crate::{Error, RegressionSample, Result};

/// Marginal scores `|ṙ_c,kᵀ ṙ_b| / ‖ṙ_c,k‖` (zero for constant columns).
pub fn marginal_scores(sample: &RegressionSample) -> Vec<f64> {
    let rc = &sample.centered_predictors;
    let y = &sample.centered_benchmark;
    crate::par::map_range(sample.n_predictors(), |k| {
        let c = rc.column(k);
        let n = c.norm();
        if n > 0.0 {
            c.dot(y).abs() / n
        } else {
            0.0
        }
    })
}

/// Indices of the `keep` largest scores, ties to the lower index, ascending.
pub fn top_k(scores: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

/// Keeps the `keep` strongest predictors by marginal score and fits OLS on
/// them. Later-indexed columns that make the retained covariance singular are
/// dropped one at a time.
pub fn marginal_screen(sample: &RegressionSample, keep: usize) -> Result<FitResult> {
    let (t, k) = (sample.n_obs(), sample.n_predictors());
    if keep == 0 || keep + 1 >= t {
        return Err(Error::InvalidArgument(format!(
            "screening size must satisfy 1 <= k < T - 1 (T = {t}), got {keep}"
        )));
    }
    let scores = marginal_scores(sample);
    let mut retained = top_k(&scores, keep.min(k));
    retained.retain(|&j| scores[j] > 0.0 || sample.centered_predictors.column(j).norm() > 0.0);
    let fit = loop {
        if retained.is_empty() {
            return Err(Error::Singular("no usable predictor survives screening".into()));
        }
        let sub = restrict(sample, &retained)?;
        match fit_ols(&sub) {
            Ok(f) => break f,
            Err(Error::Singular(_)) => {
                let drop = retained.pop().expect("non-empty");
                warn!("screening: dropping collinear predictor {drop} (condition > {MAX_CONDITION:e})");
            }
            Err(e) => return Err(e),
        }
    };
    let mut values = vec![0.0; k];
    for (pos, &j) in retained.iter().enumerate() {
        values[j] = fit.theta.values[pos];
    }
    let obj = sample.objective(&values);
    let mut coef = CoefficientVector::from_values(values, "screening").with_hyper("k", keep as f64);
    coef.selected = vec![false; k];
    for &j in &retained {
        coef.selected[j] = true;
    }
    coef.window_end = Some(sample.window_end());
    Ok(FitResult::closed_form(coef, obj))
}

fn restrict(sample: &RegressionSample, cols: &[usize]) -> Result<RegressionSample> {
    RegressionSample::new(
        sample.months.clone(),
        sample.benchmark.iter().copied().collect(),
        sample.predictors.select_columns(cols),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn top_k_breaks_ties_low() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 2.0], 2), vec![1, 2]);
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 3.0], 2), vec![1, 2]);
    }

    #[test]
    fn screening_keeps_strong_signal_and_drops_duplicates() {
        let t = 50;
        let mut rc = DMatrix::from_fn(t, 4, |i, j| ((i * (j + 3) * 7) % 13) as f64 / 13.0 - 0.5);
        for i in 0..t {
            rc[(i, 3)] = rc[(i, 1)];
        }
        let rb: Vec<f64> = (0..t).map(|i| -rc[(i, 1)] + 0.01 * ((i % 5) as f64)).collect();
        let s = RegressionSample::new((0..t as u32).collect(), rb, rc).unwrap();
        let fit = marginal_screen(&s, 2).unwrap();
        // Columns 1 and 3 tie at the top; 3 is dropped as collinear.
        assert_eq!(fit.theta.support(), vec![1]);
        assert!((fit.theta.values[1] - 1.0).abs() < 0.05);
    }
}
