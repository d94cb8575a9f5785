use std::ops::Range;

use log::warn;

use super::cd::Design;
use super::ols::RidgeSolver;
use super::path::{grid_for, walk_segment, PenaltyKind};
use super::{FitResult, Penalty, SolverConfig};
use crate::portfolio::CoefficientVector;
use crate::{Error, RegressionSample, Result};

/// Contiguous folds; the first `t % folds` folds get one extra row.
pub fn fold_ranges(t: usize, folds: usize) -> Vec<Range<usize>> {
    let base = t / folds;
    let extra = t % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Result of blocked cross-validation.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// Selected penalty.
    pub penalty: Penalty,
    /// Refit on the full window at the selected penalty.
    pub fit: FitResult,
    /// Flattened grid, segment after segment.
    pub grid: Vec<Penalty>,
    /// Mean held-out error per grid point; NaN where any fold failed or
    /// stopped its path before reaching the point.
    pub cv_error: Vec<f64>,
    /// True when no grid point produced a finite error and θ = 0 was returned.
    pub degenerate: bool,
}

/// Held-out error `(1/2) mean(((r_b - μ_b) + θᵀ(r_c - μ_c))²)` using the
/// training means.
fn held_out_error(full: &RegressionSample, train: &RegressionSample, rows: Range<usize>, theta: &[f64]) -> f64 {
    let n = rows.len() as f64;
    let shift: f64 = train.benchmark_mean
        + theta
            .iter()
            .zip(train.predictor_means.iter())
            .map(|(t, m)| t * m)
            .sum::<f64>();
    let mut sse = 0.0;
    for r in rows {
        let row = full.predictors.row(r);
        let fitted: f64 = theta.iter().zip(row.iter()).map(|(t, x)| t * x).sum();
        let e = full.benchmark[r] + fitted - shift;
        sse += e * e;
    }
    0.5 * sse / n
}

/// Chooses the penalty by K-fold blocked cross-validation and refits on the
/// full sample.
///
/// The grid comes from the full sample; each training fold is re-centered on
/// its own means. The smallest mean error wins, ties going to the earlier
/// (larger) penalty.
pub fn cross_validate(sample: &RegressionSample, kind: &PenaltyKind, config: &SolverConfig) -> Result<CvOutcome> {
    config.validate()?;
    let t = sample.n_obs();
    let folds = fold_ranges(t, config.cv_folds);
    if folds.iter().any(|f| f.is_empty() || t - f.len() < 2) {
        return Err(Error::Insufficient(format!(
            "{}-fold cross-validation needs more than {t} observations",
            config.cv_folds
        )));
    }
    let design = Design::new(sample);
    let segments = grid_for(&design, kind, config)?;
    let grid: Vec<Penalty> = segments.iter().flatten().cloned().collect();

    let per_fold: Vec<Vec<f64>> = crate::par::map(&folds, |test| {
        let mut errs = vec![f64::NAN; grid.len()];
        let rows: Vec<usize> = (0..t).filter(|r| !test.contains(r)).collect();
        let Ok(train) = sample.subset(&rows) else {
            return errs;
        };
        let tdesign = Design::new(&train);
        let ridge = matches!(kind, PenaltyKind::Ridge).then(|| RidgeSolver::new(&train));
        let mut offset = 0;
        for seg in &segments {
            let res = walk_segment(&tdesign, ridge.as_ref(), seg, config, |i, fit| {
                errs[offset + i] = held_out_error(sample, &train, test.clone(), &fit.theta.values);
                Ok(())
            });
            if let Err(e) = res {
                warn!("fold {test:?}: {} path failed: {e}", kind.name());
            }
            offset += seg.len();
        }
        errs
    });

    let cv_error: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / folds.len() as f64)
        .collect();
    let mut best: Option<usize> = None;
    for (i, e) in cv_error.iter().enumerate() {
        if e.is_finite() && best.is_none_or(|b| *e < cv_error[b]) {
            best = Some(i);
        }
    }

    let Some(best) = best else {
        warn!("{}: no finite cross-validation error; returning theta = 0", kind.name());
        let mut coef = CoefficientVector::zeros(sample.n_predictors(), kind.name());
        coef.window_end = Some(sample.window_end());
        return Ok(CvOutcome {
            penalty: grid[0].clone(),
            fit: FitResult::closed_form(coef, sample.objective(&vec![0.0; sample.n_predictors()])),
            grid,
            cv_error,
            degenerate: true,
        });
    };

    // Refit along the winning segment up to the chosen point.
    let (mut seg_idx, mut local) = (0, best);
    while local >= segments[seg_idx].len() {
        local -= segments[seg_idx].len();
        seg_idx += 1;
    }
    let ridge = matches!(kind, PenaltyKind::Ridge).then(|| RidgeSolver::new(sample));
    let mut refit = None;
    let full_walk = SolverConfig {
        path_max_explained: 1.0,
        path_min_gain: 0.0,
        ..config.clone()
    };
    walk_segment(
        &design,
        ridge.as_ref(),
        &segments[seg_idx][..=local],
        &full_walk,
        |i, fit| {
            if i == local {
                refit = Some(fit);
            }
            Ok(())
        },
    )?;
    let mut fit = refit.expect("segment walk visits the chosen point");
    fit.theta.solver = kind.name().into();
    Ok(CvOutcome {
        penalty: grid[best].clone(),
        fit,
        grid,
        cv_error,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn folds_are_contiguous_and_balanced() {
        let f = fold_ranges(12, 5);
        assert_eq!(f, vec![0..3, 3..6, 6..8, 8..10, 10..12]);
        let f = fold_ranges(10, 5);
        assert!(f.iter().all(|r| r.len() == 2));
    }

    #[test]
    fn held_out_error_uses_training_means() {
        let rc = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 10.0]);
        let full = RegressionSample::new(vec![0, 1, 2, 3], vec![1.0, 1.0, 2.0, 5.0], rc).unwrap();
        let train = full.subset(&[0, 1, 2]).unwrap();
        // μ_b = 4/3, μ_c = 2; row 3: (5 - 4/3) + 0.5 (10 - 2) = 23/3.
        let e = held_out_error(&full, &train, 3..4, &[0.5]);
        assert!((e - 0.5 * (23.0f64 / 3.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cv_picks_grid_argmin_and_refits() {
        let t = 60;
        let rc = DMatrix::from_fn(t, 6, |i, j| ((i * 7 + j * 13) % 11) as f64 / 10.0 - 0.5);
        let rb: Vec<f64> = (0..t)
            .map(|i| -0.8 * rc[(i, 2)] + ((i * 5) % 3) as f64 * 0.01)
            .collect();
        let s = RegressionSample::new((0..t as u32).collect(), rb, rc).unwrap();
        let out = cross_validate(&s, &PenaltyKind::Lasso, &SolverConfig::default()).unwrap();
        let best = out
            .cv_error
            .iter()
            .enumerate()
            .fold(0, |b, (i, e)| if *e < out.cv_error[b] { i } else { b });
        assert_eq!(out.penalty, out.grid[best]);
        assert!(out.fit.theta.selected[2]);
    }
}
