use super::cd::Design;
use super::ols::RidgeSolver;
use super::{FitResult, Penalty, SolverConfig};
use crate::{Error, RegressionSample, Result};

/// Which penalty family a path or cross-validation runs over.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    Ridge,
    Lasso,
    AdaptiveLasso {
        weights: Vec<f64>,
    },
    /// Sweeps every mix in [`SolverConfig::enet_mixes`].
    ElasticNet,
    Scad {
        a: f64,
    },
}

impl PenaltyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Ridge => "ridge",
            PenaltyKind::Lasso => "lasso",
            PenaltyKind::AdaptiveLasso { .. } => "adalasso",
            PenaltyKind::ElasticNet => "enet",
            PenaltyKind::Scad { .. } => "scad",
        }
    }
}

/// One fitted grid point.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub penalty: Penalty,
    pub fit: FitResult,
}

/// `count` log-spaced values from `max` down to `max * ratio`.
pub fn lambda_grid(max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![max];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count)
        .map(|i| if i == 0 { max } else { max * (step * i as f64).exp() })
        .collect()
}

/// Penalty grid for `kind` on `sample`, in warm-start segments.
///
/// Sparse families start at the smallest penalty giving θ = 0. The elastic
/// net has one segment per mix.
pub fn penalty_grid(sample: &RegressionSample, kind: &PenaltyKind, config: &SolverConfig) -> Result<Vec<Vec<Penalty>>> {
    grid_for(&Design::new(sample), kind, config)
}

pub(crate) fn grid_for(design: &Design, kind: &PenaltyKind, config: &SolverConfig) -> Result<Vec<Vec<Penalty>>> {
    config.validate()?;
    let positive = |m: f64| if m > 0.0 && m.is_finite() { m } else { 1.0 };
    let grid = |m: f64| lambda_grid(positive(m), config.lambda_count, config.lambda_ratio);
    Ok(match kind {
        PenaltyKind::Ridge => {
            let vmax = design.v.iter().copied().fold(0.0, f64::max);
            let top = positive(500.0 * vmax);
            vec![lambda_grid(top, config.lambda_count, config.ridge_lambda_ratio)
                .into_iter()
                .map(|lambda| Penalty::Ridge { lambda })
                .collect()]
        }
        PenaltyKind::Lasso => vec![grid(design.max_abs_score(None))
            .into_iter()
            .map(|rho| Penalty::Lasso { rho })
            .collect()],
        PenaltyKind::AdaptiveLasso { weights } => {
            if weights.len() != design.v.len() {
                return Err(Error::dim("adaptive weights", design.v.len(), weights.len()));
            }
            vec![grid(design.max_abs_score(Some(weights)))
                .into_iter()
                .map(|rho| Penalty::AdaptiveLasso {
                    rho,
                    weights: weights.clone(),
                })
                .collect()]
        }
        PenaltyKind::ElasticNet => {
            let zmax = design.max_abs_score(None);
            config
                .enet_mixes
                .iter()
                .map(|&mix| {
                    grid(zmax / mix)
                        .into_iter()
                        .map(|lambda| Penalty::ElasticNet { lambda, mix })
                        .collect()
                })
                .collect()
        }
        PenaltyKind::Scad { a } => {
            // θ = 0 is the global minimizer of every univariate problem once λ
            // clears both the slope at zero and the flat-region level.
            let top = design
                .z0
                .iter()
                .zip(&design.v)
                .map(|(z, v)| {
                    let flat = if *v > 0.0 {
                        z.abs() / (v * (a + 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    z.abs().max(flat)
                })
                .fold(0.0, f64::max);
            vec![grid(top)
                .into_iter()
                .map(|lambda| Penalty::Scad { lambda, a: *a })
                .collect()]
        }
    })
}

/// Grid points that always run before the early-stop rules apply.
const MIN_PATH_POINTS: usize = 5;

/// Fits one warm-started segment, handing each fit to `visit`.
///
/// Iterative segments stop early once the fit saturates (see
/// [`SolverConfig::path_max_explained`] and [`SolverConfig::path_min_gain`]);
/// the remaining points are not visited. Returns the number visited.
pub(crate) fn walk_segment(
    design: &Design,
    ridge: Option<&RidgeSolver>,
    segment: &[Penalty],
    config: &SolverConfig,
    mut visit: impl FnMut(usize, FitResult) -> Result<()>,
) -> Result<usize> {
    let null = design.sample.objective(&vec![0.0; design.v.len()]);
    let mut warm: Option<Vec<f64>> = None;
    let mut prev_explained = 0.0;
    for (i, p) in segment.iter().enumerate() {
        let fit = match (p, ridge) {
            (Penalty::Ridge { lambda }, Some(r)) => r.fit(design.sample, *lambda)?,
            _ => design.descend(p, config, warm.as_deref())?,
        };
        let explained = if null > 0.0 {
            1.0 - design.sample.objective(&fit.theta.values) / null
        } else {
            0.0
        };
        warm = Some(fit.theta.values.clone());
        visit(i, fit)?;
        let iterative = !matches!((p, ridge), (Penalty::Ridge { .. }, Some(_)));
        if iterative
            && i + 1 >= MIN_PATH_POINTS
            && (explained >= config.path_max_explained || explained - prev_explained < config.path_min_gain * explained)
        {
            return Ok(i + 1);
        }
        prev_explained = explained;
    }
    Ok(segment.len())
}

/// Full regularization path, warm-starting each fit from the previous one.
pub fn regularization_path(
    sample: &RegressionSample,
    kind: &PenaltyKind,
    config: &SolverConfig,
) -> Result<Vec<PathPoint>> {
    let design = Design::new(sample);
    let segments = grid_for(&design, kind, config)?;
    let ridge = matches!(kind, PenaltyKind::Ridge).then(|| RidgeSolver::new(sample));
    let mut out = Vec::with_capacity(segments.iter().map(Vec::len).sum());
    for seg in &segments {
        walk_segment(&design, ridge.as_ref(), seg, config, |i, fit| {
            out.push(PathPoint {
                penalty: seg[i].clone(),
                fit,
            });
            Ok(())
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn sample(t: usize, k: usize, seed: u64) -> RegressionSample {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let rc = DMatrix::from_fn(t, k, |_, _| next());
        let rb: Vec<f64> = (0..t).map(|i| next() - 0.5 * rc[(i, 1)]).collect();
        RegressionSample::new((0..t as u32).collect(), rb, rc).unwrap()
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(2.0, 100, 1e-4);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-4).abs() < 1e-15);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }

    #[test]
    fn sparse_paths_start_at_zero() {
        let s = sample(40, 15, 3);
        let cfg = SolverConfig::default();
        for kind in [
            PenaltyKind::Lasso,
            PenaltyKind::Scad { a: 3.7 },
            PenaltyKind::ElasticNet,
        ] {
            let path = regularization_path(&s, &kind, &cfg).unwrap();
            assert!(path[0].fit.theta.values.iter().all(|v| *v == 0.0), "{kind:?}");
            assert!(path.iter().any(|p| p.fit.theta.n_selected() > 0));
        }
    }

    #[test]
    fn path_beats_zero_at_every_point() {
        let s = sample(30, 12, 4);
        let path = regularization_path(&s, &PenaltyKind::Lasso, &SolverConfig::default()).unwrap();
        let zero = s.objective(&[0.0; 12]);
        for p in &path {
            assert!(p.fit.final_objective() <= zero + 1e-15);
        }
    }

    #[test]
    fn enet_has_segment_per_mix() {
        let s = sample(30, 5, 5);
        let segs = penalty_grid(&s, &PenaltyKind::ElasticNet, &SolverConfig::default()).unwrap();
        assert_eq!(segs.len(), 5);
        assert!(segs.iter().all(|g| g.len() == 100));
    }
}
