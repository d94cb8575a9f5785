//! Componentwise L2-boosting with corrected-AIC early stopping.
//!
//! Each step moves the single predictor that best fits the current residual
//! portfolio return by a fraction ν of its least-squares coefficient. The
//! boosting operator `B_m` (fitted = `B_m ṙ_b`) is tracked exactly, its trace
//! gives the degrees of freedom, and θ is taken at the step minimizing
//!
//! ```text
//! AIC_c(m) = log σ̂²(m) + (1 + df_m / T) / (1 - (df_m + 2) / T)
//! ```

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::portfolio::CoefficientVector;
use crate::solvers::FitResult;
use crate::{Error, RegressionSample, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostingConfig {
    /// Step length ν.
    pub step: f64,
    pub max_steps: usize,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            max_steps: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoostingResult {
    /// θ at the AIC-optimal step; selected = touched by then.
    pub fit: FitResult,
    /// Stopping step m* (0 means θ = 0).
    pub best_step: usize,
    /// AIC for steps 0..=steps_taken.
    pub aic: Vec<f64>,
    /// Degrees of freedom for steps 0..=steps_taken.
    pub df: Vec<f64>,
    /// Predictor moved at each step.
    pub path: Vec<usize>,
}

/// Corrected AIC with residual variance estimated using `T - 1`.
pub fn corrected_aic(variance: f64, df: f64, t: usize) -> f64 {
    let t = t as f64;
    variance.ln() + (1.0 + df / t) / (1.0 - (df + 2.0) / t)
}

/// Running state of the boosting recursion.
#[derive(Debug, Clone)]
pub struct BoostState {
    pub theta: Vec<f64>,
    pub touched: Vec<bool>,
    /// Centered portfolio return `ṙ_b + ṙ_c θ̂_m`.
    pub residual: DVector<f64>,
    /// Boosting operator `B_m`, T × T.
    pub hat: DMatrix<f64>,
    /// `trace(B_m)`.
    pub df: f64,
    pub iteration: usize,
    pub aic_trace: Vec<f64>,
    pub step: f64,
    /// Predictor moved at each iteration.
    pub path: Vec<usize>,
    norms: Vec<f64>,
}

impl BoostState {
    pub fn new(sample: &RegressionSample, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "boosting step must lie in (0, 1], got {step}"
            )));
        }
        let (t, k) = (sample.n_obs(), sample.n_predictors());
        let rc = &sample.centered_predictors;
        let mut state = Self {
            theta: vec![0.0; k],
            touched: vec![false; k],
            residual: sample.centered_benchmark.clone(),
            hat: DMatrix::zeros(t, t),
            df: 0.0,
            iteration: 0,
            aic_trace: Vec::new(),
            step,
            path: Vec::new(),
            norms: crate::par::map_range(k, |j| rc.column(j).norm_squared()),
        };
        let aic = state.aic();
        state.aic_trace.push(aic);
        Ok(state)
    }

    /// Corrected AIC of the current iterate.
    pub fn aic(&self) -> f64 {
        let t = self.residual.len();
        corrected_aic(self.residual.norm_squared() / (t - 1) as f64, self.df, t)
    }

    /// One boosting iteration. Returns the chosen predictor, or `None` when no
    /// predictor can move or the next step would leave `df + 2 < T`.
    pub fn advance(&mut self, sample: &RegressionSample) -> Option<usize> {
        let t = self.residual.len();
        let rc = &sample.centered_predictors;
        let e = &self.residual;
        let norms = &self.norms;
        let dots: Vec<f64> =
            crate::par::map_range(norms.len(), |j| if norms[j] > 0.0 { rc.column(j).dot(e) } else { 0.0 });
        // Minimizing the univariate objective = maximizing dot² / ‖c‖².
        let mut pick: Option<(usize, f64)> = None;
        for j in 0..norms.len() {
            if norms[j] > 0.0 {
                let score = dots[j] * dots[j] / norms[j];
                if pick.is_none_or(|(_, s)| score > s) {
                    pick = Some((j, score));
                }
            }
        }
        let (j, score) = pick?;
        if score == 0.0 {
            return None;
        }
        let c = rc.column(j);
        let coef = -dots[j] / norms[j];
        // B += (ν/‖c‖²) c (cᵀ - cᵀB) raises the trace by ν (1 - cᵀBc / ‖c‖²).
        let ctb = c.tr_mul(&self.hat);
        let next_df = self.df + self.step * (1.0 - ctb.dot(&c.transpose()) / norms[j]);
        if next_df + 2.0 >= t as f64 {
            return None;
        }
        let mut row = c.transpose();
        row -= &ctb;
        self.hat.ger(self.step / norms[j], &c, &row.transpose(), 1.0);
        self.df = next_df;
        self.theta[j] += self.step * coef;
        self.touched[j] = true;
        self.residual.axpy(self.step * coef, &c, 1.0);
        self.iteration += 1;
        self.path.push(j);
        let aic = self.aic();
        self.aic_trace.push(aic);
        Some(j)
    }
}

pub fn fit_boosting(sample: &RegressionSample, config: &BoostingConfig) -> Result<BoostingResult> {
    let t = sample.n_obs();
    if t < 10 {
        return Err(Error::Insufficient(format!("boosting needs T >= 10, got {t}")));
    }
    let mut state = BoostState::new(sample, config.step)?;
    let mut dfs = vec![0.0];
    let mut best = (0usize, state.aic_trace[0], state.theta.clone(), state.touched.clone());
    while state.iteration < config.max_steps {
        if state.advance(sample).is_none() {
            debug!("boosting stops after {} steps", state.iteration);
            break;
        }
        dfs.push(state.df);
        let aic = *state.aic_trace.last().expect("pushed");
        if aic < best.1 {
            best = (state.iteration, aic, state.theta.clone(), state.touched.clone());
        }
        if state.residual.norm_squared() == 0.0 {
            break;
        }
    }

    let (best_step, _, values, selected) = best;
    let obj = sample.objective(&values);
    let mut coef = CoefficientVector::from_values(values, "boosting")
        .with_hyper("step", config.step)
        .with_hyper("stop", best_step as f64);
    coef.selected = selected;
    coef.window_end = Some(sample.window_end());
    let steps = state.iteration;
    Ok(BoostingResult {
        fit: FitResult {
            theta: coef,
            objective_trace: vec![obj],
            converged: steps < config.max_steps,
            sweeps: steps,
        },
        best_step,
        aic: state.aic_trace,
        df: dfs,
        path: state.path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::fit_ols;

    fn sample(t: usize, k: usize, seed: u64) -> RegressionSample {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let rc = DMatrix::from_fn(t, k, |_, _| next());
        let rb: Vec<f64> = (0..t).map(|i| 0.1 * next() - 0.7 * rc[(i, 0)]).collect();
        RegressionSample::new((0..t as u32).collect(), rb, rc).unwrap()
    }

    #[test]
    fn aic_formula() {
        let a = corrected_aic(2.0, 3.0, 10);
        assert!((a - (2f64.ln() + 1.3 / 0.5)).abs() < 1e-15);
    }

    #[test]
    fn hat_trace_matches_direct_recursion() {
        let s = sample(20, 5, 1);
        let cfg = BoostingConfig {
            step: 0.3,
            max_steps: 12,
        };
        let res = fit_boosting(&s, &cfg).unwrap();
        // Rebuild B from the recorded path as an independent check.
        let t = 20;
        let mut b = DMatrix::<f64>::zeros(t, t);
        let id = DMatrix::<f64>::identity(t, t);
        for (m, &j) in res.path.iter().enumerate() {
            let c = s.centered_predictors.column(j).into_owned();
            let h = &c * c.transpose() / c.norm_squared();
            b = &b + (&h * (&id - &b)) * 0.3;
            assert!((b.trace() - res.df[m + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn boosting_approaches_ols_with_many_steps() {
        let s = sample(200, 3, 2);
        let cfg = BoostingConfig {
            step: 0.5,
            max_steps: 2000,
        };
        let res = fit_boosting(&s, &cfg).unwrap();
        // Force the last step by refitting without early stopping.
        let mut theta = vec![0.0; 3];
        for &j in &res.path {
            let c = s.centered_predictors.column(j);
            let e = s.portfolio_series(&theta);
            theta[j] -= 0.5 * c.dot(&e) / c.norm_squared();
        }
        let ols = fit_ols(&s).unwrap().theta.values;
        for (a, b) in theta.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(res.fit.theta.selected[0]);
    }

    #[test]
    fn single_candidate_first_step() {
        let s = sample(30, 1, 4);
        let mut st = BoostState::new(&s, 0.1).unwrap();
        st.advance(&s).unwrap();
        let c = s.centered_predictors.column(0);
        let expect = -0.1 * c.dot(&s.centered_benchmark) / c.norm_squared();
        assert!((st.theta[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn identical_predictors_pick_lower_index() {
        let base = sample(30, 3, 5);
        let mut rc = base.predictors.clone();
        let col = rc.column(2).into_owned();
        rc.set_column(1, &col);
        let rb: Vec<f64> = (0..30).map(|i| -col[i] + 0.01 * base.benchmark[i]).collect();
        let s = RegressionSample::new(base.months.clone(), rb, rc).unwrap();
        let mut st = BoostState::new(&s, 0.1).unwrap();
        assert_eq!(st.advance(&s), Some(1));
    }

    #[test]
    fn zero_steps_is_benchmark() {
        let s = sample(30, 4, 6);
        let r = fit_boosting(
            &s,
            &BoostingConfig {
                step: 0.1,
                max_steps: 0,
            },
        )
        .unwrap();
        assert!(r.fit.theta.values.iter().all(|v| *v == 0.0));
        assert_eq!(r.best_step, 0);
    }

    #[test]
    fn deterministic() {
        let s = sample(40, 30, 3);
        let a = fit_boosting(&s, &BoostingConfig::default()).unwrap();
        let b = fit_boosting(&s, &BoostingConfig::default()).unwrap();
        assert_eq!(a.fit.theta, b.fit.theta);
        assert_eq!(a.path, b.path);
    }
}
