//! Conditional draws of the horseshoe Gibbs cycle.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{Error, Result};

fn normals<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// The regression `y = Xβ + ε`, `ε ~ N(0, σ²I)`, `β ~ N(0, σ² V)` with `β`
/// and, under `p(σ²) ∝ 1/σ²`, `σ²` integrable in closed form. Everything
/// goes through `M = I + X V Xᵀ`: `y | V, σ² ~ N(0, σ² M)`.
pub struct CollapsedModel<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    /// `XᵀX` when K ≤ T; the K × K form `A = V⁻¹ + XᵀX` is then factored
    /// instead of the T × T matrix `M`.
    gram: Option<DMatrix<f64>>,
    xty: DVector<f64>,
    yty: f64,
}

/// Factorization of the model at one prior-variance vector.
pub struct Collapsed {
    /// `log |M|`.
    pub log_det: f64,
    /// `yᵀ M⁻¹ y`.
    pub quad: f64,
    factor: Cholesky<f64, Dyn>,
}

impl<'a> CollapsedModel<'a> {
    /// `primal` selects the K × K factorization; it needs K ≤ T to pay off.
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, primal: bool) -> Self {
        Self {
            x,
            y,
            gram: primal.then(|| x.tr_mul(x)),
            xty: x.tr_mul(y),
            yty: y.norm_squared(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Factors the model at prior variances `v` (in units of σ²).
    pub fn at(&self, v: &[f64]) -> Result<Collapsed> {
        let fail = || Error::NonFinite("horseshoe: covariance factor not positive definite".into());
        match &self.gram {
            Some(g) => {
                // |M| = |A| Π v_j and yᵀM⁻¹y = yᵀy - bᵀA⁻¹b (Woodbury).
                let mut a = g.clone();
                for (j, vj) in v.iter().enumerate() {
                    a[(j, j)] += 1.0 / vj;
                }
                let factor = a.cholesky().ok_or_else(fail)?;
                let log_det = 2.0 * factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
                    + v.iter().map(|vj| vj.ln()).sum::<f64>();
                let fit = self.xty.dot(&factor.solve(&self.xty));
                // Rounding can push the difference below zero on a near-exact fit.
                let quad = (self.yty - fit).max(self.yty * 1e-14);
                Ok(Collapsed { log_det, quad, factor })
            }
            None => {
                let mut scaled = self.x.clone();
                for (mut col, vj) in scaled.column_iter_mut().zip(v) {
                    col *= vj.sqrt();
                }
                let mut m = &scaled * scaled.transpose();
                for i in 0..m.nrows() {
                    m[(i, i)] += 1.0;
                }
                let factor = m.cholesky().ok_or_else(fail)?;
                let log_det = 2.0 * factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let quad = self.y.dot(&factor.solve(self.y));
                Ok(Collapsed { log_det, quad, factor })
            }
        }
    }

    /// `log p(y | V)` up to a constant, with β and σ² integrated out.
    pub fn log_marginal(&self, c: &Collapsed) -> f64 {
        -0.5 * c.log_det - 0.5 * self.n_obs() as f64 * c.quad.ln()
    }

    /// `β ~ N(A⁻¹Xᵀy, σ² A⁻¹)`, `A = XᵀX + V⁻¹`, reusing the factor of `c`
    /// (which must come from [`Self::at`] with the same `v`).
    ///
    /// With K > T this is the data-augmentation scheme of Bhattacharya,
    /// Chakraborty and Mallick: `u ~ N(0, σ²V)`, `δ ~ N(0, I)`,
    /// `M w = y/σ - (Xu/σ + δ)`, `β = u + σ V Xᵀ w`.
    pub fn draw_beta<R: Rng>(&self, c: &Collapsed, v: &[f64], sigma2: f64, rng: &mut R) -> Result<DVector<f64>> {
        let sig = sigma2.sqrt();
        match &self.gram {
            Some(_) => {
                let mean = c.factor.solve(&self.xty);
                // L Lᵀ = A, so Lᵀ x = z gives x ~ N(0, A⁻¹).
                let z = normals(rng, v.len());
                let x = c
                    .factor
                    .l_dirty()
                    .tr_solve_lower_triangular(&z)
                    .ok_or_else(|| Error::NonFinite("horseshoe: triangular solve failed".into()))?;
                Ok(mean + x * sig)
            }
            None => {
                let mut u = normals(rng, v.len());
                for (ui, vj) in u.iter_mut().zip(v) {
                    *ui *= sig * vj.sqrt();
                }
                let rhs = (self.y - self.x * &u) / sig - normals(rng, self.n_obs());
                let w = c.factor.solve(&rhs);
                let mut beta = self.x.tr_mul(&w);
                for ((b, vj), ui) in beta.iter_mut().zip(v).zip(u.iter()) {
                    *b = ui + sig * vj * *b;
                }
                Ok(beta)
            }
        }
    }
}

/// `x ~ Exp(rate)` truncated to `(0, upper)`.
pub fn truncated_exponential<R: Rng>(rate: f64, upper: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if rate * upper < 1e-300 || rate <= 0.0 {
        return u * upper;
    }
    if upper.is_infinite() {
        return -(1.0 - u).ln() / rate;
    }
    -(u * (-rate * upper).exp_m1()).ln_1p() / rate
}

/// Slice-sampling update of a precision `γ` whose conditional density is
/// proportional to `exp(-μγ) / (1 + γ)`: the half-Cauchy local scale
/// `ℓ = γ^{-1/2}` with `μ = β² / (2τ²)`.
pub fn slice_local<R: Rng>(gamma: f64, mu: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() / (1.0 + gamma);
    let upper = (1.0 - u) / u;
    truncated_exponential(mu, upper, rng)
}

/// `σ² ~ IG(shape, scale)`.
pub fn inverse_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("positive shape");
    scale / g.sample(rng)
}
