//! Synthetic data with known ground truth.
//!
//! Panel scenarios produce a firm-month CSV in the ingestion layout plus a
//! metadata sidecar and a JSON file holding the planted coefficients. The
//! regression-level generators build a [`RegressionSample`] directly and are
//! what the recovery experiments use.
//!
//! Panel construction: base characteristics follow a persistent Gaussian AR(1)
//! per firm; next-month returns are
//! `r_i = m_t + β_i f_t + Σ_k x̃_ik g_kt + e_i` where `x̃` is the standardized,
//! zero-imputed characteristic, `g` are characteristic premia and `e` is
//! idiosyncratic noise. In `planted-sparse` the common component `m_t` is set
//! after the fact so that the equally weighted return equals
//! `μ - θ*ᵀ r_c,t + η_t` exactly (before winsorization).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::fsio::{atomic_write, atomic_write_bytes};
use crate::panel::{standardize_base, write_panel_csv, CharacteristicMeta, Metadata, MonthId, MonthSlice};
use crate::{CharacteristicsPanel, Error, RegressionSample, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Benchmark return hedgeable by a sparse set of predictor returns.
    PlantedSparse,
    /// Benchmark return independent of every predictor return.
    Null,
    /// One-factor market with characteristic `c01` driving the beta.
    FactorStructure,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::PlantedSparse, Scenario::Null, Scenario::FactorStructure];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PlantedSparse => "planted-sparse",
            Scenario::Null => "null",
            Scenario::FactorStructure => "factor-structure",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Scenario::ALL.iter().map(|c| c.name()).collect();
            Error::InvalidArgument(format!("unknown scenario `{s}` (known: {})", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub months: usize,
    pub firms: usize,
    /// Continuous characteristics `c01, c02, ...`; a `size` and a binary
    /// `flag` column are always added.
    pub characteristics: usize,
    pub start_month: MonthId,
    /// Nonzero coefficients in `planted-sparse`.
    pub support: usize,
    /// Fraction of characteristic cells left missing.
    pub missing: f64,
    /// AR(1) coefficient of characteristics within a firm.
    pub persistence: f64,
    /// Monthly sd of each characteristic premium `g_k`.
    pub premium_sd: f64,
    /// Monthly sd of idiosyncratic returns.
    pub idiosyncratic_sd: f64,
    /// Monthly sd of the unhedgeable benchmark noise `η`.
    pub noise_sd: f64,
    /// Market factor mean and sd (`factor-structure` and `null`).
    pub market_mean: f64,
    pub market_sd: f64,
    /// Cross-sectional spread of beta per unit of `c01`.
    pub beta_spread: f64,
    /// Accepted range of the annualized equally weighted volatility in
    /// `factor-structure`.
    pub ew_vol_band: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            months: 180,
            firms: 150,
            characteristics: 10,
            start_month: 199_001,
            support: 3,
            missing: 0.02,
            persistence: 0.9,
            premium_sd: 0.02,
            idiosyncratic_sd: 0.10,
            noise_sd: 0.005,
            market_mean: 0.007,
            market_sd: 0.045,
            beta_spread: 0.5,
            ew_vol_band: (0.10, 0.25),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synth: {m}")));
        if self.months < 2 || self.firms < 3 || self.characteristics == 0 {
            return bad("need at least 2 months, 3 firms and 1 characteristic");
        }
        if self.support > self.characteristics {
            return bad("support larger than the number of characteristics");
        }
        if !(0.0..0.5).contains(&self.missing) || !(0.0..1.0).contains(&self.persistence) {
            return bad("missing must lie in [0, 0.5) and persistence in [0, 1)");
        }
        let sds = [self.premium_sd, self.idiosyncratic_sd, self.noise_sd, self.market_sd];
        if sds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("standard deviations must be finite and non-negative");
        }
        if !(self.ew_vol_band.0 < self.ew_vol_band.1) {
            return bad("ew_vol_band must be an increasing pair");
        }
        crate::panel::month_offset(self.start_month, 0)
            .map(|_| ())
            .map_err(Error::InvalidArgument)
    }
}

/// Ground truth written next to a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub scenario: Scenario,
    pub seed: u64,
    /// Base characteristic names, in column order.
    pub names: Vec<String>,
    /// Coefficients on the base predictors; zero for `size` and `flag`.
    pub theta: Vec<f64>,
    /// Realized annualized volatility of the equally weighted return.
    pub ew_annual_vol: f64,
    pub config: SynthConfig,
}

#[derive(Debug, Clone)]
pub struct SynthPanel {
    pub panel: CharacteristicsPanel,
    pub metadata: Metadata,
    pub truth: SynthTruth,
}

/// Paths written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub panel: PathBuf,
    pub metadata: PathBuf,
    pub truth: PathBuf,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn annual_vol(r: &[f64]) -> f64 {
    (12.0 * crate::linalg::sample_variance(r)).sqrt()
}

pub fn generate_panel(scenario: Scenario, seed: u64, config: &SynthConfig) -> Result<SynthPanel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, kc) = (config.firms, config.characteristics);
    let mut names: Vec<String> = (1..=kc).map(|k| format!("c{k:02}")).collect();
    names.push("size".into());
    names.push("flag".into());
    let k_all = names.len();

    let mut theta = vec![0.0; k_all];
    match scenario {
        Scenario::PlantedSparse => {
            for j in sample_indices(&mut rng, kc, config.support).into_vec() {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                theta[j] = sign * rng.random_range(0.5..1.5);
            }
        }
        Scenario::Null => {}
        Scenario::FactorStructure => {
            // Population regression of f + ē on s·f + g_1.
            let (s, vf, vg) = (config.beta_spread, config.market_sd.powi(2), config.premium_sd.powi(2));
            let denom = s * s * vf + vg;
            if denom > 0.0 {
                theta[0] = -s * vf / denom;
            }
        }
    }

    let firms: Vec<String> = (1..=n).map(|i| format!("f{i:05}")).collect();
    let rho = config.persistence;
    let innov = (1.0 - rho * rho).sqrt();
    let mut state: Vec<Vec<f64>> = (0..kc).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let mut log_size: Vec<f64> = (0..n).map(|_| 6.0 + 1.5 * normal(&mut rng)).collect();
    let flag_prob: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();

    let mut months = Vec::with_capacity(config.months);
    let mut ew = Vec::with_capacity(config.months);
    for t in 0..config.months {
        let month = crate::panel::month_offset(config.start_month, t).map_err(Error::InvalidArgument)?;
        if t > 0 {
            for col in &mut state {
                for v in col.iter_mut() {
                    *v = rho * *v + innov * normal(&mut rng);
                }
            }
            for v in &mut log_size {
                *v += 0.05 * normal(&mut rng);
            }
        }
        let mut values: Vec<Vec<f64>> = state.clone();
        values.push(log_size.iter().map(|v| v.exp()).collect());
        values.push(
            flag_prob
                .iter()
                .map(|p| f64::from(u8::from(rng.random::<f64>() < *p)))
                .collect(),
        );
        for col in values.iter_mut().take(kc) {
            for v in col.iter_mut() {
                if rng.random::<f64>() < config.missing {
                    *v = f64::NAN;
                }
            }
        }
        let std_cols: Vec<Vec<f64>> = values.iter().map(|c| standardize_base(c).0).collect();

        let g: Vec<f64> = (0..k_all).map(|_| config.premium_sd * normal(&mut rng)).collect();
        let e: Vec<f64> = (0..n).map(|_| config.idiosyncratic_sd * normal(&mut rng)).collect();
        let f = config.market_mean + config.market_sd * normal(&mut rng);
        let eta = config.noise_sd * normal(&mut rng);
        // Everything except the common component m_t.
        let mut r: Vec<f64> = (0..n)
            .map(|i| {
                let tilt: f64 = (0..kc).map(|k| std_cols[k][i] * g[k]).sum();
                let beta = match scenario {
                    Scenario::FactorStructure => 1.0 + config.beta_spread * std_cols[0][i],
                    _ => 0.0,
                };
                beta * f + tilt + e[i]
            })
            .collect();
        let common = match scenario {
            Scenario::PlantedSparse => {
                let rc: Vec<f64> = std_cols.iter().map(|x| crate::linalg::dot(x, &r) / n as f64).collect();
                let hedge: f64 = theta.iter().zip(&rc).map(|(a, b)| a * b).sum();
                config.market_mean - hedge + eta - crate::linalg::mean(&e)
            }
            Scenario::Null => f,
            Scenario::FactorStructure => 0.0,
        };
        for v in &mut r {
            *v = (*v + common).max(-0.99);
        }
        ew.push(crate::linalg::mean(&r));
        months.push(MonthSlice {
            month,
            firms: firms.clone(),
            values,
            ret_fwd: r,
        });
    }

    let ew_annual_vol = annual_vol(&ew);
    if scenario == Scenario::FactorStructure {
        let (lo, hi) = config.ew_vol_band;
        if !(lo..=hi).contains(&ew_annual_vol) {
            return Err(Error::InvalidArgument(format!(
                "factor-structure EW volatility {ew_annual_vol:.4} outside band [{lo}, {hi}]"
            )));
        }
    }

    let mut meta = vec![CharacteristicMeta::default(); k_all];
    meta[k_all - 1].binary = true;
    meta[k_all - 1].exclude_square = true;
    let panel = CharacteristicsPanel::new(names.clone(), meta, months)?;
    let metadata = Metadata {
        binary: ["flag".to_string()].into(),
        size: Some("size".into()),
        ..Metadata::default()
    };
    Ok(SynthPanel {
        panel,
        metadata,
        truth: SynthTruth {
            scenario,
            seed,
            names,
            theta,
            ew_annual_vol,
            config: config.clone(),
        },
    })
}

/// Writes `<stem>.csv`, `<stem>.meta` and `<stem>.truth.json` into `dir`.
pub fn write_synth(data: &SynthPanel, dir: &Path, stem: &str) -> Result<SynthFiles> {
    std::fs::create_dir_all(dir)?;
    let files = SynthFiles {
        panel: dir.join(format!("{stem}.csv")),
        metadata: dir.join(format!("{stem}.meta")),
        truth: dir.join(format!("{stem}.truth.json")),
    };
    write_panel_csv(&data.panel, &files.panel)?;
    atomic_write_bytes(&files.metadata, data.metadata.to_text().as_bytes())?;
    atomic_write(&files.truth, |b| {
        serde_json::to_writer_pretty(&mut *b, &data.truth)?;
        b.push(b'\n');
        Ok(())
    })?;
    Ok(files)
}

/// Regression-level experiment design.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDesign {
    pub predictors: usize,
    pub observations: usize,
    pub support: usize,
    /// `Var(r_c θ*) / Var(ε)` in population terms.
    pub snr: f64,
    /// Range of |θ*_k| on the support.
    pub magnitude: (f64, f64),
    /// Exactly orthonormal centered predictor returns,
    /// `ṙ_cᵀ ṙ_c / (T - 1) = I`; requires `K < T`.
    pub orthogonal: bool,
}

impl RegressionDesign {
    pub fn new(predictors: usize, observations: usize, support: usize) -> Self {
        Self {
            predictors,
            observations,
            support,
            snr: 5.0,
            magnitude: (1.0, 2.0),
            orthogonal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedRegression {
    pub sample: RegressionSample,
    pub theta: Vec<f64>,
    pub support: Vec<usize>,
}

/// `r_b = 0.01 - r_c θ* + ε` with iid standard normal (or orthonormalized)
/// predictor returns. `support = 0` or `snr = ∞` give null or noiseless data.
pub fn planted_regression(design: &RegressionDesign, seed: u64) -> Result<PlantedRegression> {
    let (k, t) = (design.predictors, design.observations);
    if k == 0 || t < 3 || design.support > k {
        return Err(Error::InvalidArgument(
            "planted regression needs K ≥ 1, T ≥ 3, support ≤ K".into(),
        ));
    }
    if design.orthogonal && k >= t {
        return Err(Error::InvalidArgument("orthogonal design needs K < T".into()));
    }
    if !(design.snr > 0.0) {
        return Err(Error::InvalidArgument("snr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rc = DMatrix::from_fn(t, k, |_, _| normal(&mut rng));
    if design.orthogonal {
        for mut col in rc.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let q = rc.qr().q();
        rc = q * ((t - 1) as f64).sqrt();
    }
    let mut support = sample_indices(&mut rng, k, design.support).into_vec();
    support.sort_unstable();
    let mut theta = vec![0.0; k];
    for &j in &support {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        theta[j] = sign * rng.random_range(design.magnitude.0..=design.magnitude.1);
    }
    let signal_var: f64 = theta.iter().map(|v| v * v).sum();
    let noise_sd = if signal_var > 0.0 {
        (signal_var / design.snr).sqrt()
    } else {
        1.0
    };
    let th = nalgebra::DVector::from_column_slice(&theta);
    let fitted = &rc * th;
    let rb: Vec<f64> = (0..t).map(|i| 0.01 - fitted[i] + noise_sd * normal(&mut rng)).collect();
    let months = (0..t)
        .map(|i| crate::panel::month_offset(200_001, i).map_err(Error::InvalidArgument))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlantedRegression {
        sample: RegressionSample::new(months, rb, rc)?,
        theta,
        support,
    })
}
