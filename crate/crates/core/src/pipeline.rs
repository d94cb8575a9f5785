//! File-producing runs: prepare, single-window fit, backtest and synthetic
//! data. Every run writes into an output directory and refreshes
//! `manifest.json`, which lists each file with its size and SHA-256.
//!
//! Output layout:
//!
//! ```text
//! panel.cache                     standardized predictor matrices
//! prepare.json                    panel summary
//! predictor_stats.csv             mean / sd / quartiles / market correlations
//! fit_<method>_<YYYYMM>.json      coefficients, selection, hyperparameters
//! importance_<method>_<YYYYMM>.csv
//! ledger_<method>_<cost>bp.csv    one row per out-of-sample month
//! report_<method>_<cost>bp.json   σ, SR, drawdown, VaR, turnover
//! weights_<method>.csv            month, id, weight
//! importance_<method>.csv         window-averaged importance breakdown
//! attribution_<method>.csv        mean θ_k r_c,k contributions
//! selection_<method>.csv          selection shares by predictor class
//! weight_stats_<method>.csv       time-averaged min / max / short fraction
//! profile_<method>.csv            mean weight by characteristic bins
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    average_importance, importance, predictor_return_attribution, predictor_return_stats, selection_stats,
    weight_by_characteristic_profile, weight_stats, write_attribution_csv, write_importance_csv,
    write_predictor_stats_csv, write_profile_csv, write_selection_csv, write_weight_stats_csv,
};
use crate::backtest::{
    align_risk_free, performance_metrics, run_backtest, write_ledger_csv, write_report_json, write_weights_csv,
    BacktestConfig, PerformanceReport,
};
use crate::boosting::BoostingConfig;
use crate::fsio::atomic_write;
use crate::horseshoe::HorseshoeConfig;
use crate::method::fit_method;
use crate::panel::{
    load_panel, prepare_panel, read_cache, write_cache, ColumnSchema, Metadata, MonthId, PreparedPanel,
};
use crate::portfolio::factor_observations;
use crate::synth::{generate_panel, write_synth, Scenario, SynthConfig};
use crate::{BenchmarkKind, Error, Method, MethodSettings, PredictorSpec, RegressionSample, Result, SolverConfig};

pub const CACHE_FILE: &str = "panel.cache";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Shortest estimation window accepted by the pipeline.
pub const MIN_WINDOW: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Firm-month CSV (`date,id,ret_fwd,<characteristics>`).
    pub panel: PathBuf,
    /// `key = value` sidecar with binary flags and exclusion lists.
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    /// Optional CSV `date,rf` of monthly risk-free rates keyed by formation month.
    #[serde(default)]
    pub risk_free: Option<PathBuf>,
    #[serde(default = "yes")]
    pub squares: bool,
    #[serde(default = "yes")]
    pub interactions: bool,
    /// Winsorization percentiles as fractions.
    #[serde(default = "default_winsor")]
    pub winsor: [f64; 2],
    /// Market-value characteristic; falls back to the sidecar's `size`.
    #[serde(default)]
    pub size_column: Option<String>,
}

fn yes() -> bool {
    true
}

fn default_winsor() -> [f64; 2] {
    [0.01, 0.99]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkChoice {
    #[default]
    EquallyWeighted,
    ValueWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window: usize,
    pub costs_bp: Vec<f64>,
    pub benchmark: BenchmarkChoice,
    pub methods: Vec<Method>,
    pub refit_every: usize,
    pub renormalize_drift: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window: 120,
            costs_bp: vec![0.0, 10.0],
            benchmark: BenchmarkChoice::EquallyWeighted,
            methods: vec![Method::Lasso],
            refit_every: 1,
            renormalize_drift: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub weights: bool,
    /// Two characteristic names for the weight profile grid.
    pub profile: Option<[String; 2]>,
    pub profile_bins: usize,
    pub profile_range: f64,
    pub profile_groups: usize,
    /// Posterior traces of horseshoe fits from the `fit` command.
    pub horseshoe_trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            weights: true,
            profile: None,
            profile_bins: 25,
            profile_range: 3.0,
            profile_groups: 5,
            horseshoe_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub backtest: RunConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub boosting: BoostingConfig,
    #[serde(default)]
    pub horseshoe: HorseshoeConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn new(panel: impl Into<PathBuf>) -> Self {
        Self {
            data: DataConfig {
                panel: panel.into(),
                metadata: None,
                risk_free: None,
                squares: true,
                interactions: true,
                winsor: default_winsor(),
                size_column: None,
            },
            backtest: RunConfig::default(),
            solver: SolverConfig::default(),
            boosting: BoostingConfig::default(),
            horseshoe: HorseshoeConfig::default(),
            output: OutputConfig::default(),
            synth: SynthConfig::default(),
        }
    }

    /// Resolves relative data paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.panel);
        if let Some(p) = self.data.metadata.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.risk_free.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let [lo, hi] = self.data.winsor;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad(format!(
                "winsor limits must satisfy 0 <= lower < upper <= 1, got [{lo}, {hi}]"
            ));
        }
        if self.backtest.window < MIN_WINDOW {
            return bad(format!(
                "window must be at least {MIN_WINDOW} months, got {}",
                self.backtest.window
            ));
        }
        if self.backtest.methods.is_empty() {
            return bad("no methods configured".into());
        }
        if self.backtest.costs_bp.is_empty() || self.backtest.costs_bp.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("costs_bp must be a non-empty list of nonnegative numbers".into());
        }
        if self.boosting.step <= 0.0 || self.boosting.step > 1.0 {
            return bad(format!("boosting step must lie in (0, 1], got {}", self.boosting.step));
        }
        self.solver.validate()?;
        self.backtest_config(Method::None, None).validate()
    }

    fn settings(&self) -> MethodSettings {
        MethodSettings {
            solver: self.solver.clone(),
            boosting: self.boosting.clone(),
            horseshoe: self.horseshoe.clone(),
        }
    }

    fn backtest_config(&self, method: Method, size: Option<&str>) -> BacktestConfig {
        let benchmark = match (self.backtest.benchmark, size) {
            (BenchmarkChoice::ValueWeighted, Some(s)) => BenchmarkKind::ValueWeighted {
                size_column: s.to_string(),
            },
            _ => BenchmarkKind::EquallyWeighted,
        };
        BacktestConfig {
            window: self.backtest.window,
            costs: self.backtest.costs_bp.iter().map(|c| c / 10_000.0).collect(),
            benchmark,
            method,
            settings: self.settings(),
            refit_every: self.backtest.refit_every,
            renormalize_drift: self.backtest.renormalize_drift,
        }
    }

    fn metadata(&self) -> Result<Metadata> {
        self.data
            .metadata
            .as_ref()
            .map_or_else(|| Ok(Metadata::default()), Metadata::load)
    }

    fn size_column(&self, meta: &Metadata) -> Option<String> {
        self.data.size_column.clone().or_else(|| meta.size.clone())
    }
}

/// Panel summary printed by `prepare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub months: usize,
    pub first_month: MonthId,
    pub last_month: MonthId,
    pub firms_min: usize,
    pub firms_max: usize,
    pub cells: usize,
    pub dropped_rows: usize,
    pub characteristics: usize,
    pub predictors: usize,
    /// (month, predictor) pairs with no cross-sectional variation.
    pub degenerate_columns: usize,
}

impl std::fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "months       {} ({}..{})",
            self.months, self.first_month, self.last_month
        )?;
        writeln!(f, "firms/month  {}..{}", self.firms_min, self.firms_max)?;
        writeln!(f, "cells        {} ({} rows dropped)", self.cells, self.dropped_rows)?;
        writeln!(
            f,
            "predictors   {} from {} characteristics",
            self.predictors, self.characteristics
        )?;
        write!(f, "degenerate   {} month-columns", self.degenerate_columns)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |b| {
        serde_json::to_writer_pretty(&mut *b, value)?;
        b.push(b'\n');
        Ok(())
    })
}

/// Loads, cleans and expands the panel, then writes the cache, the summary and
/// predictor-return statistics.
pub fn prepare(config: &PipelineConfig, out_dir: &Path) -> Result<PrepareSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let meta = config.metadata()?;
    let raw = load_panel(&config.data.panel, &ColumnSchema::default())?.with_metadata(&meta)?;
    let spec = PredictorSpec::from_metadata(raw.names(), &meta, config.data.squares, config.data.interactions)?;
    let size = config.size_column(&meta);
    if config.backtest.benchmark == BenchmarkChoice::ValueWeighted && size.is_none() {
        return Err(Error::InvalidArgument(
            "value-weighted benchmark needs data.size_column or `size` in the metadata sidecar".into(),
        ));
    }
    let [lo, hi] = config.data.winsor;
    let prepared = prepare_panel(&raw, &spec, (lo, hi), size.as_deref())?;
    write_cache(&prepared, out_dir.join(CACHE_FILE))?;

    let firms: Vec<usize> = prepared.months.iter().map(|m| m.n_firms()).collect();
    let ids = prepared.month_ids();
    let summary = PrepareSummary {
        months: ids.len(),
        first_month: ids.first().copied().unwrap_or(0),
        last_month: ids.last().copied().unwrap_or(0),
        firms_min: firms.iter().copied().min().unwrap_or(0),
        firms_max: firms.iter().copied().max().unwrap_or(0),
        cells: raw.n_cells(),
        dropped_rows: raw.dropped_rows(),
        characteristics: raw.names().len(),
        predictors: prepared.n_predictors(),
        degenerate_columns: prepared.degenerate_count(),
    };
    write_json(&out_dir.join("prepare.json"), &summary)?;

    if prepared.months.len() >= 2 {
        let ew = factor_observations(&prepared, &BenchmarkKind::EquallyWeighted)?;
        let vw = match &size {
            Some(s) => Some(
                factor_observations(&prepared, &BenchmarkKind::ValueWeighted { size_column: s.clone() })?
                    .iter()
                    .map(|o| o.benchmark_return)
                    .collect::<Vec<_>>(),
            ),
            None => None,
        };
        let (groups, rows) = predictor_return_stats(&ew, &prepared.names, vw.as_deref())?;
        write_predictor_stats_csv(&groups, &rows, &out_dir.join("predictor_stats.csv"))?;
    }
    write_manifest(out_dir, "prepare")?;
    Ok(summary)
}

/// Reads the cache written by [`prepare`].
pub fn load_prepared(out_dir: &Path) -> Result<PreparedPanel> {
    let path = out_dir.join(CACHE_FILE);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "no prepared panel at {}; run `prepare` first",
            path.display()
        )));
    }
    read_cache(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub credibility: f64,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub sigma2_mean: f64,
    pub tau_ess: f64,
}

/// Single-window fit written by [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub window: usize,
    pub window_start: MonthId,
    pub window_end: MonthId,
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub selected: Vec<bool>,
    pub n_selected: usize,
    pub hyperparameters: BTreeMap<String, f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Unpenalized in-sample objective `(1/2) var(r_p)`.
    pub objective: f64,
    pub posterior: Option<PosteriorReport>,
}

fn window_sample(
    panel: &PreparedPanel,
    kind: &BenchmarkKind,
    window: usize,
    end: Option<MonthId>,
) -> Result<RegressionSample> {
    let obs = factor_observations(panel, kind)?;
    let last = match end {
        Some(m) => obs.iter().position(|o| o.month == m).ok_or(Error::UnknownMonth(m))?,
        None => obs
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Insufficient("empty panel".into()))?,
    };
    if last + 1 < window {
        return Err(Error::InvalidArgument(format!(
            "window of {window} months ending {} starts before the panel",
            obs[last].month
        )));
    }
    RegressionSample::from_observations(&obs[last + 1 - window..=last])
}

fn size_from_cache(panel: &PreparedPanel, config: &PipelineConfig) -> Result<Option<String>> {
    if config.backtest.benchmark == BenchmarkChoice::EquallyWeighted {
        return Ok(None);
    }
    let meta = config.metadata()?;
    let size = config.size_column(&meta);
    if size.is_none() || panel.months.iter().any(|m| m.size.is_none()) {
        return Err(Error::InvalidArgument(
            "value-weighted benchmark requested but the cache holds no size column".into(),
        ));
    }
    Ok(size)
}

/// Fits `method` on the window of `config.backtest.window` observations
/// ending at `end` (default: the last month with a realized return).
pub fn fit(config: &PipelineConfig, out_dir: &Path, method: Method, end: Option<MonthId>) -> Result<FitReport> {
    config.validate()?;
    let panel = load_prepared(out_dir)?;
    let size = size_from_cache(&panel, config)?;
    let bt = config.backtest_config(method, size.as_deref());
    let sample = window_sample(&panel, &bt.benchmark, bt.window, end)?;
    let out = fit_method(method, &sample, &bt.settings)?;
    let th = &out.fit.theta;
    let window_end = sample.window_end();
    let report = FitReport {
        method: method.to_string(),
        window: sample.n_obs(),
        window_start: sample.months[0],
        window_end,
        names: panel.names.as_ref().clone(),
        theta: th.values.clone(),
        selected: th.selected.clone(),
        n_selected: th.n_selected(),
        hyperparameters: th.hyperparameters.clone(),
        converged: out.fit.converged,
        sweeps: out.fit.sweeps,
        objective: sample.objective(&th.values),
        posterior: out.posterior.as_ref().map(|p| PosteriorReport {
            credibility: p.credibility,
            theta_lower: p.theta_lower.clone(),
            theta_upper: p.theta_upper.clone(),
            sigma2_mean: p.sigma2_mean,
            tau_ess: p.tau_ess,
        }),
    };
    let tag = format!("{}_{window_end}", method.label());
    write_json(&out_dir.join(format!("fit_{tag}.json")), &report)?;
    let imp = importance(th, &sample)?;
    write_importance_csv(&imp, &panel.names, &out_dir.join(format!("importance_{tag}.csv")))?;
    if config.output.horseshoe_trace {
        if let Some(p) = &out.posterior {
            crate::horseshoe::write_trace(
                &out_dir.join(format!("trace_{tag}.bin")),
                &[("tau", &p.tau_trace), ("sigma2", &p.sigma2_trace)],
            )?;
        }
    }
    write_manifest(out_dir, "fit")?;
    Ok(report)
}

fn cost_label(bp: f64) -> String {
    format!("{bp}bp")
}

fn read_risk_free(path: &Path) -> Result<BTreeMap<MonthId, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |n: &str| {
        headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::MissingColumn(n.to_string()))
    };
    let (mc, rc) = (col("date")?, col("rf")?);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let month: MonthId = rec[mc].parse().map_err(|_| perr(format!("bad month `{}`", &rec[mc])))?;
        let rf: f64 = rec[rc].parse().map_err(|_| perr(format!("bad rate `{}`", &rec[rc])))?;
        out.insert(month, rf);
    }
    Ok(out)
}

/// Runs every configured method over the rolling windows and writes ledgers,
/// reports and analytics.
pub fn backtest(config: &PipelineConfig, out_dir: &Path) -> Result<Vec<PerformanceReport>> {
    config.validate()?;
    let panel = load_prepared(out_dir)?;
    let size = size_from_cache(&panel, config)?;
    let rf_table = config.data.risk_free.as_deref().map(read_risk_free).transpose()?;
    let mut reports = Vec::new();
    for &method in &config.backtest.methods {
        let bt = config.backtest_config(method, size.as_deref());
        let ledger = run_backtest(&panel, &bt)?;
        let rf = rf_table.as_ref().map(|t| align_risk_free(&ledger, t)).transpose()?;
        let report = performance_metrics(&ledger, rf.as_deref())?;
        let label = method.label();
        for (i, bp) in config.backtest.costs_bp.iter().enumerate() {
            let tag = format!("{label}_{}", cost_label(*bp));
            write_ledger_csv(&ledger, i, &out_dir.join(format!("ledger_{tag}.csv")))?;
            write_report_json(&report, i, &out_dir.join(format!("report_{tag}.json")))?;
        }
        if config.output.weights {
            write_weights_csv(&ledger, &out_dir.join(format!("weights_{label}.csv")))?;
        }

        // Importance per refit window, averaged.
        let obs = factor_observations(&panel, &bt.benchmark)?;
        let t0 = bt.window;
        let parts = crate::par::map_range(ledger.thetas.len(), |i| -> Result<_> {
            let t = t0 + i * bt.refit_every;
            let sample = RegressionSample::from_observations(&obs[t - t0..t])?;
            importance(&ledger.thetas[i], &sample)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let names = &ledger.predictor_names;
        write_importance_csv(
            &average_importance(&parts)?,
            names,
            &out_dir.join(format!("importance_{label}.csv")),
        )?;
        write_attribution_csv(
            &predictor_return_attribution(&ledger)?,
            names,
            &out_dir.join(format!("attribution_{label}.csv")),
        )?;
        write_selection_csv(
            &selection_stats(&ledger.thetas, names)?,
            &out_dir.join(format!("selection_{label}.csv")),
        )?;
        write_weight_stats_csv(
            &weight_stats(&ledger)?,
            &out_dir.join(format!("weight_stats_{label}.csv")),
        )?;
        if let Some([a, b]) = &config.output.profile {
            let o = &config.output;
            let p = weight_by_characteristic_profile(
                &ledger,
                &panel,
                a,
                b,
                o.profile_bins,
                o.profile_range,
                o.profile_groups,
            )?;
            write_profile_csv(&p, &out_dir.join(format!("profile_{label}.csv")))?;
        }
        info!(
            "{method}: sigma {:.4}, SR {:.3} (gross), mean turnover {:.3}",
            report.gross.sigma, report.gross.sharpe, report.mean_turnover
        );
        reports.push(report);
    }
    write_manifest(out_dir, "backtest")?;
    Ok(reports)
}

/// Writes `<scenario>.csv`, `.meta` and `.truth.json` into `out_dir`.
pub fn synth(scenario: Scenario, seed: u64, config: &SynthConfig, out_dir: &Path) -> Result<crate::synth::SynthFiles> {
    let data = generate_panel(scenario, seed, config)?;
    let files = write_synth(&data, out_dir, scenario.name())?;
    write_manifest(out_dir, "synth")?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Command that last refreshed the manifest.
    pub command: String,
    pub files: Vec<ManifestEntry>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
            let name = rel.to_string_lossy();
            if name != MANIFEST_FILE && !name.ends_with(".part") {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Hashes every file under `out_dir` (except the manifest and partial files)
/// into `manifest.json`, sorted by relative path.
pub fn write_manifest(out_dir: &Path, command: &str) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(out_dir, out_dir, &mut files)?;
    files.sort();
    let entries = files
        .iter()
        .map(|rel| -> Result<ManifestEntry> {
            let bytes = std::fs::read(out_dir.join(rel))?;
            Ok(ManifestEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        files: entries,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
