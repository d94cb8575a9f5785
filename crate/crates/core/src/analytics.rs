//! Summaries of fitted policies: importance decomposition, predictor-return
//! attribution, selection statistics and weight statistics, plus plot-data
//! CSV writers.
//!
//! The importance of predictor `k` is the first-order derivative of the
//! minimum-variance objective, `(Σ̂_c θ + σ̂_bc)_k`, split into the own-variance
//! term `Σ̂_c,kk θ_k`, the cross-covariance term `Σ_{j≠k} Σ̂_c,kj θ_j` and the
//! benchmark-covariance term `σ̂_bc,k`.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestLedger;
use crate::fsio::write_csv;
use crate::panel::{classify, PredictorClass, PreparedPanel};
use crate::portfolio::{CoefficientVector, FactorObservation};
use crate::{Error, RegressionSample, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceBreakdown {
    pub own: Vec<f64>,
    pub cross: Vec<f64>,
    pub benchmark: Vec<f64>,
    pub total: Vec<f64>,
    /// -1, 0 or 1.
    pub sign: Vec<i8>,
}

pub fn importance(theta: &CoefficientVector, sample: &RegressionSample) -> Result<ImportanceBreakdown> {
    let k = sample.n_predictors();
    if theta.len() != k {
        return Err(Error::dim("importance coefficients", k, theta.len()));
    }
    let th = &theta.values;
    let sigma_theta = sample.covariance_times(th);
    let bench = sample.benchmark_covariance();
    let denom = (sample.n_obs() - 1) as f64;
    let rc = &sample.centered_predictors;
    let own: Vec<f64> = (0..k).map(|j| rc.column(j).norm_squared() / denom * th[j]).collect();
    let cross: Vec<f64> = (0..k).map(|j| sigma_theta[j] - own[j]).collect();
    let benchmark: Vec<f64> = bench.iter().copied().collect();
    let total = (0..k).map(|j| own[j] + cross[j] + benchmark[j]).collect();
    let sign = th
        .iter()
        .map(|t| {
            if *t > 0.0 {
                1
            } else if *t < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok(ImportanceBreakdown {
        own,
        cross,
        benchmark,
        total,
        sign,
    })
}

/// Component-wise mean over windows.
pub fn average_importance(parts: &[ImportanceBreakdown]) -> Result<ImportanceBreakdown> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Insufficient("no importance breakdowns to average".into()))?;
    let k = first.own.len();
    let n = parts.len() as f64;
    let avg = |f: fn(&ImportanceBreakdown) -> &Vec<f64>| -> Vec<f64> {
        (0..k).map(|j| parts.iter().map(|p| f(p)[j]).sum::<f64>() / n).collect()
    };
    let own = avg(|p| &p.own);
    let cross = avg(|p| &p.cross);
    let benchmark = avg(|p| &p.benchmark);
    let total = (0..k).map(|j| own[j] + cross[j] + benchmark[j]).collect();
    let mean_sign: Vec<f64> = (0..k)
        .map(|j| parts.iter().map(|p| f64::from(p.sign[j])).sum::<f64>())
        .collect();
    Ok(ImportanceBreakdown {
        own,
        cross,
        benchmark,
        total,
        sign: mean_sign
            .iter()
            .map(|s| s.signum() as i8 * i8::from(*s != 0.0))
            .collect(),
    })
}

/// Ranking of indices by `key`, ties broken by predictor name.
fn rank(key: &[f64], names: &[String], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = key[a].total_cmp(&key[b]);
        let o = if descending { o.reverse() } else { o };
        o.then_with(|| names[a].cmp(&names[b]))
    });
    idx
}

/// Own-variance ascending, cross-covariance descending, benchmark-covariance
/// descending.
pub fn importance_rankings(b: &ImportanceBreakdown, names: &[String]) -> [Vec<usize>; 3] {
    [
        rank(&b.own, names, false),
        rank(&b.cross, names, true),
        rank(&b.benchmark, names, true),
    ]
}

/// Mean out-of-sample contribution `θ_k r_c,k` per predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub per_predictor: Vec<f64>,
    /// Mean of `θᵀ r_c` over the ledger.
    pub aggregate: f64,
}

impl Attribution {
    /// Indices of the `n` largest and `n` smallest contributions.
    pub fn top_bottom(&self, n: usize, names: &[String]) -> (Vec<usize>, Vec<usize>) {
        let desc = rank(&self.per_predictor, names, true);
        let asc = rank(&self.per_predictor, names, false);
        (desc.into_iter().take(n).collect(), asc.into_iter().take(n).collect())
    }
}

pub fn predictor_return_attribution(ledger: &BacktestLedger) -> Result<Attribution> {
    let rows = ledger.rows.len();
    if rows == 0 {
        return Err(Error::Insufficient("empty ledger".into()));
    }
    let k = ledger.predictor_names.len();
    let mut per = vec![0.0; k];
    let mut agg = 0.0;
    for (i, r) in ledger.rows.iter().enumerate() {
        let th = &ledger.theta(i).values;
        for j in 0..k {
            let c = th[j] * r.predictor_returns[j];
            per[j] += c;
            agg += c;
        }
    }
    Ok(Attribution {
        per_predictor: per.iter().map(|v| v / rows as f64).collect(),
        aggregate: agg / rows as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub windows: usize,
    pub mean_selected: f64,
    /// Main, second-order, interaction; percentages of all selections.
    pub class_share: [f64; 3],
    /// Share of each class in the predictor pool, percent.
    pub pool_share: [f64; 3],
    /// `class_share - pool_share`.
    pub deviation: [f64; 3],
    /// No predictor was ever selected; shares are reported as 0.
    pub empty: bool,
}

fn class_index(c: PredictorClass) -> usize {
    match c {
        PredictorClass::Main => 0,
        PredictorClass::SecondOrder => 1,
        PredictorClass::Interaction => 2,
    }
}

pub fn selection_stats(thetas: &[CoefficientVector], names: &[String]) -> Result<SelectionStats> {
    let classes = names
        .iter()
        .map(|n| {
            classify(n)
                .map(class_index)
                .ok_or_else(|| Error::InvalidArgument(format!("cannot classify predictor `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pool = [0.0; 3];
    for c in &classes {
        pool[*c] += 1.0;
    }
    let pool_share = pool.map(|p| 100.0 * p / names.len().max(1) as f64);
    let mut counts = [0.0; 3];
    let mut total = 0usize;
    for th in thetas {
        if th.len() != names.len() {
            return Err(Error::dim("selection mask", names.len(), th.len()));
        }
        for j in th.support() {
            counts[classes[j]] += 1.0;
            total += 1;
        }
    }
    let empty = total == 0;
    let class_share = if empty {
        [0.0; 3]
    } else {
        counts.map(|c| 100.0 * c / total as f64)
    };
    let deviation = if empty {
        [0.0; 3]
    } else {
        [0, 1, 2].map(|i| class_share[i] - pool_share[i])
    };
    Ok(SelectionStats {
        windows: thetas.len(),
        mean_selected: if thetas.is_empty() {
            0.0
        } else {
            total as f64 / thetas.len() as f64
        },
        class_share,
        pool_share,
        deviation,
        empty,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub min: f64,
    pub max: f64,
    /// Average fraction of negative weights.
    pub short: f64,
}

pub fn weight_stats(ledger: &BacktestLedger) -> Result<WeightStats> {
    let n = ledger.rows.len();
    if n == 0 {
        return Err(Error::Insufficient("empty ledger".into()));
    }
    let (mut lo, mut hi, mut short) = (0.0, 0.0, 0.0);
    for r in &ledger.rows {
        let w = &r.weights.weights;
        lo += w.iter().copied().fold(f64::INFINITY, f64::min);
        hi += w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        short += w.iter().filter(|x| **x < 0.0).count() as f64 / w.len() as f64;
    }
    Ok(WeightStats {
        min: lo / n as f64,
        max: hi / n as f64,
        short: short / n as f64,
    })
}

/// Mean weight by bins of one standardized characteristic and quantile groups
/// of another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub char_a: String,
    pub char_b: String,
    /// `bins + 1` edges over the clipped range of `char_a`.
    pub edges: Vec<f64>,
    pub groups: usize,
    /// `mean[bin][group]`, `None` for empty cells.
    pub mean: Vec<Vec<Option<f64>>>,
    pub count: Vec<Vec<usize>>,
}

/// Quantile group of each value: rank `i` (ties by position) maps to
/// `floor(i × groups / n)`.
pub fn quantile_groups(values: &[f64], groups: usize) -> Vec<usize> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out = vec![0; n];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = rank * groups / n;
    }
    out
}

/// Standardized `char_a` is clipped to `[-range, range]` and cut into `bins`
/// equal bins; `char_b` is split into `groups` quantile groups each month.
pub fn weight_by_characteristic_profile(
    ledger: &BacktestLedger,
    panel: &PreparedPanel,
    char_a: &str,
    char_b: &str,
    bins: usize,
    range: f64,
    groups: usize,
) -> Result<WeightProfile> {
    if bins == 0 || groups == 0 || !(range > 0.0) {
        return Err(Error::InvalidArgument(
            "profile needs positive bins, groups and range".into(),
        ));
    }
    let a = panel.predictor_index(char_a)?;
    let b = panel.predictor_index(char_b)?;
    let mut sum = vec![vec![0.0; groups]; bins];
    let mut count = vec![vec![0usize; groups]; bins];
    let width = 2.0 * range / bins as f64;
    for r in &ledger.rows {
        let pm = &panel.months[panel.position(r.month)?];
        if pm.matrix.firm_ids != r.weights.firm_ids {
            return Err(Error::InvalidArgument(format!(
                "ledger and panel disagree on firms in month {}",
                r.month
            )));
        }
        let qa = pm.matrix.column(a);
        let qb = quantile_groups(pm.matrix.column(b), groups);
        for (i, w) in r.weights.weights.iter().enumerate() {
            let x = qa[i].clamp(-range, range);
            let bin = (((x + range) / width) as usize).min(bins - 1);
            sum[bin][qb[i]] += w;
            count[bin][qb[i]] += 1;
        }
    }
    let mean = sum
        .iter()
        .zip(&count)
        .map(|(s, c)| s.iter().zip(c).map(|(s, c)| (*c > 0).then(|| s / *c as f64)).collect())
        .collect();
    Ok(WeightProfile {
        char_a: char_a.into(),
        char_b: char_b.into(),
        edges: (0..=bins).map(|i| -range + width * i as f64).collect(),
        groups,
        mean,
        count,
    })
}

/// Descriptive statistics of one predictor-return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReturnStats {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub p25: f64,
    pub p75: f64,
    pub corr_benchmark: f64,
    /// Correlation with a second (typically value-weighted) market series.
    pub corr_alt: Option<f64>,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (crate::linalg::mean(a), crate::linalg::mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        f64::NAN
    }
}

/// Mean, sd, quartiles and market correlations of every predictor return,
/// followed by class averages labelled `all`, `main`, `second-order` and
/// `interaction`.
pub fn predictor_return_stats(
    obs: &[FactorObservation],
    names: &[String],
    alt_market: Option<&[f64]>,
) -> Result<(Vec<PredictorReturnStats>, Vec<PredictorReturnStats>)> {
    if obs.len() < 2 {
        return Err(Error::Insufficient(
            "predictor-return statistics need two months".into(),
        ));
    }
    if let Some(alt) = alt_market {
        if alt.len() != obs.len() {
            return Err(Error::dim("alternative market series", obs.len(), alt.len()));
        }
    }
    let bench: Vec<f64> = obs.iter().map(|o| o.benchmark_return).collect();
    let rows = crate::par::map_range(names.len(), |k| {
        let series: Vec<f64> = obs.iter().map(|o| o.predictor_returns[k]).collect();
        let sorted = crate::linalg::sorted_copy(&series);
        PredictorReturnStats {
            name: names[k].clone(),
            mean: crate::linalg::mean(&series),
            sd: crate::linalg::sample_variance(&series).sqrt(),
            p25: crate::linalg::quantile_linear(&sorted, 0.25),
            p75: crate::linalg::quantile_linear(&sorted, 0.75),
            corr_benchmark: correlation(&series, &bench),
            corr_alt: alt_market.map(|m| correlation(&series, m)),
        }
    });
    let mut groups = Vec::new();
    let labels: [(&str, Option<PredictorClass>); 4] = [
        ("all", None),
        ("main", Some(PredictorClass::Main)),
        ("second-order", Some(PredictorClass::SecondOrder)),
        ("interaction", Some(PredictorClass::Interaction)),
    ];
    for (label, class) in labels {
        let members: Vec<&PredictorReturnStats> = rows
            .iter()
            .filter(|r| class.is_none() || classify(&r.name) == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let avg = |f: fn(&PredictorReturnStats) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
        groups.push(PredictorReturnStats {
            name: label.into(),
            mean: avg(|r| r.mean),
            sd: avg(|r| r.sd),
            p25: avg(|r| r.p25),
            p75: avg(|r| r.p75),
            corr_benchmark: avg(|r| r.corr_benchmark),
            corr_alt: alt_market.map(|_| avg(|r| r.corr_alt.unwrap_or(f64::NAN))),
        });
    }
    Ok((groups, rows))
}

fn f(x: f64) -> String {
    format!("{x:.17e}")
}

/// `name,class,own,cross,benchmark,total,sign,rank_own,rank_cross,rank_benchmark`.
pub fn write_importance_csv(b: &ImportanceBreakdown, names: &[String], path: &Path) -> Result<()> {
    let ranks = importance_rankings(b, names);
    let mut pos = vec![[0usize; 3]; names.len()];
    for (r, order) in ranks.iter().enumerate() {
        for (p, &j) in order.iter().enumerate() {
            pos[j][r] = p + 1;
        }
    }
    write_csv(
        path,
        &[
            "name",
            "class",
            "own",
            "cross",
            "benchmark",
            "total",
            "sign",
            "rank_own",
            "rank_cross",
            "rank_benchmark",
        ],
        (0..names.len()).map(|j| {
            vec![
                names[j].clone(),
                classify(&names[j]).map_or("", PredictorClass::label).to_string(),
                f(b.own[j]),
                f(b.cross[j]),
                f(b.benchmark[j]),
                f(b.total[j]),
                b.sign[j].to_string(),
                pos[j][0].to_string(),
                pos[j][1].to_string(),
                pos[j][2].to_string(),
            ]
        }),
    )
}

/// `name,mean_contribution`, sorted descending; first row is the aggregate.
pub fn write_attribution_csv(a: &Attribution, names: &[String], path: &Path) -> Result<()> {
    let order = rank(&a.per_predictor, names, true);
    write_csv(
        path,
        &["name", "mean_contribution"],
        std::iter::once(vec!["aggregate".to_string(), f(a.aggregate)])
            .chain(order.into_iter().map(|j| vec![names[j].clone(), f(a.per_predictor[j])])),
    )
}

/// `class,pool_share,class_share,deviation` plus a `mean_selected` row.
pub fn write_selection_csv(s: &SelectionStats, path: &Path) -> Result<()> {
    write_csv(
        path,
        &["class", "pool_share", "class_share", "deviation"],
        PredictorClass::ALL
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    c.label().to_string(),
                    f(s.pool_share[i]),
                    f(s.class_share[i]),
                    f(s.deviation[i]),
                ]
            })
            .chain(std::iter::once(vec![
                "mean_selected".to_string(),
                String::new(),
                f(s.mean_selected),
                String::new(),
            ])),
    )
}

/// `min,max,short`.
pub fn write_weight_stats_csv(s: &WeightStats, path: &Path) -> Result<()> {
    write_csv(path, &["min", "max", "short"], [vec![f(s.min), f(s.max), f(s.short)]])
}

/// Long format `bin_lo,bin_hi,group,mean_weight,count`; empty cells leave
/// `mean_weight` blank.
pub fn write_profile_csv(p: &WeightProfile, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for (i, row) in p.mean.iter().enumerate() {
        for (g, m) in row.iter().enumerate() {
            rows.push(vec![
                f(p.edges[i]),
                f(p.edges[i + 1]),
                (g + 1).to_string(),
                m.map_or(String::new(), f),
                p.count[i][g].to_string(),
            ]);
        }
    }
    write_csv(path, &["bin_lo", "bin_hi", "group", "mean_weight", "count"], rows)
}

/// `name,mean,sd,p25,p75,corr_benchmark,corr_alt`, group rows first.
pub fn write_predictor_stats_csv(
    groups: &[PredictorReturnStats],
    rows: &[PredictorReturnStats],
    path: &Path,
) -> Result<()> {
    write_csv(
        path,
        &["name", "mean", "sd", "p25", "p75", "corr_benchmark", "corr_alt"],
        groups.iter().chain(rows).map(|r| {
            vec![
                r.name.clone(),
                f(r.mean),
                f(r.sd),
                f(r.p25),
                f(r.p75),
                f(r.corr_benchmark),
                r.corr_alt.map_or(String::new(), f),
            ]
        }),
    )
}
