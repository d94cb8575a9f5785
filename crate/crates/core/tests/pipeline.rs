use std::path::Path;

use mvport::pipeline::{self, PipelineConfig};
use mvport::synth::{Scenario, SynthConfig};
use mvport::{Method, MethodSettings};

fn small_synth() -> SynthConfig {
    SynthConfig {
        months: 48,
        firms: 60,
        characteristics: 4,
        ..SynthConfig::default()
    }
}

fn config(dir: &Path, methods: Vec<Method>) -> PipelineConfig {
    let files = pipeline::synth(Scenario::PlantedSparse, 7, &small_synth(), &dir.join("data")).unwrap();
    let mut c = PipelineConfig::new(files.panel);
    c.data.metadata = Some(files.metadata);
    c.backtest.window = 24;
    c.backtest.methods = methods;
    c.horseshoe.seed = Some(3);
    c.horseshoe.burn_in = 200;
    c.horseshoe.samples = 300;
    c.output.profile = Some(["c01".into(), "size".into()]);
    c
}

fn run(dir: &Path, c: &PipelineConfig) -> String {
    let out = dir.join("out");
    pipeline::prepare(c, &out).unwrap();
    pipeline::backtest(c, &out).unwrap();
    std::fs::read_to_string(out.join("manifest.json")).unwrap()
}

#[test]
fn backtest_outputs_are_deterministic() {
    let methods = vec![Method::Lasso, Method::Boosting, Method::Horseshoe];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(a.path(), &config(a.path(), methods.clone()));
    let mb = run(b.path(), &config(b.path(), methods));
    assert_eq!(ma, mb);
    for f in [
        "panel.cache",
        "prepare.json",
        "predictor_stats.csv",
        "ledger_lasso_0bp.csv",
        "ledger_lasso_10bp.csv",
        "report_horseshoe_10bp.json",
        "weights_boosting.csv",
        "importance_lasso.csv",
        "attribution_lasso.csv",
        "selection_lasso.csv",
        "weight_stats_lasso.csv",
        "profile_lasso.csv",
    ] {
        assert!(ma.contains(&format!("\"{f}\"")), "{f} missing from manifest");
    }
}

#[test]
fn prepare_cache_is_byte_identical_on_rerun() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), vec![Method::Ols]);
    let out = d.path().join("out");
    pipeline::prepare(&c, &out).unwrap();
    let first = std::fs::read(out.join("panel.cache")).unwrap();
    pipeline::prepare(&c, &out).unwrap();
    assert_eq!(first, std::fs::read(out.join("panel.cache")).unwrap());
}

#[test]
fn zero_policy_matches_benchmark() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), vec![Method::None]);
    let out = d.path().join("out");
    pipeline::prepare(&c, &out).unwrap();
    let reports = pipeline::backtest(&c, &out).unwrap();
    let ledger = std::fs::read_to_string(out.join("ledger_none_0bp.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(ledger.as_bytes());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let gross: f64 = rec[1].parse().unwrap();
        let bench: f64 = rec[4].parse().unwrap();
        assert!((gross - bench).abs() < 1e-12);
    }
    assert_eq!(reports[0].fallback_months, 0);
}

#[test]
fn fit_matches_direct_ols() {
    let d = tempfile::tempdir().unwrap();
    let mut c = config(d.path(), vec![Method::Ols]);
    c.data.squares = false;
    c.data.interactions = false;
    let out = d.path().join("out");
    pipeline::prepare(&c, &out).unwrap();
    let rep = pipeline::fit(&c, &out, Method::Ols, None).unwrap();
    let panel = pipeline::load_prepared(&out).unwrap();
    let obs = mvport::portfolio::factor_observations(&panel, &mvport::BenchmarkKind::EquallyWeighted).unwrap();
    let s = mvport::RegressionSample::from_observations(&obs[obs.len() - 24..]).unwrap();
    let direct = mvport::method::fit_method(Method::Ols, &s, &MethodSettings::default()).unwrap();
    assert_eq!(rep.theta, direct.fit.theta.values);
    assert!(out.join(format!("fit_ols_{}.json", rep.window_end)).exists());
    assert!(out.join(format!("importance_ols_{}.csv", rep.window_end)).exists());

    let huge = pipeline::fit(&c, &out, Method::LassoFixed(1e6), None).unwrap();
    assert_eq!(huge.n_selected, 0);
    assert!(pipeline::fit(&c, &out, Method::Ols, Some(190_001))
        .unwrap_err()
        .is_usage());
}

#[test]
fn horseshoe_without_seed_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let mut c = config(d.path(), vec![Method::Horseshoe]);
    c.horseshoe.seed = None;
    let out = d.path().join("out");
    pipeline::prepare(&c, &out).unwrap();
    assert!(pipeline::fit(&c, &out, Method::Horseshoe, None).unwrap_err().is_usage());
}

#[test]
fn missing_cache_and_bad_data() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), vec![Method::Ols]);
    assert!(pipeline::backtest(&c, &d.path().join("empty")).is_err());
    let bad = d.path().join("bad.csv");
    std::fs::write(&bad, "date,id,x\n200001,a,1\n").unwrap();
    let c = PipelineConfig::new(bad);
    let err = pipeline::prepare(&c, &d.path().join("o")).unwrap_err();
    assert!(err.is_usage());
    assert!(err.to_string().contains("ret_fwd"));
}
