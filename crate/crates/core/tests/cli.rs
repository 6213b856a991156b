use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

use risklabs::backtest::read_predictions;
use risklabs::market::io::{read_labels, read_prices};
use risklabs::market::{compute_returns, compute_volatility, exceedance_rate, Horizon};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risklabs")).args(args).output().unwrap()
}

fn fixtures(dir: &Path) -> String {
    let fx = dir.join("fx");
    let o = cli(&["fixtures", "--seed", "3", "--days", "360", "--samples", "30", "--out", fx.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fx.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_is_usage_error() {
    assert_eq!(cli(&[]).status.code(), Some(1));
    assert_eq!(cli(&["backtest", "--window"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_data_error() {
    let o = cli(&["labels", "--in", "/nonexistent/prices.csv", "--out", "/tmp/never.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn labels_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("labels.csv");
    let o = cli(&["labels", "--in", &format!("{fx}/prices.csv"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let prices = read_prices(File::open(format!("{fx}/prices.csv")).unwrap()).unwrap();
    let returns = compute_returns(&prices).unwrap();
    let rows = read_labels(File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), returns.len());
    for (d, (date, cells)) in rows.iter().enumerate() {
        assert_eq!(*date, returns.dates()[d]);
        for (k, h) in Horizon::ALL.into_iter().enumerate() {
            let want = compute_volatility(returns.values(), d, h).ok();
            match (cells[k], want) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                other => panic!("row {d} horizon {}: {other:?}", h.days()),
            }
        }
    }
}

#[test]
fn backtest_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("bt");
    let o = cli(&[
        "backtest",
        "--prices",
        &format!("{fx}/prices.csv"),
        "--vix",
        &format!("{fx}/vix.csv"),
        "--window",
        "120",
        "--iterations",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_predictions(File::open(out.join("predictions.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 60);
    let r: Vec<f64> = records.iter().map(|d| d.realized_return).collect();
    let v: Vec<f64> = records.iter().map(|d| d.var_pred).collect();
    let rate = exceedance_rate(&r, &v).unwrap();
    let text = fs::read_to_string(out.join("exceedance.txt")).unwrap();
    let reported: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("exceedance_rate: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((rate - reported).abs() < 1e-12);
    for f in ["aep_stats.csv", "var_plot.csv", "metadata.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn train_evaluate_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let config = format!("{fx}/config.json");
    let manifest = format!("{fx}/dataset/manifest.json");
    let model = dir.path().join("model");
    let o = cli(&["train", "--config", &config, "--manifest", &manifest, "--epochs", "3", "--out", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "model.ckpt", "network.json", "train_summary.json"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let eval = dir.path().join("eval.csv");
    let o = cli(&[
        "evaluate",
        "--config",
        &config,
        "--manifest",
        &manifest,
        "--model",
        model.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&eval).unwrap();
    assert!(text.starts_with("split,n,mse3"));
    assert!(text.lines().any(|l| l.starts_with("test,")));

    let analysis = dir.path().join("analysis");
    let o = cli(&[
        "analyze",
        "--config",
        &config,
        "--transcript",
        &format!("{fx}/transcript.json"),
        "--news",
        &format!("{fx}/news.jsonl"),
        "--client",
        "mock",
        "--out",
        analysis.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(analysis.join("analysis.json").exists());
}
