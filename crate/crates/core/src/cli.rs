//! Command-line surface. Exit codes: 0 success, 1 usage error, 2 data or
//! configuration error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backtest::{emit_report, rolling_backtest, BacktestConfig, BacktestData, BacktestError, PredictorKind};
use crate::bayes_var::io::{read_panel, write_panel, write_summary};
use crate::bayes_var::{build_panel, sample_posterior, summarize, BayesVarError, McmcConfig, RhatMethod, VarModelSpec};
use crate::fixtures::{generate, generate_market, synthetic_news, synthetic_transcript, FixtureSpec, MarketSpec, Planted};
use crate::llm::pipeline::write_outputs;
use crate::llm::{
    analyze, read_news_jsonl, AuditedClient, ChatClientConfig, HttpClient, LlmClient, LlmError, MockClient,
    PipelineConfig, QuestionBank, TopicBank, Transcript,
};
use crate::market::io::{read_prices, read_vix, write_labels, CsvError};
use crate::market::{compute_returns, MarketError, QuantileLevel};
use crate::neural::checkpoint::{self, CheckpointError};
use crate::neural::{FusionNetwork, NetworkConfig, NeuralError};
use crate::training::grid::write_grid;
use crate::training::metrics::write_epoch_metrics;
use crate::training::ablation::write_ablation;
use crate::training::{
    ablation_run, evaluate, grid_search, load_dataset, load_manifest, train, EvalMetrics, GridSpec, StopReason,
    TrainConfig, TrainingError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "risklabs", version, about = "Volatility and value-at-risk forecasting toolkit")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Seed for every random choice; overrides seeds in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration file (see `RunConfig`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prices CSV to volatility labels CSV.
    Labels(InputArg),
    /// Prices CSV to log-volatility panel CSV.
    Panel(InputArg),
    /// Panel CSV (or prices with --prices) to posterior summary CSV.
    Mcmc(McmcArgs),
    /// Train the fusion network on a manifest.
    Train(ManifestArg),
    /// Evaluate a trained model on every split of a manifest.
    Evaluate(EvaluateArgs),
    /// Hyperparameter grid over batch size and learning rate.
    Grid(ManifestArg),
    /// Modality ablation table.
    Ablate(ManifestArg),
    /// Transcript and news analysis pipeline.
    Analyze(AnalyzeArgs),
    /// Rolling-window backtest.
    Backtest(BacktestArgs),
    /// Write a synthetic dataset.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct InputArg {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    /// Panel CSV.
    #[arg(long = "in", required_unless_present = "prices")]
    pub input: Option<PathBuf>,
    /// Build the panel from a prices CSV instead.
    #[arg(long, conflicts_with = "input")]
    pub prices: Option<PathBuf>,
    /// Use the classic Gelman-Rubin R-hat instead of rank-normalized split R-hat.
    #[arg(long)]
    pub classic_rhat: bool,
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overrides the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `train` (model.ckpt and network.json).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClientKind {
    /// Deterministic offline client.
    Mock,
    /// HTTP endpoint from the `llm` config section.
    Http,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Transcript JSON: {"ticker", "date", "sentences": [...]}.
    #[arg(long)]
    pub transcript: PathBuf,
    /// News JSONL, one {"ticker", "date", "text", "next_return"?} per line.
    #[arg(long)]
    pub news: Option<PathBuf>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "http")]
    pub client: ClientKind,
    /// Append every request and response to this JSONL file.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Prices CSV (date,price).
    #[arg(long)]
    pub prices: PathBuf,
    /// Earnings-call manifest (needed by the neural predictor).
    #[arg(long)]
    pub calls: Option<PathBuf>,
    /// VIX CSV (date,vix).
    #[arg(long)]
    pub vix: Option<PathBuf>,
    /// Default: historical.
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// Trailing window in returns. Default 250.
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of target days. Default 100.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Daily decay rate of call features. Default 0.05.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantedArg {
    None,
    Linear,
    Vix,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Returns in the price path.
    #[arg(long, default_value_t = 600)]
    pub days: usize,
    /// Samples in the training dataset.
    #[arg(long, default_value_t = 40)]
    pub samples: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub planted: PlantedArg,
}

/// Contents of `--config`; every section and field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mcmc: McmcConfig,
    pub var_spec: VarModelSpec,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub backtest: BacktestConfig,
    pub pipeline: PipelineConfig,
    pub llm: ChatClientConfig,
    /// Network shape for generated fixtures.
    pub fixture_network: Option<NetworkConfig>,
}

/// A failure mapped to an exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn data(m: impl ToString) -> Self {
        Failure { code: EXIT_DATA, message: m.to_string() }
    }
    fn numerical(m: impl ToString) -> Self {
        Failure { code: EXIT_NUMERICAL, message: m.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e)
    }
}
impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::data(e)
    }
}
impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Self {
        Failure::data(e)
    }
}
impl From<MarketError> for Failure {
    fn from(e: MarketError) -> Self {
        Failure::data(e)
    }
}
impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::data(e)
    }
}
impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        Failure::data(e)
    }
}
impl From<NeuralError> for Failure {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::NumericalFailure(_) => Failure::numerical(e),
            _ => Failure::data(e),
        }
    }
}
impl From<BayesVarError> for Failure {
    fn from(e: BayesVarError) -> Self {
        match e {
            BayesVarError::NumericalFailure(_) => Failure::numerical(e),
            _ => Failure::data(e),
        }
    }
}
impl From<TrainingError> for Failure {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Neural(n) => n.into(),
            _ => Failure::data(e),
        }
    }
}
impl From<BacktestError> for Failure {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::BayesVar(b) => b.into(),
            BacktestError::Training(t) => t.into(),
            _ => Failure::data(e),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> std::result::Result<RunConfig, Failure> {
    let mut cfg: RunConfig = match &cli.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.mcmc.seed = s;
        cfg.train.seed = s;
        cfg.backtest.seed = s;
    }
    Ok(cfg)
}

fn out_path(cli: &Cli) -> std::result::Result<&Path, Failure> {
    cli.out.as_deref().ok_or_else(|| Failure { code: EXIT_USAGE, message: "--out is required".into() })
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn dispatch(cli: &Cli) -> Outcome {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Labels(a) => {
            let returns = compute_returns(&read_prices(File::open(&a.input)?)?)?;
            write_labels(create(out_path(cli)?)?, &returns)?;
        }
        Command::Panel(a) => {
            let returns = compute_returns(&read_prices(File::open(&a.input)?)?)?;
            write_panel(create(out_path(cli)?)?, &build_panel(&returns)?)?;
        }
        Command::Mcmc(a) => mcmc(cli, &cfg, a)?,
        Command::Train(a) => train_cmd(cli, &cfg, a)?,
        Command::Evaluate(a) => evaluate_cmd(cli, &cfg, a)?,
        Command::Grid(a) => {
            let (data, tc) = dataset(&cfg, a)?;
            let result = grid_search(&data, &tc, &cfg.grid)?;
            let out = out_path(cli)?;
            fs::create_dir_all(out)?;
            write_grid(create(&out.join("grid.csv"))?, &result)?;
            let best = &result.rows[result.best];
            println!("best cell {}: batch {} lr {} val mean MSE {:.6}", best.cell, best.batch_size, best.lr, best.val_mean_mse);
        }
        Command::Ablate(a) => {
            let (data, tc) = dataset(&cfg, a)?;
            let rows = ablation_run(&data, &tc)?;
            let out = out_path(cli)?;
            fs::create_dir_all(out)?;
            write_ablation(create(&out.join("ablation.csv"))?, &rows)?;
            for r in &rows {
                println!("{:<32} mean MSE {:.6}", r.configuration, r.mean_mse);
            }
        }
        Command::Analyze(a) => analyze_cmd(cli, &cfg, a)?,
        Command::Backtest(a) => backtest_cmd(cli, &cfg, a)?,
        Command::Fixtures(a) => fixtures_cmd(cli, &cfg, a)?,
    }
    Ok(())
}

fn mcmc(cli: &Cli, cfg: &RunConfig, a: &McmcArgs) -> Outcome {
    let panel = match (&a.input, &a.prices) {
        (Some(p), _) => read_panel(File::open(p)?)?,
        (None, Some(p)) => build_panel(&compute_returns(&read_prices(File::open(p)?)?)?)?,
        (None, None) => return Err(Failure { code: EXIT_USAGE, message: "--in or --prices is required".into() }),
    };
    let post = sample_posterior(&panel, &cfg.var_spec, &cfg.mcmc)?;
    let method = if a.classic_rhat { RhatMethod::GelmanRubin } else { RhatMethod::RankSplit };
    let summary = summarize(&post, method)?;
    write_summary(create(out_path(cli)?)?, &summary)?;
    let worst = summary.iter().map(|s| s.r_hat).fold(f64::NAN, f64::max);
    let ess = summary.iter().map(|s| s.ess_bulk).fold(f64::NAN, f64::min);
    println!("{} parameters, max R-hat {worst:.4}, min ess_bulk {ess:.0}", summary.len());
    Ok(())
}

fn dataset(cfg: &RunConfig, a: &ManifestArg) -> std::result::Result<(crate::training::Dataset, TrainConfig), Failure> {
    let mut tc = cfg.train.clone();
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    tc.validate()?;
    let manifest = load_manifest(&a.manifest)?;
    Ok((load_dataset(&manifest, &tc.network)?, tc))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Outcome {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn train_cmd(cli: &Cli, cfg: &RunConfig, a: &ManifestArg) -> Outcome {
    let (data, tc) = dataset(cfg, a)?;
    let outcome = train(&data, &tc)?;
    let out = out_path(cli)?;
    fs::create_dir_all(out)?;
    write_epoch_metrics(create(&out.join("metrics.csv"))?, &outcome.metrics)?;
    checkpoint::save(&out.join("model.ckpt"), &outcome.network)?;
    write_json(&out.join("network.json"), &tc.network)?;
    write_json(
        &out.join("train_summary.json"),
        &serde_json::json!({
            "best_epoch": outcome.best_epoch,
            "epochs_run": outcome.metrics.len(),
            "stop": &outcome.stop,
            "config": &tc,
        }),
    )?;
    println!("best epoch {} of {}", outcome.best_epoch, outcome.metrics.len());
    match outcome.stop {
        StopReason::NumericalFailure { epoch, message } => {
            Err(Failure::numerical(format!("training diverged at epoch {epoch}: {message}")))
        }
        _ => Ok(()),
    }
}

fn evaluate_cmd(cli: &Cli, cfg: &RunConfig, a: &EvaluateArgs) -> Outcome {
    let network: NetworkConfig = serde_json::from_str(&fs::read_to_string(a.model.join("network.json"))?)?;
    let mut net = FusionNetwork::new(network.clone(), 0)?;
    checkpoint::load(&a.model.join("model.ckpt"), &mut net)?;
    let manifest = load_manifest(&a.manifest)?;
    let data = load_dataset(&manifest, &network)?;
    let q = QuantileLevel::new(cfg.train.q)?;
    let mut w = csv::Writer::from_writer(create(out_path(cli)?)?);
    w.write_record(["split", "n", "mse3", "mse7", "mse15", "mse30", "mean_mse", "pinball", "exceedance"])
        .map_err(Failure::data)?;
    for (name, samples) in [("train", &data.train), ("validation", &data.validation), ("test", &data.test)] {
        if samples.is_empty() {
            continue;
        }
        let m: EvalMetrics = evaluate(&net, samples, cfg.train.modalities, q)?;
        let mut row = vec![name.to_string(), m.n.to_string()];
        row.extend(m.mse.iter().map(|v| format!("{v:.6}")));
        row.extend([m.mean_mse, m.pinball, m.exceedance].iter().map(|v| format!("{v:.6}")));
        w.write_record(&row).map_err(Failure::data)?;
        println!("{name}: mean MSE {:.6}, exceedance {:.4}", m.mean_mse, m.exceedance);
    }
    w.flush()?;
    Ok(())
}

fn analyze_cmd(cli: &Cli, cfg: &RunConfig, a: &AnalyzeArgs) -> Outcome {
    let transcript: Transcript = serde_json::from_str(&fs::read_to_string(&a.transcript)?)?;
    let news = match &a.news {
        Some(p) => read_news_jsonl(BufReader::new(File::open(p)?))?,
        None => Vec::new(),
    };
    let questions = match &a.questions {
        Some(p) => QuestionBank::load(p)?,
        None => QuestionBank::default(),
    };
    let topics = match &a.topics {
        Some(p) => TopicBank::load(p)?,
        None => TopicBank::default(),
    };
    let inputs = crate::llm::AnalysisInputs { transcript, news, questions, topics };
    let out = out_path(cli)?;
    match a.client {
        ClientKind::Mock => {
            let mock = MockClient::new().with_dim(cfg.pipeline.embedding_dim).with_topics(inputs.topics.clone());
            run_pipeline(&inputs, cfg, mock, a.audit.as_deref(), out)
        }
        ClientKind::Http => run_pipeline(&inputs, cfg, HttpClient::new(cfg.llm.clone())?, a.audit.as_deref(), out),
    }
}

fn run_pipeline<C: LlmClient>(
    inputs: &crate::llm::AnalysisInputs,
    cfg: &RunConfig,
    client: C,
    audit: Option<&Path>,
    out: &Path,
) -> Outcome {
    let result = match audit {
        Some(p) => analyze(inputs, &cfg.pipeline, &AuditedClient::new(client, p)?)?,
        None => analyze(inputs, &cfg.pipeline, &client)?,
    };
    write_outputs(out, &result)?;
    println!(
        "{} {}: {} chunks, {} answered questions, {} recent news days",
        result.ticker,
        result.date,
        result.chunks.len(),
        result.answers.answers.iter().filter(|q| q.answer.is_some()).count(),
        result.news.recent.len()
    );
    Ok(())
}

fn backtest_cmd(cli: &Cli, cfg: &RunConfig, a: &BacktestArgs) -> Outcome {
    let mut bc = cfg.backtest.clone();
    if let Some(p) = a.predictor {
        bc.predictor = p;
    }
    if let Some(w) = a.window {
        bc.window = w;
    }
    if let Some(i) = a.iterations {
        bc.iterations = i;
    }
    if let Some(l) = a.lambda {
        bc.lambda = l;
    }
    let returns = compute_returns(&read_prices(File::open(&a.prices)?)?)?;
    let mut data = BacktestData::new(returns);
    if let Some(p) = &a.calls {
        let manifest = load_manifest(p)?;
        let ds = load_dataset(&manifest, &bc.neural.train.network)?;
        data = data.with_calls(ds.train.into_iter().chain(ds.validation).chain(ds.test).collect());
    }
    if let Some(p) = &a.vix {
        data = data.with_vix(read_vix(File::open(p)?)?)?;
    }
    let report = rolling_backtest(&data, &bc)?;
    emit_report(&report, out_path(cli)?)?;
    println!(
        "{}: {} predictions, {} skipped, exceedance {:.4} (q = {}), {:.2}s",
        report.predictor,
        report.records.len(),
        report.skipped.len(),
        report.exceedance,
        bc.q,
        report.elapsed.as_secs_f64()
    );
    Ok(())
}

fn fixtures_cmd(cli: &Cli, cfg: &RunConfig, a: &FixturesArgs) -> Outcome {
    let out = out_path(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let network = cfg.fixture_network.clone().unwrap_or_else(NetworkConfig::tiny);
    network.validate()?;
    let market = generate_market(&MarketSpec { days: a.days, seed, network: network.clone(), ..Default::default() });
    market.write(out)?;
    let planted = match a.planted {
        PlantedArg::None => Planted::None,
        PlantedArg::Linear => Planted::Linear,
        PlantedArg::Vix => Planted::Vix,
    };
    let set = generate(&FixtureSpec { n_samples: a.samples, network: network.clone(), seed, planted, ..Default::default() });
    set.write(&out.join("dataset"))?;
    let date = market.prices.dates()[market.prices.len() / 2];
    let transcript = synthetic_transcript("AAA", date, 40, seed);
    write_json(&out.join("transcript.json"), &transcript)?;
    let news = synthetic_news("AAA", date - chrono::Days::new(30), 30, 2, seed);
    let mut f = create(&out.join("news.jsonl"))?;
    for item in &news {
        serde_json::to_writer(&mut f, item)?;
        writeln!(f)?;
    }
    f.flush()?;
    let mut run = RunConfig::default();
    run.train.network = network.clone();
    run.backtest.neural.train.network = network.clone();
    run.fixture_network = Some(network);
    run.pipeline.embedding_dim = 16;
    write_json(&out.join("config.json"), &run)?;
    println!("wrote fixtures to {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_arguments_is_usage_error() {
        assert_eq!(run(["risklabs"]), EXIT_USAGE);
        assert_eq!(run(["risklabs", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["risklabs", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_input_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("l.csv");
        let code = run(["risklabs", "labels", "--in", "/nonexistent/prices.csv", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_sections() {
        let json = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), RunConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"train": {"epochs": 3}, "backtest": {"predictor": "bayes-var"}}"#).unwrap();
        assert_eq!(partial.train.epochs, 3);
        assert_eq!(partial.backtest.predictor, PredictorKind::BayesVar);
    }

    #[test]
    fn numerical_errors_map_to_exit_3() {
        let f: Failure = BacktestError::Training(TrainingError::Neural(NeuralError::NumericalFailure("x".into()))).into();
        assert_eq!(f.code, EXIT_NUMERICAL);
        let f: Failure = BayesVarError::EmptyPanel.into();
        assert_eq!(f.code, EXIT_DATA);
    }
}
