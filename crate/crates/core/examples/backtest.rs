use risklabs::backtest::{rolling_backtest, BacktestConfig, BacktestData, NeuralBacktestConfig, PredictorKind};
use risklabs::bayes_var::McmcConfig;
use risklabs::fixtures::{generate_market, MarketSpec};
use risklabs::neural::NetworkConfig;
use risklabs::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = generate_market(&MarketSpec { days: 420, seed: 6, call_every: 21, ..Default::default() });
    let data = BacktestData::new(market.returns()).with_calls(market.calls.samples()).with_vix(market.vix.clone())?;
    for kind in [PredictorKind::Historical, PredictorKind::BayesVar, PredictorKind::Neural] {
        let cfg = BacktestConfig {
            predictor: kind,
            mcmc: McmcConfig { n_warmup: 300, n_draws: 500, ..Default::default() },
            neural: NeuralBacktestConfig {
                train: TrainConfig { network: NetworkConfig::tiny(), ..Default::default() },
                ..Default::default()
            },
            ..Default::default()
        };
        let report = rolling_backtest(&data, &cfg)?;
        println!(
            "{:<11} {} days, exceedance {:.3}, AEP mean 3d {:+.4} 30d {:+.4}, {:.2}s",
            kind.name(),
            report.records.len(),
            report.exceedance,
            report.aep_stats[0].mean,
            report.aep_stats[3].mean,
            report.elapsed.as_secs_f64()
        );
    }
    Ok(())
}
