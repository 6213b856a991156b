use risklabs::bayes_var::io::write_aep_stats;
use risklabs::bayes_var::{rolling_simulation, McmcConfig, VarModelSpec};
use risklabs::fixtures::{generate_market, MarketSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let returns = generate_market(&MarketSpec { days: 420, seed: 21, ..Default::default() }).returns();
    let mcmc = McmcConfig { n_warmup: 300, n_draws: 500, ..Default::default() };
    let t = std::time::Instant::now();
    let report = rolling_simulation(&returns, 250, 100, &VarModelSpec::default(), &mcmc)?;
    println!("{} days ({} skipped) in {:?}", report.records.len(), report.skipped, t.elapsed());
    write_aep_stats(std::io::stdout(), &report.stats)?;
    Ok(())
}
