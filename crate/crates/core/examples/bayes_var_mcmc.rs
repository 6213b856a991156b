use risklabs::bayes_var::io::write_summary;
use risklabs::bayes_var::{build_panel, latest_backward, posterior_predict, sample_posterior, summarize, McmcConfig, RhatMethod, VarModelSpec};
use risklabs::fixtures::{generate_market, MarketSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let returns = generate_market(&MarketSpec { days: 400, seed: 11, ..Default::default() }).returns();
    let panel = build_panel(&returns)?;
    let t = std::time::Instant::now();
    let post = sample_posterior(&panel, &VarModelSpec::default(), &McmcConfig::default())?;
    let summary = summarize(&post, RhatMethod::RankSplit)?;
    println!("{} panel rows, {:?}", panel.len(), t.elapsed());
    write_summary(std::io::stdout(), &summary)?;
    let x = latest_backward(returns.values(), returns.len() - 1)?;
    for (label, f) in ["3-day", "7-day", "15-day", "30-day"].iter().zip(posterior_predict(&post, x, 0)?) {
        println!("{label:>7}: vol {:.5} [{:.5}, {:.5}]", f.vol_mean, f.vol_lo, f.vol_hi);
    }
    Ok(())
}
