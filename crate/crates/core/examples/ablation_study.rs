use risklabs::fixtures::{generate, FixtureSpec, Planted};
use risklabs::training::{ablation_run, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FixtureSpec { n_samples: 200, planted: Planted::Vix, seed: 2, ..Default::default() };
    let data = generate(&spec).dataset()?;
    let cfg = TrainConfig { epochs: 60, patience: None, mu: 1.0, network: spec.network.clone(), ..Default::default() };
    let t = std::time::Instant::now();
    let rows = ablation_run(&data, &cfg)?;
    println!("{:<32} {:>9} {:>9} {:>9} {:>9} {:>9}", "configuration", "MSE_3", "MSE_7", "MSE_15", "MSE_30", "mean");
    for r in &rows {
        println!(
            "{:<32} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
            r.configuration, r.mse[0], r.mse[1], r.mse[2], r.mse[3], r.mean_mse
        );
    }
    println!("{:?}", t.elapsed());
    Ok(())
}
