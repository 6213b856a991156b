use risklabs::fixtures::{generate, FixtureSpec, Planted};
use risklabs::training::{grid_search, GridSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FixtureSpec { n_samples: 80, planted: Planted::Linear, seed: 3, ..Default::default() };
    let data = generate(&spec).dataset()?;
    let base = TrainConfig { epochs: 20, network: spec.network.clone(), ..Default::default() };
    let grid = GridSpec { lrs: vec![1e-3, 1e-5], mus: vec![0.25, 0.75], ..Default::default() };
    let result = grid_search(&data, &base, &grid)?;
    println!("{:>4} {:>5} {:>8} {:>5} {:>12} {:>12}", "cell", "batch", "lr", "mu", "val_mse", "val_pinball");
    for r in &result.rows {
        println!(
            "{:>4} {:>5} {:>8.0e} {:>5} {:>12.5} {:>12.5}",
            r.cell, r.batch_size, r.lr, r.mu, r.val_mean_mse, r.val_pinball
        );
    }
    println!("best cell {}, VaR mu {}", result.best, result.best_var_mu);
    Ok(())
}
