use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

use risklabs::market::{exceedance_rate, historical_var, pinball_loss, QuantileLevel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = StudentT::new(4.0)?;
    let returns: Vec<f64> = (0..2000).map(|_| 0.01 * t.sample(&mut rng)).collect();
    let (train, test) = returns.split_at(1000);
    println!("{:>5} {:>10} {:>12} {:>12}", "q", "VaR", "exceedance", "pinball");
    for q in [0.01, 0.05, 0.10] {
        let level = QuantileLevel::new(q)?;
        let var = historical_var(train, level)?;
        let rate = exceedance_rate(test, &vec![var; test.len()])?;
        let loss = test.iter().map(|&y| pinball_loss(y, var, level)).sum::<f64>() / test.len() as f64;
        println!("{q:>5} {var:>10.5} {rate:>12.4} {loss:>12.6}");
    }
    Ok(())
}
