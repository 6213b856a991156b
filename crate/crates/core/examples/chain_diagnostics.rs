use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use risklabs::bayes_var::diagnostics::{diagnose, hdi};
use risklabs::bayes_var::RhatMethod;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let iid: Vec<Vec<f64>> = (0..4).map(|_| (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let innovation = Normal::new(0.0, 0.44)?;
    let mut ar = Vec::new();
    for _ in 0..4 {
        let mut x = 0.0;
        ar.push((0..2000).map(|_| { x = 0.9 * x + innovation.sample(&mut rng); x }).collect::<Vec<f64>>());
    }
    let mut stuck = Vec::new();
    for centre in [-3.0, -3.0, 3.0, 3.0] {
        stuck.push((0..2000).map(|_| centre + Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect::<Vec<f64>>());
    }
    println!("{:<10} {:>8} {:>8} {:>9} {:>9} {:>9}", "chains", "R-hat", "classic", "ess_bulk", "ess_tail", "mcse");
    for (name, c) in [("iid", &iid), ("AR(0.9)", &ar), ("bimodal", &stuck)] {
        let d = diagnose(c, RhatMethod::RankSplit)?;
        let g = diagnose(c, RhatMethod::GelmanRubin)?;
        println!(
            "{name:<10} {:>8.4} {:>8.4} {:>9.0} {:>9.0} {:>9.5}",
            d.r_hat, g.r_hat, d.ess_bulk, d.ess_tail, d.mcse_mean
        );
    }
    let pooled: Vec<f64> = iid.concat();
    println!("94% HDI of iid draws: {:?}", hdi(&pooled, 0.94)?);
    Ok(())
}
