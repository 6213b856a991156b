use risklabs::fixtures::{generate, FixtureSpec, Planted};
use risklabs::neural::Modalities;
use risklabs::training::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FixtureSpec { n_samples: 500, planted: Planted::Linear, seed: 1, ..Default::default() };
    let data = generate(&spec).dataset()?;
    let cfg = TrainConfig {
        epochs: 200,
        lr: 1e-3,
        batch_size: 4,
        mu: 0.5,
        patience: None,
        network: spec.network.clone(),
        modalities: Modalities::all(),
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let out = train(&data, &cfg)?;
    for m in out.metrics.iter().step_by(20) {
        println!("epoch {:3} loss {:.6} test mean mse {:.6}", m.epoch, m.train_loss, m.test.as_ref().unwrap().mean_mse);
    }
    let last = out.metrics.last().unwrap();
    println!("final test mean mse {:.6} ({:?})", last.test.as_ref().unwrap().mean_mse, t.elapsed());
    Ok(())
}
