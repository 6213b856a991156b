use risklabs::neural::checkpoint;
use risklabs::neural::{FusionNetwork, NetworkConfig, Parameters};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("risklabs-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    let net = FusionNetwork::new(NetworkConfig::tiny(), 1)?;
    checkpoint::save(&path, &net)?;
    println!("{} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    let records = checkpoint::read_records(std::fs::File::open(&path)?)?;
    for (name, t) in records.iter().take(8) {
        println!("  {name:<28} {:?}", t.shape());
    }
    println!("  ... {} tensors", records.len());
    let mut restored = FusionNetwork::new(NetworkConfig::tiny(), 2)?;
    checkpoint::load(&path, &mut restored)?;
    let same = net.named_params().iter().zip(restored.named_params().iter()).all(|(a, b)| a.1.data() == b.1.data());
    println!("restored bit-exact: {same}");
    Ok(())
}
