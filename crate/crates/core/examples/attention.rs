use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risklabs::neural::tensor::MatRef;
use risklabs::neural::{average_pool, MhsaLayer, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rows, d_model, heads) = (6, 16, 4);
    let layer = MhsaLayer::new(&mut rng, d_model, heads, 2 * d_model)?;
    println!("d_model {} heads {heads} d_k {}", layer.d_model(), layer.d_k());
    let mut x: Vec<f64> = (0..rows * d_model).map(|_| rng.random_range(-1.0..1.0)).collect();
    // rows 4 and 5 are padding: with 4 valid keys their content must not reach rows 0..4
    let (before, _) = layer.forward(MatRef::new(&x, rows, d_model), 4)?;
    x[4 * d_model..].iter_mut().for_each(|v| *v = 9.0);
    let (masked, _) = layer.forward(MatRef::new(&x, rows, d_model), 4)?;
    let (unmasked, _) = layer.forward(MatRef::new(&x, rows, d_model), rows)?;
    let pooled = average_pool(&Tensor::from_vec(&[rows, d_model], masked.clone())?, 4)?;
    println!("pooled[..4] = {:?}", &pooled.data()[..4]);
    let changed = |a: &[f64], b: &[f64]| a[..4 * d_model].iter().zip(&b[..4 * d_model]).filter(|(x, y)| x != y).count();
    println!("valid-row outputs changed by padding content, masked: {}", changed(&before, &masked));
    println!("valid-row outputs changed once padding is attended to: {}", changed(&before, &unmasked));
    Ok(())
}
