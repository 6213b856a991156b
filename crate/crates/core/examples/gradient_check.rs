use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risklabs::market::QuantileLevel;
use risklabs::neural::{
    multitask_loss, multitask_loss_grad, EmbeddingView, FusionNetwork, ModelInput, Modalities, NetworkConfig,
    Parameters,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = NetworkConfig { max_rows: 3, ..NetworkConfig::tiny() };
    let net = FusionNetwork::new(cfg.clone(), 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let (audio, text) = (v(3 * cfg.audio_dim), v(3 * cfg.text_dim));
    let (summary, answers, vix, news) = (v(cfg.analysis_dim), v(cfg.analysis_dim), v(cfg.vix_len), v(cfg.news_dim));
    let input = ModelInput {
        audio: Some(EmbeddingView::new(&audio, 3, cfg.audio_dim, 3)?),
        text: Some(EmbeddingView::new(&text, 3, cfg.text_dim, 2)?),
        summary: Some(&summary),
        answers: Some(&answers),
        vix: Some(&vix),
        news: Some(&news),
        call_scale: 1.0,
    };
    let q = QuantileLevel::new(0.05)?;
    let (y, var_y, mu) = ([-0.2, 0.1, 0.3, 0.0], 0.2, 0.5);
    let loss = |n: &FusionNetwork| {
        let p = n.predict(&input, Modalities::all()).unwrap();
        multitask_loss(&p.log_vol, &y, p.var, var_y, mu, q)
    };
    let (p, cache) = net.forward(&input, Modalities::all())?;
    let (dv, dq) = multitask_loss_grad(&p.log_vol, &y, p.var, var_y, mu, q);
    let mut grad = net.zeros_like();
    net.backward(&input, &cache, &dv, dq, &mut grad)?;
    let h = 1e-5;
    for (i, (name, g)) in grad.named_params().iter().enumerate() {
        let mut worst = 0.0f64;
        for e in 0..g.len().min(6) {
            let (mut a, mut b) = (net.clone(), net.clone());
            a.named_params_mut()[i].1.data_mut()[e] += h;
            b.named_params_mut()[i].1.data_mut()[e] -= h;
            let num = (loss(&a) - loss(&b)) / (2.0 * h);
            worst = worst.max((num - g.data()[e]).abs() / num.abs().max(g.data()[e].abs()).max(1e-8));
        }
        println!("{name:<28} max rel err {worst:.2e}");
    }
    Ok(())
}
