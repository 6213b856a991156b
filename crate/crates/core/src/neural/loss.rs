use crate::market::{pinball_grad, pinball_loss, QuantileLevel};

/// `mu * sum_i (vol_pred_i - vol_true_i)^2 + (1 - mu) * pinball(var_true, var_pred, q)`
pub fn multitask_loss(
    vol_pred: &[f64; 4],
    vol_true: &[f64; 4],
    var_pred: f64,
    var_true: f64,
    mu: f64,
    q: QuantileLevel,
) -> f64 {
    let sse: f64 = vol_pred
        .iter()
        .zip(vol_true)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    mu * sse + (1.0 - mu) * pinball_loss(var_true, var_pred, q)
}

/// Gradient of [`multitask_loss`] with respect to the two predictions. The
/// pinball kink uses the subgradient `-q`.
pub fn multitask_loss_grad(
    vol_pred: &[f64; 4],
    vol_true: &[f64; 4],
    var_pred: f64,
    var_true: f64,
    mu: f64,
    q: QuantileLevel,
) -> ([f64; 4], f64) {
    let mut d_vol = [0.0; 4];
    for i in 0..4 {
        d_vol[i] = 2.0 * mu * (vol_pred[i] - vol_true[i]);
    }
    (d_vol, (1.0 - mu) * pinball_grad(var_true, var_pred, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::mse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q05() -> QuantileLevel {
        QuantileLevel::new(0.05).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let v = [-4.0, -3.9, -3.7, -3.5];
        assert_eq!(multitask_loss(&v, &v, -0.02, -0.02, 0.5, q05()), 0.0);
    }

    #[test]
    fn boundary_mu() {
        let p = [1.0, 2.0, 3.0, 4.0];
        let t = [1.5, 2.0, 2.0, 4.0];
        assert_eq!(multitask_loss(&p, &t, 0.3, -0.1, 1.0, q05()), 1.25);
        let pin = pinball_loss(-0.1, 0.3, q05());
        assert_eq!(multitask_loss(&p, &t, 0.3, -0.1, 0.0, q05()), pin);
        let (dv, dvar) = multitask_loss_grad(&p, &t, 0.3, -0.1, 1.0, q05());
        assert_eq!(dvar, 0.0);
        assert_eq!(dv, [-1.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn compositional_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..-2.0));
            let t: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..-2.0));
            let (vp, vt) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            let mu = rng.random_range(0.0..1.0);
            let q = q05().value();
            let pin = (q * (vt - vp)).max((1.0 - q) * (vp - vt));
            let want = mu * 4.0 * mse(&t, &p).unwrap() + (1.0 - mu) * pin;
            let got = multitask_loss(&p, &t, vp, vt, mu, q05());
            assert!((got - want).abs() < 1e-12);
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_difference_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let t: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (vp, vt): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if (vp - vt).abs() < 1e-6 {
                continue;
            }
            let mu = 0.4;
            let (dv, dvar) = multitask_loss_grad(&p, &t, vp, vt, mu, q05());
            let h = 1e-6;
            let fd = (multitask_loss(&p, &t, vp + h, vt, mu, q05())
                - multitask_loss(&p, &t, vp - h, vt, mu, q05()))
                / (2.0 * h);
            assert!((fd - dvar).abs() < 1e-8);
            for i in 0..4 {
                let (mut a, mut b) = (p, p);
                a[i] += h;
                b[i] -= h;
                let fd = (multitask_loss(&a, &t, vp, vt, mu, q05())
                    - multitask_loss(&b, &t, vp, vt, mu, q05()))
                    / (2.0 * h);
                assert!((fd - dv[i]).abs() < 1e-7);
            }
        }
    }
}
