use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::diagnostics::quantile;
use super::sampler::{NoiseModel, Posterior, Term};
use super::{BayesVarError, Result};

/// Posterior predictive summary for one forward horizon, on the log scale
/// and on the volatility scale. Intervals are central 94%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonForecast {
    pub log_mean: f64,
    pub log_sd: f64,
    pub log_lo: f64,
    pub log_hi: f64,
    pub vol_mean: f64,
    pub vol_lo: f64,
    pub vol_hi: f64,
}

/// Pushes every posterior draw through `alpha + beta . x + sigma * z`.
pub fn posterior_predict(post: &Posterior, backward: [f64; 4], seed: u64) -> Result<[HorizonForecast; 4]> {
    if backward.iter().any(|v| !v.is_finite()) {
        return Err(BayesVarError::NumericalFailure("non-finite backward log-vols".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [HorizonForecast {
        log_mean: 0.0,
        log_sd: 0.0,
        log_lo: 0.0,
        log_hi: 0.0,
        vol_mean: 0.0,
        vol_lo: 0.0,
        vol_hi: 0.0,
    }; 4];
    for (m, slot) in out.iter_mut().enumerate() {
        let col = |term| {
            post.index(m, term)
                .map(|i| post.pooled(i))
                .ok_or_else(|| BayesVarError::Config(format!("posterior lacks {term:?} for equation {m}")))
        };
        let alpha = col(Term::Intercept)?;
        let betas = (0..4).map(|j| col(Term::Beta(j))).collect::<Result<Vec<_>>>()?;
        let sigma = match post.noise {
            NoiseModel::Estimated { .. } => col(Term::Sigma)?,
            NoiseModel::Fixed { sigma } => vec![sigma; alpha.len()],
        };
        let logs: Vec<f64> = (0..alpha.len())
            .map(|d| {
                let z: f64 = rng.sample(StandardNormal);
                alpha[d] + (0..4).map(|j| betas[j][d] * backward[j]).sum::<f64>() + sigma[d] * z
            })
            .collect();
        if logs.iter().any(|v| !v.is_finite()) {
            return Err(BayesVarError::NumericalFailure("non-finite predictive draw".into()));
        }
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let sd = (logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let (lo, hi) = (quantile(&logs, 0.03), quantile(&logs, 0.97));
        *slot = HorizonForecast {
            log_mean: mean,
            log_sd: sd,
            log_lo: lo,
            log_hi: hi,
            vol_mean: logs.iter().map(|v| v.exp()).sum::<f64>() / n,
            vol_lo: lo.exp(),
            vol_hi: hi.exp(),
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes_var::sampler::ParamId;

    fn point_mass(alpha: f64, beta: f64, noise: NoiseModel, draws: usize) -> Posterior {
        let mut params = Vec::new();
        let mut d = Vec::new();
        for equation in 0..4 {
            params.push(ParamId { equation, term: Term::Intercept });
            d.push(vec![vec![alpha; draws]; 2]);
            for j in 0..4 {
                params.push(ParamId { equation, term: Term::Beta(j) });
                d.push(vec![vec![beta; draws]; 2]);
            }
        }
        Posterior { params, draws: d, n_rows: 10, noise }
    }

    #[test]
    fn point_mass_equals_linear_form() {
        let post = point_mass(-2.0, 0.1, NoiseModel::Fixed { sigma: 0.0 }, 5);
        let x = [-4.0, -3.5, -3.0, -3.2];
        let f = posterior_predict(&post, x, 0).unwrap();
        let want = -2.0 + 0.1 * x.iter().sum::<f64>();
        for h in f {
            assert!((h.log_mean - want).abs() < 1e-12);
            assert_eq!(h.log_sd, 0.0);
            assert!((h.vol_mean - want.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_betas_ignore_inputs() {
        let post = point_mass(-3.0, 0.0, NoiseModel::Fixed { sigma: 0.5 }, 400);
        let a = posterior_predict(&post, [-4.0; 4], 3).unwrap();
        let b = posterior_predict(&post, [-1.0, -9.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(a, b);
        assert!((a[0].log_mean + 3.0).abs() < 0.1);
        assert!((a[0].log_sd - 0.5).abs() < 0.05);
    }

    #[test]
    fn non_finite_input_rejected() {
        let post = point_mass(-3.0, 0.0, NoiseModel::Fixed { sigma: 0.5 }, 4);
        assert!(posterior_predict(&post, [f64::NAN, 0.0, 0.0, 0.0], 0).is_err());
    }
}
