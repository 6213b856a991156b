//! Convergence diagnostics following the rank-normalized split-R-hat and
//! ESS definitions of Vehtari et al. (2021), in the arrangement used by
//! ArviZ: bulk and tail ESS, MCSE of the mean and sd, and the 94% HDI.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::sampler::Posterior;
use super::{BayesVarError, Result};

pub const HDI_PROB: f64 = 0.94;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhatMethod {
    /// max of bulk and folded-tail split-R-hat on rank-normalized draws
    #[default]
    RankSplit,
    /// between/within variance ratio on the raw, unsplit chains
    GelmanRubin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r_hat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
    pub mcse_mean: f64,
    pub mcse_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub dependent: String,
    pub independent: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub hdi_3: f64,
    pub hdi_97: f64,
    pub mcse_mean: f64,
    pub mcse_sd: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
    pub r_hat: f64,
}

fn check(chains: &[Vec<f64>], min_chains: usize) -> Result<()> {
    if chains.len() < min_chains {
        return Err(BayesVarError::DiagnosticsUnavailable(format!(
            "{} chain(s) given, at least {min_chains} required",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(BayesVarError::DiagnosticsUnavailable("chains differ in length".into()));
    }
    if n < 4 {
        return Err(BayesVarError::DiagnosticsUnavailable(format!("{n} draws per chain, at least 4 required")));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(BayesVarError::DiagnosticsUnavailable("non-finite draws".into()));
    }
    Ok(())
}

/// First and last `n / 2` draws of every chain as separate chains.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
    }
    for c in chains {
        let half = c.len() / 2;
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn map(chains: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    chains.iter().map(|c| c.iter().map(|v| f(*v)).collect()).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var_ddof1(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Ranks (ties averaged) of all draws pooled, mapped through the normal
/// quantile function at `(rank - 3/8) / (N + 1/4)`.
fn z_scale(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<f64> = chains.concat();
    let n = flat.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && flat[idx[j + 1]] == flat[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            rank[idx[k]] = avg;
        }
        i = j + 1;
    }
    let norm = Normal::standard();
    let z: Vec<f64> = rank
        .iter()
        .map(|r| norm.inverse_cdf((r - 0.375) / (n as f64 + 0.25)))
        .collect();
    let len = chains[0].len();
    z.chunks(len).map(<[f64]>::to_vec).collect()
}

fn rhat_core(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let between = n * var_ddof1(&means);
    let within = mean(&chains.iter().map(|c| var_ddof1(c)).collect::<Vec<_>>());
    ((between / within + n - 1.0) / n).sqrt()
}

/// Rank-normalized split R-hat.
pub fn rhat_rank(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains, 2)?;
    let split = split_chains(chains);
    let bulk = rhat_core(&z_scale(&split));
    let med = median(&split.concat());
    let tail = rhat_core(&z_scale(&map(&split, |v| (v - med).abs())));
    Ok(bulk.max(tail))
}

/// Classic Gelman-Rubin ratio on unsplit chains.
pub fn rhat_gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains, 2)?;
    Ok(rhat_core(chains))
}

fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Biased autocovariance of one chain for lags `0..n`.
fn autocov(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let m = 2 * n;
    let mu = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mu, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|c| c.re / m as f64 / n as f64).collect()
}

/// Effective sample size of the given chains (Geyer initial positive and
/// monotone sequence on the multi-chain autocorrelation).
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let flat = chains.concat();
    let size = flat.len() as f64;
    let (lo, hi) = flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi - lo < 1e-15 {
        return size;
    }
    let n_chain = chains.len();
    let n_draw = chains[0].len();
    let nd = n_draw as f64;
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocov(c, &mut planner)).collect();
    let mean_acov = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / n_chain as f64;
    let mean_var = mean_acov(0) * nd / (nd - 1.0);
    let mut var_plus = mean_var * (nd - 1.0) / nd;
    if n_chain > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += var_ddof1(&means);
    }
    let mut rho = vec![0.0; n_draw];
    let mut rho_even = 1.0;
    rho[0] = rho_even;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;

    let nd_i = n_draw as i64;
    let mut t: i64 = 1;
    while t < nd_i - 3 && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov((t + 1) as usize)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov((t + 2) as usize)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[(t + 1) as usize] = rho_even;
            rho[(t + 2) as usize] = rho_odd;
        }
        t += 2;
    }
    let max_t = t - 2;
    if rho_even > 0.0 {
        rho[(max_t + 1) as usize] = rho_even;
    }
    let mut t: i64 = 1;
    while t <= max_t - 2 {
        let (a, b) = ((t - 1) as usize, t as usize);
        let (c, d) = ((t + 1) as usize, (t + 2) as usize);
        if rho[c] + rho[d] > rho[a] + rho[b] {
            rho[c] = (rho[a] + rho[b]) / 2.0;
            rho[d] = rho[c];
        }
        t += 2;
    }
    let head: f64 = rho[..(max_t + 1) as usize].iter().sum();
    let next = rho.get((max_t + 1) as usize).copied().unwrap_or(0.0);
    let tau = (-1.0 + 2.0 * head + next).max(1.0 / size.log10());
    if rho.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    size / tau
}

pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains, 1)?;
    Ok(ess(&z_scale(&split_chains(chains))))
}

pub fn ess_mean(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains, 1)?;
    Ok(ess(&split_chains(chains)))
}

/// Minimum of the ESS of the 5% and 95% quantile indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains, 1)?;
    let flat = chains.concat();
    let mut out = f64::INFINITY;
    for p in [0.05, 0.95] {
        let q = quantile(&flat, p);
        let ind = map(chains, |v| if v <= q { 1.0 } else { 0.0 });
        out = out.min(ess(&split_chains(&ind)));
    }
    Ok(out)
}

pub fn ess_sd(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains, 1)?;
    let split = split_chains(chains);
    Ok(ess(&split).min(ess(&map(&split, |v| v * v))))
}

pub fn mcse_mean(chains: &[Vec<f64>]) -> Result<f64> {
    let e = ess_mean(chains)?;
    Ok(var_ddof1(&chains.concat()).sqrt() / e.sqrt())
}

pub fn mcse_sd(chains: &[Vec<f64>]) -> Result<f64> {
    let e = ess_sd(chains)?;
    let sd = var_ddof1(&chains.concat()).sqrt();
    let fac = (std::f64::consts::E * (1.0 - 1.0 / e).powf(e - 1.0) - 1.0).sqrt();
    Ok(sd * fac)
}

/// Narrowest interval containing `floor(prob * n)` steps of the sorted
/// draws.
pub fn hdi(x: &[f64], prob: f64) -> Result<(f64, f64)> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let inc = (prob * n as f64).floor() as usize;
    if inc >= n {
        return Err(BayesVarError::DiagnosticsUnavailable("too few draws for an HDI".into()));
    }
    let mut best = 0;
    for i in 1..n - inc {
        if s[i + inc] - s[i] < s[best + inc] - s[best] {
            best = i;
        }
    }
    Ok((s[best], s[best + inc]))
}

pub fn diagnose(chains: &[Vec<f64>], method: RhatMethod) -> Result<Diagnostics> {
    let r_hat = match method {
        RhatMethod::RankSplit => rhat_rank(chains)?,
        RhatMethod::GelmanRubin => rhat_gelman_rubin(chains)?,
    };
    Ok(Diagnostics {
        r_hat,
        ess_bulk: ess_bulk(chains)?,
        ess_tail: ess_tail(chains)?,
        mcse_mean: mcse_mean(chains)?,
        mcse_sd: mcse_sd(chains)?,
    })
}

/// One row per parameter in the order of `posterior.params`.
pub fn summarize(posterior: &Posterior, method: RhatMethod) -> Result<Vec<ParamSummary>> {
    posterior
        .params
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let chains = &posterior.draws[i];
            let d = diagnose(chains, method)?;
            let flat = chains.concat();
            let (hdi_3, hdi_97) = hdi(&flat, HDI_PROB)?;
            Ok(ParamSummary {
                dependent: id.dependent(),
                independent: id.independent(),
                n: posterior.n_rows,
                mean: mean(&flat),
                sd: var_ddof1(&flat).sqrt(),
                hdi_3,
                hdi_97,
                mcse_mean: d.mcse_mean,
                mcse_sd: d.mcse_sd,
                ess_bulk: d.ess_bulk,
                ess_tail: d.ess_tail,
                r_hat: d.r_hat,
            })
        })
        .collect()
}
