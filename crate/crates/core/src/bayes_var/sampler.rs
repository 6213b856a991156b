//! Metropolis-within-Gibbs sampler for the four-equation VAR
//!
//! `fwd_m = alpha_m + sum_j beta_mj * back_j + u_m`, `u_m ~ N(0, sigma_m^2)`.
//!
//! Equations share no parameters, so each is sampled as its own block. The
//! coefficient block is either drawn exactly from its Gaussian full
//! conditional ([`SamplerKind::Gibbs`]) or moved by an adaptive random-walk
//! Metropolis step ([`SamplerKind::RandomWalk`]). `sigma_m` is updated by
//! random-walk Metropolis on `ln sigma_m`. Step sizes adapt during warmup only.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::panel::LogVolPanel;
use super::{BayesVarError, Result};
use crate::market::Horizon;

type Mat5 = SMatrix<f64, 5, 5>;
type Vec5 = SVector<f64, 5>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: f64,
    pub sd: f64,
}

impl Prior {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Prior { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `sigma_m` is sampled under a half-normal prior with this scale.
    Estimated { prior_scale: f64 },
    /// `sigma_m` is held at this value (1.0 gives `u ~ N(0, 1)`).
    Fixed { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarModelSpec {
    pub intercepts: [Prior; 4],
    /// `betas[m][j]` is the prior of the coefficient of backward horizon `j`
    /// in equation `m`.
    pub betas: [[Prior; 4]; 4],
    pub noise: NoiseModel,
}

impl Default for VarModelSpec {
    fn default() -> Self {
        VarModelSpec {
            intercepts: [Prior::new(-3.0, 1.0); 4],
            betas: [[Prior::new(0.0, 1.0); 4]; 4],
            noise: NoiseModel::Estimated { prior_scale: 1.0 },
        }
    }
}

impl VarModelSpec {
    pub fn strict_unit_noise() -> Self {
        VarModelSpec {
            noise: NoiseModel::Fixed { sigma: 1.0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.intercepts.iter().chain(self.betas.iter().flatten());
        for p in all {
            if !(p.sd > 0.0 && p.sd.is_finite() && p.mean.is_finite()) {
                return Err(BayesVarError::Config(format!(
                    "prior N({}, {}) needs a finite mean and positive sd",
                    p.mean, p.sd
                )));
            }
        }
        let s = match self.noise {
            NoiseModel::Estimated { prior_scale } => prior_scale,
            NoiseModel::Fixed { sigma } => sigma,
        };
        if !(s > 0.0 && s.is_finite()) {
            return Err(BayesVarError::Config(format!("noise scale {s} must be positive")));
        }
        Ok(())
    }

    fn prior(&self, eq: usize) -> (Vec5, Vec5) {
        let mut mean = Vec5::zeros();
        let mut sd = Vec5::zeros();
        mean[0] = self.intercepts[eq].mean;
        sd[0] = self.intercepts[eq].sd;
        for j in 0..4 {
            mean[j + 1] = self.betas[eq][j].mean;
            sd[j + 1] = self.betas[eq][j].sd;
        }
        (mean, sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Exact conditional draws of each coefficient block.
    #[default]
    Gibbs,
    /// Adaptive random-walk Metropolis on each coefficient block.
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_draws: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
    /// Initial random-walk step on `ln sigma`.
    pub sigma_step: f64,
    pub parallel: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_draws: 2000,
            seed: 0,
            sampler: SamplerKind::Gibbs,
            sigma_step: 0.2,
            parallel: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(BayesVarError::Config("at least 2 chains are required".into()));
        }
        if self.n_draws == 0 {
            return Err(BayesVarError::Config("n_draws must be positive".into()));
        }
        if !(self.sigma_step > 0.0) {
            return Err(BayesVarError::Config("sigma_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// Coefficient on backward horizon index `0..4`.
    Beta(usize),
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId {
    /// Forward horizon index `0..4`.
    pub equation: usize,
    pub term: Term,
}

impl ParamId {
    pub fn dependent(&self) -> String {
        Horizon::ALL[self.equation].label()
    }

    pub fn independent(&self) -> String {
        match self.term {
            Term::Intercept => "Intercept".into(),
            Term::Beta(j) => Horizon::ALL[j].label(),
            Term::Sigma => "Sigma".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub params: Vec<ParamId>,
    /// `draws[param][chain][draw]`
    pub draws: Vec<Vec<Vec<f64>>>,
    /// Panel rows the model was fit on.
    pub n_rows: usize,
    pub noise: NoiseModel,
}

impl Posterior {
    pub fn index(&self, equation: usize, term: Term) -> Option<usize> {
        self.params.iter().position(|p| p.equation == equation && p.term == term)
    }

    pub fn n_chains(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    /// All chains of one parameter concatenated in chain order.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.draws[param].concat()
    }
}

#[derive(Debug, Clone)]
struct EqStats {
    xtx: Mat5,
    xty: Vec5,
    yty: f64,
    n: f64,
}

impl EqStats {
    fn empty() -> Self {
        EqStats { xtx: Mat5::zeros(), xty: Vec5::zeros(), yty: 0.0, n: 0.0 }
    }

    fn ssr(&self, theta: &Vec5) -> f64 {
        (self.yty - 2.0 * theta.dot(&self.xty) + (self.xtx * theta).dot(theta)).max(0.0)
    }
}

fn stats(panel: &LogVolPanel) -> [EqStats; 4] {
    let mut out: [EqStats; 4] = std::array::from_fn(|_| EqStats::empty());
    for row in &panel.rows {
        let x = Vec5::new(1.0, row.backward[0], row.backward[1], row.backward[2], row.backward[3]);
        let xx = x * x.transpose();
        for (m, s) in out.iter_mut().enumerate() {
            let y = row.forward[m];
            s.xtx += xx;
            s.xty += x * y;
            s.yty += y * y;
            s.n += 1.0;
        }
    }
    out
}

fn params(noise: NoiseModel) -> Vec<ParamId> {
    let mut out = Vec::new();
    for equation in 0..4 {
        out.push(ParamId { equation, term: Term::Intercept });
        for j in 0..4 {
            out.push(ParamId { equation, term: Term::Beta(j) });
        }
        if matches!(noise, NoiseModel::Estimated { .. }) {
            out.push(ParamId { equation, term: Term::Sigma });
        }
    }
    out
}

/// Draws from the posterior of the VAR given the panel.
pub fn sample_posterior(panel: &LogVolPanel, spec: &VarModelSpec, cfg: &McmcConfig) -> Result<Posterior> {
    if panel.is_empty() {
        return Err(BayesVarError::EmptyPanel);
    }
    run(stats(panel), panel.len(), spec, cfg)
}

/// Same sampler with the likelihood switched off.
pub fn sample_prior_only(spec: &VarModelSpec, cfg: &McmcConfig) -> Result<Posterior> {
    run(std::array::from_fn(|_| EqStats::empty()), 0, spec, cfg)
}

fn run(stats: [EqStats; 4], n_rows: usize, spec: &VarModelSpec, cfg: &McmcConfig) -> Result<Posterior> {
    spec.validate()?;
    cfg.validate()?;
    let chain = |c: usize| run_chain(&stats, spec, cfg, c);
    let chains: Vec<Vec<Vec<f64>>> = if cfg.parallel {
        (0..cfg.n_chains).into_par_iter().map(chain).collect::<Result<_>>()?
    } else {
        (0..cfg.n_chains).map(chain).collect::<Result<_>>()?
    };
    let params = params(spec.noise);
    let draws = (0..params.len())
        .map(|p| chains.iter().map(|c| c[p].clone()).collect())
        .collect();
    Ok(Posterior { params, draws, n_rows, noise: spec.noise })
}

const ADAPT_BATCH: usize = 50;

/// Robbins-Monro style log-step tuning toward a target acceptance rate.
#[derive(Debug, Clone)]
struct StepAdapter {
    log_step: f64,
    accepted: usize,
    tried: usize,
    batches: usize,
    target: f64,
}

impl StepAdapter {
    fn new(step: f64, target: f64) -> Self {
        StepAdapter { log_step: step.ln(), accepted: 0, tried: 0, batches: 0, target }
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn record(&mut self, accepted: bool, warmup: bool) {
        if !warmup {
            return;
        }
        self.tried += 1;
        self.accepted += accepted as usize;
        if self.tried == ADAPT_BATCH {
            self.batches += 1;
            let rate = self.accepted as f64 / self.tried as f64;
            let delta = (1.0 / (self.batches as f64).sqrt()).min(0.1);
            self.log_step += if rate > self.target { delta } else { -delta };
            self.accepted = 0;
            self.tried = 0;
        }
    }
}

struct EqState {
    theta: Vec5,
    sigma: f64,
    sigma_adapt: StepAdapter,
    theta_adapt: StepAdapter,
    proposal: Mat5,
    history: Vec<Vec5>,
}

fn normal5(rng: &mut ChaCha8Rng) -> Vec5 {
    Vec5::from_fn(|_, _| rng.sample(StandardNormal))
}

fn numerical(what: &str, eq: usize) -> BayesVarError {
    BayesVarError::NumericalFailure(format!("non-finite {what} in the {} equation", Horizon::ALL[eq].label()))
}

fn run_chain(stats: &[EqStats; 4], spec: &VarModelSpec, cfg: &McmcConfig, chain: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let estimate_sigma = matches!(spec.noise, NoiseModel::Estimated { .. });
    let per_eq = if estimate_sigma { 6 } else { 5 };
    let mut out = vec![Vec::with_capacity(cfg.n_draws); 4 * per_eq];

    let mut states: Vec<EqState> = (0..4)
        .map(|m| {
            let (mean, sd) = spec.prior(m);
            let theta = mean + sd.component_mul(&normal5(&mut rng));
            let sigma = match spec.noise {
                NoiseModel::Estimated { prior_scale } => {
                    let z: f64 = rng.sample(StandardNormal);
                    (prior_scale * z.abs()).max(0.05)
                }
                NoiseModel::Fixed { sigma } => sigma,
            };
            EqState {
                theta,
                sigma,
                sigma_adapt: StepAdapter::new(cfg.sigma_step, 0.44),
                theta_adapt: StepAdapter::new(1.0, 0.234),
                proposal: Mat5::from_diagonal(&(sd * 0.1)),
                history: Vec::new(),
            }
        })
        .collect();

    let total = cfg.n_warmup + cfg.n_draws;
    for it in 0..total {
        let warmup = it < cfg.n_warmup;
        for (m, st) in states.iter_mut().enumerate() {
            let s = &stats[m];
            let (mu0, sd0) = spec.prior(m);
            let prec0 = sd0.map(|v| 1.0 / (v * v));
            match cfg.sampler {
                SamplerKind::Gibbs => {
                    let inv_s2 = 1.0 / (st.sigma * st.sigma);
                    let prec = s.xtx * inv_s2 + Mat5::from_diagonal(&prec0);
                    let b = s.xty * inv_s2 + mu0.component_mul(&prec0);
                    let ch = prec.cholesky().ok_or_else(|| numerical("posterior precision", m))?;
                    let mean = ch.solve(&b);
                    let dev = ch
                        .l()
                        .transpose()
                        .solve_upper_triangular(&normal5(&mut rng))
                        .ok_or_else(|| numerical("posterior precision", m))?;
                    st.theta = mean + dev;
                }
                SamplerKind::RandomWalk => {
                    let logp = |th: &Vec5, sigma: f64| -> f64 {
                        let d = th - mu0;
                        -s.ssr(th) / (2.0 * sigma * sigma) - 0.5 * d.component_mul(&d).dot(&prec0)
                    };
                    let prop = st.theta + st.proposal * normal5(&mut rng) * st.theta_adapt.step();
                    let (lp_new, lp_old) = (logp(&prop, st.sigma), logp(&st.theta, st.sigma));
                    if !lp_new.is_finite() && !lp_old.is_finite() {
                        return Err(numerical("log posterior", m));
                    }
                    let u: f64 = rng.random();
                    let accept = u.ln() < lp_new - lp_old;
                    if accept {
                        st.theta = prop;
                    }
                    st.theta_adapt.record(accept, warmup);
                    if warmup && it >= cfg.n_warmup / 4 {
                        st.history.push(st.theta);
                    }
                    if it + 1 == cfg.n_warmup / 2 && st.history.len() >= 20 {
                        let n = st.history.len() as f64;
                        let mean = st.history.iter().fold(Vec5::zeros(), |a, v| a + v) / n;
                        let cov = st
                            .history
                            .iter()
                            .fold(Mat5::zeros(), |a, v| a + (v - mean) * (v - mean).transpose())
                            / (n - 1.0)
                            + Mat5::identity() * 1e-10;
                        if let Some(ch) = cov.cholesky() {
                            st.proposal = ch.l() * (2.38 / 5f64.sqrt());
                            st.theta_adapt = StepAdapter::new(1.0, 0.234);
                        }
                        st.history = Vec::new();
                    }
                }
            }
            if let NoiseModel::Estimated { prior_scale } = spec.noise {
                let ssr = s.ssr(&st.theta);
                if !ssr.is_finite() {
                    return Err(numerical("residual sum of squares", m));
                }
                let target = |u: f64| -> f64 {
                    let s2 = (2.0 * u).exp();
                    -s.n * u - ssr / (2.0 * s2) - s2 / (2.0 * prior_scale * prior_scale) + u
                };
                let u_old = st.sigma.ln();
                let z: f64 = rng.sample(StandardNormal);
                let u_new = u_old + st.sigma_adapt.step() * z;
                let diff = target(u_new) - target(u_old);
                let r: f64 = rng.random();
                let accept = diff.is_finite() && r.ln() < diff;
                if accept {
                    st.sigma = u_new.exp();
                }
                st.sigma_adapt.record(accept, warmup);
            }
            if !warmup {
                let base = m * per_eq;
                for k in 0..5 {
                    out[base + k].push(st.theta[k]);
                }
                if estimate_sigma {
                    out[base + 5].push(st.sigma);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes_var::panel::PanelRow;
    use chrono::NaiveDate;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn synthetic_panel(n: usize, seed: u64, alpha: [f64; 4], beta: [[f64; 4]; 4], sigma: f64) -> LogVolPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Normal::new(-4.0, 0.4).unwrap();
        let rows: Vec<PanelRow> = (0..n)
            .map(|_| {
                let backward: [f64; 4] = std::array::from_fn(|_| x.sample(&mut rng));
                let forward = std::array::from_fn(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    alpha[m] + (0..4).map(|j| beta[m][j] * backward[j]).sum::<f64>() + sigma * z
                });
                PanelRow { backward, forward }
            })
            .collect();
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        LogVolPanel::new(d0.iter_days().take(n).collect(), rows).unwrap()
    }

    fn small_cfg(seed: u64) -> McmcConfig {
        McmcConfig { n_warmup: 300, n_draws: 500, seed, ..McmcConfig::default() }
    }

    #[test]
    fn same_seed_same_draws_and_parallel_equals_serial() {
        let p = synthetic_panel(60, 1, [-2.0; 4], [[0.2; 4]; 4], 0.3);
        let a = sample_posterior(&p, &VarModelSpec::default(), &small_cfg(7)).unwrap();
        let b = sample_posterior(&p, &VarModelSpec::default(), &small_cfg(7)).unwrap();
        assert_eq!(a, b);
        let serial = McmcConfig { parallel: false, ..small_cfg(7) };
        assert_eq!(a, sample_posterior(&p, &VarModelSpec::default(), &serial).unwrap());
        let c = sample_posterior(&p, &VarModelSpec::default(), &small_cfg(8)).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.params.len(), 24);
        assert_eq!((a.n_chains(), a.n_draws()), (4, 500));
    }

    #[test]
    fn empty_panel_rejected() {
        let err = sample_posterior(&LogVolPanel::default(), &VarModelSpec::default(), &small_cfg(0));
        assert!(matches!(err, Err(BayesVarError::EmptyPanel)));
    }

    #[test]
    fn one_chain_rejected() {
        let p = synthetic_panel(10, 1, [-2.0; 4], [[0.2; 4]; 4], 0.3);
        let cfg = McmcConfig { n_chains: 1, ..small_cfg(0) };
        assert!(sample_posterior(&p, &VarModelSpec::default(), &cfg).is_err());
    }

    #[test]
    fn tight_prior_dominates_single_row() {
        let p = synthetic_panel(1, 3, [-2.0; 4], [[0.5; 4]; 4], 0.3);
        let mut spec = VarModelSpec::default();
        spec.intercepts = [Prior::new(-1.0, 1e-3); 4];
        spec.betas = [[Prior::new(0.25, 1e-3); 4]; 4];
        let post = sample_posterior(&p, &spec, &small_cfg(4)).unwrap();
        for (i, id) in post.params.iter().enumerate() {
            let (m, sd) = match id.term {
                Term::Intercept => (-1.0, 1e-3),
                Term::Beta(_) => (0.25, 1e-3),
                Term::Sigma => continue,
            };
            let d = post.pooled(i);
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            assert!((mean - m).abs() < 3.0 * sd, "{id:?}: {mean}");
        }
    }

    #[test]
    fn fixed_noise_has_no_sigma_and_random_walk_recovers() {
        let beta = [[0.3, 0.1, 0.0, 0.2], [0.0, 0.2, 0.1, 0.1], [0.1, 0.0, 0.3, 0.0], [0.0, 0.1, 0.0, 0.4]];
        let p = synthetic_panel(400, 5, [-2.0, -2.5, -3.0, -2.2], beta, 0.2);
        let fixed = sample_posterior(&p, &VarModelSpec::strict_unit_noise(), &small_cfg(1)).unwrap();
        assert_eq!(fixed.params.len(), 20);
        let cfg = McmcConfig { sampler: SamplerKind::RandomWalk, n_warmup: 4000, n_draws: 4000, ..small_cfg(2) };
        let rw = sample_posterior(&p, &VarModelSpec::default(), &cfg).unwrap();
        let gibbs = sample_posterior(&p, &VarModelSpec::default(), &small_cfg(2)).unwrap();
        for i in 0..rw.params.len() {
            let mean = |post: &Posterior| {
                let d = post.pooled(i);
                d.iter().sum::<f64>() / d.len() as f64
            };
            let g = gibbs.pooled(i);
            let gm = mean(&gibbs);
            let sd = (g.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / g.len() as f64).sqrt();
            assert!((mean(&rw) - gm).abs() < 0.5 * sd + 1e-3, "{:?}", rw.params[i]);
        }
    }

    #[test]
    fn prior_only_reproduces_prior() {
        let cfg = McmcConfig { n_draws: 4000, ..small_cfg(9) };
        let post = sample_prior_only(&VarModelSpec::default(), &cfg).unwrap();
        let i = post.index(2, Term::Intercept).unwrap();
        let d = post.pooled(i);
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean + 3.0).abs() < 4.0 / n.sqrt());
        assert!((sd - 1.0).abs() < 0.05);
        // half-normal(1): mean sqrt(2/pi)
        let s = post.pooled(post.index(0, Term::Sigma).unwrap());
        let sm = s.iter().sum::<f64>() / s.len() as f64;
        assert!((sm - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.05, "{sm}");
    }
}
