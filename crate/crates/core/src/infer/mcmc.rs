//! Block random-walk Metropolis–Hastings on log parameters.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_jacobian, log_lik_given, Emulators, ModelParams, Priors, SiteData, PARAM_NAMES};
use crate::emulator::site_seed;
use crate::error::{Error, Result};

/// A density over a real vector updated in fixed blocks. Implementors keep
/// whatever they cache for the current state and stage the proposal's
/// cache until `accept` is called.
pub trait BlockTarget {
    /// Log density at the starting state.
    fn init(&mut self, state: &[f64]) -> f64;
    /// Log density at `proposal`, which differs from the current state in `block` only.
    fn propose(&mut self, proposal: &[f64], block: usize, rng: &mut ChaCha8Rng) -> f64;
    fn accept(&mut self);
    /// Auxiliary discrete state recorded alongside each retained draw.
    fn aux(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MhConfig {
    /// Iterations after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Adaptive iterations before burn-in; proposals are frozen afterwards.
    pub pilot: usize,
    pub use_likelihood: bool,
    pub initial: Option<ModelParams>,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            burn_in: 10_000,
            thin: 10,
            pilot: 5_000,
            use_likelihood: true,
            initial: None,
        }
    }
}

impl MhConfig {
    pub fn paper() -> Self {
        Self {
            iterations: 1_000_000,
            burn_in: 100_000,
            thin: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.iterations < self.thin {
            return Err(Error::invalid("MCMC needs thin ≥ 1 and at least one retained draw"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BlockChain {
    pub iters: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub log_target: Vec<f64>,
    pub aux: Vec<usize>,
    /// Acceptance per block over the post-pilot iterations.
    pub acceptance: Vec<f64>,
    /// Frozen proposal factors (scale folded in), one per block.
    pub proposals: Vec<DMatrix<f64>>,
}

fn block_covariance(history: &[Vec<f64>], block: &[usize]) -> DMatrix<f64> {
    let n = history.len() as f64;
    let d = block.len();
    let mean: Vec<f64> = block.iter().map(|&k| history.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    DMatrix::from_fn(d, d, |a, b| {
        history.iter().map(|s| (s[block[a]] - mean[a]) * (s[block[b]] - mean[b])).sum::<f64>() / (n - 1.0)
    })
}

/// Runs the pilot, burn-in and main phases. Each iteration updates every
/// block once, in order. During the pilot each block's scale is tuned
/// towards 30% acceptance in batches, and halfway through its shape is
/// replaced by the empirical covariance of the preceding quarter.
pub fn block_metropolis(
    target: &mut dyn BlockTarget,
    init: Vec<f64>,
    blocks: &[Vec<usize>],
    initial_sd: &[f64],
    config: &MhConfig,
    seed: u64,
) -> Result<BlockChain> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init;
    let mut lt = target.init(&state);
    if !lt.is_finite() {
        return Err(Error::invalid("the starting point has zero posterior density"));
    }
    let nb = blocks.len();
    let mut factors: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| DMatrix::from_diagonal(&DVector::from_iterator(b.len(), b.iter().map(|&k| initial_sd[k]))))
        .collect();
    let mut log_lambda = vec![0.0f64; nb];
    let batch = (config.pilot / 20).clamp(20, 100);
    let (mut batch_acc, mut batches) = (vec![0usize; nb], 0usize);
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut acc = vec![0usize; nb];
    let mut counted = 0usize;

    let total = config.pilot + config.burn_in + config.iterations;
    let kept = config.iterations / config.thin;
    let mut out = BlockChain {
        iters: Vec::with_capacity(kept),
        states: Vec::with_capacity(kept),
        log_target: Vec::with_capacity(kept),
        aux: Vec::with_capacity(kept),
        acceptance: vec![0.0; nb],
        proposals: Vec::new(),
    };

    for it in 0..total {
        let pilot = it < config.pilot;
        for (b, block) in blocks.iter().enumerate() {
            let z = DVector::from_fn(block.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let step = &factors[b] * z * log_lambda[b].exp();
            let mut prop = state.clone();
            for (i, &k) in block.iter().enumerate() {
                prop[k] += step[i];
            }
            let lp = target.propose(&prop, b, &mut rng);
            let accepted = lp.is_finite() && rng.random::<f64>().ln() < lp - lt;
            if accepted {
                state = prop;
                lt = lp;
                target.accept();
            }
            if pilot {
                batch_acc[b] += accepted as usize;
            } else {
                acc[b] += accepted as usize;
            }
        }
        if pilot {
            history.push(state.clone());
            if (it + 1) % batch == 0 {
                batches += 1;
                let gain = (3.0 / (batches as f64).sqrt()).min(1.0);
                for b in 0..nb {
                    let rate = batch_acc[b] as f64 / batch as f64;
                    log_lambda[b] += (rate - 0.3) * gain;
                    batch_acc[b] = 0;
                }
            }
            if it + 1 == config.pilot / 2 {
                let window = &history[config.pilot / 4..];
                for (b, block) in blocks.iter().enumerate() {
                    if window.len() < 10 * block.len() + 2 {
                        continue;
                    }
                    let d = block.len() as f64;
                    let mut cov = block_covariance(window, block) * (2.38 * 2.38 / d);
                    for i in 0..block.len() {
                        cov[(i, i)] += 1e-10;
                    }
                    if let Some(ch) = cov.cholesky() {
                        if ch.l().diagonal().iter().all(|v| *v > 1e-6) {
                            factors[b] = ch.l();
                            log_lambda[b] = 0.0;
                        }
                    }
                }
            }
            continue;
        }
        counted += 1;
        let post = it - config.pilot;
        if post >= config.burn_in && (post - config.burn_in + 1) % config.thin == 0 {
            out.iters.push(post - config.burn_in + 1);
            out.states.push(state.clone());
            out.log_target.push(lt);
            out.aux.push(target.aux());
        }
    }
    out.acceptance = acc.iter().map(|&a| a as f64 / counted.max(1) as f64).collect();
    out.proposals = factors.into_iter().zip(&log_lambda).map(|(f, l)| f * l.exp()).collect();
    Ok(out)
}

/// How the emulator hyperparameters enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperVariant {
    /// A component index is part of the state and is redrawn uniformly with every θ proposal.
    Joint,
    /// The likelihood is averaged over all components.
    Mixture,
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Fixed,
    Joint(usize),
    Mixture(usize),
}

struct ModelTarget<'a> {
    data: &'a SiteData,
    em: &'a dyn Emulators,
    priors: &'a Priors,
    mode: Mode,
    use_likelihood: bool,
    preds: Vec<(DVector<f64>, DVector<f64>)>,
    component: usize,
    pending: Option<(Vec<(DVector<f64>, DVector<f64>)>, usize)>,
    failures: usize,
}

impl ModelTarget<'_> {
    fn loglik(&self, p: &ModelParams, preds: &[(DVector<f64>, DVector<f64>)]) -> f64 {
        if preds.len() == 1 {
            return log_lik_given(p, self.data, &preds[0].0, &preds[0].1);
        }
        let lls: Vec<f64> = preds.par_iter().map(|(m, v)| log_lik_given(p, self.data, m, v)).collect();
        let top = lls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return top;
        }
        top + (lls.iter().map(|l| (l - top).exp()).sum::<f64>() / lls.len() as f64).ln()
    }

    fn predictions(&mut self, theta: [f64; 3], component: usize) -> Option<Vec<(DVector<f64>, DVector<f64>)>> {
        let res: Result<Vec<_>> = match self.mode {
            Mode::Fixed => self.em.predict(theta).map(|r| vec![r]),
            Mode::Joint(_) => self.em.predict_component(theta, component).map(|r| vec![r]),
            Mode::Mixture(n) => (0..n).into_par_iter().map(|k| self.em.predict_component(theta, k)).collect(),
        };
        match res {
            Ok(p) => Some(p),
            Err(e) => {
                self.failures += 1;
                log::debug!("emulator prediction failed at θ = {theta:?}: {e}");
                None
            }
        }
    }
}

impl BlockTarget for ModelTarget<'_> {
    fn init(&mut self, state: &[f64]) -> f64 {
        let p = ModelParams::from_log(state);
        let lp = self.priors.log_prior_log_scale(&p);
        if !self.use_likelihood {
            return lp;
        }
        match self.predictions(p.theta(), self.component) {
            Some(preds) => {
                let ll = self.loglik(&p, &preds);
                self.preds = preds;
                lp + ll
            }
            None => f64::NEG_INFINITY,
        }
    }

    fn propose(&mut self, proposal: &[f64], block: usize, rng: &mut ChaCha8Rng) -> f64 {
        self.pending = None;
        let p = ModelParams::from_log(proposal);
        let lp = self.priors.log_prior_log_scale(&p);
        if !lp.is_finite() || !self.use_likelihood {
            return lp;
        }
        if block != 0 {
            return lp + self.loglik(&p, &self.preds);
        }
        let component = match self.mode {
            Mode::Joint(n) if n > 1 => rng.random_range(0..n),
            _ => self.component,
        };
        let Some(preds) = self.predictions(p.theta(), component) else {
            return f64::NEG_INFINITY;
        };
        let ll = self.loglik(&p, &preds);
        self.pending = Some((preds, component));
        lp + ll
    }

    fn accept(&mut self) {
        if let Some((preds, component)) = self.pending.take() {
            self.preds = preds;
            self.component = component;
        }
    }

    fn aux(&self) -> usize {
        self.component
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub iter: usize,
    pub params: ModelParams,
    /// Log prior plus log likelihood, up to the evidence.
    pub log_post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<PosteriorSample>,
    /// Acceptance of the θ, σ and (a_ζ, r_ζ) blocks.
    pub acceptance: [f64; 3],
    pub failed_predictions: usize,
    /// Hyperparameter component per sample (all zero without the joint scheme).
    pub components: Vec<usize>,
}

impl Chain {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.params.to_array()[k]).collect()
    }

    pub fn write_csv(&self, path: &Path, header: &str) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        if !header.is_empty() {
            writeln!(f, "{header}")?;
        }
        let mut w = csv::Writer::from_writer(f);
        let mut cols = vec!["iter"];
        cols.extend(PARAM_NAMES);
        cols.push("log_post");
        w.write_record(&cols)?;
        for s in &self.samples {
            let mut row = vec![s.iter.to_string()];
            row.extend(s.params.to_array().iter().map(|v| v.to_string()));
            row.push(s.log_post.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<PosteriorSample>> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::invalid(format!("{}: bad posterior row", path.display())))
            };
            out.push(PosteriorSample {
                iter: field(0)? as usize,
                params: ModelParams::from_array(std::array::from_fn(|k| field(k + 1).unwrap_or(f64::NAN))),
                log_post: field(7)?,
            });
            if !out.last().is_some_and(|s| s.params.is_positive()) {
                return Err(Error::invalid(format!("{}: bad posterior row", path.display())));
            }
        }
        Ok(out)
    }
}

const BLOCKS: [&[usize]; 3] = [&[0, 1, 2], &[3], &[4, 5]];
const INITIAL_SD: [f64; 6] = [0.05, 0.05, 0.05, 0.1, 0.2, 0.2];

fn default_start(priors: &Priors) -> ModelParams {
    ModelParams {
        nu: priors.nu.median(),
        v_coast: priors.v_coast.median(),
        v_river: priors.v_river.median(),
        sigma: priors.sigma2.mean().sqrt(),
        a_zeta: priors.a_zeta.median(),
        r_zeta: priors.r_zeta.median(),
    }
}

fn run(data: &SiteData, em: &dyn Emulators, priors: &Priors, config: &MhConfig, seed: u64, mode: Mode) -> Result<Chain> {
    if config.use_likelihood && em.n_sites() != data.len() {
        return Err(Error::invalid(format!("{} emulators for {} sites", em.n_sites(), data.len())));
    }
    let start = config.initial.unwrap_or_else(|| default_start(priors));
    if !start.is_positive() {
        return Err(Error::invalid("starting parameters must be positive"));
    }
    let mut target = ModelTarget {
        data,
        em,
        priors,
        mode,
        use_likelihood: config.use_likelihood,
        preds: Vec::new(),
        component: 0,
        pending: None,
        failures: 0,
    };
    let blocks: Vec<Vec<usize>> = BLOCKS.iter().map(|b| b.to_vec()).collect();
    let raw = block_metropolis(&mut target, start.to_log().to_vec(), &blocks, &INITIAL_SD, config, seed)?;
    let acceptance = [raw.acceptance[0], raw.acceptance[1], raw.acceptance[2]];
    for (name, a) in ["θ", "σ", "ζ"].iter().zip(acceptance) {
        if !(0.1..=0.6).contains(&a) {
            log::warn!("{name} block acceptance {a:.3}; the chain may mix poorly");
        }
    }
    if target.failures > 0 {
        log::warn!("{} proposals rejected because emulator prediction failed", target.failures);
    }
    let samples = raw
        .iters
        .iter()
        .zip(&raw.states)
        .zip(&raw.log_target)
        .map(|((&iter, y), &lt)| {
            let params = ModelParams::from_log(y);
            PosteriorSample {
                iter,
                params,
                log_post: lt - log_jacobian(&params),
            }
        })
        .collect();
    Ok(Chain {
        samples,
        acceptance,
        failed_predictions: target.failures,
        components: raw.aux,
    })
}

/// Samples the posterior of the six model parameters with the emulators'
/// plug-in hyperparameters.
pub fn mh_sample(data: &SiteData, em: &dyn Emulators, priors: &Priors, config: &MhConfig, seed: u64) -> Result<Chain> {
    run(data, em, priors, config, seed, Mode::Fixed)
}

/// As `mh_sample`, but integrating over the stored emulator hyperparameter
/// draws. Component k pairs the k-th draw of every site.
pub fn mh_sample_hyper_uncertain(
    data: &SiteData,
    em: &dyn Emulators,
    priors: &Priors,
    config: &MhConfig,
    variant: HyperVariant,
    seed: u64,
) -> Result<Chain> {
    let n = em.n_components();
    let mode = match variant {
        HyperVariant::Joint => Mode::Joint(n),
        HyperVariant::Mixture => Mode::Mixture(n),
    };
    run(data, em, priors, config, seed, mode)
}

/// Independent chains in parallel, seeded from `seed`.
pub fn mh_sample_chains(
    data: &SiteData,
    em: &dyn Emulators,
    priors: &Priors,
    config: &MhConfig,
    chains: usize,
    seed: u64,
) -> Result<Vec<Chain>> {
    (0..chains)
        .into_par_iter()
        .map(|c| mh_sample(data, em, priors, config, site_seed(seed, c)))
        .collect()
}
