//! Posterior products: the spatial process at the sites, replicate data and
//! marginal summaries.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Chain, Emulators, ModelParams, PosteriorSample, SiteData, PARAM_NAMES};
use crate::emulator::site_seed;
use crate::error::{Error, Result};
use crate::gp;
use crate::stats::{self, Kde};

fn predictions(em: &dyn Emulators, theta: [f64; 3], component: Option<usize>) -> Result<(DVector<f64>, DVector<f64>)> {
    match component {
        Some(k) => em.predict_component(theta, k),
        None => em.predict(theta),
    }
}

fn moments_given(p: &ModelParams, data: &SiteData, mu: &DVector<f64>, var: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = data.len();
    if p.a_zeta == 0.0 {
        return Ok((DVector::zeros(n), DMatrix::zeros(n, n)));
    }
    let k = data.spatial_covariance(p.a_zeta, p.r_zeta);
    let mut s = k.clone();
    let d = data.independent_variance(p.sigma, var);
    for i in 0..n {
        s[(i, i)] += d[i];
    }
    let chol = gp::cholesky(s)?;
    let y = &data.t - mu;
    let mean = &k * chol.solve(&y);
    let mut cov = &k - &k * chol.solve(&k);
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// Posterior mean μ* and covariance V* of ζ at the sites given the data
/// and one parameter value.
pub fn zeta_moments(p: &ModelParams, data: &SiteData, em: &dyn Emulators) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mu, var) = em.predict(p.theta())?;
    moments_given(p, data, &mu, &var)
}

/// Mean and covariance of replicate data at the sites given one parameter
/// value: N(μ(θ) + μ*, diag(V + σ_i² + σ²) + V*).
pub fn predictive_moments(p: &ModelParams, data: &SiteData, em: &dyn Emulators) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mu, var) = em.predict(p.theta())?;
    predictive_given(p, data, &mu, &var)
}

fn predictive_given(p: &ModelParams, data: &SiteData, mu: &DVector<f64>, var: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (zm, mut cov) = moments_given(p, data, mu, var)?;
    let d = data.independent_variance(p.sigma, var);
    for i in 0..data.len() {
        cov[(i, i)] += d[i];
    }
    Ok((mu + zm, cov))
}

/// Cholesky of a covariance that may be only semidefinite.
fn factor_psd(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let scale = cov.diagonal().max().max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c);
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 100.0 };
    }
    gp::cholesky(cov.clone())
}

fn select<'a>(samples: &'a [PosteriorSample], components: Option<&'a [usize]>, max_draws: usize) -> Vec<(usize, &'a PosteriorSample, Option<usize>)> {
    let n = samples.len();
    let m = max_draws.min(n).max(1);
    (0..m)
        .map(|j| {
            let i = if m == n { j } else { j * n / m };
            (i, &samples[i], components.map(|c| c[i]))
        })
        .collect()
}

/// One draw of ζ at the sites per retained sample (at most `max_draws`,
/// evenly spaced). `components` gives the emulator component of each
/// sample when the chain integrated over hyperparameters.
pub fn posterior_zeta(
    samples: &[PosteriorSample],
    components: Option<&[usize]>,
    data: &SiteData,
    em: &dyn Emulators,
    max_draws: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if samples.is_empty() {
        return Err(Error::invalid("no posterior samples"));
    }
    select(samples, components, max_draws)
        .into_par_iter()
        .map(|(i, s, c)| {
            let (mu, var) = predictions(em, s.params.theta(), c)?;
            let (m, cov) = moments_given(&s.params, data, &mu, &var)?;
            if s.params.a_zeta == 0.0 {
                return Ok(m);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(site_seed(seed, i));
            Ok(gp::mvn_sample(&m, &factor_psd(&cov)?, &mut rng))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ZetaSummary {
    pub fn from_draws(draws: &[DVector<f64>]) -> Self {
        let n = draws.first().map_or(0, |d| d.len());
        let col = |i: usize| draws.iter().map(|d| d[i]).collect::<Vec<_>>();
        Self {
            mean: (0..n).map(|i| stats::mean(&col(i))).collect(),
            sd: (0..n).map(|i| if draws.len() > 1 { stats::std_dev(&col(i)) } else { 0.0 }).collect(),
        }
    }
}

/// Posterior predictive draws of replicate dates at every site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// draws[d][i]: draw d at site i.
    pub draws: Vec<Vec<f64>>,
}

impl PredictiveSummary {
    pub fn site_draws(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[i]).collect()
    }

    /// Whether each observation lies inside its central interval.
    pub fn covered(&self, t: &[f64]) -> Vec<bool> {
        t.iter().enumerate().map(|(i, &v)| self.lower[i] <= v && v <= self.upper[i]).collect()
    }
}

pub fn predictive(
    samples: &[PosteriorSample],
    components: Option<&[usize]>,
    data: &SiteData,
    em: &dyn Emulators,
    max_draws: usize,
    mass: f64,
    seed: u64,
) -> Result<PredictiveSummary> {
    if samples.is_empty() {
        return Err(Error::invalid("no posterior samples"));
    }
    let draws: Vec<Vec<f64>> = select(samples, components, max_draws)
        .into_par_iter()
        .map(|(i, s, c)| {
            let (mu, var) = predictions(em, s.params.theta(), c)?;
            let (m, cov) = predictive_given(&s.params, data, &mu, &var)?;
            let mut rng = ChaCha8Rng::seed_from_u64(site_seed(seed ^ 0x5eed, i));
            Ok(gp::mvn_sample(&m, &factor_psd(&cov)?, &mut rng).as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    let n = data.len();
    let mut out = PredictiveSummary {
        mean: Vec::with_capacity(n),
        sd: Vec::with_capacity(n),
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
        draws,
    };
    for i in 0..n {
        let x = out.site_draws(i);
        let (lo, hi) = stats::central_interval(&x, mass);
        out.mean.push(stats::mean(&x));
        out.sd.push(if x.len() > 1 { stats::std_dev(&x) } else { 0.0 });
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub mode: f64,
    pub median: f64,
    pub lower_95: f64,
    pub upper_95: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_samples: usize,
    pub acceptance_theta: f64,
    pub acceptance_sigma: f64,
    pub acceptance_zeta: f64,
    pub failed_predictions: usize,
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub fn summarize_chain(chain: &Chain) -> PosteriorSummary {
    let params = PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let x = chain.column(k);
            let (lo, hi) = stats::central_interval(&x, 0.95);
            ParamSummary {
                name: name.to_string(),
                mean: stats::mean(&x),
                sd: if x.len() > 1 { stats::std_dev(&x) } else { 0.0 },
                mode: Kde::new(&x).mode(),
                median: stats::quantile(&x, 0.5),
                lower_95: lo,
                upper_95: hi,
                ess: stats::effective_sample_size(&x),
            }
        })
        .collect();
    PosteriorSummary {
        n_samples: chain.samples.len(),
        acceptance_theta: chain.acceptance[0],
        acceptance_sigma: chain.acceptance[1],
        acceptance_zeta: chain.acceptance[2],
        failed_predictions: chain.failed_predictions,
        params,
    }
}
