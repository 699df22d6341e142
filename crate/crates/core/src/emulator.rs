//! Per-site Gaussian-process emulators of the arrival time τ_i(θ),
//! θ = (ν, V_C, V_R), with mean m_i(θ) = α₀ + α₁/√ν + α₂/V_C + α₃/V_R.
//!
//! The mean coefficients are fitted by least squares and then frozen; the
//! kernel amplitude and length scales are sampled by random-walk Metropolis on
//! the log scale, and predictions use the posterior-mean hyperparameters.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::gp::{self, Conditioning, KernelParams};
use crate::stats::{self, LogNormalSpec};

/// Largest fraction of design runs allowed to miss a site.
pub const MAX_UNREACHED_FRACTION: f64 = 0.2;

pub const PIT_BINS: usize = 10;

const FILE_FORMAT: &str = "wavefront-site-emulator";
const FILE_VERSION: u32 = 1;

/// (1, ν^{−1/2}, V_C^{−1}, V_R^{−1}).
pub fn mean_basis(theta: [f64; 3]) -> Result<[f64; 4]> {
    if theta.iter().all(|&v| v > 0.0) {
        Ok([1.0, theta[0].sqrt().recip(), theta[1].recip(), theta[2].recip()])
    } else {
        Err(Error::invalid(format!("mean basis needs positive parameters, got {theta:?}")))
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean_value(alpha: &[f64; 4], theta: [f64; 3]) -> Result<f64> {
    Ok(dot4(alpha, &mean_basis(theta)?))
}

/// Least-squares mean coefficients.
pub fn fit_mean(design: &[[f64; 3]], arrivals: &[f64]) -> Result<[f64; 4]> {
    if design.len() < 4 || design.len() != arrivals.len() {
        return Err(Error::invalid("mean fit needs at least 4 design points with matching arrivals"));
    }
    let mut basis = DMatrix::zeros(design.len(), 4);
    for (i, &theta) in design.iter().enumerate() {
        for (j, v) in mean_basis(theta)?.into_iter().enumerate() {
            basis[(i, j)] = v;
        }
    }
    let c = gp::ols(&basis, &DVector::from_column_slice(arrivals))?;
    Ok([c[0], c[1], c[2], c[3]])
}

fn design_matrix(design: &[[f64; 3]]) -> DMatrix<f64> {
    DMatrix::from_fn(design.len(), 3, |i, j| design[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub amplitude: f64,
    pub length_scales: [f64; 3],
}

impl HyperParams {
    pub fn kernel(&self) -> KernelParams {
        KernelParams::new(self.amplitude, self.length_scales.to_vec())
    }

    fn to_log(self) -> [f64; 4] {
        [
            self.amplitude.ln(),
            self.length_scales[0].ln(),
            self.length_scales[1].ln(),
            self.length_scales[2].ln(),
        ]
    }

    fn from_log(y: &[f64; 4]) -> Self {
        Self {
            amplitude: y[0].exp(),
            length_scales: [y[1].exp(), y[2].exp(), y[3].exp()],
        }
    }

    /// Componentwise mean on the original scale.
    pub fn mean_of(draws: &[HyperParams]) -> Self {
        let n = draws.len() as f64;
        let mut m = Self {
            amplitude: 0.0,
            length_scales: [0.0; 3],
        };
        for d in draws {
            m.amplitude += d.amplitude / n;
            for j in 0..3 {
                m.length_scales[j] += d.length_scales[j] / n;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub amplitude: LogNormalSpec,
    pub length_scales: [LogNormalSpec; 3],
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            amplitude: LogNormalSpec::new(6.3, 0.5),
            length_scales: [LogNormalSpec::new(9.0, 3.0); 3],
        }
    }
}

impl HyperPriors {
    /// Prior density of the log hyperparameters.
    fn ln_pdf_log(&self, y: &[f64; 4]) -> f64 {
        self.amplitude.ln_pdf_log(y[0]) + (0..3).map(|j| self.length_scales[j].ln_pdf_log(y[j + 1])).sum::<f64>()
    }

    fn median(&self) -> HyperParams {
        HyperParams {
            amplitude: self.amplitude.median(),
            length_scales: std::array::from_fn(|j| self.length_scales[j].median()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperMhConfig {
    /// Retained-phase iterations, after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Switch the likelihood off to sample the prior.
    pub use_likelihood: bool,
}

impl Default for HyperMhConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            burn_in: 5_000,
            thin: 10,
            use_likelihood: true,
        }
    }
}

impl HyperMhConfig {
    pub fn paper() -> Self {
        Self {
            iterations: 500_000,
            burn_in: 50_000,
            thin: 50,
            use_likelihood: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.thin > self.iterations {
            return Err(Error::Config("emulator MCMC needs iterations ≥ thin ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperChain {
    pub samples: Vec<HyperParams>,
    /// Acceptance rate over the retained phase.
    pub acceptance: f64,
}

/// Random-walk Metropolis over (log a, log r₁, log r₂, log r₃) targeting
/// prior × GP marginal likelihood, with the mean fixed at `alpha`.
///
/// Each iteration proposes independent normal increments for all four log
/// hyperparameters. During burn-in the increments are rescaled from the
/// chain's own spread and the acceptance rate; afterwards they are frozen.
pub fn fit_hyper_mh(
    design: &[[f64; 3]],
    arrivals: &[f64],
    alpha: &[f64; 4],
    priors: &HyperPriors,
    config: &HyperMhConfig,
    seed: u64,
) -> Result<HyperChain> {
    config.validate()?;
    let x = design_matrix(design);
    let y = DVector::from_column_slice(arrivals);
    let m = DVector::from_iterator(
        design.len(),
        design.iter().map(|&t| mean_value(alpha, t)).collect::<Result<Vec<_>>>()?,
    );
    let log_target = |h: &[f64; 4]| -> f64 {
        let prior = priors.ln_pdf_log(h);
        if !config.use_likelihood || design.is_empty() {
            return prior;
        }
        match Conditioning::new(x.clone(), y.clone(), m.clone(), HyperParams::from_log(h).kernel(), None) {
            Ok(c) => prior + c.loglik(),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let start = if config.use_likelihood && design.len() > 1 {
        let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - m[i]).collect();
        let spread = stats::std_dev(&resid);
        HyperParams {
            amplitude: if spread > 0.0 { spread } else { priors.amplitude.median() },
            length_scales: std::array::from_fn(|j| {
                let (lo, hi) = design.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t[j]), h.max(t[j])));
                ((hi - lo) * 0.5).max(1e-3)
            }),
        }
    } else {
        priors.median()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = start.to_log();
    let mut lp = log_target(&state);
    let mut sd = [0.2; 4];
    let mut log_lambda = 0.0f64;
    let mut history: Vec<[f64; 4]> = Vec::new();
    let (mut batch_acc, mut batch_n, mut batches) = (0usize, 0usize, 0usize);
    let (mut kept_acc, mut kept_n) = (0usize, 0usize);
    let mut samples = Vec::with_capacity(config.iterations / config.thin);

    for it in 0..config.burn_in + config.iterations {
        let scale = log_lambda.exp();
        let mut prop = state;
        for j in 0..4 {
            prop[j] += scale * sd[j] * rng.sample::<f64, _>(StandardNormal);
        }
        let lp_prop = log_target(&prop);
        let accepted = lp_prop.is_finite() && rng.random::<f64>().ln() < lp_prop - lp;
        if accepted {
            state = prop;
            lp = lp_prop;
        }
        if it < config.burn_in {
            history.push(state);
            batch_acc += accepted as usize;
            batch_n += 1;
            if batch_n == 100 {
                batches += 1;
                let rate = batch_acc as f64 / batch_n as f64;
                log_lambda += (rate - 0.25) * (3.0 / (batches as f64).sqrt()).min(1.0);
                if history.len() >= 400 {
                    let recent = &history[history.len() / 2..];
                    for (j, s) in sd.iter_mut().enumerate() {
                        let col: Vec<f64> = recent.iter().map(|h| h[j]).collect();
                        *s = (stats::std_dev(&col) * 2.38 / 2.0).max(1e-3);
                    }
                }
                batch_acc = 0;
                batch_n = 0;
            }
        } else {
            kept_acc += accepted as usize;
            kept_n += 1;
            if (it - config.burn_in + 1) % config.thin == 0 {
                samples.push(HyperParams::from_log(&state));
            }
        }
    }
    let acceptance = kept_acc as f64 / kept_n.max(1) as f64;
    if !(0.05..=0.6).contains(&acceptance) {
        log::warn!(
            "emulator hyperparameter acceptance {acceptance:.3} outside [0.05, 0.6]; lengthen burn-in so the proposal scales can settle"
        );
    }
    Ok(HyperChain { samples, acceptance })
}

/// A fitted emulator for one site.
#[derive(Debug, Clone)]
pub struct SiteEmulator {
    pub site_id: String,
    pub alpha: [f64; 4],
    pub hyper_samples: Vec<HyperParams>,
    pub hyper_point: HyperParams,
    /// Training inputs actually used (unreached runs removed).
    pub design: Vec<[f64; 3]>,
    pub arrivals: Vec<f64>,
    /// Indices into the original design of runs that never reached the site.
    pub excluded: Vec<usize>,
    pub acceptance: f64,
    cond: Conditioning,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmulatorFile {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
    site_id: String,
    alpha: [f64; 4],
    hyper_point: HyperParams,
    acceptance: f64,
    excluded: Vec<usize>,
    design: Vec<[f64; 3]>,
    arrivals: Vec<f64>,
    hyper_samples: Vec<HyperParams>,
}

impl SiteEmulator {
    /// Assembles an emulator; `hyper_point` is the mean of `hyper_samples`.
    pub fn from_parts(
        site_id: String,
        alpha: [f64; 4],
        hyper_samples: Vec<HyperParams>,
        design: Vec<[f64; 3]>,
        arrivals: Vec<f64>,
        excluded: Vec<usize>,
    ) -> Result<Self> {
        if hyper_samples.is_empty() {
            return Err(Error::invalid("an emulator needs at least one hyperparameter draw"));
        }
        let hyper_point = HyperParams::mean_of(&hyper_samples);
        let cond = conditioning(&design, &arrivals, &alpha, &hyper_point)?;
        Ok(Self {
            site_id,
            alpha,
            hyper_samples,
            hyper_point,
            design,
            arrivals,
            excluded,
            acceptance: f64::NAN,
            cond,
        })
    }

    /// Emulator with known hyperparameters and mean coefficients.
    pub fn with_hyper(site_id: &str, alpha: [f64; 4], hyper: HyperParams, design: Vec<[f64; 3]>, arrivals: Vec<f64>) -> Result<Self> {
        Self::from_parts(site_id.to_string(), alpha, vec![hyper], design, arrivals, Vec::new())
    }

    pub fn conditioning(&self) -> &Conditioning {
        &self.cond
    }

    pub fn mean(&self, theta: [f64; 3]) -> Result<f64> {
        mean_value(&self.alpha, theta)
    }

    /// Marginal means and variances at the query points.
    pub fn predict(&self, query: &[[f64; 3]]) -> Result<(Vec<f64>, Vec<f64>)> {
        predict_with(&self.cond, &self.alpha, query)
    }

    pub fn predict_point(&self, theta: [f64; 3]) -> Result<(f64, f64)> {
        self.cond.predict_point(&theta, self.mean(theta)?)
    }

    /// Mean vector and full covariance at the query points.
    pub fn predict_full(&self, query: &[[f64; 3]]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let qm = DVector::from_vec(query.iter().map(|&t| self.mean(t)).collect::<Result<Vec<_>>>()?);
        self.cond.condition(&design_matrix(query), &qm)
    }

    /// Up to `n` hyperparameter draws, evenly spaced through the stored chain.
    pub fn component_draws(&self, n: usize) -> Vec<HyperParams> {
        let len = self.hyper_samples.len();
        let n = n.clamp(1, len);
        (0..n).map(|k| self.hyper_samples[k * len / n]).collect()
    }

    /// One conditioning per selected hyperparameter draw.
    pub fn components(&self, n: usize) -> Result<Vec<Conditioning>> {
        self.component_draws(n)
            .iter()
            .map(|h| conditioning(&self.design, &self.arrivals, &self.alpha, h))
            .collect()
    }

    /// Equally weighted normal mixture: one (means, variances) pair per draw.
    pub fn predict_mixture(&self, query: &[[f64; 3]], n_components: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        self.components(n_components)?
            .iter()
            .map(|c| predict_with(c, &self.alpha, query))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with_meta(path, &BTreeMap::new())
    }

    /// Saves with extra key-value provenance fields.
    pub fn save_with_meta(&self, path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
        let file = EmulatorFile {
            format: FILE_FORMAT.into(),
            version: FILE_VERSION,
            meta: meta.clone(),
            site_id: self.site_id.clone(),
            alpha: self.alpha,
            hyper_point: self.hyper_point,
            acceptance: self.acceptance,
            excluded: self.excluded.clone(),
            design: self.design.clone(),
            arrivals: self.arrivals.clone(),
            hyper_samples: self.hyper_samples.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: EmulatorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != FILE_FORMAT || file.version != FILE_VERSION {
            return Err(Error::Malformed {
                path: path.display().to_string(),
                line: 1,
                message: format!("unsupported emulator file {} v{}", file.format, file.version),
            });
        }
        let mut em = Self::from_parts(file.site_id, file.alpha, file.hyper_samples, file.design, file.arrivals, file.excluded)?;
        em.acceptance = file.acceptance;
        Ok(em)
    }
}

fn conditioning(design: &[[f64; 3]], arrivals: &[f64], alpha: &[f64; 4], hyper: &HyperParams) -> Result<Conditioning> {
    let m = design.iter().map(|&t| mean_value(alpha, t)).collect::<Result<Vec<_>>>()?;
    Conditioning::new(
        design_matrix(design),
        DVector::from_column_slice(arrivals),
        DVector::from_vec(m),
        hyper.kernel(),
        None,
    )
}

/// Marginal prediction through an arbitrary conditioning of the same site.
pub fn predict_with(cond: &Conditioning, alpha: &[f64; 4], query: &[[f64; 3]]) -> Result<(Vec<f64>, Vec<f64>)> {
    let qm = DVector::from_vec(query.iter().map(|&t| mean_value(alpha, t)).collect::<Result<Vec<_>>>()?);
    let (mu, var) = cond.marginal(&design_matrix(query), &qm)?;
    Ok((mu.as_slice().to_vec(), var.as_slice().to_vec()))
}

/// Drops unreached runs (failing when more than 20% are missing), fits the
/// mean, samples the hyperparameters and assembles the emulator.
pub fn train_site(
    site_id: &str,
    design: &[[f64; 3]],
    arrivals: &[Option<f64>],
    priors: &HyperPriors,
    config: &HyperMhConfig,
    seed: u64,
) -> Result<SiteEmulator> {
    if design.len() != arrivals.len() {
        return Err(Error::invalid("design and arrival counts differ"));
    }
    let excluded: Vec<usize> = (0..design.len()).filter(|&i| arrivals[i].is_none()).collect();
    if excluded.len() as f64 > MAX_UNREACHED_FRACTION * design.len() as f64 {
        return Err(Error::TooManyUnreached {
            site: site_id.to_string(),
            unreached: excluded.len(),
            total: design.len(),
        });
    }
    if !excluded.is_empty() {
        log::info!("site {site_id}: {} unreached design runs excluded", excluded.len());
    }
    let (d, a): (Vec<[f64; 3]>, Vec<f64>) = design
        .iter()
        .zip(arrivals)
        .filter_map(|(t, a)| a.map(|a| (*t, a)))
        .unzip();
    let alpha = fit_mean(&d, &a)?;
    let chain = fit_hyper_mh(&d, &a, &alpha, priors, config, seed)?;
    let mut em = SiteEmulator::from_parts(site_id.to_string(), alpha, chain.samples, d, a, excluded)?;
    em.acceptance = chain.acceptance;
    Ok(em)
}

/// Seed for site `index` derived from the master seed.
pub fn site_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Trains every site in parallel. `arrivals[k][i]` is design run k at site i.
pub fn train_all(
    site_ids: &[String],
    design: &[[f64; 3]],
    arrivals: &[Vec<Option<f64>>],
    priors: &HyperPriors,
    config: &HyperMhConfig,
    master_seed: u64,
) -> Vec<Result<SiteEmulator>> {
    site_ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let column: Vec<Option<f64>> = arrivals.iter().map(|run| run[i]).collect();
            train_site(id, design, &column, priors, config, site_seed(master_seed, i))
        })
        .collect()
}

/// Quantile of the scaled F reference for MD²: p*(p−5)/(p−3) · F(p*, p−3).
pub fn md2_reference_quantile(p: usize, p_star: usize, q: f64) -> f64 {
    let f = FisherSnedecor::new(p_star as f64, p as f64 - 3.0).expect("p > 3");
    p_star as f64 * (p as f64 - 5.0) / (p as f64 - 3.0) * f.inverse_cdf(q)
}

/// 95% threshold on MD itself.
pub fn md_threshold(p: usize, p_star: usize) -> f64 {
    md2_reference_quantile(p, p_star, 0.95).sqrt()
}

pub fn chi2_threshold(bins: usize) -> f64 {
    ChiSquared::new(bins as f64 - 1.0).expect("at least two bins").inverse_cdf(0.95)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdResult {
    pub md: f64,
    pub threshold: f64,
    pub p: usize,
    pub p_star: usize,
}

/// Mahalanobis distance of holdout runs under the full predictive covariance.
pub fn validate_md(em: &SiteEmulator, holdout: &[[f64; 3]], truth: &[f64]) -> Result<MdResult> {
    if holdout.len() != truth.len() || holdout.is_empty() {
        return Err(Error::invalid("holdout inputs and arrivals must be non-empty and equal in length"));
    }
    let (mu, mut cov) = em.predict_full(holdout)?;
    let resid = DVector::from_column_slice(truth) - mu;
    // Holdout runs carry the same nugget as the training runs.
    let mut jitter = gp::NUGGET * em.hyper_point.amplitude.powi(2);
    for i in 0..cov.nrows() {
        cov[(i, i)] += jitter;
    }
    let chol = loop {
        match gp::cholesky(cov.clone()) {
            Ok(c) => break c,
            Err(e) if jitter < 1e-2 * em.hyper_point.amplitude.powi(2) => {
                log::warn!("site {}: singular holdout covariance ({e}); adding jitter {jitter:e}", em.site_id);
                for i in 0..cov.nrows() {
                    cov[(i, i)] += jitter;
                }
                jitter *= 10.0;
            }
            Err(e) => return Err(e),
        }
    };
    let mut z = resid;
    chol.l_dirty().solve_lower_triangular_mut(&mut z);
    let p = em.design.len();
    Ok(MdResult {
        md: z.norm(),
        threshold: md_threshold(p, holdout.len()),
        p,
        p_star: holdout.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitResult {
    pub pit: Vec<f64>,
    pub counts: [usize; PIT_BINS],
    pub chi2: f64,
    pub threshold: f64,
}

/// Counts in ten equal bins and the Pearson χ² against uniformity.
pub fn pit_chi2(pit: &[f64]) -> ([usize; PIT_BINS], f64) {
    let mut counts = [0usize; PIT_BINS];
    for &u in pit {
        counts[((u * PIT_BINS as f64) as usize).min(PIT_BINS - 1)] += 1;
    }
    let expected = pit.len() as f64 / PIT_BINS as f64;
    let chi2 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    (counts, chi2)
}

/// Probability integral transforms of holdout runs under the marginal predictions.
pub fn validate_pit(em: &SiteEmulator, holdout: &[[f64; 3]], truth: &[f64]) -> Result<PitResult> {
    if holdout.len() != truth.len() || holdout.len() < 20 {
        return Err(Error::invalid("PIT validation needs at least 20 holdout runs"));
    }
    let (mu, var) = em.predict(holdout)?;
    let pit = (0..holdout.len())
        .map(|k| {
            if var[k] <= 0.0 {
                Err(Error::ZeroVariance { index: k })
            } else {
                Ok(stats::normal_cdf((truth[k] - mu[k]) / var[k].sqrt()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (counts, chi2) = pit_chi2(&pit);
    Ok(PitResult {
        pit,
        counts,
        chi2,
        threshold: chi2_threshold(PIT_BINS),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteValidation {
    pub site_id: String,
    pub md: f64,
    pub md_threshold: f64,
    pub chi2: f64,
    pub chi2_threshold: f64,
    pub pass: bool,
    pub pit: Vec<f64>,
}

/// Both diagnostics; holdout runs that never reached the site are skipped.
pub fn validate_site(em: &SiteEmulator, holdout: &[[f64; 3]], truth: &[Option<f64>]) -> Result<SiteValidation> {
    let (q, t): (Vec<[f64; 3]>, Vec<f64>) = holdout.iter().zip(truth).filter_map(|(q, t)| t.map(|t| (*q, t))).unzip();
    let md = validate_md(em, &q, &t)?;
    let pit = validate_pit(em, &q, &t)?;
    Ok(SiteValidation {
        site_id: em.site_id.clone(),
        md: md.md,
        md_threshold: md.threshold,
        chi2: pit.chi2,
        chi2_threshold: pit.threshold,
        pass: md.md <= md.threshold && pit.chi2 <= pit.threshold,
        pit: pit.pit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{lhd_maximin, DEFAULT_BOX};
    use approx::assert_relative_eq;

    fn smooth(t: [f64; 3]) -> f64 {
        1000.0 + 2000.0 / t[0].sqrt() + 50.0 / t[1] + 30.0 / t[2]
    }

    #[test]
    fn basis_examples() {
        assert_eq!(mean_basis([1.0, 1.0, 1.0]).unwrap(), [1.0; 4]);
        assert_eq!(mean_basis([4.0, 2.0, 0.5]).unwrap(), [1.0, 0.5, 0.5, 2.0]);
        let b = mean_basis([100.0, 10.0, 10.0]).unwrap();
        for (x, y) in b.iter().zip([1.0, 0.1, 0.1, 0.1]) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
        assert!(mean_basis([0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn mean_fit_recovers_coefficients() {
        let d = lhd_maximin(200, &DEFAULT_BOX, 5, 1).unwrap();
        let a: Vec<f64> = d.points.iter().map(|t| 100.0 + 500.0 / t[0].sqrt()).collect();
        let alpha = fit_mean(&d.points, &a).unwrap();
        for (x, y) in alpha.iter().zip([100.0, 500.0, 0.0, 0.0]) {
            assert!((x - y).abs() < 1e-8 * 500.0);
        }
        let c = fit_mean(&d.points, &vec![42.0; 200]).unwrap();
        assert!((c[0] - 42.0).abs() < 1e-9 && c[1..].iter().all(|v| v.abs() < 1e-9));
        let truth = [3.0, -7.0, 11.0, 0.5];
        let a: Vec<f64> = d.points.iter().map(|&t| mean_value(&truth, t).unwrap()).collect();
        let alpha = fit_mean(&d.points, &a).unwrap();
        for (x, y) in alpha.iter().zip(truth) {
            assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
        }
    }

    fn wiggly(t: [f64; 3]) -> f64 {
        smooth(t) + 40.0 * (t[0] / 15.0).sin() + 30.0 * (2.0 * t[1]).cos() + 20.0 * (3.0 * t[2]).sin()
    }

    fn trained(p: usize, seed: u64) -> (SiteEmulator, Vec<[f64; 3]>) {
        trained_on(p, seed, smooth)
    }

    fn trained_on(p: usize, seed: u64, f: fn([f64; 3]) -> f64) -> (SiteEmulator, Vec<[f64; 3]>) {
        let d = lhd_maximin(p, &DEFAULT_BOX, 20, seed).unwrap();
        let a: Vec<Option<f64>> = d.points.iter().map(|&t| Some(f(t))).collect();
        let cfg = HyperMhConfig {
            iterations: 1500,
            burn_in: 1000,
            thin: 5,
            use_likelihood: true,
        };
        (train_site("s", &d.points, &a, &HyperPriors::default(), &cfg, seed).unwrap(), d.points)
    }

    #[test]
    fn interpolates_and_reverts() {
        let (em, design) = trained_on(60, 3, wiggly);
        let (mu, var) = em.predict(&design).unwrap();
        let a2 = em.hyper_point.amplitude.powi(2);
        let range = em.arrivals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            - em.arrivals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        for i in 0..design.len() {
            assert!((mu[i] - em.arrivals[i]).abs() < 1e-6 * range);
            assert!(var[i] < 1e-8 * a2);
        }
        let r = em.hyper_point.length_scales;
        let far = [[120.0 + 20.0 * r[0], 3.0 + 20.0 * r[1], 2.0 + 20.0 * r[2]]];
        let (_, v) = em.predict(&far).unwrap();
        assert!((v[0] / a2 - 1.0).abs() < 0.1);
    }

    #[test]
    fn holdout_coverage_on_smooth_function() {
        let (em, _) = trained(60, 4);
        let hold = lhd_maximin(100, &[(5.0, 115.0), (0.1, 2.9), (0.1, 1.9)], 1, 99).unwrap().points;
        let (mu, var) = em.predict(&hold).unwrap();
        let inside = (0..hold.len()).filter(|&k| (mu[k] - smooth(hold[k])).abs() < 3.0 * var[k].sqrt()).count();
        assert!(inside >= 95, "{inside} of 100 inside 3 sd");
    }

    #[test]
    fn mixture_identities() {
        let (em, _) = trained_on(40, 5, wiggly);
        let q = lhd_maximin(50, &[(5.0, 115.0), (0.1, 2.9), (0.1, 1.9)], 1, 5).unwrap().points;
        let mix = em.predict_mixture(&q, 20).unwrap();
        assert_eq!(mix.len(), 20);
        let (_, var) = em.predict(&q).unwrap();
        let mut wider = 0;
        for k in 0..q.len() {
            let mean = mix.iter().map(|c| c.0[k]).sum::<f64>() / 20.0;
            let total = mix.iter().map(|c| c.1[k] + (c.0[k] - mean).powi(2)).sum::<f64>() / 20.0;
            wider += (total >= var[k]) as usize;
        }
        assert!(wider * 2 > q.len(), "mixture wider at only {wider} of {} queries", q.len());

        let single = SiteEmulator::with_hyper("s", em.alpha, em.hyper_point, em.design.clone(), em.arrivals.clone()).unwrap();
        let collapsed = single.predict_mixture(&q, 1).unwrap();
        assert_eq!(collapsed[0], single.predict(&q).unwrap());
        assert_eq!(single.predict(&q).unwrap(), em.predict(&q).unwrap());
    }

    #[test]
    fn flat_data_shrinks_amplitude() {
        let d = lhd_maximin(30, &DEFAULT_BOX, 5, 6).unwrap();
        let a = vec![500.0; 30];
        let alpha = fit_mean(&d.points, &a).unwrap();
        let cfg = HyperMhConfig {
            iterations: 3000,
            burn_in: 1000,
            thin: 5,
            use_likelihood: true,
        };
        let chain = fit_hyper_mh(&d.points, &a, &alpha, &HyperPriors::default(), &cfg, 1).unwrap();
        let mean_a = chain.samples.iter().map(|h| h.amplitude).sum::<f64>() / chain.samples.len() as f64;
        assert!(mean_a < HyperPriors::default().amplitude.mean());
    }

    #[test]
    fn prior_only_chain_matches_prior() {
        let cfg = HyperMhConfig {
            iterations: 40_000,
            burn_in: 2000,
            thin: 10,
            use_likelihood: false,
        };
        let chain = fit_hyper_mh(&[], &[], &[0.0; 4], &HyperPriors::default(), &cfg, 2).unwrap();
        let logs: Vec<f64> = chain.samples.iter().map(|h| h.amplitude.ln()).collect();
        let se = (0.5f64 / stats::effective_sample_size(&logs)).sqrt();
        assert!((stats::mean(&logs) - 6.3).abs() < 3.0 * se, "mean {} se {se}", stats::mean(&logs));
        let again = fit_hyper_mh(&[], &[], &[0.0; 4], &HyperPriors::default(), &cfg, 2).unwrap();
        assert_eq!(chain, again);
    }

    #[test]
    fn unreached_runs_are_excluded_or_fatal() {
        let d = lhd_maximin(20, &DEFAULT_BOX, 5, 8).unwrap();
        let cfg = HyperMhConfig {
            iterations: 200,
            burn_in: 100,
            thin: 2,
            use_likelihood: true,
        };
        let mut a: Vec<Option<f64>> = d.points.iter().map(|&t| Some(smooth(t))).collect();
        a[3] = None;
        a[7] = None;
        let em = train_site("x", &d.points, &a, &HyperPriors::default(), &cfg, 1).unwrap();
        assert_eq!(em.excluded, vec![3, 7]);
        assert_eq!(em.design.len(), 18);
        a[9] = None;
        a[11] = None;
        a[13] = None;
        assert!(matches!(
            train_site("x", &d.points, &a, &HyperPriors::default(), &cfg, 1),
            Err(Error::TooManyUnreached { unreached: 5, total: 20, .. })
        ));
    }

    #[test]
    fn thresholds() {
        assert!((md_threshold(200, 100) - 11.44).abs() < 0.01);
        assert!((chi2_threshold(10) - 16.919).abs() < 1e-3);
    }

    #[test]
    fn md_and_pit_basics() {
        let (em, _) = trained(40, 9);
        let hold = lhd_maximin(30, &[(5.0, 115.0), (0.1, 2.9), (0.1, 1.9)], 1, 3).unwrap().points;
        let (mu, _) = em.predict(&hold).unwrap();
        assert!(validate_md(&em, &hold, &mu).unwrap().md < 1e-9);
        let pit = validate_pit(&em, &hold, &mu).unwrap();
        assert!(pit.pit.iter().all(|&u| u == 0.5));
        let (_, var) = em.predict(&hold).unwrap();
        let biased: Vec<f64> = (0..hold.len()).map(|k| mu[k] + 3.0 * var[k].sqrt()).collect();
        let pit = validate_pit(&em, &hold, &biased).unwrap();
        assert!(pit.chi2 > pit.threshold);
        assert!(validate_pit(&em, &hold[..10], &mu[..10]).is_err());
    }

    #[test]
    fn md_on_draws_from_the_generating_process() {
        let design = lhd_maximin(60, &DEFAULT_BOX, 5, 11).unwrap().points;
        let hold = lhd_maximin(40, &DEFAULT_BOX, 5, 12).unwrap().points;
        let mut all = design.clone();
        all.extend(&hold);
        let mut total = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = crate::synth::GpSiteFunction::random(&mut rng, &DEFAULT_BOX);
            let values = f.sample(&all, &mut rng).unwrap();
            let (train, truth) = values.split_at(design.len());
            let ls = &f.kernel.length_scales;
            let hyper = HyperParams {
                amplitude: f.kernel.amplitude,
                length_scales: [ls[0], ls[1], ls[2]],
            };
            let em = SiteEmulator::with_hyper("g", f.alpha, hyper, design.clone(), train.to_vec()).unwrap();
            total += validate_md(&em, &hold, truth).unwrap().md.powi(2);
        }
        let mean = total / 10.0;
        assert!((31.0..49.0).contains(&mean), "mean MD² {mean}");
    }

    #[test]
    fn file_round_trip() {
        let (em, _) = trained(20, 10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        em.save(&path).unwrap();
        let back = SiteEmulator::load(&path).unwrap();
        assert_eq!(back.alpha, em.alpha);
        assert_eq!(back.hyper_samples, em.hyper_samples);
        let q = [[50.0, 1.0, 1.0]];
        assert_eq!(back.predict(&q).unwrap(), em.predict(&q).unwrap());
    }

    #[test]
    fn hyper_point_is_mean_of_draws() {
        let (em, _) = trained(20, 11);
        let m = HyperParams::mean_of(&em.hyper_samples);
        assert_eq!(m, em.hyper_point);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn mean_fit_is_exact_on_the_basis(
            alpha in (-2000.0f64..2000.0, -5000.0f64..5000.0, -50.0f64..50.0, -50.0f64..50.0),
            seed in 0u64..500,
        ) {
            let design = lhd_maximin(12, &DEFAULT_BOX, 1, seed).unwrap().points;
            let a = [alpha.0, alpha.1, alpha.2, alpha.3];
            let y: Vec<f64> = design.iter().map(|&t| mean_value(&a, t).unwrap()).collect();
            let fit = fit_mean(&design, &y).unwrap();
            let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for t in &design {
                let d = (mean_value(&fit, *t).unwrap() - mean_value(&a, *t).unwrap()).abs();
                proptest::prop_assert!(d < 1e-7 * scale);
            }
        }

        #[test]
        fn emulator_interpolates_design(
            seed in 0u64..500,
            amp in 10.0f64..500.0,
            r in (10.0f64..80.0, 0.3f64..2.0, 0.3f64..2.0),
        ) {
            let design = lhd_maximin(25, &DEFAULT_BOX, 1, seed).unwrap().points;
            let y: Vec<f64> = design.iter().map(|&t| wiggly(t)).collect();
            let alpha = fit_mean(&design, &y).unwrap();
            let hyper = HyperParams { amplitude: amp, length_scales: [r.0, r.1, r.2] };
            let em = SiteEmulator::with_hyper("p", alpha, hyper, design.clone(), y.clone()).unwrap();
            let (mu, var) = em.predict(&design).unwrap();
            for i in 0..design.len() {
                proptest::prop_assert!((mu[i] - y[i]).abs() < 1e-4 * amp);
                proptest::prop_assert!(var[i] < 1e-6 * amp * amp);
            }
        }
    }
}
