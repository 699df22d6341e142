//! The hierarchical arrival-time model
//!
//!   t_i = τ_i(θ) + ζ(x_i) + σ_i ω_i + σ ε_i,
//!
//! with τ_i replaced by its emulator, ζ a zero-mean isotropic Gaussian
//! process over site coordinates (raw degrees) and ω_i, ε_i standard normal.
//! Provides priors, the emulated likelihood, block Metropolis–Hastings
//! sampling, and posterior draws of ζ and of replicate data.

mod mcmc;
mod posterior;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::emulator::{mean_value, SiteEmulator};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::gp::{self, Conditioning};
use crate::stats::{InverseGammaSpec, LogNormalSpec};

pub use mcmc::{
    block_metropolis, mh_sample, mh_sample_chains, mh_sample_hyper_uncertain, BlockChain, BlockTarget, Chain, HyperVariant,
    MhConfig, PosteriorSample,
};
pub use posterior::{
    posterior_zeta, predictive, predictive_moments, summarize_chain, zeta_moments, ParamSummary, PosteriorSummary,
    PredictiveSummary, ZetaSummary,
};

pub const PARAM_NAMES: [&str; 6] = ["nu", "v_coast", "v_river", "sigma", "a_zeta", "r_zeta"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nu: f64,
    pub v_coast: f64,
    pub v_river: f64,
    /// Global error standard deviation, years.
    pub sigma: f64,
    /// Spatial-process amplitude, years.
    pub a_zeta: f64,
    /// Spatial-process length scale, degrees.
    pub r_zeta: f64,
}

impl ModelParams {
    pub fn theta(&self) -> [f64; 3] {
        [self.nu, self.v_coast, self.v_river]
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.nu, self.v_coast, self.v_river, self.sigma, self.a_zeta, self.r_zeta]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            nu: a[0],
            v_coast: a[1],
            v_river: a[2],
            sigma: a[3],
            a_zeta: a[4],
            r_zeta: a[5],
        }
    }

    pub(crate) fn to_log(self) -> [f64; 6] {
        self.to_array().map(f64::ln)
    }

    pub(crate) fn from_log(y: &[f64]) -> Self {
        Self::from_array(std::array::from_fn(|k| y[k].exp()))
    }

    pub fn is_positive(&self) -> bool {
        self.to_array().iter().all(|&v| v > 0.0 && v.is_finite())
    }
}

/// Independent priors: log-normal for ν, V_C, V_R, a_ζ, r_ζ and inverse
/// gamma for σ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub nu: LogNormalSpec,
    pub v_coast: LogNormalSpec,
    pub v_river: LogNormalSpec,
    pub sigma2: InverseGammaSpec,
    pub a_zeta: LogNormalSpec,
    pub r_zeta: LogNormalSpec,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            nu: LogNormalSpec::new(3.5, 1.0),
            v_coast: LogNormalSpec::new(1.0, 0.25),
            v_river: LogNormalSpec::new(2.6, 1.0),
            sigma2: InverseGammaSpec::new(5.0, 1e6),
            a_zeta: LogNormalSpec::new(5.0, 2.25),
            r_zeta: LogNormalSpec::new(2.5, 2.25),
        }
    }
}

impl Priors {
    fn log_normals(&self) -> [(usize, &LogNormalSpec); 5] {
        [(0, &self.nu), (1, &self.v_coast), (2, &self.v_river), (4, &self.a_zeta), (5, &self.r_zeta)]
    }

    /// Sum of the six marginal log densities, the σ term being the inverse
    /// gamma density evaluated at σ². Non-positive parameters give −∞.
    pub fn log_prior(&self, p: &ModelParams) -> f64 {
        if !p.is_positive() {
            return f64::NEG_INFINITY;
        }
        let a = p.to_array();
        self.log_normals().iter().map(|(k, d)| d.ln_pdf(a[*k])).sum::<f64>() + self.sigma2.ln_pdf(p.sigma * p.sigma)
    }

    /// Log density of the log parameters (y = log x), i.e. `log_prior` plus
    /// the Jacobian Σ log x, with dσ²/d log σ = 2σ² for the σ term.
    pub fn log_prior_log_scale(&self, p: &ModelParams) -> f64 {
        self.log_prior(p) + log_jacobian(p)
    }

    /// Prior density of parameter `k` on its own scale (σ rather than σ²).
    pub fn marginal_pdf(&self, k: usize, x: f64) -> f64 {
        match k {
            3 => (self.sigma2.ln_pdf(x * x) + (2.0 * x).ln()).exp(),
            _ => self.log_normals().iter().find(|(j, _)| *j == k).map_or(0.0, |(_, d)| d.ln_pdf(x).exp()),
        }
    }
}

pub(crate) fn log_jacobian(p: &ModelParams) -> f64 {
    p.to_array().iter().map(|v| v.ln()).sum::<f64>() + std::f64::consts::LN_2 + p.sigma.ln()
}

/// Site coordinates, observed elapsed dates and their standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteData {
    /// n × 2, (lon, lat) in degrees.
    pub coords: DMatrix<f64>,
    pub t: DVector<f64>,
    pub sigma: DVector<f64>,
    d2: DMatrix<f64>,
}

impl SiteData {
    pub fn new(locations: &[GeoPoint], t: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        if t.len() != n || sigma.len() != n || n == 0 {
            return Err(Error::invalid("site data needs matching, non-empty locations, dates and σ"));
        }
        if sigma.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::invalid("site σ must be non-negative"));
        }
        let coords = DMatrix::from_fn(n, 2, |i, j| if j == 0 { locations[i].lon } else { locations[i].lat });
        let d2 = DMatrix::from_fn(n, n, |i, j| (coords[(i, 0)] - coords[(j, 0)]).powi(2) + (coords[(i, 1)] - coords[(j, 1)]).powi(2));
        Ok(Self {
            coords,
            t: DVector::from_vec(t),
            sigma: DVector::from_vec(sigma),
            d2,
        })
    }

    pub fn from_observations(obs: &Observations) -> Result<Self> {
        Self::new(&obs.locations, obs.t.clone(), obs.sigma.clone())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn locations(&self) -> Vec<GeoPoint> {
        (0..self.len()).map(|i| GeoPoint::new(self.coords[(i, 0)], self.coords[(i, 1)])).collect()
    }

    /// K_ζ(X, X) for amplitude `a` and length scale `r` (degrees).
    pub fn spatial_covariance(&self, a: f64, r: f64) -> DMatrix<f64> {
        let n = self.len();
        let a2 = a * a;
        if a2 == 0.0 {
            return DMatrix::zeros(n, n);
        }
        let inv = 1.0 / (r * r);
        self.d2.map(|d| a2 * (-d * inv).exp())
    }

    /// diag(V_i + σ_i² + σ²).
    pub fn independent_variance(&self, sigma: f64, var: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| var[i] + self.sigma[i] * self.sigma[i] + sigma * sigma)
    }

    /// Σ(θ) = K_ζ(X,X) + diag(V_i + σ_i² + σ²).
    pub fn likelihood_covariance(&self, p: &ModelParams, var: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.spatial_covariance(p.a_zeta, p.r_zeta);
        let d = self.independent_variance(p.sigma, var);
        for i in 0..self.len() {
            s[(i, i)] += d[i];
        }
        s
    }
}

/// Emulated site arrival times as a function of θ.
pub trait Emulators: Sync {
    fn n_sites(&self) -> usize;

    /// Predictive means and variances of every site at θ.
    fn predict(&self, theta: [f64; 3]) -> Result<(DVector<f64>, DVector<f64>)>;

    /// Number of stored hyperparameter components.
    fn n_components(&self) -> usize {
        1
    }

    /// Predictions with every site using its `k`-th stored hyperparameter draw.
    fn predict_component(&self, theta: [f64; 3], k: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        let _ = k;
        self.predict(theta)
    }
}

/// Fitted site emulators, optionally with per-draw conditionings for the
/// hyperparameter-uncertainty schemes.
#[derive(Debug, Clone)]
pub struct EmulatorSet {
    pub sites: Vec<SiteEmulator>,
    components: Vec<Vec<Conditioning>>,
}

impl EmulatorSet {
    pub fn new(sites: Vec<SiteEmulator>) -> Self {
        Self {
            sites,
            components: Vec::new(),
        }
    }

    /// Prepares `n_e` components; component k uses the k-th selected draw of every site.
    pub fn with_components(mut self, n_e: usize) -> Result<Self> {
        let per_site: Vec<Vec<Conditioning>> = self.sites.iter().map(|s| s.components(n_e)).collect::<Result<_>>()?;
        let n = per_site.iter().map(Vec::len).min().unwrap_or(0);
        self.components = (0..n).map(|k| per_site.iter().map(|c| c[k].clone()).collect()).collect();
        Ok(self)
    }

    /// Centre of the training design of the first site.
    pub fn design_centre(&self) -> Option<[f64; 3]> {
        let d = &self.sites.first()?.design;
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for t in d {
            for j in 0..3 {
                lo[j] = lo[j].min(t[j]);
                hi[j] = hi[j].max(t[j]);
            }
        }
        Some(std::array::from_fn(|j| 0.5 * (lo[j] + hi[j])))
    }
}

impl Emulators for EmulatorSet {
    fn n_sites(&self) -> usize {
        self.sites.len()
    }

    fn predict(&self, theta: [f64; 3]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.sites.len();
        let (mut mu, mut var) = (DVector::zeros(n), DVector::zeros(n));
        for (i, s) in self.sites.iter().enumerate() {
            (mu[i], var[i]) = s.predict_point(theta)?;
        }
        Ok((mu, var))
    }

    fn n_components(&self) -> usize {
        self.components.len().max(1)
    }

    fn predict_component(&self, theta: [f64; 3], k: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.components.is_empty() {
            return self.predict(theta);
        }
        let n = self.sites.len();
        let (mut mu, mut var) = (DVector::zeros(n), DVector::zeros(n));
        for (i, (s, c)) in self.sites.iter().zip(&self.components[k]).enumerate() {
            (mu[i], var[i]) = c.predict_point(&theta, mean_value(&s.alpha, theta)?)?;
        }
        Ok((mu, var))
    }
}

/// Emulators given directly by a function of θ; handy for analytic models.
pub struct FnEmulators<F> {
    pub n: usize,
    pub f: F,
}

impl<F> Emulators for FnEmulators<F>
where
    F: Fn([f64; 3]) -> (Vec<f64>, Vec<f64>) + Sync,
{
    fn n_sites(&self) -> usize {
        self.n
    }

    fn predict(&self, theta: [f64; 3]) -> Result<(DVector<f64>, DVector<f64>)> {
        let (m, v) = (self.f)(theta);
        Ok((DVector::from_vec(m), DVector::from_vec(v)))
    }
}

/// log N(t | μ, Σ) for given emulator means and variances; −∞ when Σ cannot
/// be factorised.
pub fn log_lik_given(p: &ModelParams, data: &SiteData, mu: &DVector<f64>, var: &DVector<f64>) -> f64 {
    match gp::cholesky(data.likelihood_covariance(p, var)) {
        Ok(chol) => gp::mvn_logpdf_chol(&data.t, mu, &chol),
        Err(e) => {
            log::warn!("likelihood covariance factorisation failed: {e}");
            f64::NEG_INFINITY
        }
    }
}

/// The emulated log likelihood at `p`.
pub fn log_lik_emulated(p: &ModelParams, data: &SiteData, em: &dyn Emulators) -> Result<f64> {
    if em.n_sites() != data.len() {
        return Err(Error::invalid(format!("{} emulators for {} sites", em.n_sites(), data.len())));
    }
    let (mu, var) = em.predict(p.theta())?;
    Ok(log_lik_given(p, data, &mu, &var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_2PI: f64 = 1.837_877_066_409_345_5;

    fn ln_normal_by_hand(x: f64, mu: f64, var: f64) -> f64 {
        -x.ln() - 0.5 * (LN_2PI + var.ln()) - (x.ln() - mu).powi(2) / (2.0 * var)
    }

    fn ig_by_hand(x: f64, a: f64, b: f64) -> f64 {
        // Γ(5) = 24
        assert_eq!(a, 5.0);
        a * b.ln() - 24f64.ln() - (a + 1.0) * x.ln() - b / x
    }

    #[test]
    fn prior_mode_and_mean_match_stated_guesses() {
        let pr = Priors::default();
        assert_relative_eq!(pr.nu.mode(), 2.5f64.exp(), epsilon = 1e-12);
        assert!((pr.nu.mode() - 12.18).abs() < 0.01);
        assert_relative_eq!(pr.sigma2.mean(), 2.5e5);
        assert!((pr.sigma2.mean().sqrt() - 500.0).abs() < 1.0);
    }

    #[test]
    fn log_prior_matches_textbook_formulas() {
        let pr = Priors::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = ModelParams::from_array(std::array::from_fn(|_| rng.random_range(0.05..300.0)));
            let by_hand = ln_normal_by_hand(p.nu, 3.5, 1.0)
                + ln_normal_by_hand(p.v_coast, 1.0, 0.25)
                + ln_normal_by_hand(p.v_river, 2.6, 1.0)
                + ig_by_hand(p.sigma * p.sigma, 5.0, 1e6)
                + ln_normal_by_hand(p.a_zeta, 5.0, 2.25)
                + ln_normal_by_hand(p.r_zeta, 2.5, 2.25);
            assert_relative_eq!(pr.log_prior(&p), by_hand, max_relative = 1e-12);
        }
        let mut bad = ModelParams::from_array([1.0; 6]);
        bad.sigma = -1.0;
        assert_eq!(pr.log_prior(&bad), f64::NEG_INFINITY);
    }

    #[test]
    fn sigma_marginal_integrates_to_one() {
        let pr = Priors::default();
        let n = 20_000;
        let dx = 5000.0 / n as f64;
        let area: f64 = (1..n).map(|k| pr.marginal_pdf(3, k as f64 * dx) * dx).sum();
        assert_relative_eq!(area, 1.0, epsilon = 1e-4);
    }

    fn three_sites() -> SiteData {
        SiteData::new(
            &[GeoPoint::new(10.0, 45.0), GeoPoint::new(12.0, 46.0), GeoPoint::new(11.0, 48.0)],
            vec![1500.0, 1800.0, 2100.0],
            vec![50.0, 80.0, 30.0],
        )
        .unwrap()
    }

    #[test]
    fn single_site_reduces_to_univariate_normal() {
        let data = SiteData::new(&[GeoPoint::new(0.0, 0.0)], vec![1000.0], vec![0.0]).unwrap();
        let p = ModelParams {
            nu: 10.0,
            v_coast: 1.0,
            v_river: 1.0,
            sigma: 120.0,
            a_zeta: 0.0,
            r_zeta: 1.0,
        };
        let em = FnEmulators {
            n: 1,
            f: |_| (vec![900.0], vec![0.0]),
        };
        let ll = log_lik_emulated(&p, &data, &em).unwrap();
        let z: f64 = 100.0 / 120.0;
        assert_relative_eq!(ll, -0.5 * (LN_2PI + (120.0f64 * 120.0).ln() + z * z), epsilon = 1e-12);
    }

    #[test]
    fn zero_amplitude_factorises() {
        let data = three_sites();
        let p = ModelParams {
            nu: 10.0,
            v_coast: 1.0,
            v_river: 1.0,
            sigma: 100.0,
            a_zeta: 0.0,
            r_zeta: 2.0,
        };
        let mu = vec![1400.0, 1900.0, 2000.0];
        let var = vec![400.0, 900.0, 100.0];
        let em = FnEmulators {
            n: 3,
            f: |_| (mu.clone(), var.clone()),
        };
        let total = log_lik_emulated(&p, &data, &em).unwrap();
        let sum: f64 = (0..3)
            .map(|i| {
                let s2 = var[i] + data.sigma[i].powi(2) + 1e4;
                -0.5 * (LN_2PI + s2.ln() + (data.t[i] - mu[i]).powi(2) / s2)
            })
            .sum();
        assert_relative_eq!(total, sum, epsilon = 1e-10);
    }

    #[test]
    fn matches_dense_brute_force_and_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 7, 12] {
            let locs: Vec<GeoPoint> = (0..n).map(|_| GeoPoint::new(rng.random_range(0.0..20.0), rng.random_range(35.0..55.0))).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(500.0..3000.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..150.0)).collect();
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(500.0..3000.0)).collect();
            let var: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5000.0)).collect();
            let p = ModelParams {
                nu: 20.0,
                v_coast: 0.3,
                v_river: 0.2,
                sigma: rng.random_range(50.0..300.0),
                a_zeta: rng.random_range(10.0..300.0),
                r_zeta: rng.random_range(0.5..10.0),
            };
            let data = SiteData::new(&locs, t.clone(), s.clone()).unwrap();
            let ll = log_lik_given(&p, &data, &DVector::from_vec(mu.clone()), &DVector::from_vec(var.clone()));

            let mut sig = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let d2 = (locs[i].lon - locs[j].lon).powi(2) + (locs[i].lat - locs[j].lat).powi(2);
                    sig[(i, j)] = p.a_zeta.powi(2) * (-d2 / p.r_zeta.powi(2)).exp();
                }
                sig[(i, i)] += var[i] + s[i] * s[i] + p.sigma * p.sigma;
            }
            let r = DVector::from_vec(t.iter().zip(&mu).map(|(a, b)| a - b).collect());
            let inv = sig.clone().try_inverse().unwrap();
            let brute = -0.5 * ((r.transpose() * inv * &r)[0] + sig.determinant().ln() + n as f64 * LN_2PI);
            assert_relative_eq!(ll, brute, max_relative = 1e-8);

            let perm: Vec<usize> = (0..n).rev().collect();
            let pdata = SiteData::new(
                &perm.iter().map(|&i| locs[i]).collect::<Vec<_>>(),
                perm.iter().map(|&i| t[i]).collect(),
                perm.iter().map(|&i| s[i]).collect(),
            )
            .unwrap();
            let pll = log_lik_given(
                &p,
                &pdata,
                &DVector::from_vec(perm.iter().map(|&i| mu[i]).collect()),
                &DVector::from_vec(perm.iter().map(|&i| var[i]).collect()),
            );
            assert!((ll - pll).abs() <= 1e-10 * ll.abs().max(1.0));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn likelihood_ignores_site_order(seed in 0u64..1000, n in 2usize..12, shift in 1usize..11) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let locs: Vec<GeoPoint> = (0..n).map(|_| GeoPoint::new(rng.random_range(-5.0..25.0), rng.random_range(36.0..58.0))).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(500.0..4000.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..100.0)).collect();
            let mu: Vec<f64> = t.iter().map(|v| v + rng.random_range(-400.0..400.0)).collect();
            let var: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3000.0)).collect();
            let p = ModelParams {
                nu: 20.0,
                v_coast: 0.5,
                v_river: 0.5,
                sigma: rng.random_range(20.0..300.0),
                a_zeta: rng.random_range(5.0..300.0),
                r_zeta: rng.random_range(0.5..40.0),
            };
            let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).rev().collect();
            let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let a = SiteData::new(&locs, t.clone(), s.clone()).unwrap();
            let plocs: Vec<GeoPoint> = order.iter().map(|&i| locs[i]).collect();
            let b = SiteData::new(&plocs, pick(&t), pick(&s)).unwrap();
            let la = log_lik_given(&p, &a, &DVector::from_vec(mu.clone()), &DVector::from_vec(var.clone()));
            let lb = log_lik_given(&p, &b, &DVector::from_vec(pick(&mu)), &DVector::from_vec(pick(&var)));
            proptest::prop_assert!((la - lb).abs() <= 1e-8 * la.abs().max(1.0), "{la} vs {lb}");
        }
    }
}
