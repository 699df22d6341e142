//! Small sample-statistics helpers: moments, quantiles, kernel density
//! estimates and the two-sample Kolmogorov–Smirnov distance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, LogNormal, Normal};
use statrs::function::gamma::ln_gamma;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n−1 divisor.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Linear-interpolation quantile (the common "type 7" rule).
pub fn quantile(x: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(x), q)
}

pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let h = (s.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Central interval holding `mass` of the sample.
pub fn central_interval(x: &[f64], mass: f64) -> (f64, f64) {
    let s = sorted(x);
    let tail = 0.5 * (1.0 - mass);
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

/// Two-sample Kolmogorov–Smirnov statistic sup |F_a − F_b|.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Effective sample size from the initial positive sequence of autocorrelations.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64;
        let rho = c / c0;
        if rho <= 0.05 {
            break;
        }
        tau += 2.0 * rho;
    }
    n as f64 / tau
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
#[derive(Debug, Clone)]
pub struct Kde {
    data: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde {
    pub fn new(data: &[f64]) -> Self {
        let n = data.len() as f64;
        let sd = if data.len() > 1 { std_dev(data) } else { 0.0 };
        let iqr = if data.len() > 1 { quantile(data, 0.75) - quantile(data, 0.25) } else { 0.0 };
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let bandwidth = if spread > 0.0 {
            0.9 * spread * n.powf(-0.2)
        } else {
            data.first().map_or(1.0, |v| 1e-3 * v.abs().max(1.0))
        };
        Self {
            data: data.to_vec(),
            bandwidth,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.data.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self.data.iter().map(|d| (-0.5 * ((x - d) / h).powi(2)).exp()).sum::<f64>()
    }

    /// Evaluation grid spanning the sample plus three bandwidths each side.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let (lo, hi) = (lo - 3.0 * self.bandwidth, hi + 3.0 * self.bandwidth);
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1).max(1) as f64).collect()
    }

    /// Location of the highest density on a 512-point grid.
    pub fn mode(&self) -> f64 {
        self.grid(512)
            .into_iter()
            .map(|x| (x, self.density(x)))
            .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
            .0
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Log-normal LN(μ, v): log x ~ N(μ, v), with v a variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub mu: f64,
    pub var: f64,
}

impl LogNormalSpec {
    pub const fn new(mu: f64, var: f64) -> Self {
        Self { mu, var }
    }

    /// Reads the second argument as a standard deviation instead.
    pub fn from_sd(mu: f64, sd: f64) -> Self {
        Self { mu, var: sd * sd }
    }

    fn dist(&self) -> LogNormal {
        LogNormal::new(self.mu, self.var.sqrt()).expect("positive log-normal variance")
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.dist().ln_pdf(x)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Density of y = log x, i.e. the N(μ, v) log density.
    pub fn ln_pdf_log(&self, y: f64) -> f64 {
        Normal::new(self.mu, self.var.sqrt()).expect("positive variance").ln_pdf(y)
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.var).exp()
    }

    pub fn mode(&self) -> f64 {
        (self.mu - self.var).exp()
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    pub fn sd_log(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Inverse gamma IG(α, β) with density ∝ x^{−α−1} exp(−β/x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaSpec {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGammaSpec {
    pub const fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln() - self.scale / x
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }
}
