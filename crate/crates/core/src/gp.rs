//! Gaussian-process building blocks: the anisotropic Gaussian kernel
//! k(x,x') = a² exp{−Σ (x_j − x'_j)² / r_j²}, least-squares mean fits,
//! exact conditioning and the log marginal likelihood.
//!
//! Input sets are matrices with one row per point.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter added to every training covariance, as a fraction of a².
pub const NUGGET: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub amplitude: f64,
    pub length_scales: Vec<f64>,
}

impl KernelParams {
    pub fn new(amplitude: f64, length_scales: Vec<f64>) -> Self {
        Self {
            amplitude,
            length_scales,
        }
    }

    pub fn isotropic(amplitude: f64, length_scale: f64, dim: usize) -> Self {
        Self::new(amplitude, vec![length_scale; dim])
    }

    pub fn variance(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude > 0.0 && self.length_scales.iter().all(|&r| r > 0.0 && r.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("kernel parameters must be positive: {self:?}")))
        }
    }

    fn inv_r2(&self) -> Vec<f64> {
        self.length_scales.iter().map(|r| 1.0 / (r * r)).collect()
    }
}

pub fn gauss_kernel(x: &[f64], y: &[f64], k: &KernelParams) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let s: f64 = x
        .iter()
        .zip(y)
        .zip(&k.length_scales)
        .map(|((a, b), r)| ((a - b) / r).powi(2))
        .sum();
    k.variance() * (-s).exp()
}

/// K(A, B) with rows of `a` indexing rows of the result.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &KernelParams) -> DMatrix<f64> {
    let inv = k.inv_r2();
    let a2 = k.variance();
    let d = a.ncols();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut s = 0.0;
        for c in 0..d {
            let diff = a[(i, c)] - b[(j, c)];
            s += diff * diff * inv[c];
        }
        a2 * (-s).exp()
    })
}

/// K(X, X), exactly symmetric.
pub fn covariance(x: &DMatrix<f64>, k: &KernelParams) -> DMatrix<f64> {
    let n = x.nrows();
    let inv = k.inv_r2();
    let a2 = k.variance();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = a2;
        for i in j + 1..n {
            let mut s = 0.0;
            for c in 0..x.ncols() {
                let diff = x[(i, c)] - x[(j, c)];
                s += diff * diff * inv[c];
            }
            let v = a2 * (-s).exp();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Cholesky factor, or an error carrying the smallest eigenvalue.
pub fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let min_eigenvalue = SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            Err(Error::NotPositiveDefinite { min_eigenvalue })
        }
    }
}

/// log det from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Least-squares coefficients through a Householder QR. A column whose
/// diagonal entry of R is negligible next to its own norm is collinear with
/// the columns before it.
pub fn ols(basis: &DMatrix<f64>, targets: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = basis.shape();
    if n < k || targets.len() != n {
        return Err(Error::invalid(format!("ols needs rows ≥ columns and matching targets ({n}×{k}, {})", targets.len())));
    }
    let qr = basis.clone().qr();
    let r = qr.r();
    let columns: Vec<usize> = (0..k)
        .filter(|&j| {
            let norm = basis.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm
        })
        .collect();
    if !columns.is_empty() {
        return Err(Error::RankDeficient { columns });
    }
    let qty = qr.q().transpose() * targets;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: vec![] })
}

/// A GP conditioned on training data, with the factorisation of
/// K(Θ,Θ) + diag(noise) + nugget cached.
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
    /// Prior mean at the training inputs.
    pub prior_mean: DVector<f64>,
    pub kernel: KernelParams,
    /// Extra per-point variance on the diagonal (the nugget comes on top).
    pub noise: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

impl Conditioning {
    pub fn new(
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        prior_mean: DVector<f64>,
        kernel: KernelParams,
        noise: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = inputs.nrows();
        if targets.len() != n || prior_mean.len() != n || kernel.length_scales.len() != inputs.ncols() {
            return Err(Error::invalid("conditioning inputs, targets, mean and kernel disagree in size"));
        }
        kernel.validate()?;
        let noise = noise.unwrap_or_else(|| DVector::zeros(n));
        let mut k = covariance(&inputs, &kernel);
        let jitter = NUGGET * kernel.variance();
        for i in 0..n {
            k[(i, i)] += noise[i] + jitter;
        }
        let chol = cholesky(k)?;
        let weights = chol.solve(&(&targets - &prior_mean));
        Ok(Self {
            inputs,
            targets,
            prior_mean,
            kernel,
            noise,
            chol,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn clamp_diag(&self, v: f64, index: usize) -> Result<f64> {
        if v >= 0.0 {
            Ok(v)
        } else if v > -NUGGET * self.kernel.variance() {
            Ok(0.0)
        } else {
            log::warn!("negative predictive variance {v:e} at query {index}");
            Err(Error::NotPositiveDefinite { min_eigenvalue: v })
        }
    }

    /// Posterior mean vector and full covariance at `query`, given the prior
    /// mean there.
    pub fn condition(&self, query: &DMatrix<f64>, query_mean: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let ks = cross_covariance(query, &self.inputs, &self.kernel);
        let mu = query_mean + &ks * &self.weights;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks.transpose())
            .expect("Cholesky factor has a positive diagonal");
        let mut cov = covariance(query, &self.kernel) - v.transpose() * v;
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..cov.nrows() {
            cov[(i, i)] = self.clamp_diag(cov[(i, i)], i)?;
        }
        Ok((mu, cov))
    }

    /// Posterior means and marginal variances only.
    pub fn marginal(&self, query: &DMatrix<f64>, query_mean: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let ks = cross_covariance(query, &self.inputs, &self.kernel);
        let mu = query_mean + &ks * &self.weights;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks.transpose())
            .expect("Cholesky factor has a positive diagonal");
        let a2 = self.kernel.variance();
        let mut var = DVector::zeros(query.nrows());
        for i in 0..query.nrows() {
            var[i] = self.clamp_diag(a2 - v.column(i).norm_squared(), i)?;
        }
        Ok((mu, var))
    }

    /// Single-point prediction without intermediate matrices.
    pub fn predict_point(&self, x: &[f64], mean: f64) -> Result<(f64, f64)> {
        let inv = self.kernel.inv_r2();
        let a2 = self.kernel.variance();
        let n = self.len();
        let mut ks = DVector::zeros(n);
        for j in 0..n {
            let mut s = 0.0;
            for (c, xc) in x.iter().enumerate() {
                let d = xc - self.inputs[(j, c)];
                s += d * d * inv[c];
            }
            ks[j] = a2 * (-s).exp();
        }
        let mu = mean + ks.dot(&self.weights);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut ks);
        Ok((mu, self.clamp_diag(a2 - ks.norm_squared(), 0)?))
    }

    /// log N(targets | prior_mean, K + noise + nugget), constants included.
    pub fn loglik(&self) -> f64 {
        let r = &self.targets - &self.prior_mean;
        -0.5 * (r.dot(&self.weights) + log_det(&self.chol) + self.len() as f64 * LN_2PI)
    }
}

/// Multivariate normal log density with constants.
pub fn mvn_logpdf(y: &DVector<f64>, mean: &DVector<f64>, cov: DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(cov)?;
    Ok(mvn_logpdf_chol(y, mean, &chol))
}

pub fn mvn_logpdf_chol(y: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let mut z = y - mean;
    chol.l_dirty().solve_lower_triangular_mut(&mut z);
    -0.5 * (z.norm_squared() + log_det(chol) + y.len() as f64 * LN_2PI)
}

/// One draw from N(mean, LLᵀ).
pub fn mvn_sample(mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>, rng: &mut impl Rng) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = chol.l();
    mean + l * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(points: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(points.len(), points[0].len(), |i, j| points[i][j])
    }

    #[test]
    fn kernel_examples() {
        let k = KernelParams::isotropic(2.0, 1.0, 3);
        assert_eq!(gauss_kernel(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &k), 4.0);
        assert_relative_eq!(gauss_kernel(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &k), 4.0 * (-1f64).exp(), epsilon = 1e-12);
        assert!(gauss_kernel(&[20.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &k) < 1e-12);
    }

    #[test]
    fn ols_examples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.5, 1.0, 1.0 / 3.0]);
        let y = DVector::from_iterator(3, [1.0f64, 4.0, 9.0].iter().map(|nu| 2.0 + 3.0 / nu.sqrt()));
        let c = ols(&x, &y).unwrap();
        assert_relative_eq!(c[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(c[1], 3.0, epsilon = 1e-12);

        let ones = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 9.0]);
        assert_relative_eq!(ols(&ones, &y).unwrap()[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_names_collinear_columns() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 5.0, 1.0, 3.0, 7.0, 1.0, 4.0, 9.0, 1.0, 5.0, 11.0]);
        match ols(&x, &DVector::from_element(4, 1.0)) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(ols(&DMatrix::from_element(1, 2, 1.0), &DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn one_point_conditioning() {
        let c = Conditioning::new(
            rows(&[&[0.0]]),
            DVector::from_element(1, 1.0),
            DVector::zeros(1),
            KernelParams::isotropic(1.0, 1.0, 1),
            None,
        )
        .unwrap();
        let (mu, v) = c.condition(&rows(&[&[1.0]]), &DVector::zeros(1)).unwrap();
        assert_relative_eq!(mu[0], (-1f64).exp(), epsilon = 1e-7);
        assert_relative_eq!(v[(0, 0)], 1.0 - (-2f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn interpolation_and_reversion() {
        let x = rows(&[&[0.0, 0.0], &[1.0, 0.5], &[2.0, -1.0], &[0.5, 2.0]]);
        let y = DVector::from_vec(vec![3.0, -1.0, 2.5, 0.7]);
        let k = KernelParams::new(2.0, vec![1.2, 0.8]);
        let c = Conditioning::new(x.clone(), y.clone(), DVector::zeros(4), k, None).unwrap();
        let (mu, v) = c.condition(&x, &DVector::zeros(4)).unwrap();
        for i in 0..4 {
            assert!((mu[i] - y[i]).abs() < 1e-6 * y[i].abs().max(1.0));
            assert!(v[(i, i)] < 1e-8 * 4.0);
        }
        let far = rows(&[&[40.0, 40.0]]);
        let (mu, v) = c.condition(&far, &DVector::from_element(1, 5.0)).unwrap();
        assert_relative_eq!(mu[0], 5.0, epsilon = 1e-9);
        assert_relative_eq!(v[(0, 0)], 4.0, epsilon = 1e-9);
        let (pm, pv) = c.predict_point(&[0.3, 0.2], 0.0).unwrap();
        let (m2, v2) = c.marginal(&rows(&[&[0.3, 0.2]]), &DVector::zeros(1)).unwrap();
        assert_relative_eq!(pm, m2[0], epsilon = 1e-12);
        assert_relative_eq!(pv, v2[0], epsilon = 1e-12);
    }

    #[test]
    fn loglik_examples() {
        let one = Conditioning::new(rows(&[&[0.0]]), DVector::zeros(1), DVector::zeros(1), KernelParams::isotropic(1.0, 1.0, 1), None)
            .unwrap();
        assert_relative_eq!(one.loglik(), -0.5 * LN_2PI, epsilon = 1e-7);

        let far = Conditioning::new(
            rows(&[&[0.0], &[100.0]]),
            DVector::from_vec(vec![0.3, -1.2]),
            DVector::zeros(2),
            KernelParams::isotropic(1.0, 1.0, 1),
            None,
        )
        .unwrap();
        let uni = |y: f64| -0.5 * (LN_2PI + y * y);
        assert_relative_eq!(far.loglik(), uni(0.3) + uni(-1.2), epsilon = 1e-7);

        // correlation e⁻¹ at unit separation, targets (1, 1)
        let two = Conditioning::new(
            rows(&[&[0.0], &[1.0]]),
            DVector::from_element(2, 1.0),
            DVector::zeros(2),
            KernelParams::isotropic(1.0, 1.0, 1),
            None,
        )
        .unwrap();
        let rho = (-1f64).exp();
        let closed = -LN_2PI - 0.5 * (1.0 - rho * rho).ln() - 1.0 / (1.0 + rho);
        assert_relative_eq!(two.loglik(), closed, epsilon = 1e-7);
        assert_relative_eq!(two.loglik(), -2.496_23, epsilon = 1e-5);
    }

    #[test]
    fn non_pd_reports_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(m) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-12),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    fn brute_force(c: &Conditioning, q: &DMatrix<f64>, qm: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, f64) {
        let mut k = covariance(&c.inputs, &c.kernel);
        for i in 0..c.len() {
            k[(i, i)] += c.noise[i] + NUGGET * c.kernel.variance();
        }
        let kinv = k.clone().try_inverse().unwrap();
        let ks = cross_covariance(q, &c.inputs, &c.kernel);
        let r = &c.targets - &c.prior_mean;
        let mu = qm + &ks * &kinv * &r;
        let v = covariance(q, &c.kernel) - &ks * &kinv * ks.transpose();
        let ll = -0.5 * ((r.transpose() * &kinv * &r)[0] + k.determinant().ln() + c.len() as f64 * LN_2PI);
        (mu, v, ll)
    }

    #[test]
    fn matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=12 {
            let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..4.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let m = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let noise = DVector::from_fn(n, |_, _| rng.random_range(0.05..0.5));
            let k = KernelParams::new(rng.random_range(0.5..2.0), vec![1.5, 2.0, 2.5]);
            let c = Conditioning::new(x, y, m, k, Some(noise)).unwrap();
            let q = DMatrix::from_fn(5, 3, |_, _| rng.random_range(0.0..4.0));
            let qm = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let (mu, v) = c.condition(&q, &qm).unwrap();
            let (bmu, bv, bll) = brute_force(&c, &q, &qm);
            assert!((mu - bmu).amax() <= 1e-8 * (1.0 + 1.0));
            assert!((v - bv).amax() <= 1e-8 * c.kernel.variance());
            assert_relative_eq!(c.loglik(), bll, max_relative = 1e-8);
        }
    }

    #[test]
    fn loglik_amplitude_peak_near_generating_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(40, 1, |_, _| rng.random_range(0.0..20.0));
        let truth = KernelParams::isotropic(3.0, 1.0, 1);
        let mut k = covariance(&x, &truth);
        for i in 0..40 {
            k[(i, i)] += NUGGET * truth.variance();
        }
        let y = mvn_sample(&DVector::zeros(40), &cholesky(k).unwrap(), &mut rng);
        let ll = |a: f64| {
            Conditioning::new(x.clone(), y.clone(), DVector::zeros(40), KernelParams::isotropic(a, 1.0, 1), None)
                .unwrap()
                .loglik()
        };
        // analytic maximiser in a² is rᵀK₁⁻¹r / n with unit-amplitude K₁
        let c1 = Conditioning::new(x.clone(), y.clone(), DVector::zeros(40), KernelParams::isotropic(1.0, 1.0, 1), None).unwrap();
        let a_hat = (y.dot(&c1.weights) / 40.0).sqrt();
        let h = 1e-4 * a_hat;
        assert!(ll(a_hat + h) < ll(a_hat) && ll(a_hat - h) < ll(a_hat));
        assert!(ll(0.5 * a_hat) < ll(a_hat) && ll(2.0 * a_hat) < ll(a_hat));
        assert!((a_hat / 3.0 - 1.0).abs() < 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn gram_plus_nugget_is_positive_definite(
            pts in prop::collection::vec((0.0f64..120.0, 0.0f64..3.0, 0.0f64..2.0), 2..40),
            a in 1.0f64..2000.0,
            r in (0.5f64..60.0, 0.05f64..3.0, 0.05f64..2.0),
        ) {
            let mut pts = pts;
            pts.sort_by(|p, q| p.0.total_cmp(&q.0));
            pts.dedup_by(|p, q| p.0 == q.0);
            let x = DMatrix::from_fn(pts.len(), 3, |i, j| [pts[i].0, pts[i].1, pts[i].2][j]);
            let k = KernelParams::new(a, vec![r.0, r.1, r.2]);
            let mut m = covariance(&x, &k);
            for i in 0..pts.len() {
                m[(i, i)] += NUGGET * k.variance();
            }
            prop_assert!(cholesky(m).is_ok());
        }
    }
}
