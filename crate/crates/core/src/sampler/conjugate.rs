//! Closed-form full conditionals. Each update has a `*_posterior` function
//! returning the distribution's parameters and a `draw_*` helper.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Multivariate normal given its precision matrix and `precision * mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl GaussianPosterior {
    fn new(dim: usize, prior_precision: f64) -> Self {
        Self {
            precision: DMatrix::identity(dim, dim) * prior_precision,
            shift: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        let chol = self.cholesky()?;
        Ok(chol.solve(&self.shift))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self.cholesky()?.inverse())
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric("gaussian update", "posterior precision is not positive definite"))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        let chol = self.cholesky()?;
        let mean = chol.solve(&self.shift);
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        // precision = L L^T, so L^{-T} z has covariance precision^{-1}
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::numeric("gaussian update", "singular Cholesky factor"))?;
        Ok((mean + noise).iter().copied().collect())
    }
}

/// Inverse gamma with shape `a` and scale `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaPosterior {
    pub a: f64,
    pub b: f64,
}

impl InvGammaPosterior {
    pub fn mean(&self) -> f64 {
        self.b / (self.a - 1.0)
    }

    pub fn variance(&self) -> f64 {
        self.b * self.b / ((self.a - 1.0).powi(2) * (self.a - 2.0))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(1.0 / draw_gamma(rng, self.a, self.b)?)
    }
}

/// Gamma with shape `a` and rate `b`.
pub fn draw_gamma<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    let g = Gamma::new(a, 1.0 / b)
        .map_err(|e| Error::numeric("gamma draw", format!("shape {a}, rate {b}: {e}")))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

/// Regression coefficients `zeta` of the log recovery rates.
pub fn zeta_posterior(q_rows: &[&[f64]], log_lambda: &[f64], dim: usize, sigma2_zeta: f64, sigma2_lambda: f64) -> GaussianPosterior {
    let mut post = GaussianPosterior::new(dim, 1.0 / sigma2_zeta);
    for (q, y) in q_rows.iter().zip(log_lambda) {
        accumulate(&mut post, q, *y, 1.0 / sigma2_lambda);
    }
    post
}

/// Population mean `gamma0` of the trend intercepts.
pub fn gamma0_posterior(z_rows: &[&[f64]], alpha0: &[f64], dim: usize, sigma2_gamma0: f64, tau2_0: f64) -> GaussianPosterior {
    let mut post = GaussianPosterior::new(dim, 1.0 / sigma2_gamma0);
    for (z, a) in z_rows.iter().zip(alpha0) {
        accumulate(&mut post, z, *a, 1.0 / tau2_0);
    }
    post
}

/// `gamma_k` for an intercept-only design: `alpha_{i,k} ~ N(sqrt(pi_k) gamma_k, tau2)`
/// and `gamma_k ~ N(0, pi_k sigma2_gamma)`. Returns (mean, variance).
pub fn gamma_k_posterior(alpha_k: &[f64], pi_k: f64, sigma2_gamma: f64, tau2: f64) -> (f64, f64) {
    let n = alpha_k.len() as f64;
    let precision = 1.0 / (pi_k * sigma2_gamma) + pi_k * n / tau2;
    let var = 1.0 / precision;
    let sum: f64 = alpha_k.iter().sum();
    (pi_k.sqrt() * var * sum / tau2, var)
}

/// Joint draw of all `eta`. Each stay contributes `b` rows; row `k` has a 1
/// in column `2k` and `sqrt(pi_{k+1}) * u` in column `2k + 1`, where `u` is
/// the scaled admission hemoglobin.
pub fn eta_posterior(stays: &[(f64, &[f64])], slopes: &[f64], sigma2_eta: f64, omega2: f64) -> GaussianPosterior {
    let b = slopes.len();
    let mut post = GaussianPosterior::new(2 * b, 1.0 / sigma2_eta);
    let w = 1.0 / omega2;
    for (u, beta) in stays {
        for k in 0..b {
            let x = [1.0, slopes[k] * u];
            for r in 0..2 {
                for c in 0..2 {
                    post.precision[(2 * k + r, 2 * k + c)] += w * x[r] * x[c];
                }
                post.shift[2 * k + r] += w * x[r] * beta[k];
            }
        }
    }
    post
}

fn accumulate(post: &mut GaussianPosterior, x: &[f64], y: f64, weight: f64) {
    let d = post.dim();
    for r in 0..d {
        let xr = weight * x[r];
        if xr == 0.0 {
            continue;
        }
        for c in 0..d {
            post.precision[(r, c)] += xr * x[c];
        }
        post.shift[r] += xr * y;
    }
}

/// Generic inverse-gamma update from `n` residuals with sum of squares `ss`.
pub fn inv_gamma_posterior(a: f64, b: f64, n: f64, ss: f64) -> InvGammaPosterior {
    InvGammaPosterior {
        a: a + n / 2.0,
        b: b + ss / 2.0,
    }
}

/// `tau2_0 | .` from intercept residuals `alpha_{i,0} - z_i' gamma0`.
pub fn tau2_0_posterior(a: f64, b: f64, residuals: &[f64]) -> InvGammaPosterior {
    inv_gamma_posterior(a, b, residuals.len() as f64, residuals.iter().map(|r| r * r).sum())
}

/// `tau2 | .` from all non-intercept residuals `alpha_{i,k} - sqrt(pi_k) gamma_k`.
pub fn tau2_posterior(a: f64, b: f64, residuals: &[f64]) -> InvGammaPosterior {
    inv_gamma_posterior(a, b, residuals.len() as f64, residuals.iter().map(|r| r * r).sum())
}

/// `sigma2_gamma | .` with each `gamma_k` standardized by its eigenvalue.
pub fn sigma2_gamma_posterior(a: f64, b: f64, gamma: &[f64], pi: &[f64]) -> InvGammaPosterior {
    let ss = gamma.iter().zip(pi).map(|(g, p)| g * g / p).sum();
    inv_gamma_posterior(a, b, gamma.len() as f64, ss)
}

/// Variance of a zero-mean Gaussian vector (`sigma2_gamma0`, `sigma2_eta`,
/// `sigma2_zeta`, `nu2`).
pub fn vector_variance_posterior(a: f64, b: f64, v: &[f64]) -> InvGammaPosterior {
    inv_gamma_posterior(a, b, v.len() as f64, v.iter().map(|x| x * x).sum())
}

/// Frailty `rho_{i,A} | .` as (shape, rate).
pub fn rho_posterior(alpha_rho: f64, beta_rho: f64, events: u32, exposure: f64) -> (f64, f64) {
    (alpha_rho + events as f64, beta_rho + exposure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(draws: &[f64]) -> (f64, f64) {
        let n = draws.len() as f64;
        let m = draws.iter().sum::<f64>() / n;
        (m, draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn empty_data_gives_prior() {
        let p = zeta_posterior(&[], &[], 3, 2.0, 1.0);
        assert_eq!(p.mean().unwrap().as_slice(), &[0.0; 3]);
        let cov = p.covariance().unwrap();
        assert!((cov[(1, 1)] - 2.0).abs() < 1e-12 && cov[(0, 1)] == 0.0);
        let g = gamma0_posterior(&[], &[], 2, 3.0, 1.0);
        assert!((g.covariance().unwrap()[(0, 0)] - 3.0).abs() < 1e-12);
        let e = eta_posterior(&[], &[0.3, 0.1], 0.5, 1.0);
        assert!((e.covariance().unwrap()[(3, 3)] - 0.5).abs() < 1e-12);
        let (m, v) = gamma_k_posterior(&[], 0.01, 2.0, 1.0);
        assert_eq!(m, 0.0);
        assert!((v - 0.02).abs() < 1e-15);
    }

    #[test]
    fn zeta_with_identity_row_and_zero_response() {
        let q: [&[f64]; 1] = [&[1.0, 0.0]];
        let p = zeta_posterior(&q, &[0.0], 2, 1.0, 1.0);
        assert!(p.mean().unwrap().iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn gamma0_tight_tau_recovers_common_value() {
        let z: Vec<&[f64]> = vec![&[1.0]; 4];
        let p = gamma0_posterior(&z, &[7.5; 4], 1, 1.0, 1e-10);
        assert!((p.mean().unwrap()[0] - 7.5).abs() < 1e-6);
    }

    #[test]
    fn eta_slope_reverts_when_admission_scaled_zero() {
        let beta = [1.0, 2.0];
        let p = eta_posterior(&[(0.0, &beta)], &[0.3, 0.1], 0.7, 1.0);
        let m = p.mean().unwrap();
        let c = p.covariance().unwrap();
        assert_eq!(m[1], 0.0);
        assert!((c[(1, 1)] - 0.7).abs() < 1e-12);
        assert!((m[0] - 0.7 / 1.7).abs() < 1e-12);
    }

    #[test]
    fn draws_match_closed_form_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<&[f64]> = vec![&[1.0, 0.3], &[1.0, -0.8], &[1.0, 0.1]];
        let post = gamma0_posterior(&z, &[10.0, 11.0, 9.5], 2, 4.0, 0.5);
        let mean = post.mean().unwrap();
        let cov = post.covariance().unwrap();
        let draws: Vec<Vec<f64>> = (0..40_000).map(|_| post.draw(&mut rng).unwrap()).collect();
        for d in 0..2 {
            let col: Vec<f64> = draws.iter().map(|v| v[d]).collect();
            let (m, v) = moments(&col);
            assert!((m - mean[d]).abs() < 4.0 * (cov[(d, d)] / 40_000.0).sqrt());
            assert!((v / cov[(d, d)] - 1.0).abs() < 0.03);
        }
        let ig = InvGammaPosterior { a: 6.0, b: 3.0 };
        let draws: Vec<f64> = (0..40_000).map(|_| ig.draw(&mut rng).unwrap()).collect();
        let (m, _) = moments(&draws);
        assert!((m / ig.mean() - 1.0).abs() < 0.02);
    }

    #[test]
    fn sigma2_prior_mean_without_data() {
        let p = inv_gamma_posterior(400001.0, 100000.0, 0.0, 0.0);
        assert!((p.mean() - 0.25).abs() < 1e-9);
        let z = vector_variance_posterior(1.0, 1.0, &[0.0, 0.0]);
        assert_eq!((z.a, z.b), (2.0, 1.0));
        assert_eq!(rho_posterior(2.0, 0.5, 3, 10.0), (5.0, 10.5));
    }
}
