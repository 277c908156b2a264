//! Log-density kernels and the population-level parameter set.

use serde::{Deserialize, Serialize};

use crate::basis::EigenSystem;
use crate::cohort::EventGrid;
use crate::design::{hemoglobin_unit, BaselineCovariates};
use crate::error::{Error, Result};
use crate::model::{ModelContext, RecoveryLayout};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Floor applied to log-likelihood terms that underflow.
pub const LOG_FLOOR: f64 = -1e308;

#[inline]
pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln()) - r * r / (2.0 * var)
}

/// Log density of the gamma with shape `a` and rate `b`.
pub(crate) fn gamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - statrs::function::gamma::ln_gamma(a) + (a - 1.0) * x.ln() - b * x
}

/// All population-level parameters. Vector layouts:
/// `gamma[k - 1]` is the mean coefficient of trend component `k`;
/// `eta[2(k - 1)]` and `eta[2(k - 1) + 1]` are the intercept and
/// admission-hemoglobin slope of hospital-effect column `k`;
/// `psi[A]` follows the hazard layout of state `A` and `nu2[A][d]` is the
/// variance of its block `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub sigma2: f64,
    pub gamma0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau2_0: f64,
    pub tau2: f64,
    pub sigma2_gamma0: f64,
    pub sigma2_gamma: f64,
    pub eta: Vec<f64>,
    pub omega2: f64,
    pub sigma2_eta: f64,
    pub zeta: Vec<f64>,
    pub sigma2_zeta: f64,
    pub sigma2_lambda: f64,
    pub psi: [Vec<f64>; 2],
    pub nu2: [Vec<f64>; 2],
    pub alpha_rho: [f64; 2],
    pub beta_rho: [f64; 2],
}

impl GlobalParams {
    /// Neutral starting values with the right dimensions.
    pub fn initial(ctx: &ModelContext) -> Self {
        let mut gamma0 = vec![0.0; ctx.z0_width()];
        gamma0[0] = 11.0;
        let mut zeta = vec![0.0; ctx.recovery.width];
        zeta[0] = -2.0;
        let psi = [0usize, 1].map(|a| {
            let mut v = vec![0.0; ctx.hazard[a].width];
            v[0] = if a == 0 { -5.0 } else { -1.5 };
            v
        });
        let nu2 = [0usize, 1].map(|a| vec![1.0; ctx.hazard[a].blocks.len()]);
        Self {
            sigma2: 0.25,
            gamma0,
            gamma: vec![0.0; ctx.p() - 1],
            tau2_0: 1.0,
            tau2: 1.0,
            sigma2_gamma0: 1.0,
            sigma2_gamma: 1.0,
            eta: vec![0.0; 2 * ctx.b()],
            omega2: 1.0,
            sigma2_eta: 1.0,
            zeta,
            sigma2_zeta: 1.0,
            sigma2_lambda: 1.0,
            psi,
            nu2,
            alpha_rho: [4.0, 4.0],
            beta_rho: [4.0, 4.0],
        }
    }

    pub fn check(&self, ctx: &ModelContext) -> Result<()> {
        let dims = [
            ("gamma0", self.gamma0.len(), ctx.z0_width()),
            ("gamma", self.gamma.len(), ctx.p() - 1),
            ("eta", self.eta.len(), 2 * ctx.b()),
            ("zeta", self.zeta.len(), ctx.recovery.width),
            ("psi[0]", self.psi[0].len(), ctx.hazard[0].width),
            ("psi[1]", self.psi[1].len(), ctx.hazard[1].width),
            ("nu2[0]", self.nu2[0].len(), ctx.hazard[0].blocks.len()),
            ("nu2[1]", self.nu2[1].len(), ctx.hazard[1].blocks.len()),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Contract(format!("{name} has length {got}, expected {want}")));
            }
        }
        let positive = [
            self.sigma2,
            self.tau2_0,
            self.tau2,
            self.sigma2_gamma0,
            self.sigma2_gamma,
            self.omega2,
            self.sigma2_eta,
            self.sigma2_zeta,
            self.sigma2_lambda,
            self.alpha_rho[0],
            self.alpha_rho[1],
            self.beta_rho[0],
            self.beta_rho[1],
        ];
        if positive
            .iter()
            .chain(self.nu2[0].iter())
            .chain(self.nu2[1].iter())
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Contract("variance components and frailty hyperparameters must be positive".into()));
        }
        Ok(())
    }

    /// Prior mean of `beta_{j,k}` for `k = 1..=b` given admission hemoglobin.
    pub fn beta_mean(&self, slopes: &[f64], hb_admit: f64, out: &mut [f64]) {
        let u = hemoglobin_unit(hb_admit);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.eta[2 * k] + slopes[k] * u * self.eta[2 * k + 1];
        }
    }
}

/// Gaussian measurement log-likelihood of observations given true values.
pub fn response_loglik(observed: &[f64], truth: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Contract(format!("sigma2 must be positive, got {sigma2}")));
    }
    if observed.len() != truth.len() {
        return Err(Error::Contract("observed and true vectors differ in length".into()));
    }
    Ok(observed.iter().zip(truth).map(|(h, t)| normal_logpdf(*h, *t, sigma2)).sum())
}

/// `rho * exp(<B, psi>)`.
pub fn hazard(rho: f64, row: &[f64], psi: &[f64]) -> f64 {
    rho * row.iter().zip(psi).map(|(b, p)| b * p).sum::<f64>().exp()
}

fn ln_factorial(y: u8) -> f64 {
    (1..=y as u32).map(|k| (k as f64).ln()).sum()
}

/// Poisson counting-process log-likelihood. `hazards[s]` is the hazard of
/// the state the patient occupies in interval `s`; intervals outside the
/// risk set contribute nothing.
pub fn event_loglik(grid: &EventGrid, hazards: &[f64]) -> Result<f64> {
    if hazards.len() != grid.intervals.len() {
        return Err(Error::Contract("one hazard per grid interval required".into()));
    }
    let mut total = 0.0;
    for (s, (iv, h)) in grid.intervals.iter().zip(hazards).enumerate() {
        if !iv.in_risk {
            if iv.events > 0 && grid.index_event != Some(s) {
                return Err(Error::data("<grid>", format!("event on interval {s} outside the risk set")));
            }
            continue;
        }
        let mu = iv.delta * h;
        let y = iv.events;
        let term = if y == 0 { -mu } else { y as f64 * mu.ln() - mu - ln_factorial(y) };
        total += term.max(LOG_FLOOR);
    }
    Ok(total)
}

/// Log prior of one stay's effect vector given raw admission hemoglobin
/// (g/dL; scaled internally).
pub fn beta_logprior(beta: &[f64], hb_admit: f64, params: &GlobalParams, eig: &EigenSystem) -> Result<f64> {
    if !(params.omega2 > 0.0) {
        return Err(Error::Contract("omega2 must be positive".into()));
    }
    if params.eta.len() < 2 * beta.len() || eig.len() <= beta.len() {
        return Err(Error::Contract("eta or eigensystem too short for the effect vector".into()));
    }
    let slopes: Vec<f64> = (1..=beta.len()).map(|k| eig.eigenvalue(k).sqrt()).collect();
    let mut mean = vec![0.0; beta.len()];
    params.beta_mean(&slopes, hb_admit, &mut mean);
    Ok(beta.iter().zip(&mean).map(|(b, m)| normal_logpdf(*b, *m, params.omega2)).sum())
}

/// Lognormal log density of a recovery rate.
pub fn lambda_logprior(lambda: f64, q: &[f64], zeta: &[f64], sigma2_lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Contract(format!("recovery rate must be positive, got {lambda}")));
    }
    if !(sigma2_lambda > 0.0) || q.len() != zeta.len() {
        return Err(Error::Contract("invalid recovery prior parameters".into()));
    }
    let mean: f64 = q.iter().zip(zeta).map(|(a, b)| a * b).sum();
    Ok(-lambda.ln() + normal_logpdf(lambda.ln(), mean, sigma2_lambda))
}

/// Recovery covariate row for a stay from baseline covariates and raw true
/// hemoglobin at admission and discharge.
pub fn recovery_covariates(
    layout: &RecoveryLayout,
    eig: &EigenSystem,
    baseline: &BaselineCovariates,
    hb_admit: f64,
    hb_discharge: f64,
) -> Vec<f64> {
    let mut q = layout.static_part(eig, baseline);
    let start = q.len();
    q.resize(layout.width, 0.0);
    layout.fill_dynamic(eig, hb_admit, hb_discharge, &mut q[start..]);
    q
}
