//! True hemoglobin from patient effects: trend plus one decaying term per
//! hospitalization.

use serde::{Deserialize, Serialize};

use crate::basis::EigenSystem;
use crate::cohort::HospitalizationRecord;
use crate::design::study_time_unit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HospBasisConfig {
    pub m_max: f64,
    pub b: usize,
}

impl HospBasisConfig {
    pub fn new(m_max: f64, b: usize) -> Result<Self> {
        if !(m_max > 0.0) || b == 0 {
            return Err(Error::Config(format!(
                "hospital basis needs m_max > 0 and b >= 1, got {m_max} and {b}"
            )));
        }
        Ok(Self { m_max, b })
    }
}

/// Latent per-patient state. `beta` and `lambda` have one entry per
/// hospitalization; the `lambda` of a still-open stay is a placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientEffects {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub rho: [f64; 2],
}

impl PatientEffects {
    pub fn zeros(p: usize, b: usize, n_stays: usize) -> Self {
        Self {
            alpha: vec![0.0; p],
            beta: vec![vec![0.0; b]; n_stays],
            lambda: vec![1.0; n_stays],
            rho: [1.0, 1.0],
        }
    }

    pub fn check(&self, p: usize, b: usize, n_stays: usize) -> Result<()> {
        if self.alpha.len() != p {
            return Err(Error::Contract(format!("expected {p} trend coefficients, got {}", self.alpha.len())));
        }
        if self.beta.len() != n_stays || self.lambda.len() != n_stays {
            return Err(Error::Contract(format!(
                "effects cover {} hospitalizations but the record has {n_stays}",
                self.beta.len().min(self.lambda.len())
            )));
        }
        if self.beta.iter().any(|row| row.len() != b) {
            return Err(Error::Contract(format!("hospital effects must have {b} columns")));
        }
        if self.lambda.iter().chain(&self.rho).any(|v| !(*v > 0.0)) {
            return Err(Error::Contract("recovery rates and frailties must be positive".into()));
        }
        Ok(())
    }
}

/// Warped within-stay time: fraction of `m_max` elapsed since admission.
pub fn m_fun(t: f64, a: f64, cfg: &HospBasisConfig) -> Result<f64> {
    if t < a {
        return Err(Error::Contract(format!("time {t} precedes admission {a}")));
    }
    Ok(((t - a) / cfg.m_max).min(1.0))
}

pub(crate) fn warp(t: f64, a: f64, m_max: f64) -> f64 {
    ((t - a) / m_max).clamp(0.0, 1.0)
}

/// `phi~_k(m(d)) - phi~_k(0)` for `k = 1..=b`; the effect carried out of the
/// stay at discharge.
pub(crate) fn discharge_row(eig: &EigenSystem, admit: f64, discharge: f64, cfg: &HospBasisConfig, out: &mut [f64]) {
    in_stay_row(eig, admit, discharge, cfg, out);
}

pub(crate) fn in_stay_row(eig: &EigenSystem, admit: f64, t: f64, cfg: &HospBasisConfig, out: &mut [f64]) {
    let mut base = vec![0.0; out.len()];
    eig.fill_scaled_range(0.0, 1, &mut base);
    eig.fill_scaled_range(warp(t, admit, cfg.m_max), 1, out);
    for (o, b) in out.iter_mut().zip(&base) {
        *o -= b;
    }
}

/// Row of the hospital-effect design for one stay at time `t`.
pub fn hosp_basis_row(
    eig: &EigenSystem,
    hosp: &HospitalizationRecord,
    t: f64,
    lambda: f64,
    cfg: &HospBasisConfig,
) -> Vec<f64> {
    let mut row = vec![0.0; cfg.b];
    if t < hosp.admit {
        return row;
    }
    match hosp.discharge {
        Some(d) if t >= d => {
            discharge_row(eig, hosp.admit, d, cfg, &mut row);
            let decay = (-lambda * (t - d)).exp();
            row.iter_mut().for_each(|v| *v *= decay);
        }
        _ => in_stay_row(eig, hosp.admit, t, cfg, &mut row),
    }
    row
}

/// Trend `sum_k alpha_k phi~_k(scaled t)`.
pub fn trend_at(eig: &EigenSystem, alpha: &[f64], t: f64) -> f64 {
    let mut row = vec![0.0; alpha.len()];
    eig.fill_scaled_row(study_time_unit(t), &mut row);
    row.iter().zip(alpha).map(|(x, a)| x * a).sum()
}

/// True hemoglobin at each of `times`.
pub fn true_hb(
    stays: &[HospitalizationRecord],
    eff: &PatientEffects,
    eig: &EigenSystem,
    cfg: &HospBasisConfig,
    times: &[f64],
) -> Result<Vec<f64>> {
    eff.check(eff.alpha.len(), cfg.b, stays.len())?;
    if eff.alpha.len() > eig.len() {
        return Err(Error::Contract("more trend coefficients than eigenpairs".into()));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let mut v = trend_at(eig, &eff.alpha, t);
            for (j, h) in stays.iter().enumerate() {
                if t >= h.admit {
                    let row = hosp_basis_row(eig, h, t, eff.lambda[j], cfg);
                    v += row.iter().zip(&eff.beta[j]).map(|(x, b)| x * b).sum::<f64>();
                }
            }
            v
        })
        .collect())
}

pub fn true_hb_at(
    stays: &[HospitalizationRecord],
    eff: &PatientEffects,
    eig: &EigenSystem,
    cfg: &HospBasisConfig,
    t: f64,
) -> Result<f64> {
    Ok(true_hb(stays, eff, eig, cfg, &[t])?[0])
}
