//! The δ-step alternating event process shared by forward prediction and the
//! synthetic generator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::HospitalizationRecord;
use crate::design::BaselineCovariates;
use crate::error::{Error, Result};
use crate::likelihood::{hazard, recovery_covariates, GlobalParams};
use crate::model::ModelContext;
use crate::trajectory::{true_hb, true_hb_at, PatientEffects};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Admission,
    Discharge,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Admission => "admission",
            EventKind::Discharge => "discharge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    /// Days relative to index discharge during simulation; study days once
    /// returned in a `SimulatedTrajectory`.
    pub time: f64,
    pub kind: EventKind,
}

/// A patient's stays and effects while the process is being extended.
#[derive(Debug, Clone)]
pub(crate) struct Path<'a> {
    pub stays: Vec<HospitalizationRecord>,
    pub effects: PatientEffects,
    pub baseline: &'a BaselineCovariates,
}

impl Path<'_> {
    pub fn state(&self) -> u8 {
        match self.stays.last() {
            Some(h) if h.discharge.is_none() => 1,
            _ => 0,
        }
    }

    pub fn truth(&self, ctx: &ModelContext, t: f64) -> Result<f64> {
        true_hb_at(&self.stays, &self.effects, &ctx.eig, &ctx.hosp(), t)
    }

    pub fn truths(&self, ctx: &ModelContext, times: &[f64]) -> Result<Vec<f64>> {
        true_hb(&self.stays, &self.effects, &ctx.eig, &ctx.hosp(), times)
    }

    /// Start a stay at `t`, drawing its effects from their prior at T(t).
    pub fn admit(&mut self, ctx: &ModelContext, g: &GlobalParams, t: f64, is_index: bool, rng: &mut ChaCha8Rng) -> Result<()> {
        let tv = self.truth(ctx, t)?;
        let slopes = ctx.beta_slopes();
        let mut mean = vec![0.0; ctx.b()];
        g.beta_mean(&slopes, tv, &mut mean);
        let sd = g.omega2.sqrt();
        let beta = mean
            .iter()
            .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.stays.push(HospitalizationRecord {
            admit: t,
            discharge: None,
            is_index,
        });
        self.effects.beta.push(beta);
        self.effects.lambda.push(1.0);
        Ok(())
    }

    /// Close the open stay at `t`, drawing its recovery rate.
    pub fn discharge(&mut self, ctx: &ModelContext, g: &GlobalParams, t: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        let admit = match self.stays.last() {
            Some(h) if h.discharge.is_none() => h.admit,
            _ => return Err(Error::Contract("discharge without an open stay".into())),
        };
        let ta = self.truth(ctx, admit)?;
        let td = self.truth(ctx, t)?;
        let q = recovery_covariates(&ctx.recovery, &ctx.eig, self.baseline, ta, td);
        let mean: f64 = q.iter().zip(&g.zeta).map(|(a, b)| a * b).sum();
        let z: f64 = rng.sample(StandardNormal);
        let j = self.stays.len() - 1;
        self.effects.lambda[j] = (mean + g.sigma2_lambda.sqrt() * z).exp();
        self.stays[j].discharge = Some(t);
        Ok(())
    }

    pub fn hazard_at(&self, ctx: &ModelContext, g: &GlobalParams, t: f64) -> Result<f64> {
        let a = self.state() as usize;
        let tv = self.truth(ctx, t)?;
        let admit = (a == 1).then(|| self.stays.last().unwrap().admit);
        let row = ctx.hazard[a].row(self.baseline, tv, t, admit);
        let h = hazard(self.effects.rho[a], &row, &g.psi[a]);
        if !h.is_finite() || h < 0.0 {
            return Err(Error::numeric("hazard", format!("hazard {h} at t = {t} in state {a}")));
        }
        Ok(h)
    }
}

/// Extend `path` over `[from, to)`. Each step holds the hazard at its value
/// at the step start; a gap `eps ~ Exponential(h)` shorter than the step is
/// an event, after which the hazard is recomputed from the event time.
/// `eps` equal to the step length counts as no event.
pub(crate) fn run_process(
    path: &mut Path,
    ctx: &ModelContext,
    g: &GlobalParams,
    from: f64,
    to: f64,
    delta: f64,
    rng: &mut ChaCha8Rng,
    events: &mut Vec<SimEvent>,
) -> Result<()> {
    let mut t = from;
    let tol = 1e-12 * delta;
    while t < to - tol {
        let h = path.hazard_at(ctx, g, t)?;
        let step = delta.min(to - t);
        let eps = if h > 0.0 {
            Exp::new(h).map_err(|e| Error::numeric("hazard", e.to_string()))?.sample(rng)
        } else {
            f64::INFINITY
        };
        if eps < step {
            let te = t + eps;
            let kind = if path.state() == 0 {
                path.admit(ctx, g, te, false, rng)?;
                EventKind::Admission
            } else {
                path.discharge(ctx, g, te, rng)?;
                EventKind::Discharge
            };
            events.push(SimEvent { time: te, kind });
            t = te;
        } else {
            t += step;
        }
    }
    Ok(())
}
