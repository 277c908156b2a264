//! Per-patient state and updates: imputation, trend and hospital effects,
//! recovery rates and frailties.
//!
//! Every quantity that depends on true hemoglobin is evaluated only at a
//! sorted set of points (observation times, grid interval starts, admissions
//! and discharges). The log-likelihood contribution of each point is cached,
//! so a move that changes T only after some point re-evaluates that suffix.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::scale_covariate;
use crate::cohort::{event_grid, index_conditioning, PatientRecord};
use crate::design::{hemoglobin_unit, study_time_unit, INPATIENT_SCALE};
use crate::error::{Error, Result};
use crate::likelihood::{normal_logpdf, GlobalParams};
use crate::model::{HazardLayout, ModelContext};
use crate::trajectory::{in_stay_row, PatientEffects};

use super::adapt::StepSize;
use super::conjugate::{draw_gamma, rho_posterior};

const NO_INTERVAL: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct IntervalData {
    pub pt: usize,
    pub delta: f64,
    pub state: u8,
    pub events: u8,
    pub in_risk: bool,
    pub time_u: f64,
    pub inpatient_u: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct StayData {
    pub a_pt: usize,
    /// Discharge point for stays closed within the observed span.
    pub d_pt: Option<usize>,
    /// In-stay rows for points `a_pt..d_pt` (or to the end when open), `b` wide.
    pub in_rows: Vec<f64>,
    /// Effect carried out of the stay at discharge.
    pub d_row: Vec<f64>,
    /// `t - d` for points at or after discharge.
    pub post_dt: Vec<f64>,
}

impl StayData {
    pub fn closed(&self) -> bool {
        self.d_pt.is_some()
    }
}

/// Immutable per-patient design, built once per fit.
#[derive(Debug, Clone)]
pub(crate) struct PatientData {
    pub id: String,
    pub z0: Vec<f64>,
    pub times: Vec<f64>,
    /// Trend rows, `times.len() x p`.
    pub x: Vec<f64>,
    pub obs_pt: Vec<usize>,
    pub obs_value: Vec<Option<f64>>,
    pub pt_obs: Vec<(u32, u32)>,
    pub pt_interval: Vec<u32>,
    pub intervals: Vec<IntervalData>,
    pub stays: Vec<StayData>,
    pub haz_base: Vec<f64>,
    pub q_static: Vec<f64>,
}

impl PatientData {
    /// Build the design for `record` observed up to `end`. Stays must begin
    /// before `end`; a discharge after `end` is treated as still open.
    pub fn build(record: &PatientRecord, ctx: &ModelContext, end: f64) -> Result<Self> {
        let cfg = &ctx.config;
        let p = cfg.p;
        let b = cfg.b;
        if record.hospitalizations.iter().any(|h| h.admit >= end) {
            return Err(Error::Contract(format!(
                "patient {}: hospitalization begins at or after the end of the observed span",
                record.id
            )));
        }
        let grid = index_conditioning(event_grid(&record.hospitalizations, end, cfg.max_interval))
            .map_err(|_| Error::data(&record.id, "no index admission inside the observed span"))?;
        let obs: Vec<_> = record.observations.iter().filter(|o| o.time <= end).collect();

        let mut times: Vec<f64> = obs.iter().map(|o| o.time).collect();
        times.extend(grid.intervals.iter().map(|iv| iv.start));
        for h in &record.hospitalizations {
            times.push(h.admit);
            if let Some(d) = h.discharge.filter(|d| *d <= end) {
                times.push(d);
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let n = times.len();
        let find = |t: f64| times.binary_search_by(|x| x.total_cmp(&t)).expect("point registered");

        let mut x = vec![0.0; n * p];
        for (i, t) in times.iter().enumerate() {
            ctx.eig.fill_scaled_row(study_time_unit(*t), &mut x[i * p..(i + 1) * p]);
        }

        let obs_pt: Vec<usize> = obs.iter().map(|o| find(o.time)).collect();
        let mut pt_obs = vec![(0u32, 0u32); n];
        for (o, &pt) in obs_pt.iter().enumerate() {
            if pt_obs[pt].1 == 0 {
                pt_obs[pt] = (o as u32, o as u32 + 1);
            } else {
                pt_obs[pt].1 = o as u32 + 1;
            }
        }

        let mut pt_interval = vec![NO_INTERVAL; n];
        let mut intervals = Vec::with_capacity(grid.intervals.len());
        for (s, iv) in grid.intervals.iter().enumerate() {
            let pt = find(iv.start);
            pt_interval[pt] = s as u32;
            let inpatient_u = match (iv.state, iv.stay) {
                (1, Some(j)) => scale_covariate(iv.start - record.hospitalizations[j].admit, INPATIENT_SCALE),
                _ => 0.0,
            };
            intervals.push(IntervalData {
                pt,
                delta: iv.delta,
                state: iv.state,
                events: iv.events,
                in_risk: iv.in_risk,
                time_u: study_time_unit(iv.start),
                inpatient_u,
            });
        }

        let hosp = ctx.hosp();
        let stays = record
            .hospitalizations
            .iter()
            .map(|h| {
                let a_pt = find(h.admit);
                let d = h.discharge.filter(|d| *d <= end);
                let d_pt = d.map(find);
                let stop = d_pt.unwrap_or(n);
                let mut in_rows = vec![0.0; (stop - a_pt) * b];
                for (i, t) in times[a_pt..stop].iter().enumerate() {
                    in_stay_row(&ctx.eig, h.admit, *t, &hosp, &mut in_rows[i * b..(i + 1) * b]);
                }
                let mut d_row = vec![0.0; b];
                let mut post_dt = Vec::new();
                if let (Some(d), Some(dp)) = (d, d_pt) {
                    in_stay_row(&ctx.eig, h.admit, d, &hosp, &mut d_row);
                    post_dt = times[dp..].iter().map(|t| t - d).collect();
                }
                StayData {
                    a_pt,
                    d_pt,
                    in_rows,
                    d_row,
                    post_dt,
                }
            })
            .collect();

        Ok(Self {
            id: record.id.clone(),
            z0: ctx.config.covariates.trend_intercept_row(&record.baseline),
            times,
            x,
            obs_pt,
            obs_value: obs.iter().map(|o| o.value).collect(),
            pt_obs,
            pt_interval,
            intervals,
            stays,
            haz_base: ctx.hazard[0].baseline_part(&record.baseline),
            q_static: ctx.recovery.static_part(&ctx.eig, &record.baseline),
        })
    }

    pub fn n_points(&self) -> usize {
        self.times.len()
    }

    pub fn n_obs(&self) -> usize {
        self.obs_pt.len()
    }
}

/// Proposal scales of one patient's random-walk blocks.
#[derive(Debug, Clone)]
pub(crate) struct PatientSteps {
    pub alpha: Vec<StepSize>,
    /// `J x b`, row-major by stay.
    pub beta: Vec<StepSize>,
    pub lambda: Vec<StepSize>,
}

impl PatientSteps {
    fn new(p: usize, b: usize, n_stays: usize) -> Self {
        let mut alpha = vec![StepSize::new(1.0); p];
        alpha[0] = StepSize::new(0.5);
        Self {
            alpha,
            beta: vec![StepSize::new(1.0); n_stays * b],
            lambda: vec![StepSize::new(0.5); n_stays],
        }
    }

    pub fn all_mut(&mut self) -> impl Iterator<Item = &mut StepSize> {
        self.alpha.iter_mut().chain(self.beta.iter_mut()).chain(self.lambda.iter_mut())
    }
}

/// In-risk grid intervals of one state in the form the hazard updates need.
/// `eta` excludes the frailty; `s` caches `sum delta * exp(eta)`.
#[derive(Debug, Clone, Default)]
pub(crate) struct HazardTrack {
    pub delta: Vec<f64>,
    pub events: Vec<u8>,
    pub hb_u: Vec<f64>,
    pub time_u: Vec<f64>,
    pub inpatient_u: Vec<f64>,
    pub eta: Vec<f64>,
    pub s: f64,
    pub n: u32,
}

impl HazardTrack {
    fn clear(&mut self) {
        self.delta.clear();
        self.events.clear();
        self.hb_u.clear();
        self.time_u.clear();
        self.inpatient_u.clear();
        self.eta.clear();
        self.s = 0.0;
        self.n = 0;
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Work {
    /// True hemoglobin at each point.
    pub t: Vec<f64>,
    contrib: Vec<f64>,
    /// Linear predictor without the hemoglobin term, per interval.
    off: Vec<f64>,
    /// `exp(-lambda (t - d))` per closed stay and post-discharge point.
    decay: Vec<Vec<f64>>,
    stay_lp: Vec<f64>,
    q_static_dot: f64,
    alpha_mean0: f64,
    cand: Vec<f64>,
    stay_cand: Vec<(usize, f64)>,
    dt: Vec<f64>,
    beta_buf: Vec<f64>,
    q_buf: Vec<f64>,
}

/// Mutable per-patient sampler state.
#[derive(Debug, Clone)]
pub(crate) struct PatientState {
    pub effects: PatientEffects,
    /// Observation values, with missing ones imputed.
    pub h: Vec<f64>,
    pub steps: PatientSteps,
    pub work: Work,
    pub tracks: [HazardTrack; 2],
}

impl PatientState {
    pub fn new(data: &PatientData, ctx: &ModelContext, globals: &GlobalParams) -> Self {
        let j = data.stays.len();
        let mut effects = PatientEffects::zeros(ctx.p(), ctx.b(), j);
        let observed: Vec<f64> = data.obs_value.iter().flatten().copied().collect();
        effects.alpha[0] = if observed.is_empty() {
            globals.gamma0[0]
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        for (l, s) in effects.lambda.iter_mut().zip(&data.stays) {
            *l = if s.closed() { 0.1 } else { 1.0 };
        }
        let h = data.obs_value.iter().map(|v| v.unwrap_or(effects.alpha[0])).collect();
        Self {
            effects,
            h,
            steps: PatientSteps::new(ctx.p(), ctx.b(), j),
            work: Work::default(),
            tracks: Default::default(),
        }
    }

    #[cfg(test)]
    pub fn with_effects(data: &PatientData, ctx: &ModelContext, effects: PatientEffects) -> Result<Self> {
        effects.check(ctx.p(), ctx.b(), data.stays.len())?;
        let h = data.obs_value.iter().map(|v| v.unwrap_or(effects.alpha[0])).collect();
        Ok(Self {
            effects,
            h,
            steps: PatientSteps::new(ctx.p(), ctx.b(), data.stays.len()),
            work: Work::default(),
            tracks: Default::default(),
        })
    }
}

/// Values shared by every patient during one sweep.
pub(crate) struct SweepCtx<'a> {
    pub ctx: &'a ModelContext,
    pub g: &'a GlobalParams,
    pub slopes: Vec<f64>,
    pub alpha_slopes: Vec<f64>,
}

impl<'a> SweepCtx<'a> {
    pub fn new(ctx: &'a ModelContext, g: &'a GlobalParams) -> Self {
        Self {
            ctx,
            g,
            slopes: ctx.beta_slopes(),
            alpha_slopes: (0..ctx.p()).map(|k| ctx.eig.eigenvalue(k).sqrt()).collect(),
        }
    }

    fn alpha_logprior(&self, k: usize, value: f64, mean0: f64) -> f64 {
        if k == 0 {
            normal_logpdf(value, mean0, self.g.tau2_0)
        } else {
            normal_logpdf(value, self.alpha_slopes[k] * self.g.gamma[k - 1], self.g.tau2)
        }
    }
}

/// Recompute T at every point and the post-discharge decay factors.
pub(crate) fn refresh_truth(data: &PatientData, eff: &PatientEffects, w: &mut Work, p: usize, b: usize) {
    let n = data.n_points();
    w.t.clear();
    w.t.extend((0..n).map(|i| {
        data.x[i * p..(i + 1) * p].iter().zip(&eff.alpha).map(|(x, a)| x * a).sum::<f64>()
    }));
    w.decay.resize(data.stays.len(), Vec::new());
    for (j, s) in data.stays.iter().enumerate() {
        let beta = &eff.beta[j];
        let stop = s.d_pt.unwrap_or(n);
        for (i, pt) in (s.a_pt..stop).enumerate() {
            w.t[pt] += dot(&s.in_rows[i * b..(i + 1) * b], beta);
        }
        let decay = &mut w.decay[j];
        decay.clear();
        if let Some(dp) = s.d_pt {
            let carry = dot(&s.d_row, beta);
            let lambda = eff.lambda[j];
            decay.extend(s.post_dt.iter().map(|dt| (-lambda * dt).exp()));
            for (i, f) in decay.iter().enumerate() {
                w.t[dp + i] += carry * f;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Replace each designated-missing observation with a draw `N(T(t), sigma2)`.
pub(crate) fn impute_missing(data: &PatientData, t: &[f64], sigma2: f64, h: &mut [f64], rng: &mut ChaCha8Rng) {
    let sd = sigma2.sqrt();
    for (o, v) in data.obs_value.iter().enumerate() {
        if v.is_none() {
            let z: f64 = rng.sample(StandardNormal);
            h[o] = t[data.obs_pt[o]] + sd * z;
        }
    }
}

/// Hazard linear predictor of an interval, leaving out the hemoglobin term.
fn interval_offset(iv: &IntervalData, psi: &[f64], base: &[f64]) -> f64 {
    let mut eta = psi[0] + psi[2] * iv.time_u;
    let nb = base.len();
    eta += dot(&psi[3..3 + nb], base);
    if iv.state == 1 {
        eta += psi[3 + nb] * iv.inpatient_u;
    }
    eta
}

fn point_loglik(data: &PatientData, pt: usize, tv: f64, h: &[f64], g: &GlobalParams, rho: &[f64; 2], off: &[f64]) -> f64 {
    let mut ll = 0.0;
    let (o0, o1) = data.pt_obs[pt];
    for o in o0..o1 {
        ll += normal_logpdf(h[o as usize], tv, g.sigma2);
    }
    let s = data.pt_interval[pt];
    if s != NO_INTERVAL {
        let iv = &data.intervals[s as usize];
        if iv.in_risk {
            let a = iv.state as usize;
            let eta = off[s as usize] + g.psi[a][HazardLayout::HEMOGLOBIN_COLUMN] * hemoglobin_unit(tv);
            let mu = iv.delta * rho[a] * eta.exp();
            ll += if iv.events > 0 { (iv.delta * rho[a]).ln() + eta - mu } else { -mu };
        }
    }
    ll
}

#[allow(clippy::too_many_arguments)]
fn stay_logprior(
    sc: &SweepCtx,
    beta: &[f64],
    lambda: f64,
    closed: bool,
    t_admit: f64,
    t_discharge: f64,
    q_static_dot: f64,
    q_buf: &mut Vec<f64>,
) -> f64 {
    let g = sc.g;
    let ua = hemoglobin_unit(t_admit);
    let mut lp = 0.0;
    for (k, bk) in beta.iter().enumerate() {
        lp += normal_logpdf(*bk, g.eta[2 * k] + sc.slopes[k] * ua * g.eta[2 * k + 1], g.omega2);
    }
    if closed {
        let layout = &sc.ctx.recovery;
        q_buf.resize(layout.dynamic_width(), 0.0);
        layout.fill_dynamic(&sc.ctx.eig, t_admit, t_discharge, q_buf);
        let mean = q_static_dot + dot(q_buf, &g.zeta[layout.static_width..]);
        lp += -lambda.ln() + normal_logpdf(lambda.ln(), mean, g.sigma2_lambda);
    }
    lp
}

/// Bring every cached term in line with the current effects and globals.
pub(crate) fn prepare(data: &PatientData, st: &mut PatientState, sc: &SweepCtx) {
    let g = sc.g;
    let w = &mut st.work;
    w.off.clear();
    w.off.extend(
        data.intervals
            .iter()
            .map(|iv| interval_offset(iv, &g.psi[iv.state as usize], &data.haz_base)),
    );
    w.contrib.clear();
    for pt in 0..data.n_points() {
        let c = point_loglik(data, pt, w.t[pt], &st.h, g, &st.effects.rho, &w.off);
        w.contrib.push(c);
    }
    let sw = sc.ctx.recovery.static_width;
    w.q_static_dot = dot(&data.q_static, &g.zeta[..sw]);
    w.alpha_mean0 = dot(&data.z0, &g.gamma0);
    w.stay_lp.clear();
    for (j, s) in data.stays.iter().enumerate() {
        let td = s.d_pt.map_or(0.0, |d| w.t[d]);
        let lp = stay_logprior(
            sc,
            &st.effects.beta[j],
            st.effects.lambda[j],
            s.closed(),
            w.t[s.a_pt],
            td,
            w.q_static_dot,
            &mut w.q_buf,
        );
        w.stay_lp.push(lp);
    }
}

#[derive(Debug, Clone, Copy)]
enum Own {
    Alpha { k: usize, old: f64, new: f64 },
    Beta { j: usize, k: usize, new: f64 },
    Lambda { j: usize, old: f64, new: f64 },
}

impl Own {
    fn stay(&self) -> Option<usize> {
        match *self {
            Own::Alpha { .. } => None,
            Own::Beta { j, .. } | Own::Lambda { j, .. } => Some(j),
        }
    }
}

/// Log acceptance ratio of a move that adds `w.dt` to T from point `from`
/// on. Candidate caches are left in `w.cand` and `w.stay_cand`.
fn move_log_ratio(data: &PatientData, st: &mut PatientState, sc: &SweepCtx, from: usize, own: Own) -> f64 {
    let eff = &st.effects;
    let w = &mut st.work;
    let n = data.n_points();
    let mut diff = 0.0;
    w.cand.clear();
    for pt in from..n {
        let tv = w.t[pt] + w.dt[pt - from];
        let c = point_loglik(data, pt, tv, &st.h, sc.g, &eff.rho, &w.off);
        diff += c - w.contrib[pt];
        w.cand.push(c);
    }
    w.stay_cand.clear();
    let t_at = |w: &Work, pt: usize| if pt >= from { w.t[pt] + w.dt[pt - from] } else { w.t[pt] };
    for (j, s) in data.stays.iter().enumerate() {
        let moved = s.a_pt >= from || s.d_pt.is_some_and(|d| d >= from);
        if !moved && own.stay() != Some(j) {
            continue;
        }
        w.beta_buf.clear();
        w.beta_buf.extend_from_slice(&eff.beta[j]);
        let mut lambda = eff.lambda[j];
        match own {
            Own::Beta { j: jj, k, new } if jj == j => w.beta_buf[k] = new,
            Own::Lambda { j: jj, new, .. } if jj == j => lambda = new,
            _ => {}
        }
        let ta = t_at(w, s.a_pt);
        let td = s.d_pt.map_or(0.0, |d| t_at(w, d));
        let mut beta = std::mem::take(&mut w.beta_buf);
        let lp = stay_logprior(sc, &beta, lambda, s.closed(), ta, td, w.q_static_dot, &mut w.q_buf);
        std::mem::swap(&mut beta, &mut w.beta_buf);
        diff += lp - w.stay_lp[j];
        w.stay_cand.push((j, lp));
    }
    match own {
        Own::Alpha { k, old, new } => {
            diff += sc.alpha_logprior(k, new, w.alpha_mean0) - sc.alpha_logprior(k, old, w.alpha_mean0);
        }
        // random walk on log(lambda): Jacobian of the transform
        Own::Lambda { old, new, .. } => diff += new.ln() - old.ln(),
        Own::Beta { .. } => {}
    }
    diff
}

fn commit(data: &PatientData, st: &mut PatientState, from: usize, own: Own) {
    let w = &mut st.work;
    for (i, pt) in (from..data.n_points()).enumerate() {
        w.t[pt] += w.dt[i];
        w.contrib[pt] = w.cand[i];
    }
    for &(j, lp) in &w.stay_cand {
        w.stay_lp[j] = lp;
    }
    match own {
        Own::Alpha { k, new, .. } => st.effects.alpha[k] = new,
        Own::Beta { j, k, new } => st.effects.beta[j][k] = new,
        Own::Lambda { j, new, .. } => {
            st.effects.lambda[j] = new;
            let s = &data.stays[j];
            w.decay[j].clear();
            w.decay[j].extend(s.post_dt.iter().map(|dt| (-new * dt).exp()));
        }
    }
}

fn accept_or_reject(
    data: &PatientData,
    st: &mut PatientState,
    sc: &SweepCtx,
    from: usize,
    own: Own,
    block: &str,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let log_ratio = move_log_ratio(data, st, sc, from, own);
    if log_ratio.is_nan() {
        return Err(Error::numeric(block, format!("non-finite log acceptance ratio for patient {}", data.id)));
    }
    let u: f64 = rng.random();
    let accept = u.ln() < log_ratio || log_ratio >= 0.0;
    if accept {
        commit(data, st, from, own);
    }
    Ok(accept)
}

pub(crate) fn update_alpha(data: &PatientData, st: &mut PatientState, sc: &SweepCtx, k: usize, rng: &mut ChaCha8Rng) -> Result<bool> {
    let p = sc.ctx.p();
    let old = st.effects.alpha[k];
    let step = st.steps.alpha[k].jump(rng);
    let new = old + step;
    st.work.dt.clear();
    st.work.dt.extend((0..data.n_points()).map(|pt| step * data.x[pt * p + k]));
    let block = if k == 0 { "alpha_0" } else { "alpha_k" };
    let acc = accept_or_reject(data, st, sc, 0, Own::Alpha { k, old, new }, block, rng)?;
    st.steps.alpha[k].record(acc);
    Ok(acc)
}

pub(crate) fn update_beta(data: &PatientData, st: &mut PatientState, sc: &SweepCtx, j: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<bool> {
    let b = sc.ctx.b();
    let s = &data.stays[j];
    let n = data.n_points();
    let idx = j * b + k;
    let step = st.steps.beta[idx].jump(rng);
    let new = st.effects.beta[j][k] + step;
    let w = &mut st.work;
    w.dt.clear();
    let stop = s.d_pt.unwrap_or(n);
    w.dt.extend((0..stop - s.a_pt).map(|i| step * s.in_rows[i * b + k]));
    if s.d_pt.is_some() {
        let carry = step * s.d_row[k];
        w.dt.extend(w.decay[j].iter().map(|f| carry * f));
    }
    let acc = accept_or_reject(data, st, sc, s.a_pt, Own::Beta { j, k, new }, "beta", rng)?;
    st.steps.beta[idx].record(acc);
    Ok(acc)
}

pub(crate) fn update_lambda(data: &PatientData, st: &mut PatientState, sc: &SweepCtx, j: usize, rng: &mut ChaCha8Rng) -> Result<bool> {
    let s = &data.stays[j];
    let Some(dp) = s.d_pt else {
        return Ok(false);
    };
    let old = st.effects.lambda[j];
    let new = old * st.steps.lambda[j].jump(rng).exp();
    let carry = dot(&s.d_row, &st.effects.beta[j]);
    let w = &mut st.work;
    w.dt.clear();
    w.dt.extend(s.post_dt.iter().zip(&w.decay[j]).map(|(dt, f)| carry * ((-new * dt).exp() - f)));
    let acc = accept_or_reject(data, st, sc, dp, Own::Lambda { j, old, new }, "lambda", rng)?;
    st.steps.lambda[j].record(acc);
    Ok(acc)
}

/// Conjugate frailty draws for both states given current T.
pub(crate) fn update_rho(data: &PatientData, st: &mut PatientState, g: &GlobalParams, rng: &mut ChaCha8Rng) -> Result<()> {
    let (n, s) = exposure(data, &st.work, g);
    for a in 0..2 {
        let (shape, rate) = rho_posterior(g.alpha_rho[a], g.beta_rho[a], n[a], s[a]);
        st.effects.rho[a] = draw_gamma(rng, shape, rate)?;
    }
    Ok(())
}

/// In-risk event counts and `sum delta * exp(eta)` per state.
fn exposure(data: &PatientData, w: &Work, g: &GlobalParams) -> ([u32; 2], [f64; 2]) {
    let mut n = [0u32; 2];
    let mut s = [0.0; 2];
    for (i, iv) in data.intervals.iter().enumerate() {
        if !iv.in_risk {
            continue;
        }
        let a = iv.state as usize;
        let eta = w.off[i] + g.psi[a][HazardLayout::HEMOGLOBIN_COLUMN] * hemoglobin_unit(w.t[iv.pt]);
        n[a] += u32::from(iv.events);
        s[a] += iv.delta * eta.exp();
    }
    (n, s)
}

/// Refresh the hazard tracks handed to the global updates.
pub(crate) fn build_tracks(data: &PatientData, st: &mut PatientState, g: &GlobalParams) {
    for t in &mut st.tracks {
        t.clear();
    }
    let w = &st.work;
    for (i, iv) in data.intervals.iter().enumerate() {
        if !iv.in_risk {
            continue;
        }
        let a = iv.state as usize;
        let hb_u = hemoglobin_unit(w.t[iv.pt]);
        let eta = w.off[i] + g.psi[a][HazardLayout::HEMOGLOBIN_COLUMN] * hb_u;
        let tr = &mut st.tracks[a];
        tr.delta.push(iv.delta);
        tr.events.push(iv.events);
        tr.hb_u.push(hb_u);
        tr.time_u.push(iv.time_u);
        tr.inpatient_u.push(iv.inpatient_u);
        tr.eta.push(eta);
        tr.s += iv.delta * eta.exp();
        tr.n += u32::from(iv.events);
    }
}

/// One full pass over a patient's latent variables with the globals held
/// fixed: imputation, every trend and hospital component, recovery rates,
/// then frailties.
pub(crate) fn sweep_patient(data: &PatientData, st: &mut PatientState, sc: &SweepCtx, rng: &mut ChaCha8Rng) -> Result<()> {
    let (p, b) = (sc.ctx.p(), sc.ctx.b());
    refresh_truth(data, &st.effects, &mut st.work, p, b);
    impute_missing(data, &st.work.t, sc.g.sigma2, &mut st.h, rng);
    prepare(data, st, sc);
    for k in 0..p {
        update_alpha(data, st, sc, k, rng)?;
    }
    for j in 0..data.stays.len() {
        for k in 0..b {
            update_beta(data, st, sc, j, k, rng)?;
        }
    }
    for j in 0..data.stays.len() {
        update_lambda(data, st, sc, j, rng)?;
    }
    update_rho(data, st, sc.g, rng)?;
    build_tracks(data, st, sc.g);
    Ok(())
}

/// Total log target of one patient's latent variables given the globals,
/// computed from scratch. Used to check the cached incremental terms.
#[cfg(test)]
pub(crate) fn full_log_target(data: &PatientData, st: &PatientState, sc: &SweepCtx) -> f64 {
    let mut copy = st.clone();
    refresh_truth(data, &copy.effects, &mut copy.work, sc.ctx.p(), sc.ctx.b());
    prepare(data, &mut copy, sc);
    let w = &copy.work;
    let mut total: f64 = w.contrib.iter().sum::<f64>() + w.stay_lp.iter().sum::<f64>();
    for (k, a) in copy.effects.alpha.iter().enumerate() {
        total += sc.alpha_logprior(k, *a, w.alpha_mean0);
    }
    total
}
