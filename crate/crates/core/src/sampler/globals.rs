//! Population-level updates, run serially after every patient has moved.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::config::Hyperparameters;
use crate::design::hemoglobin_unit;
use crate::error::{Error, Result};
use crate::likelihood::{gamma_logpdf, normal_logpdf, GlobalParams};
use crate::model::{HazardBlock, ModelContext};

use super::adapt::StepSize;
use super::conjugate::{
    eta_posterior, gamma0_posterior, gamma_k_posterior, inv_gamma_posterior, sigma2_gamma_posterior,
    tau2_0_posterior, tau2_posterior, vector_variance_posterior, zeta_posterior,
};
use super::patient::{HazardTrack, PatientData, PatientState};

/// Proposal scales of the global random-walk blocks.
#[derive(Debug, Clone)]
pub(crate) struct GlobalSteps {
    /// One per hazard block, per state.
    pub psi: [Vec<StepSize>; 2],
    /// Centred moves, indexed like `psi`; only time-varying blocks use theirs.
    pub centred: [Vec<StepSize>; 2],
    pub alpha_rho: [StepSize; 2],
    pub beta_rho: [StepSize; 2],
}

impl GlobalSteps {
    pub fn new(ctx: &ModelContext) -> Self {
        Self {
            psi: [0, 1].map(|a| vec![StepSize::new(0.1); ctx.hazard[a].blocks.len()]),
            centred: [0, 1].map(|a| vec![StepSize::new(0.5); ctx.hazard[a].blocks.len()]),
            alpha_rho: [StepSize::new(0.5); 2],
            beta_rho: [StepSize::new(0.5); 2],
        }
    }

    pub fn all_mut(&mut self) -> impl Iterator<Item = &mut StepSize> {
        let [p0, p1] = &mut self.psi;
        let [c0, c1] = &mut self.centred;
        p0.iter_mut()
            .chain(p1.iter_mut())
            .chain(c0.iter_mut())
            .chain(c1.iter_mut())
            .chain(self.alpha_rho.iter_mut())
            .chain(self.beta_rho.iter_mut())
    }
}

fn draw_normal(rng: &mut ChaCha8Rng, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    mean + var.sqrt() * z
}

/// Every global block in sweep order.
pub(crate) fn update_globals(
    g: &mut GlobalParams,
    data: &[PatientData],
    patients: &mut [PatientState],
    ctx: &ModelContext,
    hyper: &Hyperparameters,
    steps: &mut GlobalSteps,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let p = ctx.p();
    let pi: Vec<f64> = (0..p).map(|k| ctx.eig.eigenvalue(k)).collect();

    // gamma0
    let z_rows: Vec<&[f64]> = data.iter().map(|d| d.z0.as_slice()).collect();
    let alpha0: Vec<f64> = patients.iter().map(|s| s.effects.alpha[0]).collect();
    g.gamma0 = gamma0_posterior(&z_rows, &alpha0, ctx.z0_width(), g.sigma2_gamma0, g.tau2_0).draw(rng)?;

    // gamma_k
    for k in 1..p {
        let ak: Vec<f64> = patients.iter().map(|s| s.effects.alpha[k]).collect();
        let (m, v) = gamma_k_posterior(&ak, pi[k], g.sigma2_gamma, g.tau2);
        g.gamma[k - 1] = draw_normal(rng, m, v);
    }

    // tau2_0, tau2
    let r0: Vec<f64> = data
        .iter()
        .zip(patients.iter())
        .map(|(d, s)| s.effects.alpha[0] - dot(&d.z0, &g.gamma0))
        .collect();
    g.tau2_0 = tau2_0_posterior(hyper.a_tau0, hyper.b_tau0, &r0).draw(rng)?;
    let rk: Vec<f64> = patients
        .iter()
        .flat_map(|s| (1..p).map(|k| s.effects.alpha[k] - pi[k].sqrt() * g.gamma[k - 1]).collect::<Vec<_>>())
        .collect();
    g.tau2 = tau2_posterior(hyper.a_tau, hyper.b_tau, &rk).draw(rng)?;

    // sigma2_gamma0, sigma2_gamma
    g.sigma2_gamma0 = vector_variance_posterior(hyper.a_gamma0, hyper.b_gamma0, &g.gamma0).draw(rng)?;
    g.sigma2_gamma = sigma2_gamma_posterior(hyper.a_sigma_gamma, hyper.b_sigma_gamma, &g.gamma, &pi[1..]).draw(rng)?;

    // eta, omega2, sigma2_eta
    let slopes = ctx.beta_slopes();
    let mut stays: Vec<(f64, &[f64])> = Vec::new();
    for (d, s) in data.iter().zip(patients.iter()) {
        for (j, st) in d.stays.iter().enumerate() {
            stays.push((hemoglobin_unit(s.work.t[st.a_pt]), s.effects.beta[j].as_slice()));
        }
    }
    g.eta = eta_posterior(&stays, &slopes, g.sigma2_eta, g.omega2).draw(rng)?;
    let mut ss = 0.0;
    let mut count = 0.0;
    for (u, beta) in &stays {
        for (k, bk) in beta.iter().enumerate() {
            let m = g.eta[2 * k] + slopes[k] * u * g.eta[2 * k + 1];
            ss += (bk - m).powi(2);
            count += 1.0;
        }
    }
    g.omega2 = inv_gamma_posterior(hyper.a_omega, hyper.b_omega, count, ss).draw(rng)?;
    g.sigma2_eta = vector_variance_posterior(hyper.a_eta, hyper.b_eta, &g.eta).draw(rng)?;

    // zeta, sigma2_zeta, sigma2_lambda over closed stays
    let layout = &ctx.recovery;
    let mut q_rows: Vec<Vec<f64>> = Vec::new();
    let mut log_lambda = Vec::new();
    for (d, s) in data.iter().zip(patients.iter()) {
        for (j, st) in d.stays.iter().enumerate() {
            let Some(dp) = st.d_pt else { continue };
            let mut q = d.q_static.clone();
            q.resize(layout.width, 0.0);
            layout.fill_dynamic(&ctx.eig, s.work.t[st.a_pt], s.work.t[dp], &mut q[layout.static_width..]);
            q_rows.push(q);
            log_lambda.push(s.effects.lambda[j].ln());
        }
    }
    let q_refs: Vec<&[f64]> = q_rows.iter().map(Vec::as_slice).collect();
    g.zeta = zeta_posterior(&q_refs, &log_lambda, layout.width, g.sigma2_zeta, g.sigma2_lambda).draw(rng)?;
    g.sigma2_zeta = vector_variance_posterior(hyper.a_zeta, hyper.b_zeta, &g.zeta).draw(rng)?;
    let ss: f64 = q_rows.iter().zip(&log_lambda).map(|(q, y)| (y - dot(q, &g.zeta)).powi(2)).sum();
    g.sigma2_lambda = inv_gamma_posterior(hyper.a_lambda, hyper.b_lambda, log_lambda.len() as f64, ss).draw(rng)?;

    // psi, block by block
    for a in 0..2 {
        for d in 0..ctx.hazard[a].blocks.len() {
            update_psi_block(g, data, patients, ctx, a, d, &mut steps.psi[a][d], rng)?;
        }
        for d in 0..ctx.hazard[a].blocks.len() {
            if is_varying(ctx.hazard[a].blocks[d].kind) {
                update_psi_centred(g, patients, ctx, a, d, &mut steps.centred[a][d], rng)?;
            }
        }
    }

    // nu2
    for a in 0..2 {
        for (d, blk) in ctx.hazard[a].blocks.iter().enumerate() {
            let v = &g.psi[a][blk.offset..blk.offset + blk.width];
            g.nu2[a][d] = vector_variance_posterior(hyper.a_nu, hyper.b_nu, v).draw(rng)?;
        }
    }

    // frailty hyperparameters
    for a in 0..2 {
        let rho: Vec<f64> = patients.iter().map(|s| s.effects.rho[a]).collect();
        update_alpha_rho(g, &rho, a, hyper, &mut steps.alpha_rho[a], rng)?;
        update_beta_rho(g, &rho, a, hyper, &mut steps.beta_rho[a], rng)?;
    }

    // sigma2
    let mut rss = 0.0;
    let mut n_obs = 0usize;
    for (d, s) in data.iter().zip(patients.iter()) {
        for (o, &pt) in d.obs_pt.iter().enumerate() {
            rss += (s.h[o] - s.work.t[pt]).powi(2);
        }
        n_obs += d.n_obs();
    }
    g.sigma2 = inv_gamma_posterior(hyper.a_sigma, hyper.b_sigma, n_obs as f64, rss).draw(rng)?;
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mh_accept(rng: &mut ChaCha8Rng, log_ratio: f64, block: &str) -> Result<bool> {
    if log_ratio.is_nan() {
        return Err(Error::numeric(block, "non-finite log acceptance ratio"));
    }
    let u: f64 = rng.random();
    Ok(log_ratio >= 0.0 || u.ln() < log_ratio)
}

/// Time-varying column of a track, if the block is one.
fn varying_column(track: &HazardTrack, kind: HazardBlock) -> Option<&[f64]> {
    match kind {
        HazardBlock::Hemoglobin => Some(&track.hb_u),
        HazardBlock::StudyTime => Some(&track.time_u),
        HazardBlock::InpatientTime => Some(&track.inpatient_u),
        _ => None,
    }
}

fn is_varying(kind: HazardBlock) -> bool {
    matches!(kind, HazardBlock::Hemoglobin | HazardBlock::StudyTime | HazardBlock::InpatientTime)
}

/// Move the coefficient of time-varying block `d` by `delta` and the
/// intercept by `-xbar * delta`, where `xbar` is the exposure-weighted mean of
/// the column. The covariate barely varies around its mean, so the two
/// coefficients are strongly correlated a posteriori and single-block walks
/// crawl along the ridge. `xbar` depends only on patient state, so the
/// proposal is symmetric.
pub(crate) fn update_psi_centred(
    g: &mut GlobalParams,
    patients: &mut [PatientState],
    ctx: &ModelContext,
    a: usize,
    d: usize,
    step: &mut StepSize,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let layout = &ctx.hazard[a];
    let blk = layout.blocks[d];
    let d0 = layout.block_index(HazardBlock::Intercept).expect("every hazard has an intercept");
    let c0 = layout.blocks[d0].offset;
    let c = blk.offset;
    let (mut wx, mut w) = (0.0, 0.0);
    for st in patients.iter() {
        let tr = &st.tracks[a];
        let x = varying_column(tr, blk.kind).unwrap();
        for s in 0..tr.eta.len() {
            wx += tr.delta[s] * x[s];
            w += tr.delta[s];
        }
    }
    let xbar = if w > 0.0 { wx / w } else { 0.0 };
    let delta = step.jump(rng) * g.nu2[a][d].sqrt();
    let shift = -xbar * delta;
    let mut log_ratio = normal_logpdf(g.psi[a][c] + delta, 0.0, g.nu2[a][d]) - normal_logpdf(g.psi[a][c], 0.0, g.nu2[a][d])
        + normal_logpdf(g.psi[a][c0] + shift, 0.0, g.nu2[a][d0])
        - normal_logpdf(g.psi[a][c0], 0.0, g.nu2[a][d0]);
    let mut new_s = vec![0.0; patients.len()];
    for (i, st) in patients.iter().enumerate() {
        let tr = &st.tracks[a];
        let x = varying_column(tr, blk.kind).unwrap();
        let mut sx = 0.0;
        let mut s_new = 0.0;
        for s in 0..tr.eta.len() {
            let move_s = (x[s] - xbar) * delta;
            if tr.events[s] > 0 {
                sx += move_s;
            }
            s_new += tr.delta[s] * (tr.eta[s] + move_s).exp();
        }
        log_ratio += sx - st.effects.rho[a] * (s_new - tr.s);
        new_s[i] = s_new;
    }
    let accept = mh_accept(rng, log_ratio, "psi")?;
    step.record(accept);
    if accept {
        g.psi[a][c] += delta;
        g.psi[a][c0] += shift;
        for (i, st) in patients.iter_mut().enumerate() {
            let tr = &mut st.tracks[a];
            let x = varying_column(tr, blk.kind).unwrap().to_vec();
            for (e, xs) in tr.eta.iter_mut().zip(&x) {
                *e += (xs - xbar) * delta;
            }
            tr.s = new_s[i];
        }
    }
    Ok(accept)
}

/// Joint random-walk proposal for hazard block `d` of state `a`, with scale
/// `step * sqrt(nu2_{d,a})`. The ratio is
/// the product of every patient's event likelihood ratio and the
/// `N(0, nu2_{d,a})` prior ratio.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_psi_block(
    g: &mut GlobalParams,
    data: &[PatientData],
    patients: &mut [PatientState],
    ctx: &ModelContext,
    a: usize,
    d: usize,
    step: &mut StepSize,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let blk = ctx.hazard[a].blocks[d];
    let cols = blk.offset..blk.offset + blk.width;
    let nu2 = g.nu2[a][d];
    // scaled by the prior sd so the walk keeps pace with nu2 when the data
    // say little; nu2 is fixed during this step, so the proposal stays symmetric
    let jump: Vec<f64> = (0..blk.width).map(|_| step.jump(rng) * nu2.sqrt()).collect();
    let mut log_ratio = 0.0;
    for (c, j) in cols.clone().zip(&jump) {
        log_ratio += normal_logpdf(g.psi[a][c] + j, 0.0, nu2) - normal_logpdf(g.psi[a][c], 0.0, nu2);
    }
    let mut new_s = vec![0.0; patients.len()];
    let mut shift = vec![0.0; patients.len()];
    for (i, (dat, st)) in data.iter().zip(patients.iter()).enumerate() {
        let tr = &st.tracks[a];
        let rho = st.effects.rho[a];
        match varying_column(tr, blk.kind) {
            Some(x) => {
                let delta = jump[0];
                let mut sx = 0.0;
                let mut s_new = 0.0;
                for s in 0..tr.eta.len() {
                    if tr.events[s] > 0 {
                        sx += x[s];
                    }
                    s_new += tr.delta[s] * (tr.eta[s] + x[s] * delta).exp();
                }
                log_ratio += delta * sx - rho * (s_new - tr.s);
                new_s[i] = s_new;
            }
            None => {
                let c = match blk.kind {
                    HazardBlock::Intercept => jump[0],
                    // baseline encodings start right after the three fixed columns
                    _ => dot(&dat.haz_base[blk.offset - 3..blk.offset - 3 + blk.width], &jump),
                };
                log_ratio += tr.n as f64 * c - rho * tr.s * c.exp_m1();
                shift[i] = c;
            }
        }
    }
    let accept = mh_accept(rng, log_ratio, "psi")?;
    step.record(accept);
    if accept {
        for (c, j) in cols.zip(&jump) {
            g.psi[a][c] += j;
        }
        for (i, st) in patients.iter_mut().enumerate() {
            let tr = &mut st.tracks[a];
            match blk.kind {
                HazardBlock::Hemoglobin | HazardBlock::StudyTime | HazardBlock::InpatientTime => {
                    let delta = jump[0];
                    let x = varying_column(tr, blk.kind).unwrap().to_vec();
                    for (e, xs) in tr.eta.iter_mut().zip(&x) {
                        *e += xs * delta;
                    }
                    tr.s = new_s[i];
                }
                _ => {
                    let c = shift[i];
                    tr.eta.iter_mut().for_each(|e| *e += c);
                    tr.s *= c.exp();
                }
            }
        }
    }
    Ok(accept)
}

/// Log density of the frailty shape given all frailties of one state.
fn alpha_rho_target(alpha: f64, beta: f64, rho: &[f64], a0: f64, b0: f64) -> f64 {
    let n = rho.len() as f64;
    let sum_log: f64 = rho.iter().map(|r| r.ln()).sum();
    n * (alpha * beta.ln() - ln_gamma(alpha)) + (alpha - 1.0) * sum_log + gamma_logpdf(alpha, a0, b0)
}

fn beta_rho_target(alpha: f64, beta: f64, rho: &[f64], a0: f64, b0: f64) -> f64 {
    let n = rho.len() as f64;
    let sum: f64 = rho.iter().sum();
    n * alpha * beta.ln() - beta * sum + gamma_logpdf(beta, a0, b0)
}

/// Random walk on the frailty shape; non-positive candidates are rejected.
pub(crate) fn update_alpha_rho(
    g: &mut GlobalParams,
    rho: &[f64],
    a: usize,
    hyper: &Hyperparameters,
    step: &mut StepSize,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let cur = g.alpha_rho[a];
    let cand = cur + step.jump(rng);
    let accept = if cand <= 0.0 {
        // draw the uniform anyway so the stream position does not depend on the branch
        let _: f64 = rng.random();
        false
    } else {
        let beta = g.beta_rho[a];
        let r = alpha_rho_target(cand, beta, rho, hyper.a_alpha[a], hyper.b_alpha[a])
            - alpha_rho_target(cur, beta, rho, hyper.a_alpha[a], hyper.b_alpha[a]);
        mh_accept(rng, r, "alpha_rho")?
    };
    step.record(accept);
    if accept {
        g.alpha_rho[a] = cand;
    }
    Ok(accept)
}

/// Random walk on the frailty rate; non-positive candidates are rejected.
pub(crate) fn update_beta_rho(
    g: &mut GlobalParams,
    rho: &[f64],
    a: usize,
    hyper: &Hyperparameters,
    step: &mut StepSize,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let cur = g.beta_rho[a];
    let cand = cur + step.jump(rng);
    let accept = if cand <= 0.0 {
        let _: f64 = rng.random();
        false
    } else {
        let alpha = g.alpha_rho[a];
        let r = beta_rho_target(alpha, cand, rho, hyper.a_beta[a], hyper.b_beta[a])
            - beta_rho_target(alpha, cur, rho, hyper.a_beta[a], hyper.b_beta[a]);
        mh_accept(rng, r, "beta_rho")?
    };
    step.record(accept);
    if accept {
        g.beta_rho[a] = cand;
    }
    Ok(accept)
}
