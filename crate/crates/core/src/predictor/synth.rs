//! Synthetic cohorts drawn forward from the model, with their latent truth.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, HbObservation, PatientRecord};
use crate::design::{BaselineCovariates, Race, Sex, STUDY_END, STUDY_START};
use crate::error::Result;
use crate::likelihood::GlobalParams;
use crate::model::{HazardBlock, ModelContext};
use crate::sampler::conjugate::draw_gamma;
use crate::sampler::substream;
use crate::trajectory::PatientEffects;

use super::simulate::{run_process, Path};

const TAG_SYNTH: u64 = 20;
const PRE_INDEX_TRIES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    /// Observation rates per day at home and in hospital.
    pub obs_rate_home: f64,
    pub obs_rate_hospital: f64,
    /// Probability an observation is recorded as missing.
    pub missing_rate: f64,
    /// Probability followup ends early (uniformly between day 30 and 365).
    pub early_end_prob: f64,
    pub index_los_mean: f64,
    pub delta: f64,
    /// Add measurement noise with the truth's `sigma2`.
    pub noise: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 200,
            seed: 1,
            obs_rate_home: 1.0 / 21.0,
            obs_rate_hospital: 1.0,
            missing_rate: 0.0,
            early_end_prob: 0.1,
            index_los_mean: 5.0,
            delta: 1.0,
            noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub globals: GlobalParams,
    pub patients: BTreeMap<String, PatientEffects>,
}

/// Plausible generating values: hemoglobin near 11 g/dL that drops during
/// stays and recovers over a couple of weeks, about two admissions a year,
/// stays of a few days, and admissions more likely at low hemoglobin.
pub fn default_truth(ctx: &ModelContext) -> GlobalParams {
    let mut g = GlobalParams::initial(ctx);
    g.gamma0.iter_mut().for_each(|v| *v = 0.0);
    g.gamma0[0] = 11.0;
    g.gamma.iter_mut().for_each(|v| *v = 0.0);
    if let Some(v) = g.gamma.first_mut() {
        *v = 1.0;
    }
    g.tau2_0 = 1.5;
    g.tau2 = 0.5;
    g.eta.iter_mut().for_each(|v| *v = 0.0);
    g.eta[0] = -3.0;
    g.eta[1] = 2.0;
    if g.eta.len() > 2 {
        g.eta[2] = 1.0;
    }
    g.omega2 = 0.5;
    g.zeta.iter_mut().for_each(|v| *v = 0.0);
    g.zeta[0] = (0.1f64).ln();
    g.sigma2_lambda = 0.2;
    for a in 0..2 {
        g.psi[a].iter_mut().for_each(|v| *v = 0.0);
    }
    let hb = ctx.hazard[0].block_index(HazardBlock::Hemoglobin).unwrap();
    g.psi[0][0] = -3.2;
    g.psi[0][ctx.hazard[0].blocks[hb].offset] = -4.0;
    g.psi[1][0] = -1.8;
    g.psi[1][ctx.hazard[1].blocks[hb].offset] = 1.0;
    if let Some(d) = ctx.hazard[1].block_index(HazardBlock::InpatientTime) {
        g.psi[1][ctx.hazard[1].blocks[d].offset] = 1.0;
    }
    g.alpha_rho = [4.0, 4.0];
    g.beta_rho = [4.0, 4.0];
    g.sigma2 = 0.25;
    g
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, var: f64) -> f64 {
    mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
}

fn random_baseline(rng: &mut ChaCha8Rng, index_los: f64) -> BaselineCovariates {
    let icu = (index_los * rng.random_range(0.2..0.8)).max(0.5);
    BaselineCovariates {
        age: rng.random_range(20.0..90.0),
        sex: if rng.random_bool(0.5) { Sex::Male } else { Sex::Female },
        charlson: rng.random_range(0..9) as f64,
        supplemental_iron: rng.random_bool(0.2),
        renal_disease: rng.random_bool(0.25),
        metastatic_tumor: rng.random_bool(0.1),
        other_cancer: rng.random_bool(0.15),
        surgical_index_admit: rng.random_bool(0.4),
        race: Race::ALL[rng.random_range(0..Race::ALL.len())],
        sofa_day1: rng.random_range(0..16) as f64,
        rbc_units_day1: rng.random_range(0..6) as f64,
        index_icu_days: icu,
        index_hospital_days: index_los,
        total_hospital_duration: rng.random_range(0.0..20.0),
        total_ed_duration: rng.random_range(0.0..10.0),
        total_emg_duration: rng.random_range(0.0..10.0),
        total_hospital_days: rng.random_range(0..4) as f64,
    }
}

fn draw_effects(ctx: &ModelContext, g: &GlobalParams, z0: &[f64], rng: &mut ChaCha8Rng) -> Result<PatientEffects> {
    let mut eff = PatientEffects::zeros(ctx.p(), ctx.b(), 0);
    let m0: f64 = z0.iter().zip(&g.gamma0).map(|(z, c)| z * c).sum();
    eff.alpha[0] = normal(rng, m0, g.tau2_0);
    for k in 1..ctx.p() {
        eff.alpha[k] = normal(rng, ctx.eig.eigenvalue(k).sqrt() * g.gamma[k - 1], g.tau2);
    }
    for a in 0..2 {
        eff.rho[a] = draw_gamma(rng, g.alpha_rho[a], g.beta_rho[a])?;
    }
    Ok(eff)
}

/// Poisson-process observation times on `[from, to)`.
fn sample_times(rng: &mut ChaCha8Rng, rate: f64, from: f64, to: f64, out: &mut Vec<f64>) {
    if to <= from || rate <= 0.0 {
        return;
    }
    let n = Poisson::new(rate * (to - from)).map(|p| p.sample(rng) as usize).unwrap_or(0);
    for _ in 0..n {
        out.push(rng.random_range(from..to));
    }
}

fn synth_patient(i: usize, g: &GlobalParams, ctx: &ModelContext, cfg: &SynthConfig) -> Result<(PatientRecord, PatientEffects)> {
    let mut rng = substream(cfg.seed, TAG_SYNTH, i as u64, 0);
    let los = 1.0 + Exp::new(1.0 / (cfg.index_los_mean - 1.0).max(0.1)).unwrap().sample(&mut rng);
    let baseline = random_baseline(&mut rng, los);
    let z0 = ctx.config.covariates.trend_intercept_row(&baseline);
    let effects = draw_effects(ctx, g, &z0, &mut rng)?;
    let a0 = -los;

    // Pre-index history, redrawn until the patient is home at the index admission.
    let mut path = Path { stays: vec![], effects: effects.clone(), baseline: &baseline };
    for _ in 0..PRE_INDEX_TRIES {
        let mut trial = Path { stays: vec![], effects: effects.clone(), baseline: &baseline };
        run_process(&mut trial, ctx, g, STUDY_START, a0, cfg.delta, &mut rng, &mut Vec::new())?;
        if trial.state() == 0 {
            path = trial;
            break;
        }
    }
    path.admit(ctx, g, a0, true, &mut rng)?;
    path.discharge(ctx, g, 0.0, &mut rng)?;
    let end = if rng.random_bool(cfg.early_end_prob) { rng.random_range(30.0..STUDY_END) } else { STUDY_END };
    run_process(&mut path, ctx, g, 0.0, end, cfg.delta, &mut rng, &mut Vec::new())?;

    let mut times = Vec::new();
    let mut home_from = STUDY_START;
    for h in &path.stays {
        sample_times(&mut rng, cfg.obs_rate_home, home_from, h.admit, &mut times);
        let stay_end = h.discharge.unwrap_or(end);
        sample_times(&mut rng, cfg.obs_rate_hospital, h.admit, stay_end, &mut times);
        home_from = stay_end;
    }
    sample_times(&mut rng, cfg.obs_rate_home, home_from, end, &mut times);
    let guaranteed = [a0 + los / 3.0, a0 + 2.0 * los / 3.0];
    times.extend(guaranteed);
    times.retain(|t| *t > STUDY_START && *t <= end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let truth = path.truths(ctx, &times)?;
    let observations = times
        .iter()
        .zip(truth)
        .map(|(t, v)| {
            let noisy = if cfg.noise { normal(&mut rng, v, g.sigma2) } else { v };
            let missing = !guaranteed.contains(t) && rng.random_bool(cfg.missing_rate);
            HbObservation {
                time: *t,
                value: (!missing).then_some(noisy.max(0.1)),
            }
        })
        .collect();
    let record = PatientRecord {
        id: format!("S{i:05}"),
        observations,
        hospitalizations: path.stays.clone(),
        baseline: baseline.clone(),
        end_of_followup: end,
    };
    Ok((record, path.effects))
}

/// Draw `cfg.n_patients` patients forward from the model under `truth`.
pub fn synth_cohort(truth: &GlobalParams, ctx: &ModelContext, cfg: &SynthConfig) -> Result<(Cohort, SynthTruth)> {
    truth.check(ctx)?;
    let mut idx: Vec<usize> = (0..cfg.n_patients).collect();
    let made = crate::sampler::map_ordered(&mut idx, |_, i| synth_patient(*i, truth, ctx, cfg));
    let mut cohort = Cohort::default();
    let mut patients = BTreeMap::new();
    for m in made {
        let (rec, eff) = m?;
        patients.insert(rec.id.clone(), eff);
        cohort.patients.push(rec);
    }
    cohort.validate()?;
    Ok((
        cohort,
        SynthTruth {
            globals: truth.clone(),
            patients,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{build_event_grid, index_conditioning};
    use crate::config::ModelConfig;
    use crate::likelihood::hazard;
    use crate::trajectory::true_hb_at;

    fn ctx() -> ModelContext {
        ModelContext::new(&ModelConfig { p: 4, b: 2, grid_size: 64, ..ModelConfig::default() }).unwrap()
    }

    #[test]
    fn noiseless_observations_lie_on_truth() {
        let c = ctx();
        let g = default_truth(&c);
        let cfg = SynthConfig { n_patients: 5, noise: false, ..SynthConfig::default() };
        let (cohort, truth) = synth_cohort(&g, &c, &cfg).unwrap();
        for p in &cohort.patients {
            let eff = &truth.patients[&p.id];
            for o in &p.observations {
                let t = true_hb_at(&p.hospitalizations, eff, &c.eig, &c.hosp(), o.time).unwrap();
                assert!((o.value.unwrap() - t.max(0.1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reproducible_and_valid() {
        let c = ctx();
        let g = default_truth(&c);
        let cfg = SynthConfig { n_patients: 20, missing_rate: 0.1, ..SynthConfig::default() };
        let (a, ta) = synth_cohort(&g, &c, &cfg).unwrap();
        let (b, tb) = synth_cohort(&g, &c, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        a.validate().unwrap();
        assert!(a.patients.iter().any(|p| p.observations.iter().any(|o| o.value.is_none())));
        let (empty, t) = synth_cohort(&g, &c, &SynthConfig { n_patients: 0, ..cfg }).unwrap();
        assert!(empty.patients.is_empty() && t.patients.is_empty());
    }

    #[test]
    fn event_counts_match_integrated_hazard() {
        let c = ctx();
        let g = default_truth(&c);
        let cfg = SynthConfig { n_patients: 500, ..SynthConfig::default() };
        let (cohort, truth) = synth_cohort(&g, &c, &cfg).unwrap();
        // post-index admissions against the step-start hazards the generator used
        let mut observed = 0.0;
        let mut expected = 0.0;
        for p in &cohort.patients {
            let eff = &truth.patients[&p.id];
            let grid = index_conditioning(build_event_grid(p, cfg.delta)).unwrap();
            for iv in grid.intervals.iter().filter(|iv| iv.in_risk && iv.state == 0 && iv.start >= 0.0) {
                let t = true_hb_at(&p.hospitalizations, eff, &c.eig, &c.hosp(), iv.start).unwrap();
                let row = c.hazard[0].row(&p.baseline, t, iv.start, None);
                expected += iv.delta * hazard(eff.rho[0], &row, &g.psi[0]);
                observed += iv.events as f64;
            }
        }
        assert!(observed > 50.0);
        assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "{observed} vs {expected}");
    }
}
