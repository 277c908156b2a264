//! Forward prediction from a truncated history, and the synthetic cohort
//! generator.

mod simulate;
pub mod synth;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{HospitalizationRecord, PatientRecord};
use crate::design::STUDY_START;
use crate::error::{Error, Result};
use crate::likelihood::GlobalParams;
use crate::model::ModelContext;
use crate::sampler::adapt::adapt_step_sizes;
use crate::sampler::patient::{sweep_patient, PatientData, PatientState, SweepCtx};
use crate::sampler::{id_key, map_ordered, substream, PosteriorSample, StepSize};
use crate::trajectory::PatientEffects;

pub use simulate::{EventKind, SimEvent};
pub use synth::{default_truth, synth_cohort, SynthConfig, SynthTruth};

use simulate::{run_process, Path};

const TAG_PILOT: u64 = 10;
const TAG_TRAJECTORY: u64 = 11;

/// Times are study days: 0 is one year before index discharge, 365 is
/// index discharge and 730 is the end of followup.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionConfig {
    pub t_star: f64,
    pub horizon: f64,
    /// Step of the forward event simulation, in days.
    pub delta: f64,
    /// Trajectories per ensemble.
    pub r: usize,
    /// Conditioning sweeps per trajectory.
    pub inner_iter: usize,
    /// Sweeps run once per history before the per-trajectory chains.
    pub pilot_iter: usize,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            t_star: 365.0,
            horizon: 730.0,
            delta: 1.0,
            r: 100,
            inner_iter: 20,
            pilot_iter: 200,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_star < self.horizon) || self.horizon > 730.0 || self.t_star < 365.0 {
            return Err(Error::Config(format!(
                "prediction needs 365 <= t_star < horizon <= 730, got t_star {} and horizon {}",
                self.t_star, self.horizon
            )));
        }
        if !(self.delta > 0.0) || self.r == 0 || self.inner_iter == 0 {
            return Err(Error::Config("predict.delta, predict.r and predict.inner_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Study day to days relative to index discharge.
pub fn study_to_internal(day: f64) -> f64 {
    day + STUDY_START
}

pub fn internal_to_study(t: f64) -> f64 {
    t - STUDY_START
}

/// The part of `record` known at study day `t_star`: stays admitted before
/// it (a later discharge becomes open), observations up to it, and followup
/// ending at it.
pub fn truncate_history(record: &PatientRecord, t_star: f64) -> Result<PatientRecord> {
    let end = study_to_internal(t_star);
    if record.end_of_followup < end {
        return Err(Error::data(&record.id, format!("followup ends before study day {t_star}")));
    }
    let hospitalizations = record
        .hospitalizations
        .iter()
        .filter(|h| h.admit < end)
        .map(|h| HospitalizationRecord {
            discharge: h.discharge.filter(|d| *d <= end),
            ..*h
        })
        .collect();
    Ok(PatientRecord {
        id: record.id.clone(),
        observations: record.observations.iter().filter(|o| o.time <= end).cloned().collect(),
        hospitalizations,
        baseline: record.baseline.clone(),
        end_of_followup: end,
    })
}

fn check_history(h: &PatientRecord) -> Result<()> {
    let end = h.end_of_followup;
    let late_obs = h.observations.iter().any(|o| o.time > end);
    let late_stay = h
        .hospitalizations
        .iter()
        .any(|s| s.admit >= end || s.discharge.is_some_and(|d| d > end));
    if late_obs || late_stay {
        return Err(Error::Contract(format!(
            "history of patient {} contains data after its end {end}",
            h.id
        )));
    }
    if h.index_stay().is_none() {
        return Err(Error::data(&h.id, "history has no index hospitalization"));
    }
    Ok(())
}

/// Per-history conditioning chain: tuned once, then either restarted or
/// continued under each posterior sample.
pub struct Conditioner<'a> {
    ctx: &'a ModelContext,
    history: PatientRecord,
    data: PatientData,
    template: Option<PatientState>,
}

impl<'a> Conditioner<'a> {
    pub fn new(history: &PatientRecord, ctx: &'a ModelContext) -> Result<Self> {
        check_history(history)?;
        let data = PatientData::build(history, ctx, history.end_of_followup)?;
        Ok(Self {
            ctx,
            history: history.clone(),
            data,
            template: None,
        })
    }

    pub fn history(&self) -> &PatientRecord {
        &self.history
    }

    /// Run `iters` sweeps under `g`, tuning proposal scales in windows of
    /// `window` sweeps.
    pub fn pilot(&mut self, g: &GlobalParams, iters: usize, target: f64, window: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let sc = SweepCtx::new(self.ctx, g);
        let mut st = PatientState::new(&self.data, self.ctx, g);
        let window = window.max(1);
        for i in 0..iters {
            sweep_patient(&self.data, &mut st, &sc, rng)?;
            if (i + 1) % window == 0 && i + 1 < iters {
                let mut v: Vec<StepSize> = st.steps.all_mut().map(|s| *s).collect();
                adapt_step_sizes(&mut v, target, ((i + 1) / window) as u64, i as u64, iters as u64)?;
                for (s, new) in st.steps.all_mut().zip(v) {
                    *s = new;
                }
            }
        }
        self.template = Some(st);
        Ok(())
    }

    /// One draw of the patient's effects given `g`: `iters` sweeps started
    /// from the pilot state.
    pub fn draw(&self, g: &GlobalParams, iters: usize, rng: &mut ChaCha8Rng) -> Result<PatientEffects> {
        let mut st = match &self.template {
            Some(t) => t.clone(),
            None => PatientState::new(&self.data, self.ctx, g),
        };
        let sc = SweepCtx::new(self.ctx, g);
        for _ in 0..iters {
            sweep_patient(&self.data, &mut st, &sc, rng)?;
        }
        Ok(st.effects)
    }

    /// Continue the chain for `iters` sweeps under `g` and return its state.
    pub fn advance(&mut self, g: &GlobalParams, iters: usize, rng: &mut ChaCha8Rng) -> Result<PatientEffects> {
        let st = match &mut self.template {
            Some(t) => t,
            None => self.template.insert(PatientState::new(&self.data, self.ctx, g)),
        };
        let sc = SweepCtx::new(self.ctx, g);
        for _ in 0..iters {
            sweep_patient(&self.data, st, &sc, rng)?;
        }
        Ok(st.effects.clone())
    }
}

/// One draw of a new patient's effects given a posterior sample and their
/// history up to `history.end_of_followup`.
pub fn condition_on_history(
    globals: &GlobalParams,
    history: &PatientRecord,
    ctx: &ModelContext,
    cfg: &PredictionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PatientEffects> {
    let mut c = Conditioner::new(history, ctx)?;
    c.pilot(globals, cfg.pilot_iter, 0.44, 50, rng)?;
    c.draw(globals, cfg.inner_iter, rng)
}

/// One simulated future. Times are study days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrajectory {
    pub days: Vec<f64>,
    pub true_hb: Vec<f64>,
    pub state: Vec<u8>,
    /// True hemoglobin at each generated event.
    pub knots: Vec<(f64, f64)>,
    pub events: Vec<SimEvent>,
    /// History and simulated stays, in days relative to index discharge.
    pub stays: Vec<HospitalizationRecord>,
    pub effects: PatientEffects,
    /// Measurement variance of the posterior sample used.
    pub sigma2: f64,
}

impl SimulatedTrajectory {
    /// True hemoglobin at study day `day` from the stored effects.
    pub fn truth_at(&self, ctx: &ModelContext, day: f64) -> Result<f64> {
        crate::trajectory::true_hb_at(&self.stays, &self.effects, &ctx.eig, &ctx.hosp(), study_to_internal(day))
    }
}

/// Daily marks from `t_star` to `horizon` (study days), both included when
/// integral.
pub fn daily_marks(t_star: f64, horizon: f64) -> Vec<f64> {
    let first = t_star.ceil() as i64;
    let last = horizon.floor() as i64;
    (first..=last).map(|d| d as f64).collect()
}

/// Simulate from the end of `history` to `cfg.horizon`.
pub fn simulate_forward(
    effects: &PatientEffects,
    globals: &GlobalParams,
    history: &PatientRecord,
    ctx: &ModelContext,
    cfg: &PredictionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SimulatedTrajectory> {
    check_history(history)?;
    effects.check(ctx.p(), ctx.b(), history.hospitalizations.len())?;
    let from = history.end_of_followup;
    let to = study_to_internal(cfg.horizon);
    let mut path = Path {
        stays: history.hospitalizations.clone(),
        effects: effects.clone(),
        baseline: &history.baseline,
    };
    let mut events = Vec::new();
    run_process(&mut path, ctx, globals, from, to, cfg.delta, rng, &mut events)?;
    let days = daily_marks(internal_to_study(from), cfg.horizon);
    let internal: Vec<f64> = days.iter().map(|d| study_to_internal(*d)).collect();
    let true_hb = path.truths(ctx, &internal)?;
    let state = internal
        .iter()
        .map(|t| u8::from(path.stays.iter().any(|h| h.contains(*t))))
        .collect();
    let event_times: Vec<f64> = events.iter().map(|e| e.time).collect();
    let knot_values = path.truths(ctx, &event_times)?;
    let knots = event_times
        .iter()
        .zip(knot_values)
        .map(|(t, v)| (internal_to_study(*t), v))
        .collect();
    let events = events
        .into_iter()
        .map(|e| SimEvent { time: internal_to_study(e.time), ..e })
        .collect();
    Ok(SimulatedTrajectory {
        days,
        true_hb,
        state,
        knots,
        events,
        stays: path.stays,
        effects: path.effects,
        sigma2: globals.sigma2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub patient: String,
    pub t_star: f64,
    pub horizon: f64,
    pub trajectories: Vec<SimulatedTrajectory>,
}

/// Pointwise summary of an ensemble on its daily marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub days: Vec<f64>,
    pub median: Vec<f64>,
    pub lower50: Vec<f64>,
    pub upper50: Vec<f64>,
    pub lower90: Vec<f64>,
    pub upper90: Vec<f64>,
    /// Fraction of trajectories hospitalized on each day.
    pub hospitalized: Vec<f64>,
}

impl TrajectoryEnsemble {
    pub fn summary(&self) -> EnsembleSummary {
        let days = self.trajectories.first().map(|t| t.days.clone()).unwrap_or_default();
        let mut s = EnsembleSummary {
            days: days.clone(),
            median: vec![],
            lower50: vec![],
            upper50: vec![],
            lower90: vec![],
            upper90: vec![],
            hospitalized: vec![],
        };
        let r = self.trajectories.len() as f64;
        for i in 0..days.len() {
            let mut v: Vec<f64> = self.trajectories.iter().map(|t| t.true_hb[i]).collect();
            v.sort_by(f64::total_cmp);
            let q = |p| crate::evaluate::quantile_sorted(&v, p);
            s.median.push(q(0.5));
            s.lower50.push(q(0.25));
            s.upper50.push(q(0.75));
            s.lower90.push(q(0.05));
            s.upper90.push(q(0.95));
            let h = self.trajectories.iter().filter(|t| t.state[i] == 1).count() as f64;
            s.hospitalized.push(h / r);
        }
        s
    }
}

/// Posterior sample used for trajectory `r`: evenly spread when there are
/// enough samples, cycled otherwise.
fn sample_index(r: usize, n_traj: usize, n_samples: usize) -> usize {
    if n_traj <= n_samples {
        r * n_samples / n_traj
    } else {
        r % n_samples
    }
}

/// `cfg.r` trajectories for one history, each conditioned on its own
/// posterior sample with an independent random stream.
pub fn generate_ensemble(
    posterior: &[PosteriorSample],
    history: &PatientRecord,
    ctx: &ModelContext,
    cfg: &PredictionConfig,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    cfg.validate()?;
    if posterior.is_empty() {
        return Err(Error::Contract("prediction needs at least one posterior sample".into()));
    }
    if (history.end_of_followup - study_to_internal(cfg.t_star)).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "history of {} ends at {} but t_star is study day {}",
            history.id,
            internal_to_study(history.end_of_followup),
            cfg.t_star
        )));
    }
    let key = id_key(&history.id);
    let mut cond = Conditioner::new(history, ctx)?;
    let pilot_globals = &posterior[posterior.len() / 2].params;
    cond.pilot(pilot_globals, cfg.pilot_iter, 0.44, 50, &mut substream(seed, TAG_PILOT, key, 0))?;
    // One chain continued across trajectories, so the ensemble does not
    // cluster around a single starting state. Segment r has its own stream.
    let mut starts = Vec::with_capacity(cfg.r);
    for r in 0..cfg.r {
        let g = &posterior[sample_index(r, cfg.r, posterior.len())].params;
        let mut rng = substream(seed, TAG_TRAJECTORY, key, r as u64);
        let eff = cond.advance(g, cfg.inner_iter, &mut rng)?;
        starts.push((g, eff, rng));
    }
    let results = map_ordered(&mut starts, |_, (g, eff, rng)| simulate_forward(eff, g, history, ctx, cfg, rng));
    Ok(TrajectoryEnsemble {
        patient: history.id.clone(),
        t_star: cfg.t_star,
        horizon: cfg.horizon,
        trajectories: results.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
