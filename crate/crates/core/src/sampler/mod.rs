//! Metropolis-within-Gibbs fit of the joint model.

pub mod adapt;
pub mod conjugate;
mod globals;
pub(crate) mod patient;
pub mod persist;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cohort::Cohort;
use crate::config::Hyperparameters;
use crate::error::{Error, Result};
use crate::likelihood::GlobalParams;
use crate::model::ModelContext;
use crate::trajectory::PatientEffects;

pub use adapt::{adapt_step_sizes, StepSize};
pub use persist::{EffectsSample, Manifest, PosteriorSample};

use globals::GlobalSteps;
use patient::{PatientData, PatientState, SweepCtx};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Total iterations including burn-in.
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Iterations between step-size adjustments during burn-in.
    pub adapt_window: usize,
    /// Keep every patient's effects at each retained iteration.
    pub save_effects: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 5000,
            n_burnin: 2000,
            thin: 5,
            seed: 1,
            target_accept: 0.44,
            adapt_window: 50,
            save_effects: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::Config("chain.n_iter, chain.thin and chain.adapt_window must be positive".into()));
        }
        if self.n_burnin >= self.n_iter {
            return Err(Error::Config(format!(
                "chain.n_burnin ({}) must be below chain.n_iter ({})",
                self.n_burnin, self.n_iter
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("chain.target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Whether iteration `i` (0-based) is written out.
    pub fn retains(&self, i: usize) -> bool {
        i >= self.n_burnin && (i - self.n_burnin + 1).is_multiple_of(self.thin)
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.n_burnin) / self.thin
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one (seed, purpose, key, iteration) tuple, so
/// results never depend on which thread ran which patient.
pub(crate) fn substream(seed: u64, tag: u64, key: u64, iteration: u64) -> ChaCha8Rng {
    let h1 = splitmix(splitmix(seed) ^ tag);
    let h2 = splitmix(h1 ^ key);
    let h3 = splitmix(h2 ^ iteration);
    let h4 = splitmix(h3);
    let mut bytes = [0u8; 32];
    for (i, h) in [h1, h2, h3, h4].iter().enumerate() {
        bytes[8 * i..8 * i + 8].copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// FNV-1a hash of a patient id, used as the substream key.
pub(crate) fn id_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub(crate) const TAG_PATIENT: u64 = 1;
pub(crate) const TAG_GLOBAL: u64 = 2;

/// Apply `f` to every element, in parallel when enabled, collecting results
/// in input order.
pub(crate) fn map_ordered<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Mean acceptance rate per block over the run so far.
pub type AcceptanceReport = BTreeMap<String, f64>;

/// Complete chain state: globals, every patient's latent variables, and
/// the proposal scales.
pub struct Sampler<'a> {
    ctx: &'a ModelContext,
    hyper: &'a Hyperparameters,
    chain: ChainConfig,
    data: Vec<PatientData>,
    patients: Vec<PatientState>,
    globals: GlobalParams,
    steps: GlobalSteps,
    iteration: u64,
}

pub struct FitOutput {
    pub samples: Vec<PosteriorSample>,
    pub effects: Vec<EffectsSample>,
    pub acceptance: AcceptanceReport,
    pub final_globals: GlobalParams,
}

impl<'a> Sampler<'a> {
    pub fn new(cohort: &Cohort, ctx: &'a ModelContext, hyper: &'a Hyperparameters, chain: &ChainConfig) -> Result<Self> {
        chain.validate()?;
        cohort.validate()?;
        let data = cohort
            .patients
            .iter()
            .map(|p| PatientData::build(p, ctx, p.end_of_followup))
            .collect::<Result<Vec<_>>>()?;
        let globals = GlobalParams::initial(ctx);
        Self::from_parts(ctx, hyper, chain, data, globals)
    }

    fn from_parts(
        ctx: &'a ModelContext,
        hyper: &'a Hyperparameters,
        chain: &ChainConfig,
        data: Vec<PatientData>,
        globals: GlobalParams,
    ) -> Result<Self> {
        globals.check(ctx)?;
        let patients = data.iter().map(|d| PatientState::new(d, ctx, &globals)).collect();
        Ok(Self {
            ctx,
            hyper,
            chain: chain.clone(),
            data,
            patients,
            globals,
            steps: GlobalSteps::new(ctx),
            iteration: 0,
        })
    }

    /// Replace the starting globals (dimensions are checked).
    pub fn set_globals(&mut self, g: GlobalParams) -> Result<()> {
        g.check(self.ctx)?;
        self.globals = g;
        Ok(())
    }

    pub fn globals(&self) -> &GlobalParams {
        &self.globals
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn patient_effects(&self) -> BTreeMap<String, PatientEffects> {
        self.data
            .iter()
            .zip(&self.patients)
            .map(|(d, s)| (d.id.clone(), s.effects.clone()))
            .collect()
    }

    /// One full Gibbs pass: every patient (in parallel when enabled), then
    /// the global blocks in order.
    pub fn gibbs_sweep(&mut self) -> Result<()> {
        let it = self.iteration;
        let seed = self.chain.seed;
        let sc = SweepCtx::new(self.ctx, &self.globals);
        let data = &self.data;
        let results = map_ordered(&mut self.patients, |i, st| {
            let d = &data[i];
            let mut rng = substream(seed, TAG_PATIENT, id_key(&d.id), it);
            patient::sweep_patient(d, st, &sc, &mut rng)
        });
        results.into_iter().collect::<Result<Vec<_>>>()?;
        let mut rng = substream(seed, TAG_GLOBAL, 0, it);
        globals::update_globals(
            &mut self.globals,
            &self.data,
            &mut self.patients,
            self.ctx,
            self.hyper,
            &mut self.steps,
            &mut rng,
        )?;
        self.iteration += 1;
        Ok(())
    }

    fn adapt(&mut self) -> Result<()> {
        let w = self.chain.adapt_window as u64;
        let window = self.iteration / w;
        let (target, last, burn) = (self.chain.target_accept, self.iteration - 1, self.chain.n_burnin as u64);
        let mut all: Vec<StepSize> = self.steps.all_mut().map(|s| *s).collect();
        adapt_step_sizes(&mut all, target, window, last, burn)?;
        for (s, new) in self.steps.all_mut().zip(all) {
            *s = new;
        }
        for st in &mut self.patients {
            let mut v: Vec<StepSize> = st.steps.all_mut().map(|s| *s).collect();
            adapt_step_sizes(&mut v, target, window, last, burn)?;
            for (s, new) in st.steps.all_mut().zip(v) {
                *s = new;
            }
        }
        Ok(())
    }

    /// Run the configured number of iterations, adapting during burn-in and
    /// keeping every `thin`-th draw afterwards.
    pub fn run(&mut self) -> Result<FitOutput> {
        let mut samples = Vec::with_capacity(self.chain.n_retained());
        let mut effects = Vec::new();
        while (self.iteration as usize) < self.chain.n_iter {
            self.gibbs_sweep()?;
            let done = self.iteration as usize;
            if done < self.chain.n_burnin && done.is_multiple_of(self.chain.adapt_window) {
                self.adapt()?;
            }
            let i = done - 1;
            if self.chain.retains(i) {
                samples.push(PosteriorSample {
                    iteration: i as u64,
                    params: self.globals.clone(),
                });
                if self.chain.save_effects {
                    effects.push(EffectsSample {
                        iteration: i as u64,
                        patients: self.patient_effects(),
                    });
                }
            }
        }
        Ok(FitOutput {
            samples,
            effects,
            acceptance: self.acceptance(),
            final_globals: self.globals.clone(),
        })
    }

    pub fn acceptance(&self) -> AcceptanceReport {
        let mut acc: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        let mut add = |name: String, s: &StepSize| {
            let e = acc.entry(name).or_default();
            e.0 += s.total_accepted;
            e.1 += s.total_proposed;
        };
        for st in &self.patients {
            for (k, s) in st.steps.alpha.iter().enumerate() {
                add(if k == 0 { "alpha_0".into() } else { "alpha_k".into() }, s);
            }
            st.steps.beta.iter().for_each(|s| add("beta".into(), s));
            st.steps.lambda.iter().for_each(|s| add("lambda".into(), s));
        }
        for a in 0..2 {
            for (d, s) in self.steps.psi[a].iter().enumerate() {
                add(format!("psi[{a}][{d}]"), s);
            }
            for (d, s) in self.steps.centred[a].iter().enumerate() {
                add(format!("psi_centred[{a}][{d}]"), s);
            }
            add(format!("alpha_rho[{a}]"), &self.steps.alpha_rho[a]);
            add(format!("beta_rho[{a}]"), &self.steps.beta_rho[a]);
        }
        acc.into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(k, (a, n))| (k, a as f64 / n as f64))
            .collect()
    }
}

/// Fit the model to a cohort.
pub fn fit(cohort: &Cohort, ctx: &ModelContext, hyper: &Hyperparameters, chain: &ChainConfig) -> Result<FitOutput> {
    Sampler::new(cohort, ctx, hyper, chain)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::fixtures::two_stay_patient;
    use crate::config::ModelConfig;

    fn small_ctx() -> ModelContext {
        ModelContext::new(&ModelConfig {
            p: 4,
            b: 2,
            grid_size: 64,
            max_interval: 5.0,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn thinning_and_retention() {
        let c = ChainConfig { n_iter: 1000, n_burnin: 0, thin: 10, ..ChainConfig::default() };
        assert_eq!((0..1000).filter(|i| c.retains(*i)).count(), 100);
        assert_eq!(c.n_retained(), 100);
        let c = ChainConfig { n_iter: 30, n_burnin: 10, thin: 4, ..ChainConfig::default() };
        assert_eq!((0..30).filter(|i| c.retains(*i)).count(), c.n_retained());
        assert!(ChainConfig { n_burnin: 5000, ..ChainConfig::default() }.validate().is_err());
    }

    #[test]
    fn substreams_differ_by_every_key() {
        use rand::Rng;
        let base: u64 = substream(1, 1, 1, 1).random();
        for (s, t, k, i) in [(2, 1, 1, 1), (1, 2, 1, 1), (1, 1, 2, 1), (1, 1, 1, 2)] {
            assert_ne!(base, substream(s, t, k, i).random::<u64>());
        }
        assert_eq!(base, substream(1, 1, 1, 1).random::<u64>());
    }

    #[test]
    fn equal_seeds_give_identical_chains() {
        let ctx = small_ctx();
        let hyper = Hyperparameters::default();
        let cohort = Cohort { patients: vec![two_stay_patient("a"), two_stay_patient("b")] };
        let chain = ChainConfig { n_iter: 30, n_burnin: 10, thin: 2, adapt_window: 5, seed: 11, save_effects: true, ..ChainConfig::default() };
        let a = fit(&cohort, &ctx, &hyper, &chain).unwrap();
        let b = fit(&cohort, &ctx, &hyper, &chain).unwrap();
        assert_eq!(a.samples.len(), 10);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.effects, b.effects);
        let c = fit(&cohort, &ctx, &hyper, &ChainConfig { seed: 12, ..chain }).unwrap();
        assert_ne!(a.samples, c.samples);
        for s in &a.samples {
            s.params.check(&ctx).unwrap();
        }
        for e in &a.effects {
            for eff in e.patients.values() {
                eff.check(ctx.p(), ctx.b(), 2).unwrap();
            }
        }
    }

    #[test]
    fn centred_moves_keep_tracks_consistent() {
        use crate::model::HazardBlock;
        let ctx = small_ctx();
        let hyper = Hyperparameters::default();
        let cohort = Cohort { patients: vec![two_stay_patient("a"), two_stay_patient("b")] };
        let chain = ChainConfig { n_iter: 10, n_burnin: 5, thin: 1, seed: 3, ..ChainConfig::default() };
        let mut s = Sampler::new(&cohort, &ctx, &hyper, &chain).unwrap();
        for _ in 0..3 {
            s.gibbs_sweep().unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut step = StepSize::new(2.0);
        let hb = ctx.hazard[0].block_index(HazardBlock::Hemoglobin).unwrap();
        let c = ctx.hazard[0].blocks[hb].offset;
        for _ in 0..40 {
            let before = s.globals.clone();
            let eta_before: Vec<f64> = s.patients.iter().flat_map(|st| st.tracks[0].eta.clone()).collect();
            globals::update_psi_centred(&mut s.globals, &mut s.patients, &ctx, 0, hb, &mut step, &mut rng).unwrap();
            let moved = s.globals.psi[0][c] - before.psi[0][c];
            if moved == 0.0 {
                assert_eq!(s.globals, before);
                continue;
            }
            // every eta moves by (x - xbar) * delta, so xbar is recoverable
            let xbar = -(s.globals.psi[0][0] - before.psi[0][0]) / moved;
            let eta_after: Vec<f64> = s.patients.iter().flat_map(|st| st.tracks[0].eta.clone()).collect();
            let x: Vec<f64> = s.patients.iter().flat_map(|st| st.tracks[0].hb_u.clone()).collect();
            for ((e0, e1), x) in eta_before.iter().zip(&eta_after).zip(&x) {
                assert!((e1 - e0 - (x - xbar) * moved).abs() < 1e-12);
            }
            // the incremental tracks match a rebuild from scratch
            let sc = SweepCtx::new(&ctx, &s.globals);
            for (d, st) in s.data.iter().zip(&s.patients) {
                let mut fresh = st.clone();
                patient::prepare(d, &mut fresh, &sc);
                patient::build_tracks(d, &mut fresh, &s.globals);
                for (a, b) in fresh.tracks[0].eta.iter().zip(&st.tracks[0].eta) {
                    assert!((a - b).abs() < 1e-10);
                }
                assert!((fresh.tracks[0].s - st.tracks[0].s).abs() < 1e-10 * fresh.tracks[0].s.max(1.0));
            }
        }
        assert!(step.total_accepted > 0 && step.total_accepted < step.total_proposed);
    }

    #[test]
    fn empty_cohort_runs() {
        let ctx = small_ctx();
        let hyper = Hyperparameters::default();
        let out = fit(&Cohort::default(), &ctx, &hyper, &ChainConfig { n_iter: 20, n_burnin: 5, thin: 1, ..ChainConfig::default() }).unwrap();
        assert_eq!(out.samples.len(), 15);
    }
}
