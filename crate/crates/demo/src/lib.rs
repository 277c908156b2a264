//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string; errors become a JS exception carrying
//! the error message.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use hemojoint::basis::{build_eigensystem, scale_covariate};
use hemojoint::cohort::HospitalizationRecord;
use hemojoint::config::ModelConfig;
use hemojoint::design::HEMOGLOBIN_SCALE;
use hemojoint::model::{HazardBlock, ModelContext};
use hemojoint::predictor::{
    default_truth, internal_to_study, simulate_forward, synth_cohort, truncate_history, PredictionConfig, SynthConfig,
};
use hemojoint::trajectory::{hosp_basis_row, HospBasisConfig};

type Out = Result<String, JsError>;

fn json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

fn err(e: hemojoint::error::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct Basis {
    t: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// `phi[k][i]` is the k-th eigenfunction at `t[i]`.
    phi: Vec<Vec<f64>>,
}

/// The first `p` eigenfunctions (intercept included) at `points` evenly
/// spaced times in `[0, 1]`.
#[wasm_bindgen]
pub fn eigenbasis(p: usize, grid_size: usize, points: usize) -> Out {
    let eig = build_eigensystem(grid_size, p).map_err(err)?;
    let n = points.max(2);
    let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let phi = (0..p).map(|k| t.iter().map(|x| eig.eval(k, *x)).collect()).collect();
    json(&Basis { t, eigenvalues: eig.eigenvalues().to_vec(), phi })
}

#[derive(Serialize)]
struct Effect {
    days: Vec<f64>,
    effect: Vec<f64>,
}

/// Hemoglobin contribution of one stay admitted on day 0 and discharged on
/// `length` with recovery rate `lambda`, from day -5 to `length + 60`.
/// `beta` holds one coefficient per inpatient-time basis function.
#[wasm_bindgen]
pub fn hospital_effect(length: f64, lambda: f64, beta: &[f64], m_max: f64) -> Out {
    if !(length > 0.0) || !(lambda > 0.0) {
        return Err(JsError::new("stay length and lambda must be positive"));
    }
    let cfg = HospBasisConfig::new(m_max, beta.len()).map_err(err)?;
    // the inpatient-time basis only uses eigenpairs through index b
    let eig = build_eigensystem(256, beta.len() + 1).map_err(err)?;
    let stay = HospitalizationRecord::closed(0.0, length, false);
    let days: Vec<f64> = (0..=((length + 65.0) * 4.0) as usize).map(|i| -5.0 + i as f64 * 0.25).collect();
    let effect = days
        .iter()
        .map(|t| hosp_basis_row(&eig, &stay, *t, lambda, &cfg).iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect();
    json(&Effect { days, effect })
}

#[derive(Serialize)]
struct Future {
    days: Vec<f64>,
    hb: Vec<f64>,
    state: Vec<u8>,
}

#[derive(Serialize)]
struct Futures {
    t_star: f64,
    /// Recorded history: (study day, g/dL).
    observations: Vec<(f64, f64)>,
    /// History stays as (admit, discharge) study days.
    stays: Vec<(f64, Option<f64>)>,
    futures: Vec<Future>,
}

/// Simulate a synthetic patient up to study day `t_star`, then `n` futures
/// to day 730 from the patient's true effects. `coupling` is the admission
/// hazard's log-rate change per g/dL of hemoglobin.
#[wasm_bindgen]
pub fn simulate_futures(seed: u64, n: usize, t_star: f64, coupling: f64) -> Out {
    if !(365.0..730.0).contains(&t_star) {
        return Err(JsError::new("t_star must lie in [365, 730)"));
    }
    let ctx = ModelContext::new(&ModelConfig { p: 6, b: 3, grid_size: 128, ..ModelConfig::default() }).map_err(err)?;
    let mut truth = default_truth(&ctx);
    // the hazard sees hemoglobin scaled to [0, 1]; the intercept moves with
    // the slope so the admission rate at 11 g/dL stays the same
    let layout = &ctx.hazard[0];
    if let Some(d) = layout.block_index(HazardBlock::Hemoglobin) {
        let c = layout.blocks[d].offset;
        let width = HEMOGLOBIN_SCALE.upper() - HEMOGLOBIN_SCALE.lower();
        let slope = coupling * width;
        truth.psi[0][0] += (truth.psi[0][c] - slope) * scale_covariate(11.0, HEMOGLOBIN_SCALE);
        truth.psi[0][c] = slope;
    }
    let synth = SynthConfig { n_patients: 1, seed, early_end_prob: 0.0, ..SynthConfig::default() };
    let (cohort, effects) = synth_cohort(&truth, &ctx, &synth).map_err(err)?;
    let patient = &cohort.patients[0];
    let history = truncate_history(patient, t_star).map_err(err)?;
    let mut eff = effects.patients[&patient.id].clone();
    let kept = history.hospitalizations.len();
    eff.beta.truncate(kept);
    eff.lambda.truncate(kept);

    let cfg = PredictionConfig { t_star, ..PredictionConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut futures = Vec::with_capacity(n);
    for _ in 0..n {
        let f = simulate_forward(&eff, &truth, &history, &ctx, &cfg, &mut rng).map_err(err)?;
        futures.push(Future { days: f.days, hb: f.true_hb, state: f.state });
    }
    json(&Futures {
        t_star,
        observations: history
            .observations
            .iter()
            .filter_map(|o| o.value.map(|v| (internal_to_study(o.time), v)))
            .collect(),
        stays: history
            .hospitalizations
            .iter()
            .map(|h| (internal_to_study(h.admit), h.discharge.map(internal_to_study)))
            .collect(),
        futures,
    })
}
